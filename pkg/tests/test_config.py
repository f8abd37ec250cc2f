"""
Run configuration: presets, flat key-value files, validation
Run: pytest tests/test_config.py -v
"""
import os
import sys
import warnings

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from locality_inr.config import (
    EXPERIMENT_PRESETS,
    OUTPUT_ROOT_ENV,
    apply_overrides,
    build_run_config,
    config_from_preset,
    get_preset,
    list_presets,
    parse_config_file,
    run_config_from_flat,
    write_config_file,
)
from locality_inr.coords import axis_centers
from locality_inr.errors import BandwidthOrderWarning, ConfigError

TINY_CONFIG = """\
# tiny image run
experiment = image
preset = desk_image
dataset_path = synthetic
output_dir = runs/tiny
dataset.height = 8
dataset.width = 8
encoder.num_blocks = 1
encoder.num_latents = 4
encoder.patch_size = 4
decoder.d = 8
decoder.d_F = 8
decoder.sigma_levels = 8,4
decoder.sigma_q = 2
train.steps = 5
train.coord_fraction = 0.5
"""


def write(tmp_path, text, name='run.cfg'):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestPresets:

    def test_every_preset_builds_and_validates(self):
        for name in EXPERIMENT_PRESETS:
            config = config_from_preset(name)
            config.dataset_path = 'synthetic'
            config.validate()

    def test_unknown_preset(self):
        with pytest.raises(ConfigError) as exc:
            get_preset('nope')
        assert exc.value.field == 'preset'

    def test_get_preset_is_a_copy(self):
        get_preset('image')['encoder']['num_latents'] = 1
        assert EXPERIMENT_PRESETS['image']['encoder']['num_latents'] == 256

    def test_list_presets(self):
        assert set(list_presets()) == set(EXPERIMENT_PRESETS)

    def test_full_size_image_preset(self):
        config = config_from_preset('image')
        assert config.encoder.patch_size == 9
        assert config.encoder.num_latents == 256
        assert config.decoder.sigma_levels == (128.0, 32.0)
        assert config.decoder.sigma_q == 16.0

    @pytest.mark.parametrize('name', ['desk_image', 'desk_ablation'])
    def test_desk_bandwidths_resolve_on_the_pixel_grid(self, name):
        config = config_from_preset(name)
        centers = axis_centers(config.dataset.width, config.decoder.coord_range)
        top = max(config.decoder.sigma_levels + (config.decoder.sigma_q, config.decoder.ipc_sigma))
        assert top * (centers[1] - centers[0]) <= 1.0 + 1e-9
        # the highest frequency still varies across pixel centers
        phase = np.pi * top * centers
        assert max(np.ptp(np.cos(phase)), np.ptp(np.sin(phase))) > 1.0

    def test_symmetric_range_aliases_top_desk_frequency(self):
        phase = np.pi * 32.0 * axis_centers(32, 'symmetric')
        np.testing.assert_allclose(np.ptp(np.cos(phase)), 0.0, atol=1e-9)
        np.testing.assert_allclose(np.ptp(np.sin(phase)), 0.0, atol=1e-9)

    def test_desk_fewshot_preset(self):
        config = config_from_preset('desk_fewshot')
        assert config.experiment == 'lightfield'
        assert 0 < config.train.support_views < config.dataset.num_views


class TestConfigFile:

    def test_parse_overrides_preset(self, tmp_path):
        config = parse_config_file(write(tmp_path, TINY_CONFIG))
        assert config.experiment == 'image'
        assert config.preset == 'desk_image'
        assert config.encoder.num_latents == 4
        # untouched fields keep the preset value
        assert config.encoder.num_heads == 4
        assert config.decoder.sigma_levels == (8.0, 4.0)
        assert config.decoder.sigma_q == 2.0
        assert config.train.steps == 5
        assert config.train.coord_fraction == 0.5

    def test_experiment_selects_default_preset(self):
        config = build_run_config({'experiment': 'lightfield', 'dataset_path': 'synthetic'})
        assert config.preset == 'lightfield'
        assert config.d_in == 6
        assert config.decoder.d_F == 240

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config_file(str(tmp_path / 'missing.cfg'))
        assert exc.value.field == 'config'

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config_file(write(tmp_path, TINY_CONFIG + "decoder.widht = 3\n"))
        assert exc.value.field == 'decoder.widht'

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config_file(write(tmp_path, TINY_CONFIG + "optimizer.lr = 3\n"))

    def test_missing_dataset_path(self, tmp_path):
        text = TINY_CONFIG.replace("dataset_path = synthetic\n", "")
        with pytest.raises(ConfigError) as exc:
            parse_config_file(write(tmp_path, text))
        assert exc.value.field == 'dataset_path'

    def test_derived_field_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="set from the dataset"):
            parse_config_file(write(tmp_path, TINY_CONFIG + "decoder.d_in = 2\n"))

    def test_bad_number(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config_file(write(tmp_path, TINY_CONFIG + "train.lr = fast\n"))
        assert exc.value.field == 'train.lr'

    def test_booleans(self, tmp_path):
        config = parse_config_file(write(tmp_path, TINY_CONFIG + "decoder.fixed_band_projection = yes\n"))
        assert config.decoder.fixed_band_projection is True
        with pytest.raises(ConfigError):
            parse_config_file(write(tmp_path, TINY_CONFIG + "decoder.output_bias = maybe\n", 'b.cfg'))

    def test_auto_fraction(self, tmp_path):
        config = parse_config_file(write(tmp_path, TINY_CONFIG.replace("0.5", "auto")))
        assert config.train.coord_fraction == 'auto'

    def test_indivisible_fourier_width(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config_file(write(tmp_path, TINY_CONFIG + "decoder.d_F = 10\n"))
        assert exc.value.field == 'decoder.d_F'

    def test_unknown_variant(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config_file(write(tmp_path, TINY_CONFIG + "decoder.variant = fancy\n"))
        assert exc.value.field == 'decoder.variant'

    def test_patch_larger_than_images(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config_file(write(tmp_path, TINY_CONFIG + "encoder.patch_size = 16\n"))
        assert exc.value.field == 'encoder.patch_size'

    def test_patch_larger_than_one_image_axis(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            parse_config_file(write(tmp_path, TINY_CONFIG + "dataset.width = 3\n"))
        assert exc.value.field == 'encoder.patch_size'

    def test_unordered_bandwidths_only_warn(self, tmp_path):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter('always')
            config = parse_config_file(write(tmp_path, TINY_CONFIG + "decoder.sigma_levels = 4,8\n"))
        assert config.decoder.sigma_levels == (4.0, 8.0)
        assert any(issubclass(w.category, BandwidthOrderWarning) for w in caught)

    def test_output_root_from_environment(self, tmp_path, monkeypatch):
        config = parse_config_file(write(tmp_path, TINY_CONFIG))
        monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path / 'root'))
        assert config.resolved_output_dir() == os.path.join(str(tmp_path / 'root'), 'runs/tiny')
        monkeypatch.delenv(OUTPUT_ROOT_ENV)
        assert config.resolved_output_dir() == 'runs/tiny'


class TestFlatForm:

    def test_write_then_parse_gives_same_config(self, tmp_path):
        config = parse_config_file(write(tmp_path, TINY_CONFIG))
        path = str(tmp_path / 'out' / 'run_config.txt')
        write_config_file(path, config)
        assert parse_config_file(path) == config

    def test_flat_form_rebuilds_config(self, tmp_path):
        config = parse_config_file(write(tmp_path, TINY_CONFIG))
        assert run_config_from_flat(config.to_flat()) == config

    def test_flat_form_skips_derived_fields(self):
        flat = config_from_preset('desk_image').to_flat()
        assert 'decoder.d_in' not in flat
        assert 'encoder.image_height' not in flat
        assert flat['decoder.sigma_levels'] == '32.0,8.0'

    def test_apply_overrides_does_not_mutate(self):
        base = config_from_preset('desk_image')
        changed = apply_overrides(base, {'train.steps': '7'})
        assert changed.train.steps == 7
        assert base.train.steps == 3000

    def test_key_without_value(self):
        with pytest.raises(ConfigError, match="no value"):
            apply_overrides(config_from_preset('desk_image'), {'train.steps': None})
