"""
GeneralizableINR: sizing from data, encode / decode plumbing, rendering
Run: pytest tests/test_inr_model.py -v
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from locality_inr import data_store
from locality_inr.data_store import DataInstance
from locality_inr.errors import ConfigError, ContractError, DimensionError
from locality_inr.inr_model import GeneralizableINR, resolve_latent_dim
from locality_inr.layers.decoder import DecoderConfig
from locality_inr.layers.encoder import EncoderConfig


class TestSizing:

    def test_latent_width_follows_decoder(self):
        encoder = resolve_latent_dim(EncoderConfig(), DecoderConfig(d=64))
        assert encoder.d_latent == 64
        encoder = resolve_latent_dim(EncoderConfig(), DecoderConfig(variant='ipc_baseline', d_F=32))
        assert encoder.d_latent == 32

    def test_latent_width_conflict(self):
        with pytest.raises(ConfigError, match="encoder.d_latent"):
            resolve_latent_dim(EncoderConfig(d_latent=10), DecoderConfig(d=64))

    def test_unsized_model_rejected(self):
        with pytest.raises(ConfigError):
            GeneralizableINR(EncoderConfig(), DecoderConfig())

    def test_for_dataset_fills_layout(self, make_model):
        model = make_model()
        assert model.encoder_config.image_height == 8
        assert model.encoder_config.in_channels == 3
        assert model.decoder_config.d_in == 2
        assert model.decoder_config.d_out == 3

    def test_light_field_layout(self, make_model, tiny_scene):
        model = make_model(instances=[tiny_scene], d_F=24)
        assert model.encoder_config.in_channels == 9
        assert model.encoder_config.max_views == 3
        assert model.decoder_config.d_in == 6

    def test_config_dict_rebuilds_same_model(self, make_model):
        model = make_model(seed=4)
        rebuilt = GeneralizableINR.from_config_dict(model.config_dict())
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(rebuilt.state_dict()[name], value)


class TestEncodeDecode:

    def test_latent_shape(self, make_model, tiny_images):
        assert make_model().encode(tiny_images[:3]).shape == (3, 4, 8)

    def test_smaller_image_in_same_patch_grid_is_padded(self, make_model):
        model = make_model()
        inst = DataInstance('small', np.full((7, 6, 3), 0.5))
        assert model.latents_for(inst).shape == (1, 4, 8)

    def test_larger_image_rejected_with_padding_rule(self, make_model):
        model = make_model()
        with pytest.raises(DimensionError, match="zero-padded"):
            model.encode([DataInstance('big', np.zeros((12, 12, 3)))])

    def test_too_many_views(self, make_model, tiny_scene):
        model = make_model(instances=[tiny_scene.with_support((0, 1))], d_F=24)
        with pytest.raises(ContractError, match="support views"):
            model.encode([tiny_scene])

    def test_predict_chunking_is_transparent(self, make_model, tiny_images):
        model = make_model()
        whole = model.predict(tiny_images[0])
        chunked = model.predict(tiny_images[0], chunk_size=7)
        assert whole.shape == (64, 3)
        np.testing.assert_allclose(chunked, whole, rtol=1e-6, atol=1e-7)

    def test_predict_matches_training_graph(self, make_model, tiny_images):
        model = make_model()
        inst = tiny_images[1]
        graph = model([inst], inst.coordinates()).data[0]
        np.testing.assert_allclose(model.predict(inst), graph, rtol=1e-6, atol=1e-7)

    def test_predict_needs_inputs(self, make_model):
        with pytest.raises(ContractError):
            make_model().predict()

    def test_predict_leaves_no_graph(self, make_model, tiny_images):
        model = make_model()
        model.predict(tiny_images[0])
        assert all(p.grad is None for p in model.parameters())


class TestRender:

    def test_render_shape_and_range(self, make_model, tiny_scene):
        model = make_model(instances=[tiny_scene], d_F=24)
        pose = data_store.orbit_pose(tiny_scene.poses[0], 10.0)
        image = model.render(tiny_scene, pose)
        assert image.shape == (8, 8, 3)
        assert image.min() >= 0.0 and image.max() <= 1.0

    def test_render_at_support_pose_matches_prediction(self, make_model, tiny_scene):
        model = make_model(instances=[tiny_scene], d_F=24)
        rendered = model.render(tiny_scene, tiny_scene.poses[1])
        pred = np.clip(model.predict(tiny_scene), 0.0, 1.0).reshape(3, 8, 8, 3)
        np.testing.assert_allclose(rendered, pred[1], rtol=1e-5, atol=1e-6)

    def test_render_other_resolution(self, make_model, tiny_scene):
        model = make_model(instances=[tiny_scene], d_F=24)
        assert model.render(tiny_scene, tiny_scene.poses[0], height=4, width=6).shape == (4, 6, 3)

    def test_images_cannot_be_rendered(self, make_model, tiny_images):
        with pytest.raises(ContractError):
            make_model().render(tiny_images[0], np.eye(4))
