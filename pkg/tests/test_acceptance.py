"""
Desk-scale training runs: overfit, variant ordering, locality, bandwidth
ordering, test-time optimization, the procedural light field and
few-shot novel views.

These take minutes to an hour on one core and are skipped unless
LINR_RUN_SLOW=1.
Run: LINR_RUN_SLOW=1 pytest tests/test_acceptance.py -v -s
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from locality_inr import data_store, experiments
from locality_inr.config import config_from_preset

pytestmark = pytest.mark.slow

OVERFIT_PSNR_DB = 35.0
SUPPORT_PSNR_DB = 30.0
NOVEL_VIEW_PSNR_DB = 20.0
LOCALITY_WIN_RATE = 0.6
PSNR_TOL_DB = 0.01
LOSS_TOL = 1e-6


@pytest.fixture(scope='module')
def variant_results():
    return experiments.variant_suite(seeds=(0, 1, 2))


class TestOverfit:

    def test_single_image_reaches_threshold(self):
        config = config_from_preset('desk_image')
        assert config.train.steps == 3000
        instances = data_store.make_synthetic_images(1, 32, 32, seed=0)
        trainer = experiments.train_preset(config, instances, seed=0)
        print(f"\n  overfit PSNR: {trainer.last_eval_psnr:.2f} dB")
        assert trainer.last_eval_psnr >= OVERFIT_PSNR_DB


class TestVariantOrdering:

    def test_full_model_beats_every_ablation(self, variant_results):
        mean = variant_results['mean_psnr']
        print("\n" + "=" * 60)
        for variant, value in mean.items():
            print(f"  {variant:<14} {value:>8.2f} dB")
        print("=" * 60)
        for variant in ('no_sta', 'no_multifm', 'ipc_baseline'):
            assert mean['full'] > mean[variant], variant

    def test_full_model_is_more_local(self, variant_results):
        assert len(variant_results['locality_win_rate']) == 3
        assert variant_results['mean_locality_win_rate'] >= LOCALITY_WIN_RATE


class TestBandwidthOrdering:

    def test_coarse_to_fine_beats_reversed(self):
        results = experiments.bandwidth_suite(seeds=(0, 1, 2))
        mean = results['mean_psnr']
        print(f"\n  32,8,4: {mean['32,8,4']:.2f} dB | 4,8,32: {mean['4,8,32']:.2f} dB")
        assert mean['32,8,4'] >= mean['4,8,32']


class TestTestTimeOptimization:

    def test_tto_never_hurts_and_full_tto_fits_better(self):
        results = experiments.tto_suite(seed=0, tto_steps=200)
        assert len(results['instances']) == 8
        for row in results['instances']:
            assert row['psnr_tto_latents'] >= row['psnr_before'] - PSNR_TOL_DB, row['instance_id']
            assert row['loss_tto_full'] <= row['loss_tto_latents'] + LOSS_TOL, row['instance_id']


class TestLightField:

    def test_support_overfit_and_nearby_view(self):
        results = experiments.lightfield_suite(seed=0, orbit_deg=10.0)
        print(f"\n  support {results['support_psnr']:.2f} dB | "
              f"novel view {results['heldout_psnr']:.2f} dB")
        assert results['support_psnr'] >= SUPPORT_PSNR_DB
        assert results['heldout_psnr'] >= NOVEL_VIEW_PSNR_DB
        assert np.isfinite(results['heldout_psnr'])


class TestFewShot:

    def test_more_support_views_do_not_hurt_novel_views(self):
        results = experiments.support_sweep(support_counts=(1, 4), seed=0)
        scores = results['novel_view_psnr']
        print(f"\n  1 view: {scores[1]:.2f} dB | 4 views: {scores[4]:.2f} dB")
        assert all(np.isfinite(v) for v in scores.values())
        assert scores[4] >= scores[1]
