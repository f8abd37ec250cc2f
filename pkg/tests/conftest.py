"""
Shared pytest setup.

Slow tests train desk-scale models for minutes; they run only with
LINR_RUN_SLOW=1 in the environment (or in .env).
"""
import os
import sys

import pytest
from dotenv import load_dotenv

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

RUN_SLOW_ENV = 'LINR_RUN_SLOW'


def pytest_configure(config):
    load_dotenv()
    config.addinivalue_line("markers", "slow: desk-scale training runs (set LINR_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.environ.get(RUN_SLOW_ENV) == '1':
        return
    skip_slow = pytest.mark.skip(reason=f"slow; set {RUN_SLOW_ENV}=1 to run")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


# ─────────────────────────────────────────────────────────────────────────────
# TINY MODELS
# ─────────────────────────────────────────────────────────────────────────────
def tiny_configs(variant: str = 'full', d_F: int = 8):
    """Encoder / decoder configs small enough for finite differences (d = 8, R = 4, L = 2)."""
    from locality_inr.layers.decoder import DecoderConfig
    from locality_inr.layers.encoder import EncoderConfig

    encoder = EncoderConfig(num_blocks=1, num_heads=2, head_dim=4, num_latents=4, patch_size=4)
    decoder = DecoderConfig(d=8, d_F=d_F, sigma_levels=(8.0, 4.0), sigma_q=2.0, sta_heads=1, variant=variant)
    return encoder, decoder


@pytest.fixture
def tiny_images():
    from locality_inr.data_store import make_synthetic_images
    return make_synthetic_images(4, 8, 8, seed=0)


@pytest.fixture
def tiny_scene():
    from locality_inr.data_store import DatasetConfig, load_synthetic_scene
    return load_synthetic_scene(DatasetConfig(num_instances=1, height=8, width=8, num_views=3))[0]


@pytest.fixture
def make_model(tiny_images):
    """Factory: make_model(variant='full', seed=0, instances=None, d_F=8) -> GeneralizableINR."""
    from locality_inr.inr_model import GeneralizableINR

    def _make(variant: str = 'full', seed: int = 0, instances=None, d_F: int = 8):
        encoder, decoder = tiny_configs(variant, d_F)
        return GeneralizableINR.for_dataset(encoder, decoder, instances or tiny_images, seed=seed)
    return _make
