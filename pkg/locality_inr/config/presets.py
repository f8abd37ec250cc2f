"""
Locality-Aware INR - Experiment Presets
"""

import copy

from locality_inr.errors import ConfigError

EXPERIMENT_PRESETS = {
    'image': {
        'name': 'Image reconstruction',
        'experiment': 'image',
        'encoder': {'num_blocks': 6, 'num_heads': 12, 'head_dim': 64, 'num_latents': 256, 'patch_size': 9},
        'decoder': {'d': 256, 'd_F': 256, 'sigma_levels': (128.0, 32.0), 'sigma_q': 16.0, 'sta_heads': 2},
        # 10% coordinate sampling kicks in at 256x256 and above
        'train': {'batch_size': 16, 'lr': 1e-4, 'coord_fraction': 'auto', 'steps': 100000,
                  'eval_interval': 1000, 'log_interval': 100},
        'dataset': {'height': 178, 'width': 178},
        'description': 'Full-size image setup (CelebA-like 178x178, 9x9 patches -> 400 tokens)',
    },
    'lightfield': {
        'name': 'Novel view synthesis',
        'experiment': 'lightfield',
        'encoder': {'num_blocks': 6, 'num_heads': 12, 'head_dim': 64, 'num_latents': 256, 'patch_size': 8},
        # d_F must divide by 2 * d_in = 12
        'decoder': {'d': 256, 'd_F': 240, 'sigma_levels': (8.0, 4.0), 'sigma_q': 2.0, 'sta_heads': 2},
        'train': {'batch_size': 32, 'lr': 1e-4, 'coord_fraction': 0.1, 'steps': 100000,
                  'eval_interval': 1000, 'log_interval': 100},
        'dataset': {'height': 128, 'width': 128, 'num_views': 25},
        'description': 'Posed multi-view scenes with Plücker ray inputs',
    },
    'desk_image': {
        'name': 'Desk-scale single image overfit',
        'experiment': 'image',
        'encoder': {'num_blocks': 2, 'num_heads': 4, 'head_dim': 16, 'num_latents': 16, 'patch_size': 8},
        # [0, 1] coordinates put sigma = 32 at the Nyquist rate of a 32-pixel axis
        'decoder': {'d': 64, 'd_F': 64, 'sigma_levels': (32.0, 8.0), 'sigma_q': 4.0, 'sta_heads': 1,
                    'coord_range': 'unit', 'ipc_sigma': 32.0},
        'train': {'batch_size': 1, 'lr': 1e-4, 'coord_fraction': 1.0, 'steps': 3000,
                  'eval_interval': 250, 'log_interval': 50, 'holdout_fraction': 0.0},
        'dataset': {'height': 32, 'width': 32, 'num_instances': 1},
        'description': 'One 32x32 image, 8x8 patches, R=16, d=64',
    },
    'desk_ablation': {
        'name': 'Desk-scale variant comparison',
        'experiment': 'image',
        'encoder': {'num_blocks': 2, 'num_heads': 4, 'head_dim': 16, 'num_latents': 16, 'patch_size': 8},
        'decoder': {'d': 64, 'd_F': 64, 'sigma_levels': (32.0, 8.0), 'sigma_q': 4.0, 'sta_heads': 1,
                    'coord_range': 'unit', 'ipc_sigma': 32.0},
        'train': {'batch_size': 8, 'lr': 3e-4, 'coord_fraction': 0.5, 'steps': 3000,
                  'eval_interval': 500, 'log_interval': 100, 'holdout_fraction': 0.0},
        'dataset': {'height': 32, 'width': 32, 'num_instances': 8},
        'description': 'Eight 32x32 images, fixed step budget, one seed per run',
    },
    'desk_lightfield': {
        'name': 'Desk-scale procedural scene',
        'experiment': 'lightfield',
        'encoder': {'num_blocks': 2, 'num_heads': 4, 'head_dim': 16, 'num_latents': 16, 'patch_size': 8},
        'decoder': {'d': 64, 'd_F': 48, 'sigma_levels': (8.0, 4.0), 'sigma_q': 2.0, 'sta_heads': 1},
        'train': {'batch_size': 1, 'lr': 2e-4, 'coord_fraction': 0.5, 'steps': 6000,
                  'eval_interval': 500, 'log_interval': 100, 'holdout_fraction': 0.0},
        'dataset': {'height': 32, 'width': 32, 'num_instances': 1, 'num_views': 8},
        'description': 'One 8-view ray-cast scene on a camera ring',
    },
    'desk_fewshot': {
        'name': 'Desk-scale few-shot novel views',
        'experiment': 'lightfield',
        'encoder': {'num_blocks': 2, 'num_heads': 4, 'head_dim': 16, 'num_latents': 16, 'patch_size': 8},
        'decoder': {'d': 64, 'd_F': 48, 'sigma_levels': (8.0, 4.0), 'sigma_q': 2.0, 'sta_heads': 1},
        # each step encodes support_views random views and supervises the rest
        'train': {'batch_size': 4, 'lr': 2e-4, 'coord_fraction': 0.25, 'steps': 2000, 'support_views': 3,
                  'eval_interval': 500, 'log_interval': 100, 'holdout_fraction': 0.25},
        'dataset': {'height': 32, 'width': 32, 'num_instances': 8, 'num_views': 8, 'shape': 'mixed'},
        'description': 'Eight mixed sphere / cube scenes; novel views scored on two held-out scenes',
    },
}

EXPERIMENT_KINDS = ('image', 'lightfield')


def get_preset(name: str) -> dict:
    """Deep copy of a preset, safe to mutate."""
    if name not in EXPERIMENT_PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; available: {sorted(EXPERIMENT_PRESETS)}")
    return copy.deepcopy(EXPERIMENT_PRESETS[name])


def list_presets() -> dict:
    return {key: cfg['description'] for key, cfg in EXPERIMENT_PRESETS.items()}
