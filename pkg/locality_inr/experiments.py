"""
Desk-scale experiment drivers shared by scripts/run_ablation_suite.py and the
slow test suite: decoder-variant comparison with the locality statistic,
bandwidth ordering, test-time optimization, the procedural light field and
the few-shot support-view sweep.
"""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from locality_inr import data_store
from locality_inr.config import RunConfig, config_from_preset
from locality_inr.diagnostics import concentration_per_token, locality_win_rate, token_ablation_maps
from locality_inr.inr_model import GeneralizableINR
from locality_inr.layers.decoder import VARIANTS
from locality_inr.training import INRTrainer, psnr, tto_full, tto_latents

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (0, 1, 2)
LOCALITY_INSTANCES = 2


def train_preset(config: RunConfig, instances, seed: int, steps: Optional[int] = None,
                 output_dir: Optional[str] = None) -> INRTrainer:
    train = replace(config.train, seed=seed)
    model = GeneralizableINR.for_dataset(config.encoder, config.decoder, instances, seed=seed)
    trainer = INRTrainer(model, instances, train, output_dir=output_dir)
    trainer.fit(steps)
    return trainer


def locality_concentrations(model, instances) -> np.ndarray:
    """Per-token concentration averaged over the first few instances."""
    stats = [concentration_per_token(token_ablation_maps(model, inst)) for inst in instances[:LOCALITY_INSTANCES]]
    return np.mean(stats, axis=0)


def variant_suite(seeds: Sequence[int] = DEFAULT_SEEDS, steps: Optional[int] = None,
                  variants: Sequence[str] = VARIANTS, preset: str = 'desk_ablation') -> Dict:
    base = config_from_preset(preset)
    instances = data_store.make_synthetic_images(base.dataset.num_instances, base.dataset.height,
                                                 base.dataset.width, base.dataset.seed)
    results: Dict = {'preset': preset, 'seeds': list(seeds), 'psnr': {}, 'locality_win_rate': []}
    for seed in seeds:
        concentrations = {}
        for variant in variants:
            config = replace(base, decoder=replace(base.decoder, variant=variant))
            trainer = train_preset(config, instances, seed, steps)
            results['psnr'].setdefault(variant, []).append(trainer.last_eval_psnr)
            if variant in ('full', 'ipc_baseline'):
                concentrations[variant] = locality_concentrations(trainer.model, instances)
            logger.info("seed %d %-12s eval psnr %.2f dB", seed, variant, trainer.last_eval_psnr)
        if len(concentrations) == 2:
            results['locality_win_rate'].append(
                locality_win_rate(concentrations['full'], concentrations['ipc_baseline'])
            )
    results['mean_psnr'] = {v: float(np.mean(p)) for v, p in results['psnr'].items()}
    if results['locality_win_rate']:
        results['mean_locality_win_rate'] = float(np.mean(results['locality_win_rate']))
    return results


def bandwidth_suite(seeds: Sequence[int] = DEFAULT_SEEDS, steps: Optional[int] = None,
                    orderings: Sequence[Tuple[float, float, float]] = ((32.0, 8.0, 4.0), (4.0, 8.0, 32.0)),
                    preset: str = 'desk_image') -> Dict:
    base = config_from_preset(preset)
    instances = data_store.make_synthetic_images(base.dataset.num_instances, base.dataset.height,
                                                 base.dataset.width, base.dataset.seed)
    results: Dict = {'preset': preset, 'seeds': list(seeds), 'psnr': {}}
    for sigma_1, sigma_2, sigma_q in orderings:
        key = f"{sigma_1:g},{sigma_2:g},{sigma_q:g}"
        decoder = replace(base.decoder, sigma_levels=(sigma_1, sigma_2), sigma_q=sigma_q)
        for seed in seeds:
            trainer = train_preset(replace(base, decoder=decoder), instances, seed, steps)
            results['psnr'].setdefault(key, []).append(trainer.last_eval_psnr)
    results['mean_psnr'] = {k: float(np.mean(v)) for k, v in results['psnr'].items()}
    return results


def tto_suite(seed: int = 0, train_steps: Optional[int] = None, tto_steps: int = 200,
              lr: float = 1e-4, preset: str = 'desk_ablation') -> Dict:
    base = config_from_preset(preset)
    instances = data_store.make_synthetic_images(base.dataset.num_instances, base.dataset.height,
                                                 base.dataset.width, base.dataset.seed)
    trainer = train_preset(base, instances, seed, train_steps)
    rows = []
    for inst in instances:
        latent_only = tto_latents(trainer.model, inst, tto_steps, lr=lr)
        full = tto_full(trainer.model, inst, tto_steps, lr=lr)
        rows.append({
            'instance_id': inst.instance_id,
            'psnr_before': latent_only.psnr_trace[0],
            'psnr_tto_latents': latent_only.psnr_trace[-1],
            'psnr_tto_full': full.psnr_trace[-1],
            'loss_tto_latents': latent_only.loss_trace[-1],
            'loss_tto_full': full.loss_trace[-1],
        })
    return {'preset': preset, 'seed': seed, 'tto_steps': tto_steps, 'instances': rows}


def lightfield_suite(seed: int = 0, steps: Optional[int] = None, orbit_deg: float = 10.0,
                     preset: str = 'desk_lightfield') -> Dict:
    base = config_from_preset(preset)
    instances = data_store.load_synthetic_scene(base.dataset)
    trainer = train_preset(base, instances, seed, steps)
    scene = instances[0]
    spec = data_store.SceneSpec.from_dataset_config(base.dataset, 0)
    pose = data_store.orbit_pose(scene.poses[0], orbit_deg)
    rendered = trainer.model.render(scene, pose)
    reference = data_store.render_view(spec, pose)
    return {
        'preset': preset,
        'seed': seed,
        'support_psnr': trainer.last_eval_psnr,
        'heldout_orbit_deg': orbit_deg,
        'heldout_psnr': psnr(rendered, reference),
    }


def support_sweep(support_counts: Sequence[int] = (1, 2, 3, 4, 5), seed: int = 0, steps: Optional[int] = None,
                  preset: str = 'desk_fewshot') -> Dict:
    """Novel-view PSNR on held-out scenes for each number of encoded support views."""
    base = config_from_preset(preset)
    instances = data_store.load_synthetic_scene(base.dataset)
    results: Dict = {'preset': preset, 'seed': seed, 'novel_view_psnr': {}}
    for count in support_counts:
        config = replace(base, train=replace(base.train, support_views=count))
        trainer = train_preset(config, instances, seed, steps)
        results['novel_view_psnr'][count] = trainer.last_eval_psnr
        logger.info("%d support views: novel view psnr %.2f dB", count, trainer.last_eval_psnr)
    return results


SUITES = {
    'variants': variant_suite,
    'bandwidth': bandwidth_suite,
    'tto': tto_suite,
    'lightfield': lightfield_suite,
    'fewshot': support_sweep,
}
