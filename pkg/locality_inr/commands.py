"""
Command implementations behind scripts/inr_cli.py.

Each cmd_* function does the work and returns a plain result (dict or
DataFrame); printing and exit codes belong to the script.
"""

from __future__ import annotations

import logging
import os
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from locality_inr import checkpoint as ckpt
from locality_inr import data_store
from locality_inr.config import RunConfig, parse_config_file, run_config_from_flat, write_config_file
from locality_inr.data_store import DataInstance
from locality_inr.diagnostics import concentration_per_token, token_ablation_maps
from locality_inr.errors import ConfigError, ContractError, DatasetError
from locality_inr.inr_model import GeneralizableINR
from locality_inr.training import INRTrainer, evaluate_psnr, psnr, scoring_instances, split_holdout

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = 'checkpoint.linr'


def _run_config_for(data: ckpt.CheckpointData, config_path: Optional[str]) -> RunConfig:
    if config_path:
        return parse_config_file(config_path)
    if not data.run_config:
        raise ConfigError("config", "checkpoint carries no run config; pass --config")
    return run_config_from_flat(data.run_config)


def _load_instance(path: str, scene_index: int = 0) -> DataInstance:
    if path.lower().endswith('.npz'):
        scenes = data_store.load_scene_file(path)
        if not 0 <= scene_index < len(scenes):
            raise ContractError(f"scene index {scene_index} out of range 0..{len(scenes) - 1}")
        return scenes[scene_index]
    stem = os.path.splitext(os.path.basename(path))[0]
    return DataInstance(stem, data_store.load_png(path))


# ─────────────────────────────────────────────────────────────────────────────
# TRAIN / EVAL
# ─────────────────────────────────────────────────────────────────────────────
def cmd_train(config_path: str, resume: bool = False) -> dict:
    config = parse_config_file(config_path)
    output_dir = config.resolved_output_dir()
    os.makedirs(output_dir, exist_ok=True)
    write_config_file(os.path.join(output_dir, 'run_config.txt'), config)

    instances = data_store.load_dataset(config.dataset_path, config.experiment, config.dataset)
    checkpoint_path = os.path.join(output_dir, CHECKPOINT_NAME)
    if resume and os.path.exists(checkpoint_path):
        trainer = INRTrainer.from_checkpoint(checkpoint_path, instances, config.train, output_dir=output_dir)
        logger.info("resuming from step %d", trainer.step)
    else:
        model = GeneralizableINR.for_dataset(config.encoder, config.decoder, instances, seed=config.train.seed)
        trainer = INRTrainer(model, instances, config.train, output_dir=output_dir, run_config=config.to_flat())
    trainer.fit()
    return {
        'checkpoint': checkpoint_path,
        'metrics_log': trainer.metric_log_path,
        'steps': trainer.step,
        'final_loss': trainer.loss_trace[-1] if trainer.loss_trace else float('nan'),
        'eval_psnr': trainer.last_eval_psnr,
    }


def cmd_eval(checkpoint_path: str, config_path: Optional[str] = None,
             output_csv: Optional[str] = None) -> pd.DataFrame:
    model, data = ckpt.load_model(checkpoint_path)
    config = _run_config_for(data, config_path)
    instances = data_store.load_dataset(config.dataset_path, config.experiment, config.dataset)
    train, held = split_holdout(instances, config.train.holdout_fraction)
    train, held = (scoring_instances(subset, config.train.support_views) for subset in (train, held))
    rows = []
    for split, subset in (('train', train), ('holdout', held)):
        for inst, value in zip(subset, evaluate_psnr(model, subset, config.train.eval_chunk)):
            rows.append({'split': split, 'instance_id': inst.instance_id, 'psnr': value})
    frame = pd.DataFrame(rows, columns=['split', 'instance_id', 'psnr'])
    if output_csv:
        os.makedirs(os.path.dirname(os.path.abspath(output_csv)), exist_ok=True)
        frame.to_csv(output_csv, index=False)
    return frame


# ─────────────────────────────────────────────────────────────────────────────
# RECONSTRUCT
# ─────────────────────────────────────────────────────────────────────────────
def cmd_reconstruct(checkpoint_path: str, image_paths: Sequence[str], output_dir: str) -> pd.DataFrame:
    model, _ = ckpt.load_model(checkpoint_path)
    if model.decoder_config.d_in != 2:
        raise ContractError("reconstruct needs an image checkpoint; use nvs for light fields")
    if not image_paths:
        raise DatasetError("no images to reconstruct")
    rows = []
    for path in image_paths:
        instance = _load_instance(path)
        pred = np.clip(model.predict(instance), 0.0, 1.0).reshape(instance.height, instance.width, -1)
        png_path = os.path.join(output_dir, f"{instance.instance_id}_recon.png")
        raw_path = os.path.join(output_dir, f"{instance.instance_id}_recon.npy")
        data_store.save_png(png_path, pred)
        data_store.save_raw(raw_path, pred)
        rows.append({'image': path, 'psnr': psnr(pred, instance.images[0]), 'png': png_path, 'raw': raw_path})
    return pd.DataFrame(rows, columns=['image', 'psnr', 'png', 'raw'])


# ─────────────────────────────────────────────────────────────────────────────
# TOKEN ABLATION
# ─────────────────────────────────────────────────────────────────────────────
def cmd_ablate_token(checkpoint_path: str, instance_path: str, token: Union[str, int],
                     output_dir: str, scene_index: int = 0) -> pd.DataFrame:
    model, _ = ckpt.load_model(checkpoint_path)
    instance = _load_instance(instance_path, scene_index)
    num_latents = model.encoder_config.num_latents
    tokens = list(range(num_latents)) if token == 'all' else [int(token)]
    maps = token_ablation_maps(model, instance, tokens)
    stats = concentration_per_token(maps)

    rows = []
    for k, delta, stat in zip(tokens, maps, stats):
        # Light-field maps are (V, H, W); views go side by side
        image = delta if delta.ndim == 2 else np.concatenate(list(delta), axis=1)
        png_path = os.path.join(output_dir, f"token_{k:03d}.png")
        data_store.save_png(png_path, image)
        rows.append({'token': k, 'concentration': stat, 'png': png_path})
    frame = pd.DataFrame(rows, columns=['token', 'concentration', 'png'])
    frame.to_csv(os.path.join(output_dir, 'concentration.csv'), index=False)
    return frame


# ─────────────────────────────────────────────────────────────────────────────
# LATENT EXPORT
# ─────────────────────────────────────────────────────────────────────────────
def cmd_export_latents(checkpoint_path: str, output_path: str,
                       config_path: Optional[str] = None) -> ckpt.LatentArchive:
    model, data = ckpt.load_model(checkpoint_path)
    config = _run_config_for(data, config_path)
    instances = data_store.load_dataset(config.dataset_path, config.experiment, config.dataset)
    train, _ = split_holdout(instances, config.train.holdout_fraction)
    latents = np.concatenate([model.latents_for(inst) for inst in instances], axis=0)
    archive = ckpt.LatentArchive.from_latents(
        latents,
        [inst.instance_id for inst in instances],
        [inst.label for inst in instances],
        fit_count=len(train),
    )
    archive.save(output_path)
    return archive


# ─────────────────────────────────────────────────────────────────────────────
# NOVEL VIEW SYNTHESIS
# ─────────────────────────────────────────────────────────────────────────────
def parse_target_pose(spec: str, instance: DataInstance) -> np.ndarray:
    """'view:K' (pose of view K), 'orbit:DEG' (view 0 rotated about +y), or a 4x4 / 3x4 text or .npy file."""
    kind, _, value = spec.partition(':')
    try:
        if kind == 'view' and value:
            index = int(value)
            if not 0 <= index < instance.num_views:
                raise ContractError(f"view {index} out of range 0..{instance.num_views - 1}")
            return instance.poses[index]
        if kind == 'orbit' and value:
            return data_store.orbit_pose(instance.poses[0], float(value))
    except ValueError as e:
        raise ContractError(f"malformed target pose {spec!r}: {e}") from None
    if not os.path.isfile(spec):
        raise ContractError(f"target pose {spec!r} is neither view:K, orbit:DEG nor a file")
    try:
        pose = np.load(spec) if spec.endswith('.npy') else np.loadtxt(spec)
    except (OSError, ValueError) as e:
        raise ContractError(f"malformed target pose file {spec}: {e}") from None
    return np.asarray(pose, dtype=np.float64)


def cmd_nvs(checkpoint_path: str, scene_path: str, target_pose: str, output_path: str,
            height: Optional[int] = None, width: Optional[int] = None,
            support: Optional[Sequence[int]] = None, scene_index: int = 0) -> dict:
    model, _ = ckpt.load_model(checkpoint_path)
    instance = _load_instance(scene_path, scene_index)
    if instance.kind != 'lightfield':
        raise ContractError(f"{scene_path} holds no posed views")
    if support:
        instance = instance.with_support(support)
    pose = parse_target_pose(target_pose, instance)
    image = model.render(instance, pose, height, width)
    data_store.save_png(output_path, image)
    data_store.save_raw(os.path.splitext(output_path)[0] + '.npy', image)

    result = {'image': output_path, 'height': image.shape[0], 'width': image.shape[1], 'psnr': float('nan')}
    kind, _, value = target_pose.partition(':')
    if kind == 'view' and image.shape[:2] == (instance.height, instance.width):
        result['psnr'] = psnr(image, instance.images[int(value)])
    return result
