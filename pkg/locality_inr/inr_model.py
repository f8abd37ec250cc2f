"""
Generalizable INR: encoder + locality-aware decoder
====================================================
Ties a DataInstance to the two networks:

    instance --patchify--> TransformerEncoder --> Z (R x d_latent)
    coordinates, Z --> LocalityAwareDecoder --> predictions

Designed for standalone use OR via locality_inr.training (trainer / TTO).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, replace
from typing import List, Optional, Sequence

import numpy as np

from locality_inr import coords as coords_lib
from locality_inr import tensor_core as tc
from locality_inr.data_store import DataInstance
from locality_inr.errors import ConfigError, ContractError, DimensionError
from locality_inr.layers.decoder import DecoderConfig, DecoderTrace, LocalityAwareDecoder
from locality_inr.layers.encoder import EncoderConfig, TransformerEncoder, patch_grid, patchify_views
from locality_inr.layers.modules import Module, count_by_prefix

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 4096


def resolve_latent_dim(encoder_config: EncoderConfig, decoder_config: DecoderConfig) -> EncoderConfig:
    required = decoder_config.required_latent_dim
    if encoder_config.d_latent is None:
        return replace(encoder_config, d_latent=required)
    if encoder_config.d_latent != required:
        raise ConfigError(
            "encoder.d_latent",
            f"{encoder_config.d_latent} is incompatible with decoder variant "
            f"{decoder_config.variant!r}, which needs {required}",
        )
    return encoder_config


class GeneralizableINR(Module):
    def __init__(self, encoder_config: EncoderConfig, decoder_config: DecoderConfig, seed: int = 0):
        super().__init__()
        encoder_config = resolve_latent_dim(encoder_config, decoder_config)
        if encoder_config.in_channels < 1 or encoder_config.image_height < 1 or encoder_config.image_width < 1:
            raise ConfigError("encoder.in_channels", "input layout unset; build with GeneralizableINR.for_dataset")
        self.encoder_config = encoder_config
        self.decoder_config = decoder_config
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.encoder = TransformerEncoder(encoder_config, rng)
        self.decoder = LocalityAwareDecoder(decoder_config, encoder_config.num_latents,
                                            encoder_config.d_latent, rng)
        logger.debug("built %s model: %d parameters %s", decoder_config.variant, self.num_parameters(),
                     count_by_prefix(self.named_parameters()))

    @classmethod
    def for_dataset(cls, encoder_config: EncoderConfig, decoder_config: DecoderConfig,
                    instances: Sequence[DataInstance], seed: int = 0) -> 'GeneralizableINR':
        """Fill the data-dependent fields (image size, channels, d_in, d_out) from the dataset."""
        if not instances:
            raise ContractError("cannot size a model from an empty dataset")
        first = instances[0]
        views = first.encoder_views()
        encoder_config = replace(
            encoder_config,
            image_height=first.height,
            image_width=first.width,
            in_channels=views.shape[-1],
            max_views=max(len(inst.support) for inst in instances),
        )
        decoder_config = replace(decoder_config, d_in=first.d_in, d_out=first.channels)
        return cls(encoder_config, decoder_config, seed=seed)

    def config_dict(self) -> dict:
        return {'encoder': asdict(self.encoder_config), 'decoder': asdict(self.decoder_config), 'seed': self.seed}

    @classmethod
    def from_config_dict(cls, payload: dict) -> 'GeneralizableINR':
        decoder = dict(payload['decoder'])
        decoder['sigma_levels'] = tuple(decoder['sigma_levels'])
        return cls(EncoderConfig(**payload['encoder']), DecoderConfig(**decoder), seed=int(payload.get('seed', 0)))

    # ─────────────────────────────────────────────────────────────────────────
    # ENCODE
    # ─────────────────────────────────────────────────────────────────────────
    def encoder_input(self, instance: DataInstance) -> np.ndarray:
        """(V, patches_per_view, patch_dim) for one instance."""
        cfg = self.encoder_config
        if len(instance.support) > cfg.max_views:
            raise ContractError(
                f"instance {instance.instance_id}: {len(instance.support)} support views, "
                f"model was trained with at most {cfg.max_views}"
            )
        expected = patch_grid(cfg.image_height, cfg.image_width, cfg.patch_size)
        got = patch_grid(instance.height, instance.width, cfg.patch_size)
        if got != expected:
            raise DimensionError(
                f"instance {instance.instance_id}: {instance.height}x{instance.width} tiles into a {got} grid "
                f"of {cfg.patch_size}x{cfg.patch_size} patches; the model expects {expected} "
                f"(images are zero-padded at the bottom/right up to a multiple of the patch size)"
            )
        return patchify_views(instance.encoder_views(), cfg.patch_size)

    def encode_patches(self, patches: np.ndarray) -> tc.Tensor:
        return self.encoder(patches)

    def encode(self, instances: Sequence[DataInstance]) -> tc.Tensor:
        """(B, R, d_latent) latent tokens; every instance in the batch needs the same view count."""
        if not instances:
            raise ContractError("encode: empty batch")
        arrays = [self.encoder_input(inst) for inst in instances]
        if len({a.shape for a in arrays}) > 1:
            raise DimensionError(f"encode: batch mixes input layouts {sorted({a.shape for a in arrays})}")
        return self.encode_patches(np.stack(arrays, axis=0))

    # ─────────────────────────────────────────────────────────────────────────
    # DECODE
    # ─────────────────────────────────────────────────────────────────────────
    def decode(self, coords: np.ndarray, latents: tc.Tensor,
               trace: Optional[DecoderTrace] = None) -> tc.Tensor:
        return self.decoder.decode(coords, latents, trace=trace)

    def latents_for(self, instance: DataInstance) -> np.ndarray:
        with tc.no_grad():
            return self.encode([instance]).data.copy()

    def predict(self, instance: Optional[DataInstance] = None, latents=None,
                coords: Optional[np.ndarray] = None, chunk_size: int = DEFAULT_CHUNK,
                decoder: Optional[LocalityAwareDecoder] = None) -> np.ndarray:
        """
        (M, d_out) predictions for one instance, decoded in chunks without a graph.

        latents default to the encoder output for `instance`; coords default to
        the instance's own coordinate set.
        """
        decoder = decoder or self.decoder
        if latents is None:
            if instance is None:
                raise ContractError("predict needs an instance or latents")
            latents = self.latents_for(instance)
        latents = latents if isinstance(latents, tc.Tensor) else tc.Tensor(latents)
        if latents.ndim == 2:
            latents = tc.Tensor._wrap(latents.data[None], 'detach')
        if coords is None:
            if instance is None:
                raise ContractError("predict needs an instance or coords")
            coords = instance.coordinates(self.decoder_config.coord_range)
        outputs: List[np.ndarray] = []
        with tc.no_grad():
            for start in range(0, len(coords), chunk_size):
                outputs.append(decoder.decode(coords[start:start + chunk_size], latents).data[0])
        if not outputs:
            return np.zeros((0, self.decoder_config.d_out))
        return np.concatenate(outputs, axis=0)

    def render(self, instance: DataInstance, pose: np.ndarray, height: Optional[int] = None,
               width: Optional[int] = None, latents=None) -> np.ndarray:
        """Novel view of a light-field instance from `pose`, (height, width, d_out) clipped to [0, 1]."""
        if instance.kind != 'lightfield':
            raise ContractError(f"instance {instance.instance_id} has no camera model to render from")
        height = height or instance.height
        width = width or instance.width
        intrinsics = instance.intrinsics.scaled(height, width, instance.height, instance.width)
        rays = coords_lib.ray_bundle(pose, intrinsics, height, width)
        pred = self.predict(instance, latents=latents, coords=rays)
        return np.clip(pred, 0.0, 1.0).reshape(height, width, -1)

    def __call__(self, instances: Sequence[DataInstance], coords: np.ndarray) -> tc.Tensor:
        return self.decode(coords, self.encode(instances))
