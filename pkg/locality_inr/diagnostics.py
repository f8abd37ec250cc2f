"""
Locality diagnostics: token-ablation maps, their spatial concentration, and
the attention mass each latent token receives over a coordinate grid.
"""

from __future__ import annotations

import logging
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from locality_inr import tensor_core as tc
from locality_inr.data_store import DataInstance
from locality_inr.errors import ContractError
from locality_inr.layers.decoder import DecoderTrace

logger = logging.getLogger(__name__)

TOP_FRACTION = 0.10


def _token_indices(tokens: Union[str, int, Iterable[int]], num_latents: int) -> list:
    if tokens == 'all':
        return list(range(num_latents))
    indices = [int(tokens)] if isinstance(tokens, (int, np.integer)) else [int(k) for k in tokens]
    for k in indices:
        if not 0 <= k < num_latents:
            raise ContractError(f"token index {k} out of range 0..{num_latents - 1}")
    return indices


def token_ablation_maps(model, instance: DataInstance, tokens: Union[str, int, Iterable[int]] = 'all',
                        latents: Optional[np.ndarray] = None, rescale: bool = True,
                        chunk_size: int = 4096) -> np.ndarray:
    """
    Per-pixel |decode(v, Z) - decode(v, Z with z_k := 0)| summed over channels,
    shape (K,) + instance.grid_shape. With `rescale`, each nonzero map is divided
    by its maximum.
    """
    base_latents = model.latents_for(instance) if latents is None else np.asarray(latents)
    if base_latents.ndim == 2:
        base_latents = base_latents[None]
    indices = _token_indices(tokens, base_latents.shape[1])
    coords = instance.coordinates(model.decoder_config.coord_range)
    reference = model.predict(latents=base_latents, coords=coords, chunk_size=chunk_size)

    maps = np.zeros((len(indices),) + instance.grid_shape)
    for row, k in enumerate(indices):
        ablated = base_latents.copy()
        ablated[:, k, :] = 0.0
        pred = model.predict(latents=ablated, coords=coords, chunk_size=chunk_size)
        delta = np.abs(pred.astype(np.float64) - reference).sum(axis=-1)
        peak = delta.max()
        if rescale and peak > 0:
            delta = delta / peak
        maps[row] = delta.reshape(instance.grid_shape)
    return maps


def concentration(delta_map: np.ndarray, top_fraction: float = TOP_FRACTION) -> float:
    """Fraction of the map's total mass held by its top `top_fraction` of pixels (0 for an empty map)."""
    values = np.sort(np.asarray(delta_map, dtype=np.float64).reshape(-1))[::-1]
    total = values.sum()
    if total <= 0:
        return 0.0
    top = max(1, int(round(top_fraction * values.size)))
    return float(values[:top].sum() / total)


def concentration_per_token(maps: np.ndarray, top_fraction: float = TOP_FRACTION) -> np.ndarray:
    return np.array([concentration(m, top_fraction) for m in maps])


def locality_win_rate(full: Sequence[float], baseline: Sequence[float]) -> float:
    """
    Share of tokens whose concentration beats the baseline's at the same rank.

    Token k of two independently trained models are unrelated, so both
    statistics are sorted before comparison.
    """
    full = np.sort(np.asarray(full, dtype=np.float64))[::-1]
    baseline = np.sort(np.asarray(baseline, dtype=np.float64))[::-1]
    n = min(len(full), len(baseline))
    if n == 0:
        raise ContractError("locality_win_rate: no tokens to compare")
    return float(np.mean(full[:n] > baseline[:n]))


def attention_mass_per_token(model, instance: DataInstance, latents: Optional[np.ndarray] = None,
                             chunk_size: int = 4096) -> np.ndarray:
    """Total cross-attention weight each latent token receives over the instance's coordinates, (R,)."""
    if not model.decoder_config.uses_sta:
        raise ContractError(f"variant {model.decoder_config.variant!r} has no cross-attention")
    z = model.latents_for(instance) if latents is None else np.asarray(latents)
    if z.ndim == 2:
        z = z[None]
    z_tensor = tc.Tensor(z)
    coords = instance.coordinates(model.decoder_config.coord_range)
    mass = np.zeros(z.shape[1])
    with tc.no_grad():
        for start in range(0, len(coords), chunk_size):
            trace = DecoderTrace()
            model.decode(coords[start:start + chunk_size], z_tensor, trace=trace)
            # (B, heads, M, R) -> (R,)
            mass += trace.attention.data.sum(axis=(0, 1, 2))
    return mass
