"""
Locality-Aware INR Decoder
==========================
F(v; Z) for a batch of coordinates and per-instance latent tokens.

Pipelines (DecoderConfig.variant):
  full         : query features -> cross-attention over Z (m_v) -> per-band
                 modulations -> progressive composition -> summed output heads
  no_sta       : IPC-style modulation Z . u(v) (m_v in R^R) -> per-band modulations -> composition
  no_multifm   : cross-attention m_v shifts the first layer of a plain L-layer MLP
  ipc_baseline : IPC-style modulation shifts the second layer of a plain MLP

Shapes: coords (B, M, d_in) numpy, Z (B, R, d_latent) Tensor, output (B, M, d_out).
Every parameter a variant creates is used by that variant's forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from locality_inr import coords as coords_lib
from locality_inr import tensor_core as tc
from locality_inr.errors import ConfigError, ContractError, DimensionError
from locality_inr.layers.modules import Linear, Module, MultiHeadAttention, fan_in_normal

VARIANTS = ('full', 'no_sta', 'no_multifm', 'ipc_baseline')
IPC_INPUTS = ('fourier', 'raw')


@dataclass
class DecoderConfig:
    d: int = 256
    d_F: int = 256
    d_in: int = 2
    d_out: int = 3
    sigma_levels: Tuple[float, ...] = (128.0, 32.0)
    sigma_q: float = 16.0
    sta_heads: int = 2
    variant: str = 'full'
    fixed_band_projection: bool = False     # band features use a frozen identity-like projection
    identity_band_modulation: bool = False  # band modulation adds m_v directly (no W_m, b_m)
    sta_projections: bool = True
    output_bias: bool = True
    ipc_sigma: float = 128.0
    ipc_input: str = 'fourier'
    coord_range: str = 'symmetric'

    @property
    def num_levels(self) -> int:
        return len(self.sigma_levels)

    @property
    def bandwidths(self) -> coords_lib.BandwidthSpec:
        return coords_lib.BandwidthSpec(self.sigma_q, tuple(self.sigma_levels), self.d_F)

    @property
    def uses_sta(self) -> bool:
        return self.variant in ('full', 'no_multifm')

    @property
    def uses_multifm(self) -> bool:
        return self.variant in ('full', 'no_sta')

    @property
    def ipc_input_dim(self) -> int:
        return self.d_F if self.ipc_input == 'fourier' else self.d_in

    @property
    def required_latent_dim(self) -> int:
        return self.d if self.uses_sta else self.ipc_input_dim

    def validate(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError("decoder.variant", f"unknown variant {self.variant!r}; use one of {VARIANTS}")
        if self.ipc_input not in IPC_INPUTS:
            raise ConfigError("decoder.ipc_input", f"unknown form {self.ipc_input!r}; use one of {IPC_INPUTS}")
        for name in ('d', 'd_F', 'd_in', 'd_out'):
            if getattr(self, name) < 1:
                raise ConfigError(f"decoder.{name}", f"must be positive, got {getattr(self, name)}")
        if self.num_levels < 1:
            raise ConfigError("decoder.sigma_levels", "need at least one level (L >= 1)")
        if self.coord_range not in coords_lib.COORD_RANGES:
            raise ConfigError("decoder.coord_range", f"unknown range {self.coord_range!r}")

        if self.variant == 'full':
            coords_lib.validate_bandwidths(self.bandwidths, self.d_in)
        else:
            coords_lib.n_frequencies(self.d_F, self.d_in)
            used = {}
            if self.variant == 'no_sta':
                used['decoder.sigma_levels'] = self.sigma_levels
            if self.variant == 'no_multifm':
                used['decoder.sigma_q'] = (self.sigma_q,)
                used['decoder.sigma_levels'] = self.sigma_levels[:1]
            if self.variant == 'ipc_baseline' or (self.variant == 'no_sta' and self.ipc_input == 'fourier'):
                used['decoder.ipc_sigma'] = (self.ipc_sigma,)
            for key, sigmas in used.items():
                if any(not s > 1 for s in sigmas):
                    raise ConfigError(key, f"bandwidth must be > 1, got {sigmas}")

        if self.uses_sta:
            if self.sta_heads < 1 or self.d % self.sta_heads != 0:
                raise ConfigError("decoder.sta_heads", f"{self.sta_heads} heads do not divide d={self.d}")


def identity_like(rows: int, cols: int) -> np.ndarray:
    out = np.zeros((rows, cols))
    k = min(rows, cols)
    out[np.arange(k), np.arange(k)] = 1.0
    return out


class FrequencyFeature(Module):
    """ReLU(gamma_sigma(v) W + b) with its own bandwidth."""

    def __init__(self, d_F: int, d: int, sigma: float, rng: np.random.Generator,
                 trainable_weight: bool = True):
        super().__init__()
        self.sigma = float(sigma)
        if trainable_weight:
            self.param('weight', fan_in_normal(rng, d_F, d))
        else:
            self.weight = tc.Tensor(identity_like(d_F, d), name='weight')
        self.param('bias', np.zeros(d))

    def pre_activation(self, coords: np.ndarray) -> tc.Tensor:
        gamma = tc.Tensor(coords_lib.fourier_features(coords, self.sigma, self.weight.shape[0]))
        return tc.add(tc.matmul(gamma, self.weight), self.bias)

    def __call__(self, coords: np.ndarray) -> tc.Tensor:
        return coords_lib.frequency_features(coords, self.sigma, self.weight, self.bias)


@dataclass
class DecoderTrace:
    """Intermediates of one decode, for diagnostics."""
    modulation: Optional[tc.Tensor] = None
    attention: Optional[tc.Tensor] = None
    level_modulations: List[tc.Tensor] = field(default_factory=list)
    hidden: List[tc.Tensor] = field(default_factory=list)


class LocalityAwareDecoder(Module):
    def __init__(self, config: DecoderConfig, num_latents: int, d_latent: int,
                 rng: np.random.Generator):
        super().__init__()
        config.validate()
        if num_latents < 1:
            raise ConfigError("encoder.num_latents", "need at least one latent token")
        if d_latent != config.required_latent_dim:
            raise ConfigError(
                "encoder.d_latent",
                f"variant {config.variant!r} needs d_latent={config.required_latent_dim}, got {d_latent}",
            )
        self.config = config
        self.num_latents = num_latents
        self.d_latent = d_latent
        cfg = config
        levels = cfg.num_levels

        if cfg.variant == 'full':
            self._build_sta(rng)
            self._build_multifm(rng, modulation_dim=cfg.d)
        elif cfg.variant == 'no_sta':
            self._build_multifm(rng, modulation_dim=num_latents)
        elif cfg.variant == 'no_multifm':
            self._build_sta(rng)
            self.mlp_in = FrequencyFeature(cfg.d_F, cfg.d, cfg.sigma_levels[0], rng)
            self.mlp_hidden = [Linear(cfg.d, cfg.d, rng) for _ in range(levels - 1)]
            self.out_head = Linear(cfg.d, cfg.d_out, rng, bias=cfg.output_bias)
        else:  # ipc_baseline
            depth = max(2, levels)
            self.mlp_in = FrequencyFeature(cfg.d_F, cfg.d, cfg.ipc_sigma, rng)
            self.mlp_hidden = [Linear(cfg.d, cfg.d, rng) for _ in range(depth - 1)]
            self.pattern = Linear(num_latents, cfg.d, rng, bias=False)
            self.out_head = Linear(cfg.d, cfg.d_out, rng, bias=cfg.output_bias)

    def _build_sta(self, rng: np.random.Generator) -> None:
        cfg = self.config
        self.query_ff = FrequencyFeature(cfg.d_F, cfg.d, cfg.sigma_q, rng)
        self.sta = MultiHeadAttention(cfg.d, cfg.sta_heads, rng, query_dim=cfg.d, kv_dim=self.d_latent,
                                      project_inputs=cfg.sta_projections)

    def _build_multifm(self, rng: np.random.Generator, modulation_dim: int) -> None:
        cfg = self.config
        if cfg.identity_band_modulation and modulation_dim != cfg.d:
            raise ConfigError(
                "decoder.identity_band_modulation",
                f"needs a modulation of width d={cfg.d}, got {modulation_dim}",
            )
        self.band_ff = [
            FrequencyFeature(cfg.d_F, cfg.d, sigma, rng, trainable_weight=not cfg.fixed_band_projection)
            for sigma in cfg.sigma_levels
        ]
        if not cfg.identity_band_modulation:
            self.band_mod = [Linear(modulation_dim, cfg.d, rng) for _ in cfg.sigma_levels]
        self.compose = [Linear(cfg.d, cfg.d, rng) for _ in range(cfg.num_levels - 1)]
        self.out_heads = [Linear(cfg.d, cfg.d_out, rng, bias=cfg.output_bias) for _ in cfg.sigma_levels]

    # ─────────────────────────────────────────────────────────────────────────
    # PIPELINE STAGES
    # ─────────────────────────────────────────────────────────────────────────
    def query_features(self, coords: np.ndarray) -> tc.Tensor:
        return self.query_ff(coords)

    def selective_token_aggregation(self, query: tc.Tensor, latents: tc.Tensor,
                                    return_weights: bool = False):
        if latents.shape[1] == 0:
            raise ContractError("selective token aggregation needs at least one latent token")
        return self.sta(query, latents, return_weights=return_weights)

    def ipc_modulation(self, coords: np.ndarray, latents: tc.Tensor) -> tc.Tensor:
        """m_v[k] = z_k . u(v), u the Fourier embedding (or raw coordinate) of v."""
        cfg = self.config
        if cfg.ipc_input == 'fourier':
            u = coords_lib.fourier_features(coords, cfg.ipc_sigma, cfg.d_F)
        else:
            u = np.asarray(coords, dtype=np.float64)
        if u.shape[-1] != latents.shape[-1]:
            raise DimensionError(f"ipc modulation: embedding {u.shape} vs latents {latents.shape}")
        return tc.matmul(tc.Tensor(u), tc.swap_last(latents))

    def band_features(self, coords: np.ndarray, level: int) -> tc.Tensor:
        """Frequency features of band `level` (1-based)."""
        self._check_level(level)
        return self.band_ff[level - 1](coords)

    def band_modulation(self, modulation: tc.Tensor, level: int, coords: np.ndarray,
                        band: Optional[tc.Tensor] = None) -> tc.Tensor:
        self._check_level(level)
        band = self.band_features(coords, level) if band is None else band
        if self.config.identity_band_modulation:
            return tc.relu(tc.add(band, modulation))
        return tc.relu(tc.add(band, self.band_mod[level - 1](modulation)))

    def compose_and_predict(self, level_modulations: List[tc.Tensor]) -> Tuple[tc.Tensor, List[tc.Tensor]]:
        if len(level_modulations) != self.config.num_levels:
            raise ContractError(
                f"expected {self.config.num_levels} level modulations, got {len(level_modulations)}"
            )
        hidden = [level_modulations[0]]
        for level in range(1, self.config.num_levels):
            pre = tc.add(level_modulations[level], hidden[-1])
            hidden.append(tc.relu(self.compose[level - 1](pre)))
        output = self.out_heads[0](hidden[0])
        for head, h in zip(self.out_heads[1:], hidden[1:]):
            output = tc.add(output, head(h))
        return output, hidden

    def _check_level(self, level: int) -> None:
        if not self.config.uses_multifm:
            raise ContractError(f"variant {self.config.variant!r} has no frequency bands")
        if not 1 <= level <= self.config.num_levels:
            raise ContractError(f"level {level} outside 1..{self.config.num_levels}")

    # ─────────────────────────────────────────────────────────────────────────
    # DECODE
    # ─────────────────────────────────────────────────────────────────────────
    def decode(self, coords: np.ndarray, latents: tc.Tensor,
               trace: Optional[DecoderTrace] = None) -> tc.Tensor:
        coords = self._batched_coords(coords, latents)
        variant = self.config.variant

        if variant in ('full', 'no_multifm'):
            query = self.query_features(coords)
            if trace is not None:
                modulation, trace.attention = self.selective_token_aggregation(query, latents, True)
            else:
                modulation = self.selective_token_aggregation(query, latents)
        else:
            modulation = self.ipc_modulation(coords, latents)
        if trace is not None:
            trace.modulation = modulation

        if variant in ('full', 'no_sta'):
            levels = [self.band_modulation(modulation, level, coords)
                      for level in range(1, self.config.num_levels + 1)]
            output, hidden = self.compose_and_predict(levels)
            if trace is not None:
                trace.level_modulations, trace.hidden = levels, hidden
            return output

        if variant == 'no_multifm':
            h = tc.relu(tc.add(self.mlp_in.pre_activation(coords), modulation))
            hidden_layers = self.mlp_hidden
        else:
            h = self.mlp_in(coords)
            h = tc.relu(tc.add(self.mlp_hidden[0](h), self.pattern(modulation)))
            hidden_layers = self.mlp_hidden[1:]
        for layer in hidden_layers:
            h = tc.relu(layer(h))
        return self.out_head(h)

    def __call__(self, coords: np.ndarray, latents: tc.Tensor) -> tc.Tensor:
        return self.decode(coords, latents)

    def _batched_coords(self, coords: np.ndarray, latents: tc.Tensor) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.float64)
        if latents.ndim != 3:
            raise DimensionError(f"latents must be (B, R, d_latent), got {latents.shape}")
        if coords.ndim == 2:
            coords = np.broadcast_to(coords, (latents.shape[0],) + coords.shape)
        if coords.ndim != 3 or coords.shape[0] != latents.shape[0] or coords.shape[-1] != self.config.d_in:
            raise DimensionError(
                f"coords {coords.shape} incompatible with latents {latents.shape} and d_in={self.config.d_in}"
            )
        return coords
