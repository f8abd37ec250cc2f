"""
Transformer Encoder: data tokens in, R latent tokens out
=========================================================
  1. patchify()       : non-overlapping patches, zero-padded at the bottom/right edge
  2. PatchEmbedding   : linear projection + learned positional embedding (data tokens only)
  3. TransformerEncoder.encode_tokens : [data tokens ; R learnable tokens] -> pre-norm blocks
                        -> outputs at the learnable positions -> projection to d_latent

Light-field instances are tokenized view by view: every support view carries
its Plücker ray embedding as extra channels, and the positional embedding is
indexed by the within-view patch position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from locality_inr import tensor_core as tc
from locality_inr.errors import ConfigError, ContractError, DimensionError
from locality_inr.layers.modules import FeedForward, LayerNorm, Linear, Module, MultiHeadAttention


@dataclass
class EncoderConfig:
    num_blocks: int = 6
    num_heads: int = 12
    head_dim: int = 64
    num_latents: int = 256          # R
    patch_size: int = 9
    d_latent: Optional[int] = None  # None -> whatever the decoder needs
    mlp_ratio: int = 4
    use_pos_embed: bool = True
    latent_init_std: float = 0.02
    # Filled from the dataset when the model is built.
    image_height: int = 0
    image_width: int = 0
    in_channels: int = 0
    max_views: int = 1

    @property
    def embed_dim(self) -> int:
        return self.num_heads * self.head_dim

    @property
    def patches_per_view(self) -> int:
        grid_h, grid_w = patch_grid(self.image_height, self.image_width, self.patch_size)
        return grid_h * grid_w

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.in_channels

    def validate(self) -> None:
        for name in ('num_blocks', 'num_heads', 'head_dim', 'num_latents', 'patch_size', 'mlp_ratio'):
            if getattr(self, name) < 1:
                raise ConfigError(f"encoder.{name}", f"must be positive, got {getattr(self, name)}")
        if self.d_latent is not None and self.d_latent < 1:
            raise ConfigError("encoder.d_latent", f"must be positive, got {self.d_latent}")
        if self.image_height and self.image_width:
            if self.patch_size > self.image_height or self.patch_size > self.image_width:
                raise ConfigError(
                    "encoder.patch_size",
                    f"patch {self.patch_size} larger than image {self.image_height}x{self.image_width}",
                )


# ─────────────────────────────────────────────────────────────────────────────
# PATCHIFY
# ─────────────────────────────────────────────────────────────────────────────
def patch_grid(height: int, width: int, patch_size: int) -> Tuple[int, int]:
    return math.ceil(height / patch_size), math.ceil(width / patch_size)


def patchify(array: np.ndarray, patch_size: int) -> np.ndarray:
    """
    (H, W, C) -> (num_patches, patch_size*patch_size*C), row-major patch order.

    The bottom / right remainder is zero-padded, so 178x178 with 9x9 patches
    gives a 20x20 grid (400 tokens).
    """
    array = np.asarray(array)
    if array.ndim != 3:
        raise DimensionError(f"patchify expects (H, W, C), got {array.shape}")
    height, width, channels = array.shape
    if patch_size < 1 or patch_size > height or patch_size > width:
        raise ContractError(f"patch size {patch_size} larger than image {height}x{width}")
    grid_h, grid_w = patch_grid(height, width, patch_size)
    padded = np.zeros((grid_h * patch_size, grid_w * patch_size, channels), dtype=array.dtype)
    padded[:height, :width] = array
    patches = padded.reshape(grid_h, patch_size, grid_w, patch_size, channels)
    patches = patches.transpose(0, 2, 1, 3, 4)
    return patches.reshape(grid_h * grid_w, patch_size * patch_size * channels)


def unpatchify(patches: np.ndarray, height: int, width: int, patch_size: int) -> np.ndarray:
    """Inverse of patchify, dropping the zero padding."""
    grid_h, grid_w = patch_grid(height, width, patch_size)
    channels = patches.shape[-1] // (patch_size * patch_size)
    grid = patches.reshape(grid_h, grid_w, patch_size, patch_size, channels).transpose(0, 2, 1, 3, 4)
    full = grid.reshape(grid_h * patch_size, grid_w * patch_size, channels)
    return full[:height, :width]


def patchify_views(views: np.ndarray, patch_size: int) -> np.ndarray:
    """(V, H, W, C) -> (V, patches_per_view, patch_dim)."""
    return np.stack([patchify(view, patch_size) for view in views], axis=0)


# ─────────────────────────────────────────────────────────────────────────────
# MODULES
# ─────────────────────────────────────────────────────────────────────────────
class PatchEmbedding(Module):
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        self.proj = Linear(config.patch_dim, config.embed_dim, rng)
        if config.use_pos_embed:
            self.param('pos_embed', rng.normal(0.0, 0.02, size=(config.patches_per_view, config.embed_dim)))

    def __call__(self, patches: np.ndarray) -> tc.Tensor:
        """(B, V, P, patch_dim) -> (B, V*P, embed_dim)."""
        batch, views, per_view, patch_dim = patches.shape
        if per_view != self.config.patches_per_view or patch_dim != self.config.patch_dim:
            raise DimensionError(
                f"patch layout {patches.shape[2:]} does not match the trained "
                f"({self.config.patches_per_view}, {self.config.patch_dim}); images must tile into a "
                f"{patch_grid(self.config.image_height, self.config.image_width, self.config.patch_size)} "
                f"grid of {self.config.patch_size}x{self.config.patch_size} patches (edges zero-padded)"
            )
        tokens = self.proj(tc.Tensor(patches))                      # (B, V, P, E)
        if self.config.use_pos_embed:
            tokens = tc.add(tokens, self.pos_embed)
        return tc.reshape(tokens, (batch, views * per_view, self.config.embed_dim))


class EncoderBlock(Module):
    """Pre-norm block: x + MHA(LN(x)), then x + FF(LN(x))."""

    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.norm1 = LayerNorm(config.embed_dim)
        self.attn = MultiHeadAttention(config.embed_dim, config.num_heads, rng)
        self.norm2 = LayerNorm(config.embed_dim)
        self.mlp = FeedForward(config.embed_dim, rng, ratio=config.mlp_ratio)

    def __call__(self, x: tc.Tensor) -> tc.Tensor:
        x = tc.add(x, self.attn(self.norm1(x)))
        return tc.add(x, self.mlp(self.norm2(x)))


class TransformerEncoder(Module):
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        config.validate()
        if config.d_latent is None:
            raise ConfigError("encoder.d_latent", "unresolved; build through GeneralizableINR")
        self.config = config
        self.embed = PatchEmbedding(config, rng)
        self.param('latent_tokens', rng.normal(0.0, config.latent_init_std,
                                                size=(config.num_latents, config.embed_dim)))
        self.blocks = [EncoderBlock(config, rng) for _ in range(config.num_blocks)]
        self.norm = LayerNorm(config.embed_dim)
        self.head = Linear(config.embed_dim, config.d_latent, rng)

    def encode_tokens(self, tokens: tc.Tensor) -> tc.Tensor:
        """(B, N, E) embedded data tokens -> (B, R, d_latent) latent tokens."""
        if tokens.ndim != 3 or tokens.shape[1] < 1:
            raise ContractError(f"encoder needs a nonempty (B, N, E) token sequence, got {tokens.shape}")
        batch, num_data = tokens.shape[0], tokens.shape[1]
        learnable = tc.add(tc.Tensor(np.zeros((batch, 1, 1))), self.latent_tokens)
        x = tc.concat([tokens, learnable], axis=1)
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        return self.head(x[:, num_data:, :])

    def __call__(self, patches: np.ndarray) -> tc.Tensor:
        """(B, V, P, patch_dim) patch arrays -> (B, R, d_latent)."""
        return self.encode_tokens(self.embed(patches))
