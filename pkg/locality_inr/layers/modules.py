"""
Building blocks on top of tensor_core: parameter containers, linear layers,
layer normalization and multi-head (self / cross) attention.
"""

from __future__ import annotations

import contextlib
import math
from typing import Dict, Iterator, Optional

import numpy as np

from locality_inr import tensor_core as tc
from locality_inr.errors import ConfigError, DimensionError


class Module:
    """
    Tracks trainable tensors and sub-modules in assignment order, so
    parameter names and iteration order are stable across runs.
    """

    def __init__(self):
        object.__setattr__(self, '_parameters', {})
        object.__setattr__(self, '_modules', {})

    def __setattr__(self, name, value):
        if isinstance(value, tc.Tensor) and value.requires_grad:
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
            self._modules[name] = list(value)
        object.__setattr__(self, name, value)

    def param(self, name: str, data: np.ndarray) -> tc.Tensor:
        tensor = tc.Tensor(data, requires_grad=True, name=name)
        setattr(self, name, tensor)
        return tensor

    def named_parameters(self, prefix: str = '') -> Dict[str, tc.Tensor]:
        out: Dict[str, tc.Tensor] = {}
        for name, tensor in self._parameters.items():
            out[f"{prefix}{name}"] = tensor
        for name, module in self._modules.items():
            if isinstance(module, list):
                for i, sub in enumerate(module):
                    out.update(sub.named_parameters(f"{prefix}{name}.{i}."))
            else:
                out.update(module.named_parameters(f"{prefix}{name}."))
        return out

    def parameters(self) -> Iterator[tc.Tensor]:
        return iter(self.named_parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise DimensionError(f"state dict mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise DimensionError(f"parameter {name}: expected {p.shape}, got {value.shape}")
            p.data = value.astype(p.data.dtype, copy=True)

    def requires_grad_(self, flag: bool) -> None:
        for p in self.parameters():
            p.requires_grad = flag

    @contextlib.contextmanager
    def frozen(self):
        """Parameters take no gradient inside this block."""
        params = list(self.parameters())
        previous = [p.requires_grad for p in params]
        for p in params:
            p.requires_grad = False
        try:
            yield self
        finally:
            for p, flag in zip(params, previous):
                p.requires_grad = flag

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


def fan_in_normal(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Gaussian with std 1/sqrt(fan_in)."""
    return rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out))


class Linear(Module):
    """y = x W + b, W stored (in_features, out_features)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.param('weight', fan_in_normal(rng, in_features, out_features))
        self.has_bias = bias
        if bias:
            self.param('bias', np.zeros(out_features))

    def __call__(self, x: tc.Tensor) -> tc.Tensor:
        if x.shape[-1] != self.in_features:
            raise DimensionError(f"Linear: expected last axis {self.in_features}, got shape {x.shape}")
        out = tc.matmul(x, self.weight)
        return tc.add(out, self.bias) if self.has_bias else out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.param('gain', np.ones(dim))
        self.param('bias', np.zeros(dim))

    def __call__(self, x: tc.Tensor) -> tc.Tensor:
        return tc.layer_norm(x, self.gain, self.bias, self.eps)


class FeedForward(Module):
    """Two-layer ReLU MLP with a hidden width of `ratio` x dim."""

    def __init__(self, dim: int, rng: np.random.Generator, ratio: int = 4):
        super().__init__()
        self.fc1 = Linear(dim, ratio * dim, rng)
        self.fc2 = Linear(ratio * dim, dim, rng)

    def __call__(self, x: tc.Tensor) -> tc.Tensor:
        return self.fc2(tc.relu(self.fc1(x)))


class MultiHeadAttention(Module):
    """
    Scaled dot-product attention over `num_heads` heads.

    query: (B, Tq, query_dim); key_value: (B, Tk, kv_dim). Without projections
    the raw query / keys / values are split into heads directly, which needs
    query_dim == kv_dim == embed_dim.
    """

    def __init__(self, embed_dim: int, num_heads: int, rng: np.random.Generator,
                 query_dim: Optional[int] = None, kv_dim: Optional[int] = None,
                 project_inputs: bool = True):
        super().__init__()
        if num_heads < 1 or embed_dim % num_heads != 0:
            raise ConfigError("num_heads", f"embed dim {embed_dim} is not divisible by {num_heads} heads")
        query_dim = query_dim or embed_dim
        kv_dim = kv_dim or embed_dim
        if not project_inputs and not (query_dim == kv_dim == embed_dim):
            raise ConfigError(
                "sta_projections",
                f"unprojected attention needs equal widths, got query={query_dim} kv={kv_dim} embed={embed_dim}",
            )
        self.embed_dim = embed_dim
        self.num_heads = num_heads
        self.head_dim = embed_dim // num_heads
        self.project_inputs = project_inputs
        if project_inputs:
            self.q_proj = Linear(query_dim, embed_dim, rng)
            self.k_proj = Linear(kv_dim, embed_dim, rng)
            self.v_proj = Linear(kv_dim, embed_dim, rng)
        self.out_proj = Linear(embed_dim, embed_dim, rng)

    def _split_heads(self, x: tc.Tensor) -> tc.Tensor:
        batch, length = x.shape[0], x.shape[1]
        x = tc.reshape(x, (batch, length, self.num_heads, self.head_dim))
        return tc.transpose(x, (0, 2, 1, 3))

    def __call__(self, query: tc.Tensor, key_value: Optional[tc.Tensor] = None,
                 return_weights: bool = False):
        key_value = query if key_value is None else key_value
        if query.ndim != 3 or key_value.ndim != 3 or query.shape[0] != key_value.shape[0]:
            raise DimensionError(
                f"attention expects (B, T, D) inputs with equal batch, got {query.shape} and {key_value.shape}"
            )
        if self.project_inputs:
            q, k, v = self.q_proj(query), self.k_proj(key_value), self.v_proj(key_value)
        else:
            q, k, v = query, key_value, key_value
        q, k, v = self._split_heads(q), self._split_heads(k), self._split_heads(v)

        logits = tc.scale(tc.matmul(q, tc.swap_last(k)), 1.0 / math.sqrt(self.head_dim))
        weights = tc.softmax(logits, axis=-1)                 # (B, H, Tq, Tk)
        mixed = tc.matmul(weights, v)                         # (B, H, Tq, Dh)
        mixed = tc.transpose(mixed, (0, 2, 1, 3))
        mixed = tc.reshape(mixed, (query.shape[0], query.shape[1], self.embed_dim))
        out = self.out_proj(mixed)
        if return_weights:
            return out, weights
        return out


def count_by_prefix(params: Dict[str, tc.Tensor]) -> Dict[str, int]:
    """Parameter counts grouped by top-level module name."""
    counts: Dict[str, int] = {}
    for name, p in params.items():
        group = name.split('.', 1)[0]
        counts[group] = counts.get(group, 0) + int(p.data.size)
    return counts

