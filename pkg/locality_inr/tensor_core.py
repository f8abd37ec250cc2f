"""
Tensor Core: define-by-run reverse-mode differentiation on numpy arrays
=========================================================================
Responsible for:
  - Tensor: a numpy array plus an optional gradient accumulator
  - Differentiable ops (elementwise suite, matmul, softmax, layer_norm, ...)
  - backward(): reverse topological traversal from a scalar loss
  - Adam optimizer with bias correction
  - Finite-difference oracle used by the gradient tests

The graph is rebuilt on every forward pass. Only tensors that (transitively)
depend on a requires_grad leaf record parents, so constant inputs cost nothing.

Precision defaults to float32; `default_dtype(np.float64)` switches the build
mode for gradient checking.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from locality_inr.errors import ContractError, DimensionError

_STATE = {
    'dtype': np.float32,
    'grad_enabled': True,
}


# ─────────────────────────────────────────────────────────────────────────────
# BUILD MODE
# ─────────────────────────────────────────────────────────────────────────────
def get_default_dtype():
    return _STATE['dtype']


def set_default_dtype(dtype) -> None:
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ContractError(f"unsupported precision {dtype}; use float32 or float64")
    _STATE['dtype'] = dtype


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily switch the precision used for new tensors."""
    previous = _STATE['dtype']
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _STATE['dtype'] = previous


@contextlib.contextmanager
def no_grad():
    """Ops inside this block record no graph."""
    previous = _STATE['grad_enabled']
    _STATE['grad_enabled'] = False
    try:
        yield
    finally:
        _STATE['grad_enabled'] = previous


def is_grad_enabled() -> bool:
    return _STATE['grad_enabled']


# ─────────────────────────────────────────────────────────────────────────────
# TENSOR
# ─────────────────────────────────────────────────────────────────────────────
class Tensor:
    """Dense float array participating in a differentiation graph."""

    __slots__ = ('data', 'grad', 'requires_grad', '_parents', '_backward', 'op', 'name')

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=get_default_dtype())
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: Tuple['Tensor', ...] = ()
        self._backward: Optional[Callable] = None
        self.op = 'leaf'
        self.name = name

    @classmethod
    def _wrap(cls, data: np.ndarray, op: str) -> 'Tensor':
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        out.op = op
        out.name = None
        return out

    # ── properties ───────────────────────────────────────────────────────────
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> 'Tensor':
        return Tensor._wrap(self.data, 'detach')

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ''
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad}{label})"

    # ── operators ────────────────────────────────────────────────────────────
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def relu(self):
        return relu(self)

    def backward(self) -> None:
        backward(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor._wrap(data, op)
    if _STATE['grad_enabled'] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shapes(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ─────────────────────────────────────────────────────────────────────────────
# ELEMENTWISE SUITE
# ─────────────────────────────────────────────────────────────────────────────
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes(a, b, 'add')

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(a.data + b.data, (a, b), _backward, 'add')


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes(a, b, 'sub')

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _make(a.data - b.data, (a, b), _backward, 'sub')


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shapes(a, b, 'mul')

    def _backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)
    return _make(a.data * b.data, (a, b), _backward, 'mul')


def scale(x: Tensor, factor: float) -> Tensor:
    x = as_tensor(x)
    factor = float(factor)

    def _backward(g):
        return (g * factor,)
    return _make(x.data * x.data.dtype.type(factor), (x,), _backward, 'scale')


def neg(x: Tensor) -> Tensor:
    return scale(x, -1.0)


def square(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def _backward(g):
        return (2.0 * x.data * g,)
    return _make(x.data * x.data, (x,), _backward, 'square')


def sin(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def _backward(g):
        return (g * np.cos(x.data),)
    return _make(np.sin(x.data), (x,), _backward, 'sin')


def cos(x: Tensor) -> Tensor:
    x = as_tensor(x)

    def _backward(g):
        return (-g * np.sin(x.data),)
    return _make(np.cos(x.data), (x,), _backward, 'cos')


def exp(x: Tensor) -> Tensor:
    x = as_tensor(x)
    out_data = np.exp(x.data)

    def _backward(g):
        return (g * out_data,)
    return _make(out_data, (x,), _backward, 'exp')


def relu(x: Tensor) -> Tensor:
    """max(x, 0); the subgradient at exactly 0 is 0."""
    x = as_tensor(x)
    mask = x.data > 0

    def _backward(g):
        return (g * mask,)
    return _make(np.where(mask, x.data, x.data.dtype.type(0)), (x,), _backward, 'relu')


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)

    def _backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)
    return _make(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), _backward, 'sum')


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum_(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    x = as_tensor(x)
    try:
        out_data = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None

    def _backward(g):
        return (g.reshape(x.shape),)
    return _make(out_data, (x,), _backward, 'reshape')


def transpose(x: Tensor, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = tuple(np.argsort(axes))

    def _backward(g):
        return (g.transpose(inverse),)
    return _make(x.data.transpose(axes), (x,), _backward, 'transpose')


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, tuple(axes))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat: nothing to concatenate")
    try:
        out_data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        return tuple(np.split(g, splits, axis=axis))
    return _make(out_data, tensors, _backward, 'concat')


def slice_(x: Tensor, index) -> Tensor:
    x = as_tensor(x)
    out_data = x.data[index]

    def _backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)
    return _make(np.asarray(out_data), (x,), _backward, 'slice')


# ─────────────────────────────────────────────────────────────────────────────
# LINEAR ALGEBRA & NORMALIZATION
# ─────────────────────────────────────────────────────────────────────────────
def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., m, k) @ (..., k, n) with broadcasting over leading axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: batch shapes {a.shape} and {b.shape} do not broadcast") from None

    def _backward(g):
        grad_a = np.matmul(g, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)
    return _make(out_data, (a, b), _backward, 'matmul')


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along `axis`."""
    x = as_tensor(x)
    if not -x.ndim <= axis < max(x.ndim, 1):
        raise ContractError(f"softmax: axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    expd = np.exp(shifted)
    out_data = expd / expd.sum(axis=axis, keepdims=True)

    def _backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - inner),)
    return _make(out_data, (x,), _backward, 'softmax')


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then apply gain and bias."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if eps <= 0:
        raise ContractError("layer_norm: eps must be positive")
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise DimensionError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match last axis of {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out_data = xhat * gain.data + bias.data

    def _backward(g):
        g_xhat = g * gain.data
        grad_x = inv_std * (
            g_xhat
            - g_xhat.mean(axis=-1, keepdims=True)
            - xhat * (g_xhat * xhat).mean(axis=-1, keepdims=True)
        )
        grad_gain = _unbroadcast(g * xhat, gain.shape)
        grad_bias = _unbroadcast(g, bias.shape)
        return grad_x, grad_gain, grad_bias
    return _make(out_data.astype(x.data.dtype, copy=False), (x, gain, bias), _backward, 'layer_norm')


# ─────────────────────────────────────────────────────────────────────────────
# BACKWARD
# ─────────────────────────────────────────────────────────────────────────────
def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._parents):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """
    Populate `.grad` on every requires_grad leaf reachable from `loss`.

    Leaf gradients accumulate across calls; call zero_grad between steps.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    pending: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            g = np.array(g, dtype=node.data.dtype)
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, parent_grad in zip(node._parents, node._backward(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = parent_grad if key not in pending else pending[key] + parent_grad


# ─────────────────────────────────────────────────────────────────────────────
# ADAM
# ─────────────────────────────────────────────────────────────────────────────
@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Dict[str, Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update of every parameter from its `.grad`."""
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise ContractError(f"adam_step: no gradient for {missing[:5]}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data -= update.astype(p.data.dtype, copy=False)


class Adam:
    """Adam over a fixed set of named parameters."""

    def __init__(self, params: Dict[str, Tensor], lr: float = 1e-4,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = dict(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self) -> None:
        adam_step(self.params, self.state)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict:
        return {
            'hyper': {'lr': self.state.lr, 'beta1': self.state.beta1, 'beta2': self.state.beta2,
                      'eps': self.state.eps, 'step': self.state.step},
            'm': {k: v.copy() for k, v in self.state.m.items()},
            'v': {k: v.copy() for k, v in self.state.v.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        hyper = state['hyper']
        self.state = AdamState(
            lr=float(hyper['lr']), beta1=float(hyper['beta1']), beta2=float(hyper['beta2']),
            eps=float(hyper['eps']), step=int(hyper['step']),
            m={k: np.array(v) for k, v in state['m'].items()},
            v={k: np.array(v) for k, v in state['v'].items()},
        )


def grad_norms(params: Dict[str, Tensor]) -> Dict[str, float]:
    return {
        name: float(np.linalg.norm(p.grad)) if p.grad is not None else 0.0
        for name, p in params.items()
    }


# ─────────────────────────────────────────────────────────────────────────────
# FINITE-DIFFERENCE ORACLE
# ─────────────────────────────────────────────────────────────────────────────
def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, eps: float = 1e-4,
                       indices: Optional[Iterable[Tuple[int, ...]]] = None) -> np.ndarray:
    """
    Central differences of the scalar `fn()` w.r.t. `tensor.data`.

    `indices` restricts the estimate to a subset of entries (others stay 0).
    """
    grad = np.zeros_like(tensor.data, dtype=np.float64)
    entries = indices if indices is not None else np.ndindex(*tensor.shape)
    with no_grad():
        for idx in entries:
            original = tensor.data[idx].copy()
            tensor.data[idx] = original + eps
            plus = float(fn().data.sum())
            tensor.data[idx] = original - eps
            minus = float(fn().data.sum())
            tensor.data[idx] = original
            grad[idx] = (plus - minus) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)
