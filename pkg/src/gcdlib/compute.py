"""Minimal reverse-mode gradient engine over 2-D float64 arrays.

Every value is a `Tensor` wrapping an (rows, cols) float64 matrix; scalars
are 1x1. Operations record backward closures on a tape and `backward()`
replays them in reverse topological order. All arithmetic is float64
regardless of on-disk precision, so gradient checks and reruns are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from gcdlib import kernels
from gcdlib.errors import ConfigError, DegenerateInputError, DimensionError, NumericError

PROB_FLOOR = 1e-12  # probabilities entering a log are clamped below at this value
NORM_FLOOR = 1e-12  # rows with smaller Euclidean norm cannot be normalized


def _as_matrix(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"expected at most 2 dimensions, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


class Tensor:
    """Node in the backward graph: a 2-D float64 matrix plus gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = _as_matrix(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents: tuple[Tensor, ...] = parents
        self._backward: Callable[[np.ndarray], None] | None = backward

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise DimensionError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def accumulate(self, g: np.ndarray, own: bool = False) -> None:
        # `own` marks freshly allocated arrays that may be adopted without a
        # copy; pass-through gradients (add/sub) must stay owned by the child.
        if self.grad is None:
            self.grad = g if own else g.copy()
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar output through the recorded tape."""
        if self.data.shape != (1, 1):
            raise DimensionError("backward() starts from a scalar (1x1) tensor")
        if not np.isfinite(self.data[0, 0]):
            raise NumericError("backward() called on a non-finite scalar")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.accumulate(np.ones((1, 1)))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _unary(x: Tensor, out_data: np.ndarray, grad_fn) -> Tensor:
    if not x.requires_grad:
        return Tensor(out_data)
    out = Tensor(out_data, parents=(x,))
    out._backward = lambda g: x.accumulate(grad_fn(g), own=True)
    return out


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data + b.data, parents=(a, b))
    if out.requires_grad:
        def bwd(g):
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                b.accumulate(g)
        out._backward = bwd
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data - b.data, parents=(a, b))
    if out.requires_grad:
        def bwd(g):
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                b.accumulate(-g)
        out._backward = bwd
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} differ")
    out = Tensor(a.data * b.data, parents=(a, b))
    if out.requires_grad:
        def bwd(g):
            if a.requires_grad:
                a.accumulate(g * b.data, own=True)
            if b.requires_grad:
                b.accumulate(g * a.data, own=True)
        out._backward = bwd
    return out


def mul_const(x: Tensor, c) -> Tensor:
    """Multiply by a constant scalar or same-shape array (no gradient into c)."""
    c = np.asarray(c, dtype=np.float64)
    return _unary(x, x.data * c, lambda g: g * c)


def scale(x: Tensor, s: float) -> Tensor:
    return mul_const(x, float(s))


def neg(x: Tensor) -> Tensor:
    return _unary(x, -x.data, lambda g: -g)


def add_const(x: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    return _unary(x, x.data + c, lambda g: g)


def matmul(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    bd = b.data.T if transpose_b else b.data
    if a.cols != bd.shape[0]:
        raise DimensionError(f"matmul: inner dims {a.shape} x {bd.shape} differ")
    out = Tensor(a.data @ bd, parents=(a, b))
    if out.requires_grad:
        def bwd(g):
            if a.requires_grad:
                a.accumulate(g @ bd.T, own=True)
            if b.requires_grad:
                gb = a.data.T @ g
                b.accumulate(np.ascontiguousarray(gb.T) if transpose_b else gb, own=True)
        out._backward = bwd
    return out


def linear_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map y = x @ weight + bias with bias shaped (1, out)."""
    if x.cols != weight.rows:
        raise DimensionError(
            f"linear_forward: input has {x.cols} columns, weight expects {weight.rows}"
        )
    if bias.shape != (1, weight.cols):
        raise DimensionError(f"linear_forward: bias shape {bias.shape} != (1, {weight.cols})")
    out = Tensor(x.data @ weight.data + bias.data, parents=(x, weight, bias))
    if out.requires_grad:
        def bwd(g):
            if x.requires_grad:
                x.accumulate(g @ weight.data.T, own=True)
            if weight.requires_grad:
                weight.accumulate(x.data.T @ g, own=True)
            if bias.requires_grad:
                bias.accumulate(g.sum(axis=0, keepdims=True), own=True)
        out._backward = bwd
    return out


def gather_rows(x: Tensor, idx) -> Tensor:
    """Select rows of x; indices must be unique (they index distinct batch rows)."""
    idx = np.asarray(idx, dtype=np.int64)
    out_data = np.ascontiguousarray(x.data[idx])

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        gx[idx] = g
        return gx

    return _unary(x, out_data, grad_fn)


# ---------------------------------------------------------------------------
# reductions


def sum_all(x: Tensor) -> Tensor:
    return _unary(x, np.array([[x.data.sum()]]), lambda g: np.full_like(x.data, g[0, 0]))


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / x.data.size)


def sum_cols(x: Tensor) -> Tensor:
    """Sum over columns: (n, k) -> (n, 1)."""
    return _unary(
        x,
        x.data.sum(axis=1, keepdims=True),
        lambda g: np.broadcast_to(g, x.shape).copy(),
    )


def sum_rows(x: Tensor) -> Tensor:
    """Sum over rows: (n, k) -> (1, k)."""
    return _unary(
        x,
        x.data.sum(axis=0, keepdims=True),
        lambda g: np.broadcast_to(g, x.shape).copy(),
    )


def mean_rows(x: Tensor) -> Tensor:
    return scale(sum_rows(x), 1.0 / x.rows)


# ---------------------------------------------------------------------------
# nonlinear kernels (backed by the selected kernel backend)


def gelu(x: Tensor) -> Tensor:
    xd = x.data
    return _unary(x, kernels.gelu(xd), lambda g: kernels.gelu_bwd(xd, g))


def sigmoid(x: Tensor) -> Tensor:
    s = kernels.sigmoid(x.data)
    return _unary(x, s, lambda g: kernels.sigmoid_bwd(s, g))


def log_clamped(x: Tensor, floor: float = PROB_FLOOR) -> Tensor:
    xd = x.data
    return _unary(x, kernels.log_clamped(xd, floor), lambda g: kernels.log_clamped_bwd(xd, floor, g))


def l2_normalize(x: Tensor) -> Tensor:
    """Scale every row to unit Euclidean norm; rows with norm <= 1e-12 are rejected."""
    y, norms = kernels.l2norm_rows(x.data)
    if np.any(norms <= NORM_FLOOR):
        raise DegenerateInputError("l2_normalize: row norm below 1e-12")
    return _unary(x, y, lambda g: kernels.l2norm_rows_bwd(y, norms, g))


def softmax_t(logits: Tensor, temperature: float) -> Tensor:
    """Row-wise softmax of logits/temperature, max-subtracted for stability."""
    if temperature <= 0:
        raise ConfigError(f"softmax temperature must be positive, got {temperature}")
    p = kernels.softmax_rows(logits.data / temperature)
    return _unary(logits, p, lambda g: kernels.softmax_rows_bwd(p, g) / temperature)


def log_softmax_t(logits: Tensor, temperature: float) -> Tensor:
    if temperature <= 0:
        raise ConfigError(f"softmax temperature must be positive, got {temperature}")
    logp = kernels.log_softmax_rows(logits.data / temperature)
    return _unary(logits, logp, lambda g: kernels.log_softmax_rows_bwd(logp, g) / temperature)


# ---------------------------------------------------------------------------
# parameters


class ParamSet:
    """Named trainable tensors with paired gradient slots, iterated in name order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        t = parameter(data)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return sorted(self._params)

    def items(self):
        for name in self.names():
            yield name, self._params[name]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def num_values(self) -> int:
        return sum(p.data.size for p in self._params.values())


@dataclass
class MlpSpec:
    """Layer widths for a dense MLP; hidden layers use GELU, the output is linear."""

    widths: list[int] = field(default_factory=list)
    hidden_activation: str = "gelu"
    final_activation: str = "none"

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ConfigError("MlpSpec needs an input and at least one layer width")
        if any(w <= 0 for w in self.widths):
            raise ConfigError("MlpSpec widths must be positive")
        if self.hidden_activation != "gelu" or self.final_activation != "none":
            raise ConfigError("only gelu hidden / linear output MLPs are supported")

    @property
    def num_layers(self) -> int:
        return len(self.widths) - 1


def mlp_init(params: ParamSet, prefix: str, spec: MlpSpec, rng: np.random.Generator) -> None:
    """Register weight/bias pairs for each layer under `prefix.layer<i>.{W,b}`."""
    for i in range(spec.num_layers):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(1.0 / fan_in)
        params.add(f"{prefix}.layer{i}.W", w)
        params.add(f"{prefix}.layer{i}.b", np.zeros((1, fan_out)))


def mlp_forward(params: ParamSet, prefix: str, spec: MlpSpec, x: Tensor) -> Tensor:
    h = x
    for i in range(spec.num_layers):
        h = linear_forward(h, params[f"{prefix}.layer{i}.W"], params[f"{prefix}.layer{i}.b"])
        if i < spec.num_layers - 1:
            h = gelu(h)
    return h


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(loss_fn: Callable[[], Tensor], params: ParamSet, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    The error for one parameter value is |analytic - numeric| / max(1, |numeric|);
    the result is the max over every value of every parameter. Zero-parameter
    models return 0.
    """
    params.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.item()):
        raise NumericError("grad_check: loss is not finite")
    loss.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn().item()
            flat[i] = orig - eps
            down = loss_fn().item()
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"grad_check: non-finite loss probing {name}[{i}]")
            numeric = (up - down) / (2.0 * eps)
            err = abs(analytic[name].reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            if err > worst:
                worst = err
    return worst
