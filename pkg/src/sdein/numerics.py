"""Dense tensors with reverse-mode gradients, plus Adam and a gradient checker.

Only the handful of operations the tagger needs are provided. Every op
records its parents and a closure that pushes the output gradient back to
them; ``Tensor.backward`` walks the graph in reverse topological order.
"""
from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np

STANDARD = np.float32
VERIFICATION = np.float64

LOG_FLOOR = 1e-12

# when a list, relu() appends its activation mask here (kink detection in grad_check)
_relu_tape: list | None = None


class NumericsError(ValueError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(STANDARD)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- bookkeeping -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise NumericsError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            # interior nodes hand gradients to parents through a temporary sink
            for parent, pg in node._backward(g):
                if not parent.requires_grad or pg is None:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self):
        return mul(reduce_sum(self), 1.0 / self.data.size)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else STANDARD))


def parameter(values, name: str | None = None, dtype=STANDARD) -> Tensor:
    return Tensor(np.array(values, dtype=dtype), requires_grad=True, name=name)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# -- linear algebra ------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise NumericsError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def backward(g):
        return ((a, g @ b.data.T), (b, a.data.T @ g))

    return _result(a.data @ b.data, (a, b), backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        return ((a, g.T),)

    return _result(a.data.T, (a,), backward)


def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _result(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        scalar = np.asarray(b, dtype=a.dtype)

        def backward_const(g):
            return ((a, _unbroadcast(g * scalar, a.shape)),)

        return _result(a.data * scalar, (a,), backward_const)

    def backward(g):
        return (
            (a, _unbroadcast(g * b.data, a.shape)),
            (b, _unbroadcast(g * a.data, b.shape)),
        )

    return _result(a.data * b.data, (a, b), backward)


def reduce_sum(a: Tensor, axis=None) -> Tensor:
    def backward(g):
        if axis is None:
            return ((a, np.broadcast_to(g, a.shape).copy()),)
        return ((a, np.broadcast_to(np.expand_dims(g, axis), a.shape).copy()),)

    return _result(np.asarray(a.data.sum(axis=axis)), (a,), backward)


def take(a: Tensor, index) -> Tensor:
    """Basic or fancy indexing; repeated indices accumulate in backward."""
    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return ((a, full),)

    return _result(np.array(a.data[index]), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        parts = []
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            parts.append((t, g[tuple(sl)]))
        return parts

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


# -- nonlinearities ------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    if _relu_tape is not None:
        _relu_tape.append(mask)

    def backward(g):
        return ((a, g * mask),)

    return _result(np.where(mask, a.data, 0).astype(a.dtype), (a,), backward)


def log(a: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """Natural log clamped below at ``floor``; the clamp passes no gradient."""
    clipped = np.maximum(a.data, floor)
    live = a.data > floor

    def backward(g):
        return ((a, np.where(live, g / clipped, 0).astype(a.dtype)),)

    return _result(np.log(clipped), (a,), backward)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor. ``-inf`` entries get exactly zero weight."""
    x = a.data
    if x.ndim != 2:
        raise NumericsError(f"softmax_rows expects a matrix, got shape {x.shape}")
    live = np.isfinite(x)
    if not live.any(axis=1).all():
        bad = int(np.flatnonzero(~live.any(axis=1))[0])
        raise NumericsError(f"softmax_rows: row {bad} is fully masked")
    top = np.where(live, x, -np.inf).max(axis=1, keepdims=True)
    e = np.where(live, np.exp(np.where(live, x - top, 0)), 0)
    p = (e / e.sum(axis=1, keepdims=True)).astype(x.dtype)

    def backward(g):
        dot = (g * p).sum(axis=1, keepdims=True)
        return ((a, p * (g - dot)),)

    return _result(p, (a,), backward)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rng is None or rate <= 0.0:
        return a
    keep = (rng.random(a.shape) >= rate).astype(a.dtype) / (1.0 - rate)
    return mul(a, Tensor(keep))


def conv1d(seq: Tensor, kernel: Tensor) -> Tensor:
    """Same-padded 1-D cross-correlation.

    ``seq`` is n x d_in, ``kernel`` is w x d_in x d_out with odd w; positions
    outside the sequence read as zeros.
    """
    if seq.data.ndim != 2 or kernel.data.ndim != 3:
        raise NumericsError(f"conv1d expects n x d_in and w x d_in x d_out, got {seq.shape}, {kernel.shape}")
    width, d_in, d_out = kernel.shape
    if width % 2 == 0:
        raise NumericsError(f"conv1d window must be odd, got {width}")
    n = seq.shape[0]
    if n < 1:
        raise NumericsError("conv1d needs at least one position")
    if seq.shape[1] != d_in:
        raise NumericsError(f"conv1d channel mismatch: {seq.shape} vs kernel {kernel.shape}")
    half = width // 2
    padded = np.zeros((n + 2 * half, d_in), dtype=seq.dtype)
    padded[half:half + n] = seq.data
    cols = np.stack([padded[t:t + n] for t in range(width)], axis=1).reshape(n, width * d_in)
    flat = kernel.data.reshape(width * d_in, d_out)

    def backward(g):
        dcols = (g @ flat.T).reshape(n, width, d_in)
        dpad = np.zeros_like(padded)
        for t in range(width):
            dpad[t:t + n] += dcols[:, t, :]
        dkernel = (cols.T @ g).reshape(width, d_in, d_out)
        return ((seq, dpad[half:half + n]), (kernel, dkernel))

    return _result(cols @ flat, (seq, kernel), backward)


def cross_entropy(pred: Tensor, gold: np.ndarray, check: bool = False) -> Tensor:
    """Per-row ``-log pred[row, gold[row]]`` with the log clamped at ``LOG_FLOOR``.

    Returns a vector with one loss per row.
    """
    gold = np.asarray(gold, dtype=np.int64)
    if check:
        sums = pred.data.sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-6):
            raise NumericsError("cross_entropy: prediction rows are not normalized")
    picked = take(pred, (np.arange(len(gold)), gold))
    return mul(log(picked), -1.0)


# -- optimisation --------------------------------------------------------

class Adam:
    """Adam with bias-corrected moments. Parameters are updated in place."""

    def __init__(self, params: dict[str, Tensor], lr: float = 0.0005, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, max_grad_norm: float | None = None):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items()}
        for name, g in grads.items():
            if g is not None and not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        scale = 1.0
        if self.max_grad_norm is not None:
            total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values() if g is not None))
            if total > self.max_grad_norm:
                scale = self.max_grad_norm / (total + 1e-12)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            elif scale != 1.0:
                g = g * scale
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(p.dtype)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}


# -- verification --------------------------------------------------------

def _evaluate(closure) -> tuple[float, list]:
    global _relu_tape
    _relu_tape = []
    try:
        value = float(closure().data)
        return value, _relu_tape
    finally:
        _relu_tape = None


def _same_pattern(a: list, b: list) -> bool:
    return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(closure: Callable[[], Tensor], params: dict[str, Tensor] | Iterable[Tensor],
               per_tensor: bool = False, max_shrinks: int = 4):
    """Compare reverse-mode gradients against central differences.

    ``closure`` rebuilds the scalar loss from the current parameter values.
    The step for coordinate ``x`` is ``1e-3 * max(1, |x|)``. If either side
    of the stencil flips a ReLU on or off relative to the unperturbed pass,
    the difference straddles a kink and the step is cut tenfold, at most
    ``max_shrinks`` times. Returns the max of
    ``|g_ad - g_fd| / max(|g_ad| + |g_fd|, 1e-8)`` over every coordinate,
    or a per-tensor dict of the same when ``per_tensor`` is set.
    """
    if not isinstance(params, dict):
        params = {p.name or f"param{i}": p for i, p in enumerate(params)}
    for p in params.values():
        if p.dtype != VERIFICATION:
            raise NumericsError("grad_check requires verification (float64) precision")
        p.zero_grad()
    loss = closure()
    loss.backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    for p in params.values():
        p.zero_grad()
    _, base = _evaluate(closure)
    errors = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        g_ad = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            h = 1e-3 * max(1.0, abs(orig))
            for _ in range(max_shrinks + 1):
                flat[i] = orig + h
                up, tape_up = _evaluate(closure)
                flat[i] = orig - h
                down, tape_down = _evaluate(closure)
                flat[i] = orig
                if _same_pattern(base, tape_up) and _same_pattern(base, tape_down):
                    break
                h /= 10.0
            g_fd = (up - down) / (2 * h)
            err = abs(g_ad[i] - g_fd) / max(abs(g_ad[i]) + abs(g_fd), 1e-8)
            worst = max(worst, err)
        errors[name] = worst
    if per_tensor:
        return errors
    return max(errors.values(), default=0.0)


def glorot_uniform(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int, dtype=STANDARD) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)
