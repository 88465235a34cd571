"""Dense tensors with a define-by-run reverse-mode tape.

Operations executed while a ``Tape`` is active and touching a tensor with
``requires_grad`` are recorded; ``Tape.backward`` replays them in reverse.
Outside a tape the same functions run as plain numpy forward passes.
"""

import math
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from loguru import logger

from src.core.errors import NothingToPredictError, NumericsError, ShapeError

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)

_active_tape: ContextVar["Tape | None"] = ContextVar("active_tape", default=None)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        array = np.asarray(data)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(np.float64)
        self.data: np.ndarray = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, copy=True), requires_grad=True, name=name)


@dataclass
class _Record:
    op: str
    output: Tensor
    backward: Callable[[np.ndarray], None]


class Tape:
    def __init__(self):
        self.records: list[_Record] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor, grad: np.ndarray | None = None):
        if grad is None:
            if loss.size != 1:
                raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
            grad = np.ones_like(loss.data)
        loss.grad = np.array(grad, dtype=loss.data.dtype, copy=True)
        for record in reversed(self.records):
            if record.output.grad is not None:
                record.backward(record.output.grad)


def _result(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    tape = _active_tape.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.records.append(_Record(op, out, backward))
    return out


def _acc(t: Tensor, g: np.ndarray):
    if t.requires_grad:
        t.accumulate(g)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        _acc(a, g @ b.data.T)
        _acc(b, a.data.T @ g)

    return _result("matmul", a.data @ b.data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}") from None

    def backward(g):
        _acc(a, _unbroadcast(g, a.shape))
        _acc(b, _unbroadcast(g, b.shape))

    return _result("add", out, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul shape mismatch: {a.shape} * {b.shape}") from None

    def backward(g):
        _acc(a, _unbroadcast(g * b.data, a.shape))
        _acc(b, _unbroadcast(g * a.data, b.shape))

    return _result("mul", out, (a, b), backward)


def scale(a: Tensor, factor: float) -> Tensor:
    def backward(g):
        _acc(a, g * factor)

    return _result("scale", a.data * factor, (a,), backward)


def total(a: Tensor) -> Tensor:
    def backward(g):
        _acc(a, np.broadcast_to(g, a.shape))

    return _result("sum", np.asarray(a.data.sum()), (a,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        _acc(a, g.T)

    return _result("transpose", a.data.T, (a,), backward)


def columns(a: Tensor, start: int, stop: int) -> Tensor:
    def backward(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        _acc(a, full)

    return _result("columns", a.data[:, start:stop], (a,), backward)


def concat_columns(parts: Sequence[Tensor]) -> Tensor:
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            _acc(p, g[:, lo:hi])

    return _result("concat", np.concatenate([p.data for p in parts], axis=1), parts, backward)


def rows(a: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _acc(a, full)

    return _result("rows", a.data[index], (a,), backward)


def embedding(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding id out of range for table of {table.shape[0]} rows")
    return rows(table, ids)


def masked_softmax(logits: Tensor, allowed: np.ndarray) -> Tensor:
    """Row softmax over ``allowed`` entries; disallowed entries are exactly 0."""
    allowed = np.asarray(allowed, dtype=bool)
    if allowed.shape != logits.shape:
        raise ShapeError(f"mask shape {allowed.shape} does not match logits {logits.shape}")
    if not allowed.any(axis=-1).all():
        raise NumericsError("masked_softmax: a row has no allowed column")
    z = np.where(allowed, logits.data, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        _acc(logits, p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return _result("masked_softmax", p, (logits,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std

    def backward(g):
        _acc(gain, (g * x_hat).reshape(-1, x_hat.shape[-1]).sum(axis=0))
        _acc(bias, g.reshape(-1, g.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            dx = inv_std * (
                gx
                - gx.mean(axis=-1, keepdims=True)
                - x_hat * (gx * x_hat).mean(axis=-1, keepdims=True)
            )
            x.accumulate(dx)

    return _result("layer_norm", x_hat * gain.data + bias.data, (x, gain, bias), backward)


def gelu(x: Tensor) -> Tensor:
    u = _GELU_C * (x.data + 0.044715 * x.data**3)
    t = np.tanh(u)

    def backward(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x.data**2)
        _acc(x, g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t**2) * du))

    return _result("gelu", 0.5 * x.data * (1.0 + t), (x,), backward)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of ``targets`` under row-wise softmax."""
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy expects (K, V) logits and K targets, got {logits.shape}")
    K, V = logits.shape
    if K == 0:
        raise NothingToPredictError("no target rows")
    if targets.min() < 0 or targets.max() >= V:
        raise ShapeError(f"target ids must lie in [0, {V})")
    logp = log_softmax(logits.data)
    loss = -logp[np.arange(K), targets].mean()

    def backward(g):
        probs = np.exp(logp)
        probs[np.arange(K), targets] -= 1.0
        _acc(logits, probs * (g / K))

    return _result("cross_entropy", np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def _as_tensors(params: "Mapping[str, Tensor] | Iterable[Tensor]") -> list[Tensor]:
    if isinstance(params, Mapping):
        return list(params.values())
    return list(params)


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: "Mapping[str, Tensor] | Iterable[Tensor]",
    eps: float = 1e-5,
    max_per_tensor: int | None = None,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Largest relative error between tape gradients and central differences.

    ``floor`` bounds the denominator so entries whose true gradient is zero
    are compared in absolute terms.
    """
    tensors = _as_tensors(params)
    for t in tensors:
        if t.dtype != np.float64:
            raise NumericsError(f"grad_check needs float64 tensors, {t!r} is {t.dtype}")
        t.zero_grad()

    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        indices = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            indices = np.sort(rng.choice(flat.size, size=max_per_tensor, replace=False))
        for i in indices:
            original = flat[i]
            flat[i] = original + eps
            plus = loss_fn().item()
            flat[i] = original - eps
            minus = loss_fn().item()
            flat[i] = original
            numeric = (plus - minus) / (2 * eps)
            exact = grad.reshape(-1)[i]
            if not (math.isfinite(numeric) and math.isfinite(exact)):
                raise NumericsError(f"non-finite gradient for {t!r} at index {i}")
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            if error > worst:
                worst = error
                logger.debug(f"grad_check: {t.name or t!r}[{i}] analytic={exact:.3e} numeric={numeric:.3e}")
    return worst
