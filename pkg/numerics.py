"""
Dense numeric core with reverse-mode gradients.

Values are numpy arrays wrapped in Tensor; every primitive on a Tape
computes its forward value eagerly and, when any input requires a
gradient, records a backward closure. Tape.backward sweeps the record in
reverse, accumulating (never overwriting) gradients at shared inputs.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from errors import ArgumentError, ContractViolation

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float64

ArrayLike = Union[np.ndarray, float, int, Sequence]


class Tensor:
    """A numpy array plus the bookkeeping the tape needs."""

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        if dtype is None:
            dtype = data.dtype if isinstance(data, np.ndarray) and data.dtype.kind == "f" else DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ArgumentError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def _require_finite(value: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(value)):
        raise ContractViolation(f"{op} produced a non-finite value")


def parameter(data: ArrayLike, name: str, dtype=None) -> Tensor:
    """A trainable leaf; data is copied into its own contiguous buffer."""
    array = np.array(data, dtype=dtype or DEFAULT_DTYPE, copy=True, order="C")
    _require_finite(array, f"parameter {name}")
    return Tensor(array, requires_grad=True, name=name)


def constant(data: ArrayLike, dtype=None) -> Tensor:
    array = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
    _require_finite(array, "constant")
    return Tensor(array)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to an operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ArgumentError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _parse_einsum(spec: str) -> tuple[str, str, str]:
    try:
        inputs, out = spec.replace(" ", "").split("->")
        left, right = inputs.split(",")
    except ValueError:
        raise ArgumentError(f"einsum spec {spec!r} must look like 'ab,bc->ac'") from None
    for operand, other in ((left, right), (right, left)):
        if len(set(operand)) != len(operand):
            raise ArgumentError(f"einsum spec {spec!r}: repeated index inside one operand")
        for index in operand:
            if index not in other and index not in out:
                raise ArgumentError(f"einsum spec {spec!r}: index {index!r} is summed inside one operand")
    return left, right, out


def logsumexp(x: np.ndarray, axis: Optional[int] = None, keepdims: bool = False) -> np.ndarray:
    """Max-shifted log-sum-exp; finite for any finite input."""
    x = np.asarray(x)
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return out if keepdims else np.squeeze(out, axis=axis)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = np.asarray(x)
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


@dataclass
class _Node:
    out: Tensor
    parents: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], tuple[Optional[np.ndarray], ...]]
    op: str


class Tape:
    """Ordered record of primitive operations.

    With record=False nothing is stored and values are computed only,
    which is what evaluation and finite differences use.
    """

    def __init__(self, record: bool = True):
        self.record = record
        self.nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _emit(self, value: np.ndarray, parents: tuple[Tensor, ...], backward, op: str) -> Tensor:
        _require_finite(value, op)
        requires = self.record and any(p.requires_grad for p in parents)
        out = Tensor(value, requires_grad=requires, dtype=value.dtype if value.dtype.kind == "f" else None)
        if requires:
            self.nodes.append(_Node(out, parents, backward, op))
        return out

    # --- elementwise ---

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        _broadcast_shape(a, b, "add")
        return self._emit(
            a.data + b.data, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        _broadcast_shape(a, b, "sub")
        return self._emit(
            a.data - b.data, (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        _broadcast_shape(a, b, "mul")
        return self._emit(
            a.data * b.data, (a, b),
            lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)), "mul")

    def scale(self, a: Tensor, c: float) -> Tensor:
        return self._emit(a.data * c, (a,), lambda g: (g * c,), "scale")

    def sigmoid(self, a: Tensor) -> Tensor:
        s = _sigmoid(a.data)
        return self._emit(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")

    def tanh(self, a: Tensor) -> Tensor:
        t = np.tanh(a.data)
        return self._emit(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")

    def exp(self, a: Tensor) -> Tensor:
        e = np.exp(a.data)
        return self._emit(e, (a,), lambda g: (g * e,), "exp")

    def log(self, a: Tensor) -> Tensor:
        if np.any(a.data <= 0):
            raise ContractViolation("log of a non-positive value")
        return self._emit(np.log(a.data), (a,), lambda g: (g / a.data,), "log")

    def dropout(self, a: Tensor, rate: float, rng: Optional[np.random.Generator]) -> Tensor:
        """Inverted dropout; identity when rate is 0 or no generator is given."""
        if rng is None or rate <= 0.0:
            return a
        mask = (rng.random(a.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)
        return self._emit(a.data * mask, (a,), lambda g: (g * mask,), "dropout")

    # --- linear algebra ---

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ArgumentError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        return self._emit(
            a.data @ b.data, (a, b),
            lambda g: (g @ b.data.T, a.data.T @ g), "matmul")

    def matvec(self, a: Tensor, x: Tensor) -> Tensor:
        if a.ndim != 2 or x.ndim != 1 or a.shape[1] != x.shape[0]:
            raise ArgumentError(f"matvec: incompatible shapes {a.shape} and {x.shape}")
        return self._emit(
            a.data @ x.data, (a, x),
            lambda g: (np.outer(g, x.data), a.data.T @ g), "matvec")

    def einsum(self, spec: str, a: Tensor, b: Tensor) -> Tensor:
        """Two-operand contraction whose indices each appear in the other operand or the output."""
        left, right, out = _parse_einsum(spec)
        try:
            value = np.einsum(f"{left},{right}->{out}", a.data, b.data, optimize=True)
        except ValueError as e:
            raise ArgumentError(f"einsum {spec!r}: {e}") from None

        def backward(g):
            return (
                np.einsum(f"{out},{right}->{left}", g, b.data, optimize=True),
                np.einsum(f"{out},{left}->{right}", g, a.data, optimize=True),
            )

        return self._emit(value, (a, b), backward, "einsum")

    # --- structure ---

    def concat(self, parts: Sequence[Tensor], axis: int = -1) -> Tensor:
        try:
            value = np.concatenate([p.data for p in parts], axis=axis)
        except ValueError as e:
            raise ArgumentError(f"concat: {e}") from None
        bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
        return self._emit(value, tuple(parts), lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")

    def take(self, a: Tensor, indices: np.ndarray, axis: int = 0) -> Tensor:
        """Gather along one axis; the backward is scatter-add with the same indices."""
        indices = np.asarray(indices, dtype=np.int64)
        axis = axis % a.ndim
        if indices.size and (indices.min() < 0 or indices.max() >= a.shape[axis]):
            raise ArgumentError(f"take: index out of range for axis of size {a.shape[axis]}")
        where = (slice(None),) * axis + (indices,)

        def backward(g):
            grad = np.zeros_like(a.data)
            np.add.at(grad, where, g)
            return (grad,)

        return self._emit(np.take(a.data, indices, axis=axis), (a,), backward, "take")

    def scatter_add(self, a: Tensor, indices: np.ndarray, size: int, axis: int = 0) -> Tensor:
        """Sum slices of `a` into `size` buckets along one axis; adjoint of take."""
        indices = np.asarray(indices, dtype=np.int64)
        axis = axis % a.ndim
        if indices.ndim != 1 or indices.shape[0] != a.shape[axis]:
            raise ArgumentError(f"scatter_add: need one index per slice along axis {axis}")
        if indices.size and (indices.min() < 0 or indices.max() >= size):
            raise ArgumentError(f"scatter_add: index out of range for size {size}")
        shape = list(a.shape)
        shape[axis] = size
        value = np.zeros(shape, dtype=a.data.dtype)
        np.add.at(value, (slice(None),) * axis + (indices,), a.data)
        return self._emit(value, (a,), lambda g: (np.take(g, indices, axis=axis),), "scatter_add")

    def chunk(self, a: Tensor, pieces: int, axis: int = -1) -> list[Tensor]:
        width = a.shape[axis]
        if width % pieces:
            raise ArgumentError(f"chunk: axis of size {width} does not split into {pieces}")
        step = width // pieces
        return [self.take(a, np.arange(i * step, (i + 1) * step), axis=axis) for i in range(pieces)]

    def reshape(self, a: Tensor, shape: tuple[int, ...]) -> Tensor:
        try:
            value = a.data.reshape(shape)
        except ValueError as e:
            raise ArgumentError(f"reshape: {e}") from None
        return self._emit(value, (a,), lambda g: (g.reshape(a.shape),), "reshape")

    def sum(self, a: Tensor, axis: Optional[int] = None) -> Tensor:
        value = np.sum(a.data, axis=axis)

        def backward(g):
            if axis is not None:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return self._emit(np.asarray(value), (a,), backward, "sum")

    # --- reductions over logits ---

    def logsumexp(self, a: Tensor, axis: int = -1) -> Tensor:
        value = logsumexp(a.data, axis=axis)
        probs = np.exp(a.data - np.expand_dims(value, axis))
        return self._emit(np.asarray(value), (a,), lambda g: (np.expand_dims(g, axis) * probs,), "logsumexp")

    def log_softmax(self, a: Tensor, axis: int = -1) -> Tensor:
        value = a.data - logsumexp(a.data, axis=axis, keepdims=True)
        probs = np.exp(value)
        return self._emit(
            value, (a,),
            lambda g: (g - probs * np.sum(g, axis=axis, keepdims=True),), "log_softmax")

    def nll_from_logits(self, logits: Tensor, targets: np.ndarray) -> Tensor:
        """Mean of -log softmax(logits)[target] over the rows of a (B, C) matrix."""
        targets = np.asarray(targets, dtype=np.int64).reshape(-1)
        if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
            raise ArgumentError(f"nll_from_logits: logits {logits.shape} vs {targets.shape[0]} targets")
        if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
            raise ArgumentError("nll_from_logits: target id out of range")
        rows = np.arange(targets.shape[0])
        lse = logsumexp(logits.data, axis=1)
        value = np.mean(lse - logits.data[rows, targets])

        def backward(g):
            grad = np.exp(logits.data - lse[:, None])
            grad[rows, targets] -= 1.0
            return (grad * (g / targets.shape[0]),)

        return self._emit(np.asarray(value), (logits,), backward, "nll_from_logits")

    # --- reverse sweep ---

    def backward(self, loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
        """Gradient of a scalar loss for every named parameter (zeros when unused)."""
        if loss.size != 1:
            raise ArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for parent, pg in zip(node.parents, node.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg

        return {
            name: np.asarray(grads.get(id(p), np.zeros_like(p.data)), dtype=p.data.dtype).reshape(p.shape)
            for name, p in params.items()
        }


@dataclass
class GradCheckReport:
    """Max relative error between analytic and central-difference gradients, per group."""
    errors: dict[str, float]
    tolerance: float
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.errors.values())

    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    def lines(self) -> list[str]:
        return [
            f"{name}: max_rel_error={err:.3e} over {self.checked.get(name, 0)} entries"
            f" [{'OK' if err < self.tolerance else 'FAIL'}]"
            for name, err in self.errors.items()
        ]


def grad_check(
    f: Callable[[Tape], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    max_entries: Optional[int] = None,
    seed: int = 0,
    groups: Optional[Iterable[str]] = None,
    floor: float = 1e-8,
) -> GradCheckReport:
    """Compare Tape.backward against central differences of f.

    f builds the loss on the tape it is handed and must be deterministic.
    Entries are perturbed in place and restored; with max_entries set, a
    seeded random subset of each parameter is checked. The relative error
    is |a - n| / max(|a|, |n|, floor); raise floor only where float64
    cancellation noise on near-zero gradients is expected.
    """
    tape = Tape()
    analytic = tape.backward(f(tape), params)
    rng = np.random.default_rng(seed)

    errors: dict[str, float] = {}
    checked: dict[str, int] = {}
    for name in (groups or params.keys()):
        p = params[name]
        flat = p.data.reshape(-1)
        if not np.shares_memory(flat, p.data):
            raise ArgumentError(f"grad_check: parameter {name} is not contiguous")
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))

        worst = 0.0
        a_flat = analytic[name].reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            plus = float(f(Tape(record=False)).data)
            flat[i] = orig - step
            minus = float(f(Tape(record=False)).data)
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * step)
            a = float(a_flat[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
        errors[name] = worst
        checked[name] = int(idx.size)

    report = GradCheckReport(errors=errors, tolerance=tolerance, checked=checked)
    if not report.passed:
        name, err = report.worst()
        logger.warning(f"Gradient check failed: {name} rel error {err:.3e} > {tolerance:.1e}")
    return report
