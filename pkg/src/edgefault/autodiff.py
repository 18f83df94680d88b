"""Dense-matrix reverse-mode differentiation and the AdamW optimizer.

Everything trainable in this package is a 2-D float64 matrix (scalars are
1x1, vectors are 1xN or Nx1). Operations executed while a :class:`Tape` is
active are appended to it in creation order; since an operand must exist
before it is used, append order is a topological order and
:meth:`Tape.backward` simply walks it in reverse, accumulating gradients by
summation. With no active tape the same functions run as plain numpy
evaluations, which is how frozen-parameter inference works.

Every op validates shapes and rejects non-finite results: NaN/Inf anywhere is
a bug upstream, never a value to propagate.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .errors import NumericError, ShapeError, ValidationError


class Tensor:
    """A rows x cols float64 matrix, optionally recorded on the active tape."""

    __slots__ = ("data", "grad", "_parents", "_backward", "name")

    def __init__(self, data, name=None):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
        self.data = arr
        self.grad = None
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}({self.rows}x{self.cols})"

    # operator sugar; full op set lives at module level
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return elementwise_mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


_ACTIVE_TAPE: list = []


class Tape:
    """Ordered record of op results for one forward pass.

    Use as a context manager; nesting is not supported. ``backward`` may be
    called inside or after the ``with`` block and seeds d(loss)/d(loss) = 1.
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        if _ACTIVE_TAPE:
            raise ValidationError("a tape is already active; tapes do not nest")
        _ACTIVE_TAPE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.pop()
        return False

    def backward(self, loss: Tensor):
        if not self.nodes:
            raise ValidationError("backward on an empty tape")
        if loss.shape != (1, 1):
            raise ShapeError(f"loss must be 1x1, got {loss.shape}")
        loss.grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE[-1] if _ACTIVE_TAPE else None


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def _make(data: np.ndarray, parents, backward) -> Tensor:
    if not np.isfinite(data).all():
        raise NumericError("operation produced a non-finite value")
    out = Tensor(data)
    tape = active_tape()
    if tape is not None:
        out._parents = tuple(parents)
        out._backward = backward
        tape.nodes.append(out)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")


# ---------------------------------------------------------------------------
# primitives


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, -_unbroadcast(g, b.shape))

    return _make(a.data - b.data, (a, b), backward)


def elementwise_mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "elementwise_mul")

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)

    def backward(g):
        _accumulate(a, c * g)

    return _make(c * a.data, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = backend.sigmoid_fwd(a.data)

    def backward(g):
        _accumulate(a, backend.sigmoid_bwd(g, y))

    return _make(y, (a,), backward)


def leaky_relu(a, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, backend.leaky_relu_bwd(g, a.data, slope))

    return _make(backend.leaky_relu_fwd(a.data, slope), (a,), backward)


def row_softmax(a) -> Tensor:
    a = as_tensor(a)
    y = backend.row_softmax_fwd(a.data)

    def backward(g):
        _accumulate(a, backend.row_softmax_bwd(g, y))

    return _make(y, (a,), backward)


def log(a, floor: float | None = None) -> Tensor:
    """Natural log; with ``floor`` set, inputs are clamped from below first
    and the gradient uses the clamped value."""
    a = as_tensor(a)
    base = np.maximum(a.data, floor) if floor is not None else a.data

    def backward(g):
        _accumulate(a, g / base)

    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(base)
    return _make(out, (a,), backward)


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    p = float(p)

    def backward(g):
        _accumulate(a, g * p * a.data ** (p - 1.0))

    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data**p
    return _make(out, (a,), backward)


def clamp_min(a, floor: float) -> Tensor:
    a = as_tensor(a)
    mask = a.data > floor

    def backward(g):
        _accumulate(a, g * mask)

    return _make(np.maximum(a.data, floor), (a,), backward)


def l2_norm_sq(a) -> Tensor:
    """Sum of squares of every entry, as a 1x1 tensor."""
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, 2.0 * g[0, 0] * a.data)

    return _make(np.array([[np.dot(a.data.ravel(), a.data.ravel())]]), (a,), backward)


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.data.size

    def backward(g):
        _accumulate(a, np.full(a.shape, g[0, 0] / n))

    return _make(np.array([[a.data.mean()]]), (a,), backward)


def sum_all(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, np.full(a.shape, g[0, 0]))

    return _make(np.array([[a.data.sum()]]), (a,), backward)


def row_sum(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _make(a.data.sum(axis=1, keepdims=True), (a,), backward)


def transpose(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, np.ascontiguousarray(g.T))

    return _make(np.ascontiguousarray(a.data.T), (a,), backward)


def concat_cols(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValidationError("concat_cols of no tensors")
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise ShapeError("concat_cols: row counts differ")
    widths = [p.cols for p in parts]

    def backward(g):
        at = 0
        for p, w in zip(parts, widths):
            _accumulate(p, g[:, at : at + w])
            at += w

    return _make(np.concatenate([p.data for p in parts], axis=1), tuple(parts), backward)


def concat_rows(parts) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    if not parts:
        raise ValidationError("concat_rows of no tensors")
    cols = parts[0].cols
    if any(p.cols != cols for p in parts):
        raise ShapeError("concat_rows: column counts differ")
    heights = [p.rows for p in parts]

    def backward(g):
        at = 0
        for p, h in zip(parts, heights):
            _accumulate(p, g[at : at + h, :])
            at += h

    return _make(np.concatenate([p.data for p in parts], axis=0), tuple(parts), backward)


def rows(a, index) -> Tensor:
    """Gather rows by integer index; duplicate indices are allowed and their
    gradients accumulate."""
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise ShapeError(f"rows: index out of range for {a.shape}")

    def backward(g):
        da = np.zeros(a.shape)
        np.add.at(da, idx, g)
        _accumulate(a, da)

    return _make(a.data[idx], (a,), backward)


def cols(a, index) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(index, dtype=np.int64).ravel()
    if idx.size and (idx.min() < 0 or idx.max() >= a.cols):
        raise ShapeError(f"cols: index out of range for {a.shape}")

    def backward(g):
        da = np.zeros(a.shape)
        np.add.at(da, (slice(None), idx), g)
        _accumulate(a, da)

    return _make(np.ascontiguousarray(a.data[:, idx]), (a,), backward)


def segment_softmax(a, segments, n_segments: int) -> Tensor:
    """Per-segment softmax of an Ex1 column; segment ids are arbitrary
    int64 values in [0, n_segments)."""
    a = as_tensor(a)
    if a.cols != 1:
        raise ShapeError("segment_softmax expects an Ex1 column")
    seg = np.asarray(segments, dtype=np.int64).ravel()
    if seg.size != a.rows:
        raise ShapeError("segment_softmax: one segment id per row required")
    y = backend.segment_softmax_fwd(a.data, seg, n_segments)

    def backward(g):
        _accumulate(a, backend.segment_softmax_bwd(g, y, seg, n_segments))

    return _make(y, (a,), backward)


def segment_sum(a, segments, n_segments: int) -> Tensor:
    """Sum rows sharing a segment id into an n_segments x cols matrix."""
    a = as_tensor(a)
    seg = np.asarray(segments, dtype=np.int64).ravel()
    if seg.size != a.rows:
        raise ShapeError("segment_sum: one segment id per row required")

    def backward(g):
        _accumulate(a, backend.segment_sum_bwd(g, seg))

    return _make(backend.segment_sum_fwd(a.data, seg, n_segments), (a,), backward)


# ---------------------------------------------------------------------------
# optimizer


class AdamW:
    """AdamW with decoupled weight decay and a stepped learning-rate decay.

    The effective rate for epoch e is ``base_lr * decay_factor ** (e //
    decay_every)``; call :meth:`set_epoch` at epoch boundaries. Moment
    buffers are keyed by parameter identity so parameters can be added
    (fresh, zeroed moments) or dropped (state discarded) at runtime.
    """

    def __init__(self, params, base_lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.01, decay_factor=0.1, decay_every=10):
        self.params = list(params)
        self.base_lr = base_lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.decay_factor = decay_factor
        self.decay_every = decay_every
        self.lr = base_lr
        self.step_count = 0
        # id(param) -> [m, v, per-param update count]; the per-param count
        # drives bias correction so late-added parameters warm up correctly
        self._moments: dict[int, list] = {}

    def lr_for_epoch(self, epoch: int) -> float:
        return self.base_lr * self.decay_factor ** (epoch // self.decay_every)

    def set_epoch(self, epoch: int):
        self.lr = self.lr_for_epoch(epoch)

    def add_param(self, p: Tensor):
        self.params.append(p)

    def drop_param(self, p: Tensor):
        self.params = [q for q in self.params if q is not p]
        self._moments.pop(id(p), None)

    def step(self):
        """Apply one update from the accumulated gradients, then clear them.

        Parameters with no gradient are skipped entirely (their moments do
        not advance). A non-finite gradient aborts before any parameter is
        touched.
        """
        live = [p for p in self.params if p.grad is not None]
        for p in live:
            if not np.isfinite(p.grad).all():
                raise NumericError(f"non-finite gradient for {p.name or 'parameter'}")
        self.step_count += 1
        for p in live:
            state = self._moments.get(id(p))
            if state is None:
                state = [np.zeros(p.shape), np.zeros(p.shape), 0]
                self._moments[id(p)] = state
            state[2] += 1
            backend.adamw_update(p.data, p.grad, state[0], state[1], self.lr,
                                 self.beta1, self.beta2, self.eps,
                                 self.weight_decay, state[2])
            p.grad = None

    def zero_grad(self):
        for p in self.params:
            p.grad = None
