"""Dense 2-D tensor engine with tape-based reverse-mode differentiation.

Tensors are (rows, cols) float64 arrays. Every operation goes through a
Tape, which records a backward rule; Tape.backward replays the rules in
fixed reverse order, so gradient accumulation is deterministic. Only the
primitives the network layers need are provided; there is no broadcasting
beyond a (1, f) row against an (n, f) matrix.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        a = np.asarray(values, dtype=np.float64)
        if a.ndim == 1:
            a = a[None, :]
        if a.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {a.shape}")
        self.values = a
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


def _accumulate(t: Tensor, g: np.ndarray, owned: bool = False) -> None:
    """Add g into t's gradient. owned=True means g is a fresh array the
    caller will not reuse, so the first accumulation can adopt it."""
    if t.requires_grad:
        if t.grad is None:
            t.grad = g if owned else np.array(g)
        else:
            t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape` after a (1, f) or (n, 1) broadcast."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def scatter_add_rows(idx: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    """Accumulate rows into an n-row matrix at positions idx."""
    f = rows.shape[1]
    flat = (idx[:, None] * f + np.arange(f)).ravel()
    return np.bincount(flat, weights=rows.ravel(),
                       minlength=n * f).reshape(n, f)


def _segment_order(seg: np.ndarray, m: int):
    order = np.argsort(seg, kind="stable")
    counts = np.bincount(seg, minlength=m)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return order, counts, starts


class Tape:
    """Ordered record of executed ops with their backward rules."""

    def __init__(self, check_finite: bool = False, no_grad: bool = False):
        self._ops: list[tuple[Tensor, object]] = []
        self.check_finite = check_finite
        self.no_grad = no_grad

    def needs_grad(self, *inputs: Tensor) -> bool:
        return not self.no_grad and any(t.requires_grad for t in inputs)

    def _make(self, values: np.ndarray, inputs: tuple[Tensor, ...],
              backward, op_name: str) -> Tensor:
        out = Tensor(values, requires_grad=self.needs_grad(*inputs))
        if self.check_finite and not np.all(np.isfinite(values)):
            raise FloatingPointError(f"non-finite values produced by {op_name}")
        if out.requires_grad:
            self._ops.append((out, backward))
        return out

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(everything); loss must be a 1x1 tensor."""
        if loss.values.shape != (1, 1):
            raise ValueError(f"backward needs a scalar (1x1), got {loss.values.shape}")
        loss.grad = np.ones((1, 1))
        for out, fn in reversed(self._ops):
            if out.grad is not None:
                fn(out.grad)

    # -- arithmetic -----------------------------------------------------

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.values.shape[1] != b.values.shape[0]:
            raise ValueError(f"matmul shapes {a.values.shape} x {b.values.shape}")
        av, bv = a.values, b.values

        def back(g):
            if a.requires_grad:
                _accumulate(a, g @ bv.T, owned=True)
            if b.requires_grad:
                _accumulate(b, av.T @ g, owned=True)
        return self._make(av @ bv, (a, b), back, "matmul")

    def _binary(self, a: Tensor, b: Tensor, fwd, da, db, name: str) -> Tensor:
        av, bv = a.values, b.values
        if av.shape != bv.shape and not (
                bv.shape == (1, av.shape[1]) or av.shape == (1, bv.shape[1])
                or bv.shape == (av.shape[0], 1) or av.shape == (bv.shape[0], 1)):
            raise ValueError(f"{name} shapes {av.shape} vs {bv.shape}")
        out = fwd(av, bv)

        def back(g):
            if a.requires_grad:
                ga = _unbroadcast(da(g, av, bv), av.shape)
                _accumulate(a, ga, owned=ga is not g)
            if b.requires_grad:
                gb = _unbroadcast(db(g, av, bv), bv.shape)
                _accumulate(b, gb, owned=gb is not g)
        return self._make(out, (a, b), back, name)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        return self._binary(a, b, lambda x, y: x + y,
                            lambda g, x, y: g, lambda g, x, y: g, "add")

    def subtract(self, a: Tensor, b: Tensor) -> Tensor:
        return self._binary(a, b, lambda x, y: x - y,
                            lambda g, x, y: g, lambda g, x, y: -g, "subtract")

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        return self._binary(a, b, lambda x, y: x * y,
                            lambda g, x, y: g * y, lambda g, x, y: g * x, "mul")

    def divide(self, a: Tensor, b: Tensor) -> Tensor:
        return self._binary(a, b, lambda x, y: x / y,
                            lambda g, x, y: g / y,
                            lambda g, x, y: -g * x / (y * y), "divide")

    def scale(self, a: Tensor, s: float) -> Tensor:
        def back(g):
            _accumulate(a, g * s, owned=True)
        return self._make(a.values * s, (a,), back, "scale")

    def add_scalar(self, a: Tensor, s: float) -> Tensor:
        def back(g):
            _accumulate(a, g)
        return self._make(a.values + s, (a,), back, "add_scalar")

    def square(self, a: Tensor) -> Tensor:
        av = a.values

        def back(g):
            _accumulate(a, 2.0 * av * g, owned=True)
        return self._make(av * av, (a,), back, "square")

    def sqrt(self, a: Tensor) -> Tensor:
        root = np.sqrt(a.values)

        def back(g):
            _accumulate(a, 0.5 * g / root, owned=True)
        return self._make(root, (a,), back, "sqrt")

    def relu(self, a: Tensor) -> Tensor:
        mask = a.values > 0  # gradient is 0 at exactly 0

        def back(g):
            _accumulate(a, g * mask, owned=True)
        return self._make(np.maximum(a.values, 0.0), (a,), back, "relu")

    def rowscale(self, a: Tensor, weights: np.ndarray) -> Tensor:
        """Multiply each row by a fixed (non-differentiated) scalar weight."""
        w = np.asarray(weights, dtype=np.float64).reshape(-1, 1)
        if w.shape[0] != a.values.shape[0]:
            raise ValueError(f"rowscale weights {w.shape[0]} != rows {a.values.shape[0]}")

        def back(g):
            _accumulate(a, g * w, owned=True)
        return self._make(a.values * w, (a,), back, "rowscale")

    # -- shape ops ------------------------------------------------------

    def concat_cols(self, parts: list[Tensor]) -> Tensor:
        rows = {p.values.shape[0] for p in parts}
        if len(rows) != 1:
            raise ValueError(f"concat_cols row counts differ: {sorted(rows)}")
        widths = [p.values.shape[1] for p in parts]
        bounds = np.concatenate([[0], np.cumsum(widths)])

        def back(g):
            for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
                _accumulate(p, g[:, lo:hi])
        return self._make(np.concatenate([p.values for p in parts], axis=1),
                          tuple(parts), back, "concat_cols")

    def gather_rows(self, a: Tensor, index: np.ndarray) -> Tensor:
        idx = np.asarray(index, dtype=np.int64)
        n = a.values.shape[0]
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexError(f"gather_rows index out of range [0, {n})")

        def back(g):
            _accumulate(a, scatter_add_rows(idx, g, n), owned=True)
        return self._make(a.values[idx], (a,), back, "gather_rows")

    # -- reductions -----------------------------------------------------

    def col_mean(self, a: Tensor) -> Tensor:
        n = a.values.shape[0]

        def back(g):
            _accumulate(a, np.broadcast_to(g / n, a.values.shape).copy(),
                        owned=True)
        return self._make(a.values.mean(axis=0, keepdims=True), (a,), back,
                          "col_mean")

    def reduce_mean(self, a: Tensor) -> Tensor:
        size = a.values.size

        def back(g):
            _accumulate(a, np.full_like(a.values, g[0, 0] / size), owned=True)
        return self._make(np.array([[a.values.mean()]]), (a,), back,
                          "reduce_mean")

    # -- segment ops ------------------------------------------------------

    def segment_sum(self, a: Tensor, segment_of: np.ndarray, m: int) -> Tensor:
        seg = _check_segments(segment_of, a.values.shape[0], m)

        def back(g):
            _accumulate(a, g[seg], owned=True)
        return self._make(scatter_add_rows(seg, a.values, m), (a,), back,
                          "segment_sum")

    def segment_mean(self, a: Tensor, segment_of: np.ndarray, m: int) -> Tensor:
        seg = _check_segments(segment_of, a.values.shape[0], m)
        counts = np.bincount(seg, minlength=m)
        if (counts == 0).any():
            raise ValueError(f"segment_mean: empty segment "
                             f"{int(np.argmin(counts))}")
        inv = 1.0 / counts

        def back(g):
            _accumulate(a, (g * inv[:, None])[seg], owned=True)
        return self._make(scatter_add_rows(seg, a.values, m) * inv[:, None],
                          (a,), back, "segment_mean")

    def segment_max(self, a: Tensor, segment_of: np.ndarray, m: int,
                    fill: np.ndarray | None = None) -> Tensor:
        """Per-segment, per-column max.

        The backward pass routes each output gradient cell to the first
        input row attaining the maximum (lowest row index on ties). Empty
        segments are an error unless a constant fill row is supplied.
        """
        seg = _check_segments(segment_of, a.values.shape[0], m)
        rows = a.values
        n, f = rows.shape
        order, counts, starts = _segment_order(seg, m)
        nonempty = counts > 0
        if fill is None and not nonempty.all():
            raise ValueError(f"segment_max: empty segment "
                             f"{int(np.argmin(nonempty))} and no fill row")

        rows_sorted = rows[order]
        ne_starts = starts[nonempty]
        out = np.empty((m, f), dtype=rows.dtype)
        if nonempty.any():
            out[nonempty] = np.maximum.reduceat(rows_sorted, ne_starts, axis=0)
        if fill is not None and not nonempty.all():
            out[~nonempty] = np.asarray(fill, dtype=np.float64)

        # first sorted position attaining the max, per segment and column;
        # a NaN max matches no row, leaving -1 (no gradient routed)
        argrow = None
        if self.needs_grad(a):
            argrow = np.full((m, f), -1, dtype=np.int64)
            if nonempty.any():
                seg_sorted = seg[order]
                hit = rows_sorted == out[seg_sorted]
                pos = np.where(hit, np.arange(n)[:, None], n)
                first = np.minimum.reduceat(pos, ne_starts, axis=0)
                argrow[nonempty] = np.where(first < n,
                                            order[np.minimum(first, n - 1)], -1)

        def back(g):
            valid = argrow >= 0
            flat = argrow[valid] * f + np.broadcast_to(np.arange(f), (m, f))[valid]
            grad = np.bincount(flat, weights=g[valid],
                               minlength=n * f).reshape(n, f)
            _accumulate(a, grad, owned=True)
        return self._make(out, (a,), back, "segment_max")


def _check_segments(segment_of, n: int, m: int) -> np.ndarray:
    seg = np.asarray(segment_of, dtype=np.int64)
    if seg.shape != (n,):
        raise ValueError(f"segment index shape {seg.shape}, expected ({n},)")
    if seg.size and (seg.min() < 0 or seg.max() >= m):
        raise IndexError(f"segment index out of range [0, {m})")
    return seg


def grad_check(build, inputs, rel_step: float = 1e-6) -> float:
    """Max relative error of tape gradients vs central finite differences.

    `build(tape, tensors)` must return a 1x1 tensor composed of tape ops.
    The error for each component is |g_ad - g_fd| / max(1e-8, |g_ad|+|g_fd|).
    """
    tensors = [Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
               for x in inputs]
    tape = Tape(check_finite=True)
    out = build(tape, tensors)
    tape.backward(out)
    ad_grads = [t.grad if t.grad is not None else np.zeros_like(t.values)
                for t in tensors]

    def evaluate(value_sets):
        probe = [Tensor(v) for v in value_sets]
        return float(build(Tape(check_finite=True), probe).values[0, 0])

    base = [t.values for t in tensors]
    worst = 0.0
    for i in range(len(tensors)):
        flat = base[i].ravel()
        for j in range(flat.size):
            h = rel_step * max(1.0, abs(flat[j]))
            plus = [v.copy() for v in base]
            minus = [v.copy() for v in base]
            plus[i].ravel()[j] += h
            minus[i].ravel()[j] -= h
            g_fd = (evaluate(plus) - evaluate(minus)) / (2.0 * h)
            g_ad = ad_grads[i].ravel()[j]
            err = abs(g_ad - g_fd) / max(1e-8, abs(g_ad) + abs(g_fd))
            worst = max(worst, err)
    return worst
