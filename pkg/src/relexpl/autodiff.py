"""Minimal reverse-mode tensor engine.

Every operation records its inputs and a VJP rule; the VJP rules are built
out of the same operations, so gradients are themselves differentiable
graphs. That property is load-bearing: the distractor training loss
backpropagates through gradient-x-input values, which requires
second-order derivatives.

Design notes:
  * float64 everywhere; gradient checking demands the precision.
  * Max-style ops (rows_max, vec_max) break ties toward the lowest index
    and treat the winner selection as constant during differentiation.
  * A graph is "consumed" by backward(); call it twice on the same root
    and you get a GraphError. The functional grad() helper does not
    consume anything and may be called repeatedly.
"""

from __future__ import annotations

import numpy as np

from . import kernels


class ShapeMismatchError(ValueError):
    """Raised when an operation's input shapes do not conform."""

    def __init__(self, kernel: str, shape_a, shape_b):
        self.kernel = kernel
        self.shape_a = tuple(shape_a)
        self.shape_b = tuple(shape_b)
        super().__init__(f"{kernel}: incompatible shapes {self.shape_a} and {self.shape_b}")


class GraphError(RuntimeError):
    """Raised for invalid graph use (non-scalar root, reused graph)."""


class Tensor:
    """Dense float64 array participating in a differentiable graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op", "_backward_used")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None
        self._op = "leaf"
        self._backward_used = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self):
        backward(self)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Tensor(op={self._op}, shape={self.shape})"


def _node(data, parents, vjp, op: str) -> Tensor:
    out = Tensor(data)
    out._parents = tuple(parents)
    out._vjp = vjp
    out._op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_shape(op: str, a: Tensor, b: Tensor):
    if a.shape != b.shape:
        raise ShapeMismatchError(op, a.shape, b.shape)


# ---------------------------------------------------------------------------
# elementwise ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape("add", a, b)
    return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape("sub", a, b)
    return _node(a.data - b.data, (a, b), lambda g: (g, neg(g)), "sub")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape("mul", a, b)
    return _node(a.data * b.data, (a, b), lambda g: (mul(g, b), mul(g, a)), "mul")


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    c = float(c)
    return _node(a.data * c, (a,), lambda g: (scale(g, c),), "scale")


def neg(a) -> Tensor:
    return scale(a, -1.0)


def cadd(a, c: float) -> Tensor:
    """Add a python-float constant elementwise."""
    a = _as_tensor(a)
    return _node(a.data + float(c), (a,), lambda g: (g,), "cadd")


def cmul(a, const: np.ndarray) -> Tensor:
    """Multiply by a constant array (same shape); the constant is not differentiated."""
    a = _as_tensor(a)
    const = np.asarray(const, dtype=np.float64)
    if const.shape != a.shape:
        raise ShapeMismatchError("cmul", a.shape, const.shape)
    return _node(a.data * const, (a,), lambda g: (cmul(g, const),), "cmul")


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = (a.data > 0.0).astype(np.float64)
    return _node(a.data * mask, (a,), lambda g: (cmul(g, mask),), "relu")


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    sign = np.sign(a.data)
    return _node(np.abs(a.data), (a,), lambda g: (cmul(g, sign),), "absolute")


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip into [lo, hi]; gradient passes only where lo <= x <= hi."""
    a = _as_tensor(a)
    mask = ((a.data >= lo) & (a.data <= hi)).astype(np.float64)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: (cmul(g, mask),), "clamp")


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    node = _node(out, (a,), None, "sigmoid")

    def vjp(g):
        d = mul(node, cadd(neg(node), 1.0))  # y * (1 - y), kept in-graph
        return (mul(g, d),)

    node._vjp = vjp
    return node


def log(a) -> Tensor:
    a = _as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (mul(g, reciprocal(a)),), "log")


def reciprocal(a) -> Tensor:
    a = _as_tensor(a)
    node = _node(1.0 / a.data, (a,), None, "reciprocal")
    node._vjp = lambda g: (neg(mul(g, mul(node, node))),)
    return node


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def transpose(a) -> Tensor:
    a = _as_tensor(a)
    if a.ndim != 2:
        raise ShapeMismatchError("transpose", a.shape, ("m", "n"))
    return _node(np.ascontiguousarray(a.data.T), (a,), lambda g: (transpose(g),), "transpose")


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    return _node(
        a.data @ b.data,
        (a, b),
        lambda g: (matmul(g, transpose(b)), matmul(transpose(a), g)),
        "matmul",
    )


def matvec(m, v) -> Tensor:
    m, v = _as_tensor(m), _as_tensor(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeMismatchError("matvec", m.shape, v.shape)
    return _node(
        m.data @ v.data,
        (m, v),
        lambda g: (outer(g, v), matvec(transpose(m), g)),
        "matvec",
    )


def outer(u, v) -> Tensor:
    u, v = _as_tensor(u), _as_tensor(v)
    if u.ndim != 1 or v.ndim != 1:
        raise ShapeMismatchError("outer", u.shape, v.shape)
    return _node(
        np.outer(u.data, v.data),
        (u, v),
        lambda g: (matvec(g, v), matvec(transpose(g), u)),
        "outer",
    )


def dot(u, v) -> Tensor:
    return sum_all(mul(u, v))


# ---------------------------------------------------------------------------
# broadcast helpers (explicit, no general broadcasting)
# ---------------------------------------------------------------------------

def add_rowvec(m, v) -> Tensor:
    """(r, c) + (c,) broadcast over rows."""
    m, v = _as_tensor(m), _as_tensor(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeMismatchError("add_rowvec", m.shape, v.shape)
    return _node(m.data + v.data, (m, v), lambda g: (g, sum_axis(g, 0)), "add_rowvec")


def sub_rowvec(m, v) -> Tensor:
    m, v = _as_tensor(m), _as_tensor(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeMismatchError("sub_rowvec", m.shape, v.shape)
    return _node(m.data - v.data, (m, v), lambda g: (g, neg(sum_axis(g, 0))), "sub_rowvec")


def mul_rowvec(m, v) -> Tensor:
    m, v = _as_tensor(m), _as_tensor(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeMismatchError("mul_rowvec", m.shape, v.shape)
    return _node(
        m.data * v.data,
        (m, v),
        lambda g: (mul_rowvec(g, v), sum_axis(mul(g, m), 0)),
        "mul_rowvec",
    )


def mul_colvec(m, v) -> Tensor:
    """Scale row i of (r, c) by v[i]."""
    m, v = _as_tensor(m), _as_tensor(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[0] != v.shape[0]:
        raise ShapeMismatchError("mul_colvec", m.shape, v.shape)
    return _node(
        m.data * v.data[:, None],
        (m, v),
        lambda g: (mul_colvec(g, v), sum_axis(mul(g, m), 1)),
        "mul_colvec",
    )


def add_bscalar(a, s) -> Tensor:
    """Add a 0-d tensor to every element."""
    a, s = _as_tensor(a), _as_tensor(s)
    if s.ndim != 0:
        raise ShapeMismatchError("add_bscalar", a.shape, s.shape)
    return _node(a.data + s.data, (a, s), lambda g: (g, sum_all(g)), "add_bscalar")


def sub_bscalar(a, s) -> Tensor:
    a, s = _as_tensor(a), _as_tensor(s)
    if s.ndim != 0:
        raise ShapeMismatchError("sub_bscalar", a.shape, s.shape)
    return _node(a.data - s.data, (a, s), lambda g: (g, neg(sum_all(g))), "sub_bscalar")


def bfill(s, shape) -> Tensor:
    """Broadcast a 0-d tensor to an arbitrary shape."""
    s = _as_tensor(s)
    if s.ndim != 0:
        raise ShapeMismatchError("bfill", s.shape, tuple(shape))
    shape = tuple(shape)
    return _node(np.full(shape, float(s.data)), (s,), lambda g: (sum_all(g),), "bfill")


def repeat_row(v, n_rows: int) -> Tensor:
    """Tile a (c,) vector into (n_rows, c)."""
    v = _as_tensor(v)
    if v.ndim != 1:
        raise ShapeMismatchError("repeat_row", v.shape, (n_rows,))
    return _node(
        np.broadcast_to(v.data, (n_rows, v.shape[0])).copy(),
        (v,),
        lambda g: (sum_axis(g, 0),),
        "repeat_row",
    )


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_all(a) -> Tensor:
    a = _as_tensor(a)
    shape = a.shape
    return _node(np.sum(a.data), (a,), lambda g: (bfill(g, shape),), "sum_all")


def sum_axis(m, axis: int) -> Tensor:
    m = _as_tensor(m)
    if m.ndim != 2 or axis not in (0, 1):
        raise ShapeMismatchError("sum_axis", m.shape, (axis,))
    n_rows, n_cols = m.shape
    if axis == 0:
        return _node(m.data.sum(axis=0), (m,), lambda g: (repeat_row(g, n_rows),), "sum_axis0")

    def vjp(g):
        # tile g (r,) into columns: outer(g, ones)
        return (outer(g, Tensor(np.ones(n_cols))),)

    return _node(m.data.sum(axis=1), (m,), vjp, "sum_axis1")


def l1norm(a) -> Tensor:
    return sum_all(absolute(a))


def vec_max(v) -> Tensor:
    """Max of a nonempty 1-d vector; tie -> lowest index, index constant under grad."""
    v = _as_tensor(v)
    if v.ndim != 1 or v.shape[0] == 0:
        raise ShapeMismatchError("vec_max", v.shape, ("n>=1",))
    idx = int(np.argmax(v.data))
    n = v.shape[0]
    return _node(v.data[idx], (v,), lambda g: (onehot(g, idx, n),), "vec_max")


def rows_max(m) -> Tensor:
    """Columnwise max over rows of a nonempty (n, d): the pooling / bag-max kernel."""
    m = _as_tensor(m)
    if m.ndim != 2 or m.shape[0] == 0:
        raise ShapeMismatchError("rows_max", m.shape, ("n>=1", "d"))
    vals, idx = kernels.rows_max(np.ascontiguousarray(m.data))
    n = m.shape[0]
    return _node(vals, (m,), lambda g: (colwise_scatter(g, idx, n),), "rows_max")


def colwise_scatter(v, idx: np.ndarray, n_rows: int) -> Tensor:
    v = _as_tensor(v)
    if v.ndim != 1 or v.shape[0] != idx.shape[0]:
        raise ShapeMismatchError("colwise_scatter", v.shape, idx.shape)
    out = np.zeros((n_rows, v.shape[0]))
    out[idx, np.arange(v.shape[0])] = v.data
    return _node(out, (v,), lambda g: (colwise_gather(g, idx),), "colwise_scatter")


def colwise_gather(m, idx: np.ndarray) -> Tensor:
    m = _as_tensor(m)
    if m.ndim != 2 or m.shape[1] != idx.shape[0]:
        raise ShapeMismatchError("colwise_gather", m.shape, idx.shape)
    n_rows = m.shape[0]
    vals = m.data[idx, np.arange(m.shape[1])]
    return _node(vals, (m,), lambda g: (colwise_scatter(g, idx, n_rows),), "colwise_gather")


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------

def softmax(a, axis: int = 0) -> Tensor:
    """Softmax along the sentence axis: 1-d vectors, or axis 0 of a 2-d matrix."""
    a = _as_tensor(a)
    if a.size == 0:
        raise ShapeMismatchError("softmax", a.shape, ("n>=1",))
    if a.ndim == 1:
        z = a.data - a.data.max()
        e = np.exp(z)
        node = _node(e / e.sum(), (a,), None, "softmax")

        def vjp(g):
            t = mul(g, node)
            return (mul(node, sub_bscalar(g, sum_all(t))),)

        node._vjp = vjp
        return node
    if a.ndim != 2 or axis != 0:
        raise ShapeMismatchError("softmax", a.shape, (axis,))
    z = a.data - a.data.max(axis=0, keepdims=True)
    e = np.exp(z)
    node = _node(e / e.sum(axis=0, keepdims=True), (a,), None, "softmax")

    def vjp(g):
        t = mul(g, node)
        return (mul(node, sub_rowvec(g, sum_axis(t, 0))),)

    node._vjp = vjp
    return node


# ---------------------------------------------------------------------------
# structure: slicing, stacking, concatenation, selection
# ---------------------------------------------------------------------------

def slice1d(v, start: int, stop: int) -> Tensor:
    v = _as_tensor(v)
    if v.ndim != 1 or not (0 <= start <= stop <= v.shape[0]):
        raise ShapeMismatchError("slice1d", v.shape, (start, stop))
    after = v.shape[0] - stop
    return _node(v.data[start:stop].copy(), (v,), lambda g: (pad1d(g, start, after),), "slice1d")


def pad1d(v, before: int, after: int) -> Tensor:
    v = _as_tensor(v)
    if v.ndim != 1:
        raise ShapeMismatchError("pad1d", v.shape, (before, after))
    n = v.shape[0]
    out = np.zeros(before + n + after)
    out[before:before + n] = v.data
    return _node(out, (v,), lambda g: (slice1d(g, before, before + n),), "pad1d")


def concat1d(parts) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    for p in parts:
        if p.ndim != 1:
            raise ShapeMismatchError("concat1d", p.shape, ("n",))
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def vjp(g):
        return tuple(slice1d(g, int(bounds[i]), int(bounds[i + 1])) for i in range(len(parts)))

    return _node(np.concatenate([p.data for p in parts]), parts, vjp, "concat1d")


def concat_cols(parts) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    rows = parts[0].shape[0]
    for p in parts:
        if p.ndim != 2 or p.shape[0] != rows:
            raise ShapeMismatchError("concat_cols", parts[0].shape, p.shape)
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])

    def vjp(g):
        return tuple(slice_cols(g, int(bounds[i]), int(bounds[i + 1])) for i in range(len(parts)))

    return _node(np.concatenate([p.data for p in parts], axis=1), parts, vjp, "concat_cols")


def slice_cols(m, start: int, stop: int) -> Tensor:
    m = _as_tensor(m)
    if m.ndim != 2 or not (0 <= start <= stop <= m.shape[1]):
        raise ShapeMismatchError("slice_cols", m.shape, (start, stop))
    after = m.shape[1] - stop
    return _node(
        np.ascontiguousarray(m.data[:, start:stop]),
        (m,),
        lambda g: (pad_cols(g, start, after),),
        "slice_cols",
    )


def pad_cols(m, before: int, after: int) -> Tensor:
    m = _as_tensor(m)
    if m.ndim != 2:
        raise ShapeMismatchError("pad_cols", m.shape, (before, after))
    r, c = m.shape
    out = np.zeros((r, before + c + after))
    out[:, before:before + c] = m.data
    return _node(out, (m,), lambda g: (slice_cols(g, before, before + c),), "pad_cols")


def stack_rows(rows) -> Tensor:
    rows = [_as_tensor(r) for r in rows]
    width = rows[0].shape[0]
    for r in rows:
        if r.ndim != 1 or r.shape[0] != width:
            raise ShapeMismatchError("stack_rows", rows[0].shape, r.shape)

    def vjp(g):
        return tuple(row(g, i) for i in range(len(rows)))

    return _node(np.stack([r.data for r in rows]), rows, vjp, "stack_rows")


def row(m, i: int) -> Tensor:
    m = _as_tensor(m)
    if m.ndim != 2 or not (0 <= i < m.shape[0]):
        raise ShapeMismatchError("row", m.shape, (i,))
    n_rows = m.shape[0]
    return _node(m.data[i].copy(), (m,), lambda g: (row_scatter(g, i, n_rows),), "row")


def row_scatter(v, i: int, n_rows: int) -> Tensor:
    v = _as_tensor(v)
    if v.ndim != 1:
        raise ShapeMismatchError("row_scatter", v.shape, (i, n_rows))
    out = np.zeros((n_rows, v.shape[0]))
    out[i] = v.data
    return _node(out, (v,), lambda g: (row(g, i),), "row_scatter")


def pick(v, i: int) -> Tensor:
    """Select element i of a 1-d vector as a 0-d tensor."""
    v = _as_tensor(v)
    if v.ndim != 1 or not (0 <= i < v.shape[0]):
        raise ShapeMismatchError("pick", v.shape, (i,))
    n = v.shape[0]
    return _node(v.data[i], (v,), lambda g: (onehot(g, i, n),), "pick")


def onehot(s, i: int, n: int) -> Tensor:
    s = _as_tensor(s)
    if s.ndim != 0:
        raise ShapeMismatchError("onehot", s.shape, (i, n))
    out = np.zeros(n)
    out[i] = float(s.data)
    return _node(out, (s,), lambda g: (pick(g, i),), "onehot")


# ---------------------------------------------------------------------------
# embedding lookup and row padding / convolution support
# ---------------------------------------------------------------------------

def gather_rows(table, ids: np.ndarray) -> Tensor:
    """Embedding lookup: rows ids of (R, d). Backward accumulates into those rows only."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2 or ids.ndim != 1:
        raise ShapeMismatchError("gather_rows", table.shape, ids.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"gather_rows: id out of range for table with {table.shape[0]} rows")
    n_rows = table.shape[0]
    return _node(table.data[ids], (table,), lambda g: (scatter_rows(g, ids, n_rows),), "gather_rows")


def scatter_rows(m, ids: np.ndarray, n_rows: int) -> Tensor:
    m = _as_tensor(m)
    ids = np.asarray(ids, dtype=np.int64)
    if m.ndim != 2 or ids.shape[0] != m.shape[0]:
        raise ShapeMismatchError("scatter_rows", m.shape, ids.shape)
    out = kernels.scatter_add_rows(n_rows, ids, np.ascontiguousarray(m.data))
    return _node(out, (m,), lambda g: (gather_rows(g, ids),), "scatter_rows")


def pad_rows(m, before: int, after: int) -> Tensor:
    m = _as_tensor(m)
    if m.ndim != 2:
        raise ShapeMismatchError("pad_rows", m.shape, (before, after))
    r, c = m.shape
    out = np.zeros((before + r + after, c))
    out[before:before + r] = m.data
    return _node(out, (m,), lambda g: (slice_rows(g, before, before + r),), "pad_rows")


def slice_rows(m, start: int, stop: int) -> Tensor:
    m = _as_tensor(m)
    if m.ndim != 2 or not (0 <= start <= stop <= m.shape[0]):
        raise ShapeMismatchError("slice_rows", m.shape, (start, stop))
    after = m.shape[0] - stop
    return _node(
        m.data[start:stop].copy(),
        (m,),
        lambda g: (pad_rows(g, start, after),),
        "slice_rows",
    )


def im2col(m, width: int) -> Tensor:
    """Unfold (Lp, c) into (Lp-width+1, width*c) convolution rows."""
    m = _as_tensor(m)
    if m.ndim != 2 or width < 1 or m.shape[0] < width:
        raise ShapeMismatchError("im2col", m.shape, (width,))
    out = kernels.im2col(np.ascontiguousarray(m.data), width)
    return _node(out, (m,), lambda g: (col2im(g, width),), "im2col")


def col2im(m, width: int) -> Tensor:
    m = _as_tensor(m)
    if m.ndim != 2 or m.shape[1] % width != 0:
        raise ShapeMismatchError("col2im", m.shape, (width,))
    out = kernels.col2im(np.ascontiguousarray(m.data), width)
    return _node(out, (m,), lambda g: (im2col(g, width),), "col2im")


def conv1d(x, filters, bias=None) -> Tensor:
    """Same-length 1-d convolution over the token axis.

    x: (L, c_in); filters: (width*c_in, c_out); zero padding keeps the
    output length at L. Returns (L, c_out).
    """
    x, filters = _as_tensor(x), _as_tensor(filters)
    if x.ndim != 2 or filters.ndim != 2 or filters.shape[0] % x.shape[1] != 0:
        raise ShapeMismatchError("conv1d", x.shape, filters.shape)
    width = filters.shape[0] // x.shape[1]
    before = (width - 1) // 2
    after = width - 1 - before
    out = matmul(im2col(pad_rows(x, before, after), width), filters)
    if bias is not None:
        out = add_rowvec(out, bias)
    return out


# ---------------------------------------------------------------------------
# backward machinery
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    """Parents-before-children ordering of the graph reachable from root."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def grad(root: Tensor, wrt, allow_unused: bool = True) -> list[Tensor]:
    """Gradients of a scalar root w.r.t. each tensor in wrt, as graph tensors.

    The returned tensors are differentiable, so expressions built from them
    (gradient-x-input, saliency-style penalties) can be backpropagated in
    turn. Tensors that do not participate in the graph get zeros.
    """
    if root.size != 1:
        raise GraphError(f"grad root must be scalar, got shape {root.shape}")
    wrt = list(wrt)
    order = _topo_order(root)
    in_graph = {id(n) for n in order}
    target_ids = {id(t) for t in wrt}

    needed: dict[int, bool] = {}
    for node in order:
        needed[id(node)] = id(node) in target_ids or any(needed[id(p)] for p in node._parents)

    grads: dict[int, Tensor] = {id(root): Tensor(np.ones_like(root.data))}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._vjp is None:
            continue
        if not any(needed[id(p)] for p in node._parents):
            continue
        contribs = node._vjp(g)
        for p, c in zip(node._parents, contribs):
            if c is None or not needed[id(p)]:
                continue
            prev = grads.get(id(p))
            grads[id(p)] = c if prev is None else add(prev, c)

    out = []
    for t in wrt:
        g = grads.get(id(t))
        if g is None:
            if id(t) not in in_graph and not allow_unused:
                raise GraphError("grad target does not participate in the graph")
            g = Tensor(np.zeros_like(t.data))
        out.append(g)
    return out


def backward(root: Tensor):
    """Accumulate d(root)/d(leaf) into .grad for every requires_grad leaf.

    root must be scalar; a graph can be consumed only once.
    """
    if root.size != 1:
        raise GraphError(f"backward root must be scalar, got shape {root.shape}")
    if root._backward_used:
        raise GraphError("backward already called on this graph; rebuild the forward pass first")
    root._backward_used = True
    order = _topo_order(root)
    leaves = [n for n in order if not n._parents and n.requires_grad]
    for leaf, g in zip(leaves, grad(root, leaves)):
        if leaf.grad is None:
            leaf.grad = np.zeros_like(leaf.data)
        leaf.grad += g.data
