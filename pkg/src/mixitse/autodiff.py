"""Small reverse-mode differentiation engine over float64 numpy arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients.  ``backward`` walks
the graph in reverse topological order, so each node's closure runs exactly
once after all of its consumers have contributed.

Complex quantities are carried as :class:`Complex` pairs of real tensors.
"""
from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidInputError

_ids = itertools.count()


class ShapeError(InvalidInputError):
    """Operand shapes do not conform for an operation."""


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """A node in the computation graph (``DiffValue``)."""

    __slots__ = ("data", "grad", "parents", "backward_fn", "node_id", "op")

    def __init__(self, data, parents: Sequence["Tensor"] = (), backward_fn=None, op: str = "leaf"):
        self.data = _as_array(data)
        self.grad = np.zeros_like(self.data)
        self.parents = tuple(parents)
        self.backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = backward_fn
        self.node_id = next(_ids)
        self.op = op

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
        return float(self.data.item())

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    def backward(self) -> None:
        backward(self)

    # operator sugar
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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p: float):
        return pow(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast(a.data, b.data, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast(a.data, b.data, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor(a.data - b.data, (a, b), bw, "sub")


def neg(a) -> Tensor:
    a = tensor(a)
    return Tensor(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast(a.data, b.data, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _check_broadcast(a.data, b.data, "div")
    out = a.data / b.data

    def bw(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return Tensor(out, (a, b), bw, "div")


def pow(a, p: float) -> Tensor:
    """``a ** p`` for a constant real exponent (base must be >= 0 unless p is integral)."""
    a = tensor(a)
    p = float(p)
    out = a.data**p

    def bw(g):
        if p == 0.0:
            return (np.zeros_like(a.data),)
        return (g * p * a.data ** (p - 1.0),)

    return Tensor(out, (a,), bw, f"pow{p:g}")


def exp(a) -> Tensor:
    a = tensor(a)
    out = np.exp(a.data)
    return Tensor(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = tensor(a)
    return Tensor(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a) -> Tensor:
    a = tensor(a)
    out = np.sqrt(a.data)
    return Tensor(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def sigmoid(a) -> Tensor:
    a = tensor(a)
    out = _sigmoid(a.data)
    return Tensor(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(a) -> Tensor:
    a = tensor(a)
    out = np.tanh(a.data)
    return Tensor(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Tensor:
    a = tensor(a)
    mask = a.data > 0
    return Tensor(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = tensor(a)
    scale = np.where(a.data > 0, 1.0, slope)
    return Tensor(a.data * scale, (a,), lambda g: (g * scale,), "leaky_relu")


def minimum(a, b) -> Tensor:
    """Element-wise hard minimum; gradient flows only to the selected operand (ties go to ``a``)."""
    a, b = tensor(a), tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"minimum: shapes {a.shape} and {b.shape} differ")
    pick_a = a.data <= b.data

    def bw(g):
        return g * pick_a, g * ~pick_a

    return Tensor(np.where(pick_a, a.data, b.data), (a, b), bw, "minimum")


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor(out, (a,), bw, "sum")


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return div(sum_(a, axis, keepdims), float(count))


def reshape(a, shape) -> Tensor:
    a = tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    return Tensor(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None) -> Tensor:
    a = tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return Tensor(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def slice_(a, index) -> Tensor:
    a = tensor(a)
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        if _is_fancy(index):
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return Tensor(np.array(out, copy=True), (a,), bw, "slice")


def _is_fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [tensor(p) for p in parts]
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from exc
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def bw(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return Tensor(out, parts, bw, "concat")


def pad(a, widths) -> Tensor:
    """Zero padding; ``widths`` follows :func:`numpy.pad`."""
    a = tensor(a)
    widths = [tuple(w) for w in widths]
    out = np.pad(a.data, widths)
    index = tuple(slice(lo, out.shape[i] - hi) for i, (lo, hi) in enumerate(widths))
    return Tensor(out, (a,), lambda g: (g[index],), "pad")


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.ndim < 1 or b.ndim < 1 or a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul expects operands with at least 2 dimensions")
    out = a.data @ b.data

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor(out, (a, b), bw, "matmul")


def dot(a, b) -> Tensor:
    """Full contraction ``sum(a * b)`` of two equally shaped tensors."""
    a, b = tensor(a), tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"dot: shapes {a.shape} and {b.shape} differ")
    out = np.vdot(a.data.ravel(), b.data.ravel())
    return Tensor(out, (a, b), lambda g: (g * b.data, g * a.data), "dot")


# ---------------------------------------------------------------------------
# convolutions, NCHW layout


def _tap(stride: int, count: int, offset: int) -> slice:
    return slice(offset, offset + stride * (count - 1) + 1, stride)


def conv2d(x, w, b=None, stride=(1, 1), padding=((0, 0), (0, 0))) -> Tensor:
    """Strided 2-D cross-correlation.

    ``x`` is (B, Cin, H, W), ``w`` is (Cout, Cin, kh, kw), ``padding`` gives
    (before, after) zero padding for H and W.
    """
    x, w = tensor(x), tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    sh, sw = stride
    (ph0, ph1), (pw0, pw1) = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph0, ph1), (pw0, pw1)))
    bsz, ci = x.shape[:2]
    co, _, kh, kw = w.shape
    ho = (xp.shape[2] - kh) // sh + 1
    wo = (xp.shape[3] - kw) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeError("conv2d: kernel larger than padded input")
    taps = [(i, j) for i in range(kh) for j in range(kw)]
    # columns ordered (ci, tap) to match w.reshape(co, ci*kh*kw)
    cols = np.stack([xp[:, :, _tap(sh, ho, i), _tap(sw, wo, j)] for i, j in taps], axis=2)
    cols = cols.transpose(0, 3, 4, 1, 2).reshape(bsz * ho * wo, ci * kh * kw)
    wmat = w.data.reshape(co, -1)
    out = (cols @ wmat.T).reshape(bsz, ho, wo, co).transpose(0, 3, 1, 2)
    parents = [x, w]
    if b is not None:
        b = tensor(b)
        if b.shape != (co,):
            raise ShapeError(f"conv2d: bias shape {b.shape} != ({co},)")
        out = out + b.data[None, :, None, None]
        parents.append(b)

    def bw(g):
        gflat = g.transpose(0, 2, 3, 1).reshape(-1, co)
        gw = (gflat.T @ cols).reshape(w.shape)
        gcols = (gflat @ wmat).reshape(bsz, ho, wo, ci, kh * kw).transpose(0, 3, 4, 1, 2)
        gxp = np.zeros_like(xp)
        for t, (i, j) in enumerate(taps):
            gxp[:, :, _tap(sh, ho, i), _tap(sw, wo, j)] += gcols[:, :, t]
        gx = gxp[:, :, ph0 : gxp.shape[2] - ph1, pw0 : gxp.shape[3] - pw1]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return Tensor(np.ascontiguousarray(out), parents, bw, "conv2d")


def conv_transpose2d(x, w, b=None, stride=(1, 1), crop=((0, 0), (0, 0))) -> Tensor:
    """Strided 2-D transposed convolution (adjoint of :func:`conv2d`).

    ``x`` is (B, Cin, H, W), ``w`` is (Cin, Cout, kh, kw).  The full output of
    size ((H-1)*sh + kh, (W-1)*sw + kw) is cropped by (before, after) per axis.
    """
    x, w = tensor(x), tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"conv_transpose2d: input {x.shape} incompatible with kernel {w.shape}")
    sh, sw = stride
    (ch0, ch1), (cw0, cw1) = crop
    bsz, ci, h, wd = x.shape
    _, co, kh, kw = w.shape
    taps = [(i, j) for i in range(kh) for j in range(kw)]
    xflat = x.data.transpose(0, 2, 3, 1).reshape(-1, ci)
    wmat = w.data.reshape(ci, co * kh * kw)
    contrib = (xflat @ wmat).reshape(bsz, h, wd, co, kh * kw).transpose(0, 3, 4, 1, 2)
    full = np.zeros((bsz, co, (h - 1) * sh + kh, (wd - 1) * sw + kw))
    for t, (i, j) in enumerate(taps):
        full[:, :, _tap(sh, h, i), _tap(sw, wd, j)] += contrib[:, :, t]
    region = (slice(None), slice(None), slice(ch0, full.shape[2] - ch1), slice(cw0, full.shape[3] - cw1))
    out = full[region].copy()
    parents = [x, w]
    if b is not None:
        b = tensor(b)
        if b.shape != (co,):
            raise ShapeError(f"conv_transpose2d: bias shape {b.shape} != ({co},)")
        out += b.data[None, :, None, None]
        parents.append(b)

    def bw(g):
        gfull = np.zeros_like(full)
        gfull[region] = g
        gcols = np.stack([gfull[:, :, _tap(sh, h, i), _tap(sw, wd, j)] for i, j in taps], axis=2)
        gcols = gcols.transpose(0, 3, 4, 1, 2).reshape(-1, co * kh * kw)
        gx = (gcols @ wmat.T).reshape(bsz, h, wd, ci).transpose(0, 3, 1, 2)
        gw = (xflat.T @ gcols).reshape(w.shape)
        grads = [np.ascontiguousarray(gx), gw]
        if b is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return Tensor(out, parents, bw, "conv_transpose2d")


# ---------------------------------------------------------------------------
# recurrent layer


def gru(x, w_x, w_h, b_x, b_h) -> Tensor:
    """Single-layer GRU over time with zero initial state.

    ``x`` is (B, T, D); ``w_x`` (D, 3H) and ``w_h`` (H, 3H) hold the reset,
    update and candidate gates in that order.  Returns all hidden states,
    shape (B, T, H).  The backward pass is hand-written BPTT.
    """
    x, w_x, w_h, b_x, b_h = (tensor(t) for t in (x, w_x, w_h, b_x, b_h))
    if x.ndim != 3 or w_x.ndim != 2 or w_x.shape[0] != x.shape[2]:
        raise ShapeError(f"gru: input {x.shape} incompatible with w_x {w_x.shape}")
    hid = w_h.shape[0]
    if w_x.shape[1] != 3 * hid or w_h.shape != (hid, 3 * hid) or b_x.shape != (3 * hid,) or b_h.shape != (3 * hid,):
        raise ShapeError("gru: inconsistent gate parameter shapes")
    bsz, steps, _ = x.shape
    gx = x.data @ w_x.data + b_x.data  # (B, T, 3H)
    hs = np.zeros((bsz, steps + 1, hid))
    rs = np.empty((bsz, steps, hid))
    zs = np.empty_like(rs)
    ns = np.empty_like(rs)
    hn = np.empty_like(rs)  # h_prev @ W_hn + b_hn
    for t in range(steps):
        h_prev = hs[:, t]
        gh = h_prev @ w_h.data + b_h.data
        r = _sigmoid(gx[:, t, :hid] + gh[:, :hid])
        z = _sigmoid(gx[:, t, hid : 2 * hid] + gh[:, hid : 2 * hid])
        n = np.tanh(gx[:, t, 2 * hid :] + r * gh[:, 2 * hid :])
        hs[:, t + 1] = (1.0 - z) * n + z * h_prev
        rs[:, t], zs[:, t], ns[:, t], hn[:, t] = r, z, n, gh[:, 2 * hid :]

    def bw(g):
        dgx = np.empty_like(gx)
        dw_h = np.zeros_like(w_h.data)
        db_h = np.zeros_like(b_h.data)
        dh_next = np.zeros((bsz, hid))
        for t in reversed(range(steps)):
            r, z, n, h_prev = rs[:, t], zs[:, t], ns[:, t], hs[:, t]
            dh = g[:, t] + dh_next
            dn = dh * (1.0 - z)
            dz = dh * (h_prev - n)
            da_n = dn * (1.0 - n * n)
            dr = da_n * hn[:, t]
            da_r = dr * r * (1.0 - r)
            da_z = dz * z * (1.0 - z)
            dgh = np.concatenate([da_r, da_z, da_n * r], axis=1)
            dgx[:, t] = np.concatenate([da_r, da_z, da_n], axis=1)
            dw_h += h_prev.T @ dgh
            db_h += dgh.sum(axis=0)
            dh_next = dh * z + dgh @ w_h.data.T
        dx = dgx @ w_x.data.T
        dw_x = np.einsum("btd,btg->dg", x.data, dgx, optimize=True)
        db_x = dgx.sum(axis=(0, 1))
        return dx, dw_x, dw_h, db_x, db_h

    return Tensor(hs[:, 1:].copy(), (x, w_x, w_h, b_x, b_h), bw, "gru")


# ---------------------------------------------------------------------------
# backward pass


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack.append((node, True))
        for parent in reversed(node.parents):
            if parent.node_id not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> list[Tensor]:
    """Populate ``.grad`` of every ancestor of the scalar ``loss``.

    Gradients are recomputed from zero on each call, so repeating a backward
    pass over the same graph gives identical results.  Returns the nodes in
    topological order.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topological_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
        if node.backward_fn is None:
            continue
        for parent, g in zip(node.parents, node.backward_fn(node.grad)):
            if g is None:
                continue
            parent.grad = g.copy() if parent.grad is None else parent.grad + g
    return order


def grad(loss: Tensor, wrt: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of ``loss`` w.r.t. ``wrt``; zero for tensors the loss does not depend on."""
    reached = {node.node_id for node in backward(loss)}
    return [t.grad.copy() if t.node_id in reached else np.zeros_like(t.data) for t in wrt]


# ---------------------------------------------------------------------------
# complex values as real pairs


class Complex:
    """Complex tensor stored as separate real and imaginary :class:`Tensor` s."""

    __slots__ = ("re", "im")

    def __init__(self, re, im):
        self.re = tensor(re)
        self.im = tensor(im)
        if self.re.shape != self.im.shape:
            raise ShapeError(f"real part {self.re.shape} and imaginary part {self.im.shape} differ")

    @classmethod
    def constant(cls, z) -> "Complex":
        z = np.asarray(z)
        return cls(Tensor(z.real), Tensor(z.imag))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.re.shape

    def numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data

    def __add__(self, other: "Complex") -> "Complex":
        other = as_complex(other)
        return Complex(add(self.re, other.re), add(self.im, other.im))

    def __sub__(self, other: "Complex") -> "Complex":
        other = as_complex(other)
        return Complex(sub(self.re, other.re), sub(self.im, other.im))

    def __mul__(self, other: "Complex") -> "Complex":
        other = as_complex(other)
        re = sub(mul(self.re, other.re), mul(self.im, other.im))
        im = add(mul(self.re, other.im), mul(self.im, other.re))
        return Complex(re, im)

    def scale(self, s) -> "Complex":
        return Complex(mul(self.re, s), mul(self.im, s))

    def abs2(self) -> Tensor:
        return add(mul(self.re, self.re), mul(self.im, self.im))


def as_complex(z) -> Complex:
    return z if isinstance(z, Complex) else Complex.constant(z)
