"""Dense tensors with reverse-mode automatic differentiation on top of numpy.

The graph is built eagerly: every differentiable operation returns a new
Tensor holding a closure that routes the output gradient to its parents.
Calling backward() on a scalar loss topologically sorts the graph and
populates .grad on every reachable tensor that requires gradients.
Gradients accumulate across backward calls until explicitly zeroed, which
is what alternating discriminator/main optimization steps rely on.

Only float32 and float64 are supported; mixing the two in one operation is
an error. All randomness flows through numpy Generators derived from
SeedSequence, so identical seeds give bit-identical results.
"""

from __future__ import annotations

import contextlib
import hashlib

import numpy as np

from .errors import ContractError, ShapeError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (evaluation fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def make_rng(*keys) -> np.random.Generator:
    """Deterministic Generator from a mixed tuple of ints and strings.

    String keys are hashed with sha256 so the stream is stable across
    platforms and Python hash randomization.
    """
    words: list[int] = []
    for k in keys:
        if isinstance(k, (int, np.integer)):
            words.append(int(k) & 0xFFFFFFFF)
            words.append((int(k) >> 32) & 0xFFFFFFFF)
        else:
            digest = hashlib.sha256(str(k).encode("utf-8")).digest()
            words.extend(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


class Tensor:
    """N-dimensional float array, optionally tracked by the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        """Same values, cut loose from the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            raise ContractError("tensor/tensor division is not supported; divide by a python scalar")
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def flatten_batch(self):
        """Collapse all non-batch axes: (N, ...) -> (N, prod(...))."""
        return reshape(self, (self.shape[0], -1))

    def transpose(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """Trainable leaf tensor; its dotted name is assigned at module registration."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name


def _from_op(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward_fn = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward_fn = None
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same_dtype(a: Tensor, b: Tensor, op: str):
    if a.data.dtype != b.data.dtype:
        raise ShapeError(f"{op}: mixed dtypes {a.data.dtype} and {b.data.dtype}")


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def backward(loss: Tensor):
    """Populate .grad on every requires_grad ancestor of a scalar loss.

    Repeated calls without zeroing accumulate into existing .grad buffers.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any tensor that requires gradients")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    flowing: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._backward_fn is None:
            continue
        parent_grads = node._backward_fn(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            if id(p) in flowing:
                flowing[id(p)] = flowing[id(p)] + pg
            else:
                flowing[id(p)] = pg


# -- elementwise and structural ops -------------------------------------


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor) and not isinstance(a, Tensor):
        raise ContractError("add requires at least one Tensor operand")
    if not isinstance(b, Tensor):
        a = _as_tensor(a)
        out = a.data + a.data.dtype.type(b)
        return _from_op(out, (a,), lambda g: (g,))
    if not isinstance(a, Tensor):
        return add(b, a)
    _check_same_dtype(a, b, "add")
    _check_same_shape(a, b, "add")
    return _from_op(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return add(a, -float(b))
    if not isinstance(a, Tensor):
        return add(mul(b, -1.0), float(a))
    _check_same_dtype(a, b, "sub")
    _check_same_shape(a, b, "sub")
    return _from_op(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and not isinstance(a, Tensor):
        raise ContractError("mul requires at least one Tensor operand")
    if not isinstance(b, Tensor):
        a = _as_tensor(a)
        s = a.data.dtype.type(b)
        return _from_op(a.data * s, (a,), lambda g: (g * s,))
    if not isinstance(a, Tensor):
        return mul(b, a)
    _check_same_dtype(a, b, "mul")
    _check_same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _from_op(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def square(x: Tensor) -> Tensor:
    xd = x.data
    return _from_op(xd * xd, (x,), lambda g: (g * (2.0 * xd),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_dtype(a, b, "matmul")
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data
    return _from_op(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: expected a 2-d tensor, got shape {x.shape}")
    return _from_op(np.ascontiguousarray(x.data.T), (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    old_shape = x.shape
    out = np.reshape(x.data, shape)
    return _from_op(out, (x,), lambda g: (g.reshape(old_shape),))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat of an empty sequence")
    for t in tensors[1:]:
        _check_same_dtype(tensors[0], t, "concat")
        lead = tensors[0].shape[:axis] + tensors[0].shape[axis + 1 :]
        other = t.shape[:axis] + t.shape[axis + 1 :]
        if lead != other:
            raise ShapeError(f"concat axis {axis}: incompatible shapes {tensors[0].shape} and {t.shape}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    # split points for routing the gradient back
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def _bw(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _from_op(out, tuple(tensors), _bw)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _from_op(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, negative_slope: float = 0.1) -> Tensor:
    s = x.data.dtype.type(negative_slope)
    # One where() pass shared by forward and backward; multiplying by the
    # cached slope array is far cheaper than re-deriving the mask.
    mult = np.where(x.data > 0, x.data.dtype.type(1), s)
    return _from_op(x.data * mult, (x,), lambda g: (g * mult,))


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid_np(x.data)
    return _from_op(out, (x,), lambda g: (g * out * (1.0 - out),))


def softplus(x: Tensor) -> Tensor:
    """log(1 + exp(x)), computed without overflow."""
    xd = x.data
    out = np.maximum(xd, 0) + np.log1p(np.exp(-np.abs(xd)))
    return _from_op(out, (x,), lambda g: (g * _sigmoid_np(xd),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def _bw(g):
        soft = np.exp(out)
        return (g - soft * g.sum(axis=axis, keepdims=True),)

    return _from_op(out, (x,), _bw)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)
    in_shape = x.shape

    def _bw(g):
        if axis is None:
            return (np.broadcast_to(g, in_shape).astype(x.data.dtype, copy=True),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, in_shape).astype(x.data.dtype, copy=True),)

    return _from_op(np.asarray(out), (x,), _bw)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        denom = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        denom = 1
        for ax in axes:
            denom *= x.shape[ax]
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / denom)


# -- convolution family --------------------------------------------------


def _conv_out_size(size: int, k: int, stride: int, dilation: int, padding: int) -> int:
    return (size + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, dilation: int) -> tuple[np.ndarray, int, int]:
    """(B, C, H, W) -> (B, C*kh*kw, Ho*Wo); the input must already be padded."""
    B, C, H, W = x.shape
    ho = _conv_out_size(H, kh, stride, dilation, 0)
    wo = _conv_out_size(W, kw, stride, dilation, 0)
    sB, sC, sH, sW = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(B, C, kh, kw, ho, wo),
        strides=(sB, sC, dilation * sH, dilation * sW, stride * sH, stride * sW),
        writeable=False,
    )
    return view.reshape(B, C * kh * kw, ho * wo), ho, wo


def _col2im(cols: np.ndarray, shape, kh: int, kw: int, stride: int, dilation: int, ho: int, wo: int) -> np.ndarray:
    """Scatter-add (B, C*kh*kw, Ho*Wo) back onto a padded (B, C, H, W) image."""
    B, C, H, W = shape
    cols6 = cols.reshape(B, C, kh, kw, ho, wo)
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        hi = i * dilation
        for j in range(kw):
            wj = j * dilation
            out[:, :, hi : hi + (ho - 1) * stride + 1 : stride, wj : wj + (wo - 1) * stride + 1 : stride] += cols6[
                :, :, i, j
            ]
    return out


def _pad_hw(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _conv2d_im2col(x: Tensor, kernel: Tensor, bias, stride, dilation, padding, ho, wo) -> Tensor:
    """Materialized-column path; cheapest when C*kh*kw is small."""
    O, C, kh, kw = kernel.shape
    B = x.shape[0]
    xp = _pad_hw(x.data, padding)
    cols, _, _ = _im2col(xp, kh, kw, stride, dilation)
    w_mat = kernel.data.reshape(O, C * kh * kw)
    out = np.matmul(w_mat, cols)  # (B, O, ho*wo)
    if bias is not None:
        out += bias.data[None, :, None]
    out = out.reshape(B, O, ho, wo)
    padded_shape = xp.shape

    def _bw(g):
        g_mat = g.reshape(B, O, ho * wo)
        gx = gw = gb = None
        if x.requires_grad:
            g_cols = np.matmul(w_mat.T, g_mat)  # (B, C*kh*kw, ho*wo)
            gx_pad = _col2im(g_cols, padded_shape, kh, kw, stride, dilation, ho, wo)
            gx = gx_pad if padding == 0 else gx_pad[:, :, padding:-padding, padding:-padding]
        if kernel.requires_grad:
            gw = np.matmul(g_mat, cols.transpose(0, 2, 1)).sum(axis=0).reshape(O, C, kh, kw)
        if bias is not None and bias.requires_grad:
            gb = g_mat.sum(axis=(0, 2))
        return (gx, gw, gb)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _from_op(out, parents, _bw)


def _conv2d_nhwc(x: Tensor, kernel: Tensor, bias, stride, dilation, padding, ho, wo) -> Tensor:
    """Channels-last path: gathers windows into a (B*Ho*Wo, kh*kw*C) matrix and
    runs a single gemm. The gather is cache-friendly (rows are kh runs of kw*C
    contiguous floats), unlike the channels-first column layout, so this wins
    once C*Ho*Wo is large. The column matrix is kept for the weight gradient."""
    O, C, kh, kw = kernel.shape
    B, _, H, W = x.shape
    p = padding
    xt = np.zeros((B, H + 2 * p, W + 2 * p, C), dtype=x.data.dtype)
    xt[:, p : p + H, p : p + W, :] = x.data.transpose(0, 2, 3, 1)
    s = xt.strides
    win = np.lib.stride_tricks.as_strided(
        xt,
        shape=(B, ho, wo, kh, kw, C),
        strides=(s[0], stride * s[1], stride * s[2], dilation * s[1], dilation * s[2], s[3]),
        writeable=False,
    )
    cols = win.reshape(B * ho * wo, kh * kw * C)  # materializing copy
    wk = np.ascontiguousarray(kernel.data.transpose(2, 3, 1, 0)).reshape(kh * kw * C, O)
    out = cols @ wk
    if bias is not None:
        out += bias.data[None, :]
    out = np.ascontiguousarray(out.reshape(B, ho, wo, O).transpose(0, 3, 1, 2))

    def _bw(g):
        gt = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, O)
        gx = gw = gb = None
        if x.requires_grad:
            if stride == 1 and O <= C and kh == kw and dilation * (kh - 1) >= p:
                # adjoint as a plain correlation with the flipped kernel:
                # gather over g (width kh*kw*O) beats scattering gcols
                # (width kh*kw*C) exactly when O <= C
                q = dilation * (kh - 1) - p
                gtp = np.zeros((B, ho + 2 * q, wo + 2 * q, O), dtype=g.dtype)
                gtp[:, q : q + ho, q : q + wo, :] = gt.reshape(B, ho, wo, O)
                gs = gtp.strides
                gwin = np.lib.stride_tricks.as_strided(
                    gtp,
                    shape=(B, H, W, kh, kw, O),
                    strides=(gs[0], gs[1], gs[2], dilation * gs[1], dilation * gs[2], gs[3]),
                    writeable=False,
                )
                wfl = np.ascontiguousarray(
                    kernel.data[:, :, ::-1, ::-1].transpose(2, 3, 0, 1)
                ).reshape(kh * kw * O, C)
                gx = gwin.reshape(B * H * W, kh * kw * O) @ wfl
                gx = np.ascontiguousarray(gx.reshape(B, H, W, C).transpose(0, 3, 1, 2))
            else:
                gcols = (gt @ wk.T).reshape(B, ho, wo, kh, kw, C)
                gxt = np.zeros_like(xt)
                for ky in range(kh):
                    hi = ky * dilation
                    for kx in range(kw):
                        wj = kx * dilation
                        gxt[:, hi : hi + stride * ho : stride, wj : wj + stride * wo : stride, :] += gcols[
                            :, :, :, ky, kx, :
                        ]
                gx = np.ascontiguousarray(gxt[:, p : p + H, p : p + W, :].transpose(0, 3, 1, 2))
        if kernel.requires_grad:
            gw = np.ascontiguousarray(
                (cols.T @ gt).reshape(kh, kw, C, O).transpose(3, 2, 0, 1)
            )
        if bias is not None and bias.requires_grad:
            gb = gt.sum(axis=0)
        return (gx, gw, gb)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _from_op(out, parents, _bw)


# Per-tap gemm work (C*Ho*Wo) above which the channels-last path wins.
_FAST_MIN_WORK = 32768


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    dilation: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-d cross-correlation: (N,C,H,W) * (O,C,kh,kw) -> (N,O,H',W')."""
    if stride < 1 or dilation < 1:
        raise ContractError(f"conv2d: stride and dilation must be >= 1, got {stride}, {dilation}")
    if x.data.ndim != 4 or kernel.data.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernel {kernel.shape}")
    _check_same_dtype(x, kernel, "conv2d")
    O, C, kh, kw = kernel.shape
    if bias is not None and bias.shape != (O,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match {O} output channels")
    H, W = x.shape[2], x.shape[3]
    ho = _conv_out_size(H + 2 * padding, kh, stride, dilation, 0)
    wo = _conv_out_size(W + 2 * padding, kw, stride, dilation, 0)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kernel.shape} does not fit input {x.shape} with padding {padding}")
    if kh * kw > 1 and C >= 8 and C * ho * wo >= _FAST_MIN_WORK:
        return _conv2d_nhwc(x, kernel, bias, stride, dilation, padding, ho, wo)
    return _conv2d_im2col(x, kernel, bias, stride, dilation, padding, ho, wo)


def conv_transpose2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Transposed 2-d convolution: (N,C,H,W) * (C,O,kh,kw) -> (N,O,H',W')
    with H' = (H-1)*stride - 2*padding + kh (the adjoint of conv2d)."""
    if stride < 1:
        raise ContractError(f"conv_transpose2d: stride must be >= 1, got {stride}")
    if x.data.ndim != 4 or kernel.data.ndim != 4 or x.shape[1] != kernel.shape[0]:
        raise ShapeError(f"conv_transpose2d: input {x.shape} incompatible with kernel {kernel.shape}")
    _check_same_dtype(x, kernel, "conv_transpose2d")
    C, O, kh, kw = kernel.shape
    if bias is not None and bias.shape != (O,):
        raise ShapeError(f"conv_transpose2d: bias shape {bias.shape} does not match {O} output channels")
    B, _, H, W = x.shape
    ho = (H - 1) * stride - 2 * padding + kh
    wo = (W - 1) * stride - 2 * padding + kw
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv_transpose2d: output would be empty for input {x.shape}")

    w_mat = kernel.data.reshape(C, O * kh * kw)
    x_mat = x.data.reshape(B, C, H * W)
    cols = np.matmul(w_mat.T, x_mat)  # (B, O*kh*kw, H*W)
    padded_shape = (B, O, ho + 2 * padding, wo + 2 * padding)
    out_pad = _col2im(cols, padded_shape, kh, kw, stride, 1, H, W)
    out = out_pad if padding == 0 else out_pad[:, :, padding:-padding, padding:-padding]
    out = np.ascontiguousarray(out)
    if bias is not None:
        out += bias.data[None, :, None, None]

    def _bw(g):
        gp = _pad_hw(g, padding)
        g_cols, gh, gw_ = _im2col(gp, kh, kw, stride, 1)
        gx = gkern = gb = None
        if x.requires_grad:
            gx = np.matmul(w_mat, g_cols).reshape(B, C, H, W)
        if kernel.requires_grad:
            gkern = np.matmul(x_mat, g_cols.transpose(0, 2, 1)).sum(axis=0).reshape(C, O, kh, kw)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gkern, gb)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return _from_op(out, parents, _bw)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange (N, C*r^2, H, W) -> (N, C, r*H, r*W):
    out[n, c, r*h + a, r*w + b] = x[n, c*r^2 + a*r + b, h, w]."""
    if x.data.ndim != 4:
        raise ShapeError(f"pixel_shuffle: expected 4-d input, got shape {x.shape}")
    B, C2, H, W = x.shape
    if C2 % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle: {C2} channels not divisible by r^2 = {r * r}")
    C = C2 // (r * r)
    out = (
        x.data.reshape(B, C, r, r, H, W)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(B, C, H * r, W * r)
    )

    def _bw(g):
        back = (
            g.reshape(B, C, H, r, W, r)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(B, C2, H, W)
        )
        return (np.ascontiguousarray(back),)

    return _from_op(np.ascontiguousarray(out), (x,), _bw)


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    """Inverse of pixel_shuffle: (N, C, r*H, r*W) -> (N, C*r^2, H, W)."""
    if x.data.ndim != 4:
        raise ShapeError(f"pixel_unshuffle: expected 4-d input, got shape {x.shape}")
    B, C, Hr, Wr = x.shape
    if Hr % r != 0 or Wr % r != 0:
        raise ShapeError(f"pixel_unshuffle: spatial size {(Hr, Wr)} not divisible by r = {r}")
    H, W = Hr // r, Wr // r
    out = (
        x.data.reshape(B, C, H, r, W, r)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(B, C * r * r, H, W)
    )

    def _bw(g):
        back = (
            g.reshape(B, C, r, r, H, W)
            .transpose(0, 1, 4, 2, 5, 3)
            .reshape(B, C, Hr, Wr)
        )
        return (np.ascontiguousarray(back),)

    return _from_op(np.ascontiguousarray(out), (x,), _bw)


# -- random initialization ----------------------------------------------


def random_normal(shape, rng, dtype=np.float32) -> Tensor:
    """Standard-normal constant tensor (e.g. the discriminator's noise rows)."""
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(rng)
    return Tensor(rng.standard_normal(shape).astype(dtype))


def gaussian_init(shape, rng, std: float, dtype=np.float32) -> np.ndarray:
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(rng)
    return (rng.standard_normal(shape) * std).astype(dtype)


def uniform_init(shape, rng, low: float = -1.0, high: float = 1.0, dtype=np.float32) -> np.ndarray:
    if isinstance(rng, (int, np.integer)):
        rng = make_rng(rng)
    return rng.uniform(low, high, size=shape).astype(dtype)
