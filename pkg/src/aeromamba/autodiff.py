"""Minimal reverse-mode automatic differentiation over numpy arrays.

Exactly the operation set the network needs: dense/conv layers,
activations, gating, normalization, reductions, and differentiable
STFT/iSTFT. Values are double precision by default; every op registers
a backward rule that is checked against central finite differences in
the test suite. Broadcasting is limited to scalar-tensor combinations
and per-channel bias shapes.
"""

from __future__ import annotations

import numpy as np

from .dsp.stft import StftConfig, periodic_hann
from .errors import ArgumentError, ContractError, NumericError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward_fn = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    # convenience operators
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def parameter(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def const(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = any(p.requires_grad for p in parents) or any(
            p._parents for p in parents)
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _sum_to_shape(g: np.ndarray, shape) -> np.ndarray:
    """Reverse numpy broadcasting: reduce g down to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op: str, a: np.ndarray, b: np.ndarray):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ArgumentError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/dp into .grad of every reachable tensor.

    Visits the graph in reverse topological order; repeated use of a
    value sums gradients.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ArgumentError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is not None and node.grad is not None:
            node._backward_fn(node.grad)
            node._backward_fn = None  # free graph as we go


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("add", a.data, b.data)

    def bwd(g):
        _accumulate(a, _sum_to_shape(g, a.data.shape))
        _accumulate(b, _sum_to_shape(g, b.data.shape))

    return _node(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("sub", a.data, b.data)

    def bwd(g):
        _accumulate(a, _sum_to_shape(g, a.data.shape))
        _accumulate(b, _sum_to_shape(-g, b.data.shape))

    return _node(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("mul", a.data, b.data)

    def bwd(g):
        _accumulate(a, _sum_to_shape(g * b.data, a.data.shape))
        _accumulate(b, _sum_to_shape(g * a.data, b.data.shape))

    return _node(a.data * b.data, (a, b), bwd)


def scale(a, s: float) -> Tensor:
    a = _as_tensor(a)
    s = float(s)

    def bwd(g):
        _accumulate(a, g * s)

    return _node(a.data * s, (a,), bwd)


def log(a, eps: float = 0.0) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data + eps
    if np.any(shifted <= 0):
        raise NumericError("log of non-positive value", component="log")

    def bwd(g):
        _accumulate(a, g / shifted)

    return _node(np.log(shifted), (a,), bwd)


def sqrt(a, eps: float = 0.0) -> Tensor:
    a = _as_tensor(a)
    out = np.sqrt(a.data + eps)

    def bwd(g):
        _accumulate(a, g * (0.5 / np.maximum(out, 1e-30)))

    return _node(out, (a,), bwd)


# ---------------------------------------------------------------------------
# activations and gating
# ---------------------------------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    s = _sigmoid(a.data)

    def bwd(g):
        _accumulate(a, g * s * (1.0 - s))

    return _node(s, (a,), bwd)


def silu(a) -> Tensor:
    a = _as_tensor(a)
    s = _sigmoid(a.data)

    def bwd(g):
        _accumulate(a, g * (s + a.data * s * (1.0 - s)))

    return _node(a.data * s, (a,), bwd)


def softplus(a) -> Tensor:
    a = _as_tensor(a)

    def bwd(g):
        _accumulate(a, g * _sigmoid(a.data))

    return _node(np.logaddexp(0.0, a.data), (a,), bwd)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0

    def bwd(g):
        _accumulate(a, g * mask)

    return _node(a.data * mask, (a,), bwd)


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    mult = np.where(mask, 1.0, slope)

    def bwd(g):
        _accumulate(a, g * mult)

    return _node(a.data * mult, (a,), bwd)


def glu(a, axis: int = 1) -> Tensor:
    """Gated linear unit: split in half along `axis`, first * sigmoid(second)."""
    a = _as_tensor(a)
    dim = a.data.shape[axis]
    if dim % 2 != 0:
        raise ArgumentError(f"glu: axis {axis} has odd size {dim}")
    half = dim // 2
    sl_a = [slice(None)] * a.data.ndim
    sl_b = [slice(None)] * a.data.ndim
    sl_a[axis] = slice(0, half)
    sl_b[axis] = slice(half, dim)
    lin = a.data[tuple(sl_a)]
    gate = _sigmoid(a.data[tuple(sl_b)])

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[tuple(sl_a)] = g * gate
        ga[tuple(sl_b)] = g * lin * gate * (1.0 - gate)
        _accumulate(a, ga)

    return _node(lin * gate, (a,), bwd)


def rms_norm(a, gamma, eps: float = 1e-6) -> Tensor:
    """RMS normalization over the last axis, scaled by gamma."""
    a, gamma = _as_tensor(a), _as_tensor(gamma)
    if gamma.data.shape != a.data.shape[-1:]:
        raise ArgumentError(
            f"rms_norm: gamma shape {gamma.data.shape} must be {a.data.shape[-1:]}")
    n = a.data.shape[-1]
    r = np.sqrt(np.mean(a.data * a.data, axis=-1, keepdims=True) + eps)
    xhat = a.data / r

    def bwd(g):
        gh = g * gamma.data
        dot = np.sum(gh * a.data, axis=-1, keepdims=True)
        _accumulate(a, gh / r - a.data * (dot / (n * r ** 3)))
        _accumulate(gamma, _sum_to_shape(g * xhat, gamma.data.shape))

    return _node(xhat * gamma.data, (a, gamma), bwd)


# ---------------------------------------------------------------------------
# shape ops and reductions
# ---------------------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    orig = a.data.shape

    def bwd(g):
        _accumulate(a, g.reshape(orig))

    return _node(a.data.reshape(shape), (a,), bwd)


def moveaxis(a, src: int, dst: int) -> Tensor:
    a = _as_tensor(a)

    def bwd(g):
        _accumulate(a, np.moveaxis(g, dst, src))

    return _node(np.moveaxis(a.data, src, dst), (a,), bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bwd)


def slice_(a, key) -> Tensor:
    """Basic (non-fancy) slicing; gradient scatters back into place."""
    a = _as_tensor(a)

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[key] = g
        _accumulate(a, ga)

    return _node(a.data[key], (a,), bwd)


def pad_last(a, before: int, after: int) -> Tensor:
    """Zero-pad the last axis."""
    a = _as_tensor(a)
    n = a.data.shape[-1]

    def bwd(g):
        _accumulate(a, g[..., before:before + n])

    pads = [(0, 0)] * (a.data.ndim - 1) + [(before, after)]
    return _node(np.pad(a.data, pads), (a,), bwd)


def sum_(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    shape = a.data.shape

    def bwd(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, shape))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g, axis), shape))

    return _node(a.data.sum(axis=axis), (a,), bwd)


def mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    shape = a.data.shape
    count = a.data.size if axis is None else shape[axis]

    def bwd(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g / count, shape))
        else:
            _accumulate(a, np.broadcast_to(np.expand_dims(g / count, axis), shape))

    return _node(a.data.mean(axis=axis), (a,), bwd)


def l1(a, b) -> Tensor:
    """Mean absolute difference; the gradient of |0| is defined as 0."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ArgumentError(f"l1: shape mismatch {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    n = diff.size

    def bwd(g):
        s = g * np.sign(diff) / n
        _accumulate(a, s)
        _accumulate(b, -s)

    return _node(np.abs(diff).mean(), (a, b), bwd)


# ---------------------------------------------------------------------------
# dense and convolutional layers
# ---------------------------------------------------------------------------

def linear(x, w, b=None) -> Tensor:
    """y = x @ w.T + b with x (..., in), w (out, in), b (out,)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.shape[-1] != w.data.shape[1]:
        raise ArgumentError(
            f"linear: input width {x.data.shape[-1]} != weight width {w.data.shape[1]}")
    parents = [x, w]
    y = x.data @ w.data.T
    if b is not None:
        b = _as_tensor(b)
        if b.data.shape != (w.data.shape[0],):
            raise ArgumentError(f"linear: bias shape {b.data.shape} must be "
                                f"({w.data.shape[0]},)")
        y = y + b.data
        parents.append(b)

    def bwd(g):
        _accumulate(x, g @ w.data)
        gm = g.reshape(-1, g.shape[-1])
        xm = x.data.reshape(-1, x.data.shape[-1])
        _accumulate(w, gm.T @ xm)
        if b is not None:
            _accumulate(b, gm.sum(axis=0))

    return _node(y, tuple(parents), bwd)


def _conv_cols(xp: np.ndarray, kernel: int, stride: int, l_out: int) -> np.ndarray:
    """Sliding windows of the padded input: (B, C, l_out, kernel)."""
    s = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=xp.shape[:-1] + (l_out, kernel),
        strides=s[:-1] + (stride * s[-1], s[-1]))


def conv1d(x, w, b=None, stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """1-D convolution (cross-correlation): x (B, Cin, L), w (Cout, Cin/groups, K)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ArgumentError(f"conv1d: expected x (B,C,L) and w (O,I,K), got "
                            f"{x.data.shape} and {w.data.shape}")
    batch, c_in, length = x.data.shape
    c_out, c_in_g, kernel = w.data.shape
    if c_in % groups or c_out % groups or c_in // groups != c_in_g:
        raise ArgumentError(f"conv1d: shapes {x.data.shape} / {w.data.shape} do not "
                            f"match groups={groups}")
    l_out = (length + 2 * padding - kernel) // stride + 1
    if l_out < 1:
        raise ArgumentError(f"conv1d: input length {length} too short for kernel "
                            f"{kernel} stride {stride} padding {padding}")
    o_g = c_out // groups
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    cols = _conv_cols(xp, kernel, stride, l_out)
    # (B, G, Cg, Lout, K) -> (G, B*Lout, Cg*K) so each group is one GEMM
    colsg = (cols.reshape(batch, groups, c_in_g, l_out, kernel)
             .transpose(1, 0, 3, 2, 4).reshape(groups, batch * l_out,
                                               c_in_g * kernel))
    wg = w.data.reshape(groups, o_g, c_in_g * kernel)
    y = colsg @ wg.transpose(0, 2, 1)  # (G, B*Lout, Og)
    y = (y.reshape(groups, batch, l_out, o_g).transpose(1, 0, 3, 2)
         .reshape(batch, c_out, l_out))
    parents = [x, w]
    if b is not None:
        b = _as_tensor(b)
        y = y + b.data[:, None]
        parents.append(b)

    def bwd(g):
        gg = (g.reshape(batch, groups, o_g, l_out)
              .transpose(1, 0, 3, 2).reshape(groups, batch * l_out, o_g))
        _accumulate(w, (gg.transpose(0, 2, 1) @ colsg).reshape(w.data.shape))
        gcols = gg @ wg  # (G, B*Lout, Cg*K)
        gcols = (gcols.reshape(groups, batch, l_out, c_in_g, kernel)
                 .transpose(1, 0, 3, 2, 4)
                 .reshape(batch, c_in, l_out, kernel))
        gxp = np.zeros_like(xp)
        for k in range(kernel):
            gxp[:, :, k:k + stride * l_out:stride] += gcols[:, :, :, k]
        _accumulate(x, gxp[:, :, padding:padding + length] if padding else gxp)
        if b is not None:
            _accumulate(b, g.sum(axis=(0, 2)))

    return _node(y, tuple(parents), bwd)


def conv_transpose1d(x, w, b=None, stride: int = 1) -> Tensor:
    """Transposed 1-D convolution: x (B, Cin, L), w (Cin, Cout, K)."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 3 or x.data.shape[1] != w.data.shape[0]:
        raise ArgumentError(f"conv_transpose1d: shapes {x.data.shape} and "
                            f"{w.data.shape} are incompatible")
    batch, c_in, length = x.data.shape
    _, c_out, kernel = w.data.shape
    l_out = (length - 1) * stride + kernel
    contrib = np.einsum("bcl,cok->bolk", x.data, w.data, optimize=True)
    y = np.zeros((batch, c_out, l_out))
    for k in range(kernel):
        y[:, :, k:k + stride * length:stride] += contrib[:, :, :, k]
    parents = [x, w]
    if b is not None:
        b = _as_tensor(b)
        y = y + b.data[:, None]
        parents.append(b)

    def bwd(g):
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(w.data)
        for k in range(kernel):
            gk = g[:, :, k:k + stride * length:stride]
            gx += np.einsum("bol,cok->bcl", gk, w.data[:, :, k:k + 1], optimize=True)
            gw[:, :, k] = np.einsum("bcl,bol->co", x.data, gk, optimize=True)
        _accumulate(x, gx)
        _accumulate(w, gw)
        if b is not None:
            _accumulate(b, g.sum(axis=(0, 2)))

    return _node(y, tuple(parents), bwd)


def depthwise_causal_conv1d(x, w, b=None) -> Tensor:
    """Depthwise causal conv: x (B, C, L), w (C, K); sees only past context
    via a left pad of K-1 zeros."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ArgumentError(f"depthwise_causal_conv1d: shapes {x.data.shape} and "
                            f"{w.data.shape} are incompatible")
    batch, channels, length = x.data.shape
    kernel = w.data.shape[1]
    xp = np.pad(x.data, ((0, 0), (0, 0), (kernel - 1, 0)))
    y = np.zeros_like(x.data)
    for k in range(kernel):
        y += w.data[:, k][:, None] * xp[:, :, k:k + length]
    parents = [x, w]
    if b is not None:
        b = _as_tensor(b)
        y = y + b.data[:, None]
        parents.append(b)

    def bwd(g):
        gw = np.empty_like(w.data)
        gxp = np.zeros_like(xp)
        for k in range(kernel):
            gw[:, k] = np.einsum("bcl,bcl->c", g, xp[:, :, k:k + length], optimize=True)
            gxp[:, :, k:k + length] += w.data[:, k][:, None] * g
        _accumulate(x, gxp[:, :, kernel - 1:])
        _accumulate(w, gw)
        if b is not None:
            _accumulate(b, g.sum(axis=(0, 2)))

    return _node(y, tuple(parents), bwd)


def avg_pool1d(x, kernel: int = 4, stride: int = 2, padding: int = 1) -> Tensor:
    """Average pooling with count_include_pad=False."""
    x = _as_tensor(x)
    if x.data.ndim != 3:
        raise ArgumentError(f"avg_pool1d: expected (B,C,L), got {x.data.shape}")
    length = x.data.shape[-1]
    l_out = (length + 2 * padding - kernel) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding)))
    valid = np.pad(np.ones(length), (padding, padding))
    cols = _conv_cols(xp, kernel, stride, l_out)
    counts = _conv_cols(valid[None, None], kernel, stride, l_out).sum(axis=-1)[0, 0]
    y = cols.sum(axis=-1) / counts

    def bwd(g):
        gxp = np.zeros_like(xp)
        gshare = g / counts
        for k in range(kernel):
            gxp[:, :, k:k + stride * l_out:stride] += gshare
        _accumulate(x, gxp[:, :, padding:padding + length] if padding else gxp)

    return _node(y, (x,), bwd)


# ---------------------------------------------------------------------------
# differentiable STFT / iSTFT
# ---------------------------------------------------------------------------

def _stft_geometry(length: int, config: StftConfig):
    """Index map from padded positions to source samples (-1 for zero pad)
    plus the (frames, W) frame-position grid."""
    w, h = config.window_size, config.hop_length
    if length < w // 2 + 1:
        raise ArgumentError(f"signal too short for reflect padding: {length}")
    frames = config.num_frames(length)
    total = (frames - 1) * h + w
    back = total - length - w // 2
    reflect_back = min(back, length - 1)
    idx = np.pad(np.arange(length), (w // 2, reflect_back), mode="reflect")
    if reflect_back < back:
        idx = np.concatenate([idx, np.full(back - reflect_back, -1, dtype=idx.dtype)])
    grid = np.arange(frames)[:, None] * h + np.arange(w)[None, :]
    return idx, grid, frames, total


def stft_op(x, config: StftConfig) -> Tensor:
    """Differentiable STFT of batched signals x (B, n) -> (B, 2, frames, bins)
    with channel 0 = real, channel 1 = imaginary."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ArgumentError(f"stft_op: expected (B, n), got {x.data.shape}")
    batch, length = x.data.shape
    w = config.window_size
    idx, grid, frames, total = _stft_geometry(length, config)
    window = periodic_hann(w)
    mask = idx >= 0
    padded = x.data[:, np.where(mask, idx, 0)] * mask
    windowed = padded[:, grid] * window
    spec = np.fft.rfft(windowed, axis=-1)
    out = np.stack([spec.real, spec.imag], axis=1)

    def bwd(g):
        gc = g[:, 0] + 1j * g[:, 1]
        half = gc.copy()
        half[..., 1:-1] *= 0.5
        gframes = np.fft.irfft(half, n=w, axis=-1) * w
        gframes *= window
        gpad = np.zeros((batch, total))
        brange = np.arange(batch)[:, None, None]
        np.add.at(gpad, (brange, grid[None]), gframes)
        gx = np.zeros_like(x.data)
        np.add.at(gx, (np.arange(batch)[:, None], idx[mask][None]), gpad[:, mask])
        _accumulate(x, gx)

    return _node(out, (x,), bwd)


def istft_op(spec, config: StftConfig, length: int) -> Tensor:
    """Differentiable weighted overlap-add inverse of stft_op:
    spec (B, 2, frames, bins) -> (B, length)."""
    spec = _as_tensor(spec)
    if spec.data.ndim != 4 or spec.data.shape[1] != 2 or spec.data.shape[3] != config.bins:
        raise ArgumentError(f"istft_op: expected (B, 2, F, {config.bins}), "
                            f"got {spec.data.shape}")
    batch, _, frames, _ = spec.data.shape
    w, h = config.window_size, config.hop_length
    window = periodic_hann(w)
    total = (frames - 1) * h + w
    grid = np.arange(frames)[:, None] * h + np.arange(w)[None, :]
    values = spec.data[:, 0] + 1j * spec.data[:, 1]
    ft = np.fft.irfft(values, n=w, axis=-1) * window
    acc = np.zeros((batch, total))
    brange = np.arange(batch)[:, None, None]
    np.add.at(acc, (brange, grid[None]), ft)
    env = np.zeros(total)
    np.add.at(env, grid.ravel(), np.tile(window * window, frames))
    sl = slice(w // 2, w // 2 + length)
    env_slice = np.maximum(env[sl], 1e-12)
    out = acc[:, sl] / env_slice

    def bwd(g):
        gacc = np.zeros((batch, total))
        gacc[:, sl] = g / env_slice
        gframes = gacc[:, grid] * window
        spec_g = np.fft.rfft(gframes, axis=-1)
        fac = np.full(config.bins, 2.0 / w)
        fac[0] = 1.0 / w
        fac[-1] = 1.0 / w
        _accumulate(spec, np.stack([spec_g.real * fac, spec_g.imag * fac], axis=1))

    return _node(out, (spec,), bwd)
