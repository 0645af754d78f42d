"""Dense tensors with reverse-mode automatic differentiation.

Ops execute eagerly on numpy arrays and, when a Tape is active, append a
backward closure to it. The tape's record order is the execution order,
which is a valid topological order of the compute graph, so backward()
just walks it once in reverse and accumulates gradients additively.

Storage is whatever float dtype the arrays carry. Training code uses
float32 throughout; the verification suites build float64 tensors because
their tolerances (1e-9 and tighter) need the headroom. Convolutions are
im2col + matmul so the heavy lifting lands in BLAS; summation order is
fixed by the reshape, which keeps repeated runs bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, LabelError, NumericsError, ShapeError, WidthError

_strict = False


def set_strict(enabled: bool) -> None:
    """Toggle strict mode: every op output is checked for non-finite values."""
    global _strict
    _strict = bool(enabled)


def _checked(arr: np.ndarray) -> np.ndarray:
    if _strict and not np.all(np.isfinite(arr)):
        raise NumericsError("op produced non-finite values in strict mode")
    return arr


class Tape:
    """Ordered record of executed ops for one backward pass.

    Use as a context manager around the forward computation. Ops recorded
    while several tapes are open go to the innermost one.
    """

    __slots__ = ("nodes",)

    def __init__(self) -> None:
        self.nodes: list[tuple["Tensor", object]] = []

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _tape_stack.pop()
        return False


_tape_stack: list[Tape] = []


def _record(out: "Tensor", backward_fn) -> None:
    if _tape_stack:
        _tape_stack[-1].nodes.append((out, backward_fn))


class Tensor:
    """A numpy array plus gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None) -> None:
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

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
        """A view of the same values that never receives gradient."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def sum(self, axis=None) -> "Tensor":
        return tsum(self, axis)

    def mean(self, axis=None) -> "Tensor":
        return tmean(self, axis)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # arithmetic sugar; scalars stay plain Python numbers
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

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported")
        return mul(self, 1.0 / float(other))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros(t.data.shape, dtype=t.data.dtype)
    t.grad += g


def _accum_slice(t: Tensor, index, g: np.ndarray) -> None:
    # gradient lands only in the addressed sub-block; the rest stays exactly 0
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros(t.data.shape, dtype=t.data.dtype)
    t.grad[index] += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _needs_grad(*tensors) -> bool:
    return any(isinstance(t, Tensor) and t.requires_grad for t in tensors)


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    at, bt = isinstance(a, Tensor), isinstance(b, Tensor)
    data = (a.data if at else a) + (b.data if bt else b)
    out = Tensor(_checked(data), requires_grad=_needs_grad(a, b))
    if out.requires_grad:
        def bw(g):
            if at:
                _accum(a, _unbroadcast(g, a.data.shape))
            if bt:
                _accum(b, _unbroadcast(g, b.data.shape))
        _record(out, bw)
    return out


def sub(a, b) -> Tensor:
    at, bt = isinstance(a, Tensor), isinstance(b, Tensor)
    data = (a.data if at else a) - (b.data if bt else b)
    out = Tensor(_checked(data), requires_grad=_needs_grad(a, b))
    if out.requires_grad:
        def bw(g):
            if at:
                _accum(a, _unbroadcast(g, a.data.shape))
            if bt:
                _accum(b, _unbroadcast(-g, b.data.shape))
        _record(out, bw)
    return out


def mul(a, b) -> Tensor:
    at, bt = isinstance(a, Tensor), isinstance(b, Tensor)
    ad = a.data if at else a
    bd = b.data if bt else b
    out = Tensor(_checked(ad * bd), requires_grad=_needs_grad(a, b))
    if out.requires_grad:
        def bw(g):
            if at and a.requires_grad:
                _accum(a, _unbroadcast(g * bd, a.data.shape))
            if bt and b.requires_grad:
                _accum(b, _unbroadcast(g * ad, b.data.shape))
        _record(out, bw)
    return out


def tsum(x: Tensor, axis=None) -> Tensor:
    data = x.data.sum(axis=axis)
    out = Tensor(_checked(np.asarray(data)), requires_grad=x.requires_grad)
    if out.requires_grad:
        shape = x.data.shape

        def bw(g):
            if axis is None:
                _accum(x, np.broadcast_to(g, shape))
            else:
                _accum(x, np.broadcast_to(np.expand_dims(g, axis), shape))
        _record(out, bw)
    return out


def tmean(x: Tensor, axis=None) -> Tensor:
    count = x.data.size if axis is None else x.data.shape[axis]
    data = x.data.mean(axis=axis)
    out = Tensor(_checked(np.asarray(data)), requires_grad=x.requires_grad)
    if out.requires_grad:
        shape = x.data.shape

        def bw(g):
            if axis is None:
                _accum(x, np.broadcast_to(g / count, shape))
            else:
                _accum(x, np.broadcast_to(np.expand_dims(g, axis) / count, shape))
        _record(out, bw)
    return out


# --------------------------------------------------------------- convolution


def _conv_windows(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """Sliding k-by-k windows of x as a strided view [B,C,Ho,Wo,k,k]."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    b, c, h, w = x.shape
    ho, wo = h - k + 1, w - k + 1
    sb, sc, sh, sw = x.strides
    return np.lib.stride_tricks.as_strided(
        x, (b, c, ho, wo, k, k), (sb, sc, sh, sw, sh, sw), writeable=False
    )


def _conv_cols(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    win = _conv_windows(x, k, pad)
    b, c, ho, wo = win.shape[:4]
    # channel-major flattening so a channel prefix is a column prefix
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k), (b, ho, wo)


def _conv_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray | None, pad: int) -> np.ndarray:
    cout, cin, k, _ = w.shape
    cols, (bsz, ho, wo) = _conv_cols(x, k, pad)
    out = cols @ w.reshape(cout, cin * k * k).T
    if b is not None:
        out += b
    return np.ascontiguousarray(out.reshape(bsz, ho, wo, cout).transpose(0, 3, 1, 2))


def _conv_bwd_params(x: np.ndarray, g: np.ndarray, k: int, pad: int) -> np.ndarray:
    # recompute im2col instead of caching it: cheaper in memory, the copy
    # is small next to the dW matmul
    cols, (bsz, ho, wo) = _conv_cols(x, k, pad)
    cout = g.shape[1]
    g2 = g.transpose(0, 2, 3, 1).reshape(bsz * ho * wo, cout)
    cin = x.shape[1]
    return (g2.T @ cols).reshape(cout, cin, k, k)


def _conv_bwd_input(g: np.ndarray, w: np.ndarray, pad: int) -> np.ndarray:
    # full correlation with the spatially flipped kernel, in/out swapped
    k = w.shape[-1]
    wr = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return _conv_fwd(g, wr, None, k - 1 - pad)


def _validate_conv_args(x: Tensor, weight: Tensor, bias: Tensor | None, pad: int | None):
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise DimensionError(
            f"conv2d wants input [B,C,H,W] and weight [Co,Ci,k,k], got {x.data.shape} and {weight.data.shape}"
        )
    k = weight.data.shape[-1]
    if weight.data.shape[-2] != k:
        raise DimensionError(f"conv kernels must be square, got {weight.data.shape}")
    if k % 2 == 0:
        raise DimensionError(f"same-shape convolution needs an odd kernel, got k={k}")
    if pad is None:
        pad = k // 2
    if pad != k // 2:
        raise DimensionError(f"stride-1 same convolution needs pad == k//2, got pad={pad} for k={k}")
    if bias is not None and bias.data.shape != (weight.data.shape[0],):
        raise DimensionError(
            f"bias shape {bias.data.shape} does not match {weight.data.shape[0]} output channels"
        )
    return pad


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, pad: int | None = None) -> Tensor:
    """Stride-1 zero-padded cross-correlation: [B,Ci,H,W] -> [B,Co,H,W]."""
    pad = _validate_conv_args(x, weight, bias, pad)
    if x.data.shape[1] != weight.data.shape[1]:
        raise DimensionError(
            f"input has {x.data.shape[1]} channels, weight expects {weight.data.shape[1]}"
        )
    bd = bias.data if bias is not None else None
    out = Tensor(_checked(_conv_fwd(x.data, weight.data, bd, pad)),
                 requires_grad=_needs_grad(x, weight, bias))
    if out.requires_grad:
        xd, wd = x.data, weight.data
        k = wd.shape[-1]

        def bw(g):
            if weight.requires_grad:
                _accum(weight, _conv_bwd_params(xd, g, k, pad))
            if bias is not None and bias.requires_grad:
                _accum(bias, g.sum(axis=(0, 2, 3)))
            if x.requires_grad:
                _accum(x, _conv_bwd_input(g, wd, pad))
        _record(out, bw)
    return out


def conv2d_sliced(x: Tensor, weight: Tensor, bias: Tensor | None, rho_in: int, rho_out: int,
                  pad: int | None = None) -> Tensor:
    """Convolution by the leading [rho_out, rho_in] block of a wider kernel.

    The sub-network of width rho reads and writes channel prefixes of one
    shared parameter store; gradients land only in the addressed block,
    rows and columns at or past rho stay exactly zero.
    """
    pad = _validate_conv_args(x, weight, bias, pad)
    w_out, w_in = weight.data.shape[:2]
    if not (1 <= rho_out <= w_out) or not (1 <= rho_in <= w_in):
        raise WidthError(
            f"slice [{rho_out},{rho_in}] exceeds stored kernel [{w_out},{w_in}]"
        )
    if x.data.shape[1] != rho_in:
        raise DimensionError(f"input has {x.data.shape[1]} channels, slice expects {rho_in}")
    wd = weight.data[:rho_out, :rho_in]
    bd = bias.data[:rho_out] if bias is not None else None
    out = Tensor(_checked(_conv_fwd(x.data, wd, bd, pad)),
                 requires_grad=_needs_grad(x, weight, bias))
    if out.requires_grad:
        xd = x.data
        k = weight.data.shape[-1]

        def bw(g):
            if weight.requires_grad:
                _accum_slice(weight, (slice(0, rho_out), slice(0, rho_in)),
                             _conv_bwd_params(xd, g, k, pad))
            if bias is not None and bias.requires_grad:
                _accum_slice(bias, slice(0, rho_out), g.sum(axis=(0, 2, 3)))
            if x.requires_grad:
                _accum(x, _conv_bwd_input(g, wd, pad))
        _record(out, bw)
    return out


# ------------------------------------------------------------- dense layers


def relu(x: Tensor) -> Tensor:
    out = Tensor(_checked(np.maximum(x.data, 0)), requires_grad=x.requires_grad)
    if out.requires_grad:
        mask = x.data > 0  # subgradient 0 at the kink

        def bw(g):
            _accum(x, g * mask)
        _record(out, bw)
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """[B,C,H,W] -> [B,C], plain mean over the spatial plane."""
    if x.data.ndim != 4:
        raise DimensionError(f"global_avg_pool wants [B,C,H,W], got {x.data.shape}")
    out = Tensor(_checked(x.data.mean(axis=(2, 3))), requires_grad=x.requires_grad)
    if out.requires_grad:
        _, _, h, w = x.data.shape
        shape = x.data.shape

        def bw(g):
            _accum(x, np.broadcast_to((g / (h * w))[:, :, None, None], shape))
        _record(out, bw)
    return out


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """[B,din] @ weight[dout,din].T + bias -> [B,dout]."""
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.data.shape[1] != weight.data.shape[1]:
        raise DimensionError(
            f"linear wants [B,din] and [dout,din], got {x.data.shape} and {weight.data.shape}"
        )
    data = x.data @ weight.data.T
    if bias is not None:
        if bias.data.shape != (weight.data.shape[0],):
            raise DimensionError(f"bias shape {bias.data.shape} vs dout {weight.data.shape[0]}")
        data = data + bias.data
    out = Tensor(_checked(data), requires_grad=_needs_grad(x, weight, bias))
    if out.requires_grad:
        xd, wd = x.data, weight.data

        def bw(g):
            if x.requires_grad:
                _accum(x, g @ wd)
            if weight.requires_grad:
                _accum(weight, g.T @ xd)
            if bias is not None and bias.requires_grad:
                _accum(bias, g.sum(axis=0))
        _record(out, bw)
    return out


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax of [B,n], shifted by the row max for stability."""
    if logits.data.ndim != 2:
        raise DimensionError(f"softmax wants [B,n], got {logits.data.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(_checked(p), requires_grad=logits.requires_grad)
    if out.requires_grad:
        def bw(g):
            _accum(logits, p * (g - (g * p).sum(axis=1, keepdims=True)))
        _record(out, bw)
    return out


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    if logits.data.ndim != 2:
        raise DimensionError(f"cross_entropy wants logits [B,n], got {logits.data.shape}")
    lab = np.asarray(labels)
    if lab.ndim != 1 or lab.shape[0] != logits.data.shape[0]:
        raise DimensionError(f"labels shape {lab.shape} vs batch {logits.data.shape[0]}")
    if lab.dtype.kind not in "iu":
        raise LabelError(f"labels must be integers, got dtype {lab.dtype}")
    n = logits.data.shape[1]
    if lab.min() < 0 or lab.max() >= n:
        raise LabelError(f"labels must lie in [0,{n}), got range [{lab.min()},{lab.max()}]")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    b = lab.shape[0]
    nll = lse - z[np.arange(b), lab]
    out = Tensor(_checked(np.asarray(nll.mean())), requires_grad=logits.requires_grad)
    if out.requires_grad:
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)

        def bw(g):
            d = p.copy()
            d[np.arange(b), lab] -= 1.0
            _accum(logits, (g / b) * d)
        _record(out, bw)
    return out


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean absolute difference; the subgradient at exact ties is 0."""
    if a.data.shape != b.data.shape:
        raise DimensionError(f"l1_loss shapes differ: {a.data.shape} vs {b.data.shape}")
    diff = a.data - b.data
    out = Tensor(_checked(np.asarray(np.abs(diff).mean())), requires_grad=_needs_grad(a, b))
    if out.requires_grad:
        n = diff.size

        def bw(g):
            s = np.sign(diff) * (g / n)
            _accum(a, s)
            _accum(b, -s)
        _record(out, bw)
    return out


# ----------------------------------------------------------------- backward


def backward(loss: Tensor, tape: Tape) -> None:
    """Reverse-sweep the tape from a scalar loss, accumulating grads."""
    if loss.data.shape != ():
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for out, fn in reversed(tape.nodes):
        if out.grad is None:
            continue  # not an ancestor of the loss
        fn(out.grad)


# --------------------------------------------------------------------- adam


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates plus the shared step count."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(params: list[Tensor], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    state.m = [np.zeros_like(p.data) for p in params]
    state.v = [np.zeros_like(p.data) for p in params]
    return state


def adam_step(params: list[Tensor], grads: list[np.ndarray | None], state: AdamState) -> None:
    """One bias-corrected Adam update, in place. A missing grad counts as zero."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads and state must be parallel lists")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Adam:
    """Small convenience wrapper tying parameters to an AdamState."""

    def __init__(self, params: list[Tensor], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.params = list(params)
        self.state = adam_init(self.params, lr, beta1, beta2, eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)
