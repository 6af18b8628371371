"""Reverse-mode automatic differentiation over dense float64 tensors.

Every operation returns a fresh :class:`Tensor` and, when gradient tracking
is enabled, records its inputs plus a rule mapping the output gradient to
input gradients. ``Tensor.backward()`` replays the recorded rules in
reverse topological order, so each rule fires exactly once with the fully
accumulated output gradient.

The operation set is intentionally small: elementwise arithmetic,
mean/sum reductions, the activations used by the networks, 2-d
convolution, its transpose, and batch normalization. Convolution and its
transpose share one im2col/col2im pair, which makes the transpose the
exact adjoint of the forward convolution.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .rng import Stream

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable gradient recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-dimensional float64 array participating in reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.size == 0:
            raise ValueError("empty tensors are not allowed")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

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
            raise ValueError(f"expected a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        """Populate ``grad`` on every reachable tensor that requires it.

        The loss must be a scalar. Nodes are visited in reverse topological
        order of the recorded graph (an iterative DFS, so deep graphs do not
        hit the recursion limit).
        """
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("loss does not require grad")
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
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.zero_grad()


def _track(*tensors: Tensor) -> bool:
    return _grad_enabled and any(t.requires_grad for t in tensors)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    out.requires_grad = True
    out._parents = parents
    out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data
    if not _track(a, b):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data
    if not _track(a, b):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data
    if not _track(a, b):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def neg(a) -> Tensor:
    a = as_tensor(a)
    out_data = -a.data
    if not _track(a):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, -g)

    return _make(out_data, (a,), backward)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    out_data = a.data.reshape(shape)
    if not _track(a):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g.reshape(a.data.shape))

    return _make(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# reductions


def _normalize_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        axes = tuple(range(ndim))
    elif isinstance(axes, int):
        axes = (axes,)
    else:
        axes = tuple(int(a) for a in axes)
    if len(axes) == 0:
        raise ValueError("reduction over no axes is rejected")
    norm = tuple(sorted(a + ndim if a < 0 else a for a in axes))
    if len(set(norm)) != len(norm):
        raise ValueError(f"duplicate reduction axes {axes}")
    for a in norm:
        if not 0 <= a < ndim:
            raise ValueError(f"axis {a} out of range for {ndim}-d tensor")
    return norm


def reduce_mean(a, axes=None) -> Tensor:
    """Arithmetic mean over ``axes`` (all axes when None).

    The gradient distributes 1/count to every reduced element.
    """
    a = as_tensor(a)
    ax = _normalize_axes(axes, a.data.ndim)
    count = 1
    for axis in ax:
        count *= a.data.shape[axis]
    out_data = a.data.mean(axis=ax)
    if not _track(a):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad:
            expanded = np.expand_dims(g, ax)
            _accumulate(a, np.broadcast_to(expanded / count, a.data.shape))

    return _make(out_data, (a,), backward)


def reduce_sum(a, axes=None) -> Tensor:
    a = as_tensor(a)
    ax = _normalize_axes(axes, a.data.ndim)
    out_data = a.data.sum(axis=ax)
    if not _track(a):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad:
            expanded = np.expand_dims(g, ax)
            _accumulate(a, np.broadcast_to(expanded, a.data.shape))

    return _make(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# activations


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    """x for x >= 0 else slope*x. The gradient at exactly 0 is 1."""
    a = as_tensor(a)
    if not 0.0 <= slope < 1.0:
        raise ValueError(f"slope must be in [0, 1), got {slope}")
    nonneg = a.data >= 0
    out_data = np.where(nonneg, a.data, slope * a.data)
    if not _track(a):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * np.where(nonneg, 1.0, slope))

    return _make(out_data, (a,), backward)


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # Branch on sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out_data = _sigmoid_values(a.data)
    if not _track(a):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def log_sigmoid(a) -> Tensor:
    """log(sigmoid(x)) without overflow at large |x|."""
    a = as_tensor(a)
    x = a.data
    out_data = np.where(x >= 0, 0.0, x) - np.log1p(np.exp(-np.abs(x)))
    if not _track(a):
        return Tensor(out_data)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * (1.0 - _sigmoid_values(x)))

    return _make(out_data, (a,), backward)


# ---------------------------------------------------------------------------
# convolution


@dataclass(frozen=True)
class ConvConfig:
    """Stride/padding/kernel geometry shared by conv and transposed conv."""

    stride: int
    pad_or_crop: int
    kernel_h: int
    kernel_w: int

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"stride must be positive, got {self.stride}")
        if self.pad_or_crop < 0:
            raise ValueError(f"pad/crop must be non-negative, got {self.pad_or_crop}")
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise ValueError(f"kernel dims must be positive, got {self.kernel_h}x{self.kernel_w}")


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


def transposed_conv_output_size(size: int, kernel: int, stride: int, crop: int) -> int:
    return (size - 1) * stride - 2 * crop + kernel


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    """[N,C,H,W] -> columns [C*kh*kw, N*Ho*Wo]."""
    n, c, h, w = x.shape
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
            cols[:, i, j] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * ho * wo), ho, wo


def _col2im(cols: np.ndarray, x_shape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Exact adjoint of :func:`_im2col`: scatter-add columns back."""
    n, c, h, w = x_shape
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    cols6 = cols.reshape(c, kh, kw, n, ho, wo)
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += cols6[
                :, i, j
            ].transpose(1, 0, 2, 3)
    return xp[:, :, pad : pad + h, pad : pad + w] if pad else xp


def conv2d(x, kernel, bias, cfg: ConvConfig) -> Tensor:
    """Strided 2-d cross-correlation with zero padding.

    ``x`` is [N,C,H,W], ``kernel`` is [F,C,kh,kw], ``bias`` is [F]. Output
    spatial size is floor((in + 2*pad - kernel)/stride) + 1. Gradients are
    defined for all three inputs.
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.data.ndim != 4:
        raise ValueError(f"conv2d: input must be 4-d [N,C,H,W], got shape {x.shape}")
    if kernel.data.ndim != 4:
        raise ValueError(f"conv2d: kernel must be 4-d [F,C,kh,kw], got shape {kernel.shape}")
    n, c, h, w = x.data.shape
    f, kc, kh, kw = kernel.data.shape
    if kc != c:
        raise ValueError(f"conv2d: input has {c} channels but kernel expects {kc}")
    if (kh, kw) != (cfg.kernel_h, cfg.kernel_w):
        raise ValueError(
            f"conv2d: kernel is {kh}x{kw} but config declares {cfg.kernel_h}x{cfg.kernel_w}"
        )
    if bias.data.shape != (f,):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match {f} filters")
    stride, pad = cfg.stride, cfg.pad_or_crop
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    if ho < 1 or wo < 1:
        raise ValueError(
            f"conv2d: output size {ho}x{wo} < 1 for input {h}x{w}, "
            f"kernel {kh}x{kw}, stride {stride}, pad {pad}"
        )
    cols, _, _ = _im2col(x.data, kh, kw, stride, pad)
    kmat = kernel.data.reshape(f, c * kh * kw)
    out_data = (kmat @ cols).reshape(f, n, ho, wo).transpose(1, 0, 2, 3) + bias.data.reshape(
        1, f, 1, 1
    )
    if not _track(x, kernel, bias):
        return Tensor(out_data)

    def backward(g):
        gmat = g.transpose(1, 0, 2, 3).reshape(f, n * ho * wo)
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        if kernel.requires_grad:
            _accumulate(kernel, (gmat @ cols.T).reshape(kernel.data.shape))
        if x.requires_grad:
            _accumulate(x, _col2im(kmat.T @ gmat, x.data.shape, kh, kw, stride, pad))

    return _make(out_data, (x, kernel, bias), backward)


def transposed_conv2d(x, kernel, bias, cfg: ConvConfig) -> Tensor:
    """Adjoint of :func:`conv2d` under the elementwise inner product.

    ``x`` is [N,C,H,W], ``kernel`` is [C,F,kh,kw], ``bias`` is [F]. Output
    spatial size is (in - 1)*stride - 2*crop + kernel; "crop" removes
    border rows/columns of the full scatter output.
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    if x.data.ndim != 4:
        raise ValueError(f"transposed_conv2d: input must be 4-d, got shape {x.shape}")
    if kernel.data.ndim != 4:
        raise ValueError(f"transposed_conv2d: kernel must be 4-d, got shape {kernel.shape}")
    n, c, h, w = x.data.shape
    kc, f, kh, kw = kernel.data.shape
    if kc != c:
        raise ValueError(f"transposed_conv2d: input has {c} channels but kernel expects {kc}")
    if (kh, kw) != (cfg.kernel_h, cfg.kernel_w):
        raise ValueError(
            f"transposed_conv2d: kernel is {kh}x{kw} but config declares "
            f"{cfg.kernel_h}x{cfg.kernel_w}"
        )
    if bias.data.shape != (f,):
        raise ValueError(f"transposed_conv2d: bias shape {bias.shape} does not match {f} filters")
    stride, crop = cfg.stride, cfg.pad_or_crop
    ho = transposed_conv_output_size(h, kh, stride, crop)
    wo = transposed_conv_output_size(w, kw, stride, crop)
    if ho < 1 or wo < 1:
        raise ValueError(
            f"transposed_conv2d: output size {ho}x{wo} < 1 for input {h}x{w}, "
            f"kernel {kh}x{kw}, stride {stride}, crop {crop}"
        )
    xmat = x.data.transpose(1, 0, 2, 3).reshape(c, n * h * w)
    kmat = kernel.data.reshape(c, f * kh * kw)
    out_shape = (n, f, ho, wo)
    out_data = _col2im(kmat.T @ xmat, out_shape, kh, kw, stride, crop) + bias.data.reshape(
        1, f, 1, 1
    )
    if not _track(x, kernel, bias):
        return Tensor(out_data)

    def backward(g):
        gcols, _, _ = _im2col(g, kh, kw, stride, crop)  # columns [F*kh*kw, N*H*W]
        if bias.requires_grad:
            _accumulate(bias, g.sum(axis=(0, 2, 3)))
        if kernel.requires_grad:
            _accumulate(kernel, (xmat @ gcols.T).reshape(kernel.data.shape))
        if x.requires_grad:
            dx = (kmat @ gcols).reshape(c, n, h, w).transpose(1, 0, 2, 3)
            _accumulate(x, dx)

    return _make(out_data, (x, kernel, bias), backward)


# ---------------------------------------------------------------------------
# batch normalization


def batch_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization by batch statistics over the N,H,W axes.

    Uses the population variance of the current batch, then applies the
    learned scale and shift. Needs at least two values per channel.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 4:
        raise ValueError(f"batch_norm: input must be 4-d [N,C,H,W], got shape {x.shape}")
    n, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise ValueError(
            f"batch_norm: scale/shift must have shape ({c},), got {gamma.shape} and {beta.shape}"
        )
    m = n * h * w
    if m < 2:
        raise ValueError("batch_norm: variance undefined with a single value per channel")
    mean = x.data.mean(axis=(0, 2, 3))
    var = x.data.var(axis=(0, 2, 3))
    inv = (1.0 / np.sqrt(var + eps)).reshape(1, c, 1, 1)
    xhat = (x.data - mean.reshape(1, c, 1, 1)) * inv
    out_data = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)
    if not _track(x, gamma, beta):
        return Tensor(out_data)

    def backward(g):
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(1, c, 1, 1)
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            _accumulate(x, inv / m * (m * dxhat - s1 - xhat * s2))

    return _make(out_data, (x, gamma, beta), backward)


def batch_norm_frozen(x, gamma, beta, mean: np.ndarray, var: np.ndarray, eps: float = 1e-5) -> Tensor:
    """Normalization with fixed statistics (inference mode)."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim != 4:
        raise ValueError(f"batch_norm_frozen: input must be 4-d, got shape {x.shape}")
    c = x.data.shape[1]
    mean = np.asarray(mean, dtype=np.float64).reshape(1, c, 1, 1)
    inv = (1.0 / np.sqrt(np.asarray(var, dtype=np.float64) + eps)).reshape(1, c, 1, 1)
    xhat = (x.data - mean) * inv
    out_data = gamma.data.reshape(1, c, 1, 1) * xhat + beta.data.reshape(1, c, 1, 1)
    if not _track(x, gamma, beta):
        return Tensor(out_data)

    def backward(g):
        if beta.requires_grad:
            _accumulate(beta, g.sum(axis=(0, 2, 3)))
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        if x.requires_grad:
            _accumulate(x, g * gamma.data.reshape(1, c, 1, 1) * inv)

    return _make(out_data, (x, gamma, beta), backward)


# ---------------------------------------------------------------------------
# gradient verification


@dataclass(frozen=True)
class GradCheckReport:
    """Max relative error between analytic and numeric gradients per input."""

    name: str
    tolerance: float
    per_input: tuple[tuple[str, float], ...]

    @property
    def max_rel_err(self) -> float:
        return max(err for _, err in self.per_input)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def check_gradients(
    name: str,
    forward: Callable[[], Tensor],
    inputs: Sequence[tuple[str, Tensor]],
    tolerance: float = 1e-4,
    step: float = 1e-5,
    probes: int = 8,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of ``forward()`` against central finite
    differences at a sampled subset of coordinates of each input tensor.

    ``forward`` must rebuild its graph from the current ``.data`` of the
    input tensors on every call and return a scalar.
    """
    stream = Stream([seed, 57])
    loss = forward()
    if loss.data.size != 1:
        raise ValueError("gradient check target must be scalar")
    for _, t in inputs:
        t.zero_grad()
    loss.backward()
    analytic = [np.array(t.grad, copy=True).reshape(-1) for _, t in inputs]
    results = []
    for (label, t), a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        count = flat.shape[0]
        idxs = np.arange(count) if count <= probes else stream.permutation(count)[:probes]
        worst = 0.0
        for k in idxs:
            orig = flat[k]
            h = step * max(1.0, abs(orig))
            flat[k] = orig + h
            f_plus = forward().item()
            flat[k] = orig - h
            f_minus = forward().item()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            worst = max(worst, _rel_err(float(a[k]), numeric))
        results.append((label, worst))
    return GradCheckReport(name, tolerance, tuple(results))


def finite_diff_check(
    op: Callable[..., Tensor],
    input_shapes: Sequence[Sequence[int]],
    tolerance: float = 1e-4,
    seed: int = 0,
    step: float = 1e-5,
    probes: int = 8,
    name: str | None = None,
) -> GradCheckReport:
    """Check ``op``'s gradients on seeded random inputs.

    The op output is projected to a scalar with a fixed random weighting so
    that every output element contributes to every checked gradient.
    """
    stream = Stream([seed, 31])
    inputs = [Tensor(stream.normal(tuple(s)), requires_grad=True) for s in input_shapes]
    out_shape = op(*inputs).data.shape
    if out_shape == ():  # op is already scalar-valued
        forward = lambda: op(*inputs)
    else:
        proj = Tensor(stream.normal(out_shape))
        forward = lambda: reduce_sum(mul(op(*inputs), proj))
    labeled = [(f"input{i}", t) for i, t in enumerate(inputs)]
    return check_gradients(
        name or getattr(op, "__name__", "op"),
        forward,
        labeled,
        tolerance=tolerance,
        step=step,
        probes=probes,
        seed=seed,
    )
