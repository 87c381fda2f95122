"""Minimal reverse-mode automatic differentiation on numpy arrays.

The op set is deliberately small and fixed: matmul, conv2d, relu, tanh,
elementwise add/mul, 2x2 spatial mean pooling, global average pooling,
softmax, mean-squared-error reduction, and a Gaussian reparameterization
sample, plus explicit reshape / broadcast / concat plumbing. There is no
implicit broadcasting; shape changes always go through an explicit op so
the tape stays auditable.

A ``Tape`` records executed operations in order while it is active (a
define-by-run graph, rebuilt on every forward pass). ``backward`` replays
the tape once in reverse and accumulates gradients into ``Tensor.grad``.

Values are float32 by default; passing float64 arrays switches the whole
computation to 64-bit, which the finite-difference checks rely on.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32

_FLOAT_DTYPES = (np.float32, np.float64)


def default_rng(seed):
    """Seeded PCG64 generator; the fixed algorithm keeps runs reproducible across platforms."""
    return np.random.Generator(np.random.PCG64(seed))


class Tensor:
    """N-dimensional array that can participate in a taped computation.

    ``data`` is a row-major numpy array (float32 unless float64 is passed
    explicitly). ``grad`` is filled in by :func:`backward` for tensors with
    ``requires_grad`` set.
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._not_scalar()

    def _not_scalar(self):
        raise ValueError(f"item() requires a scalar tensor, got shape {self.shape}")

    def numpy(self):
        return self.data

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad}{tag})"


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


class _Node:
    """One executed operation: output, tensor inputs, and a closure replaying its backward."""

    __slots__ = ("op", "out", "inputs", "backward_fn")

    def __init__(self, op, out, inputs, backward_fn):
        self.op = op
        self.out = out
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of executed operations, rebuilt per forward pass."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self.nodes)


_TAPE_STACK: list[Tape] = []


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record(op, out, inputs, backward_fn):
    tape = _active_tape()
    if tape is None:
        return out
    tensor_inputs = tuple(t for t in inputs if isinstance(t, Tensor))
    if any(t.requires_grad for t in tensor_inputs):
        out.requires_grad = True
        tape.nodes.append(_Node(op, out, tensor_inputs, backward_fn))
    return out


def _require_same_shape(a, b, op):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        out = Tensor(a.data + b)
        return _record("add", out, (a,), lambda g: (g,))
    b = as_tensor(b)
    _require_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)

    def backward_fn(g):
        return g, g

    return _record("add", out, (a, b), backward_fn)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _require_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)

    def backward_fn(g):
        return g, -g

    return _record("sub", out, (a, b), backward_fn)


def neg(a):
    a = as_tensor(a)
    out = Tensor(-a.data)
    return _record("neg", out, (a,), lambda g: (-g,))


def mul(a, b):
    a = as_tensor(a)
    if isinstance(b, (int, float)):
        scale = b
        out = Tensor(a.data * scale)
        return _record("mul", out, (a,), lambda g: (g * scale,))
    b = as_tensor(b)
    _require_same_shape(a, b, "mul")
    out = Tensor(a.data * b.data)
    a_data, b_data = a.data, b.data

    def backward_fn(g):
        return g * b_data, g * a_data

    return _record("mul", out, (a, b), backward_fn)


def relu(x):
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0))
    mask = x.data > 0

    def backward_fn(g):
        return (g * mask,)

    return _record("relu", out, (x,), backward_fn)


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    out = Tensor(y)

    def backward_fn(g):
        return (g * (1.0 - y * y),)

    return _record("tanh", out, (x,), backward_fn)


def softmax(x, axis):
    """Numerically stable softmax; slices along ``axis`` each sum to 1."""
    x = as_tensor(x)
    if not isinstance(axis, int) or not -x.data.ndim <= axis < x.data.ndim:
        raise ValueError(f"softmax: invalid axis {axis} for shape {x.shape}")
    if not np.isfinite(x.data).all():
        raise ValueError("softmax: non-finite input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def backward_fn(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _record("softmax", out, (x,), backward_fn)


# ---------------------------------------------------------------------------
# shape plumbing


def reshape(x, shape):
    x = as_tensor(x)
    orig = x.shape
    out = Tensor(x.data.reshape(shape))

    def backward_fn(g):
        return (g.reshape(orig),)

    return _record("reshape", out, (x,), backward_fn)


def broadcast_to(x, shape):
    """Explicit broadcast following numpy alignment rules (output is a read-only view)."""
    x = as_tensor(x)
    orig = x.shape
    out = Tensor(np.broadcast_to(x.data, shape))

    def backward_fn(g):
        extra = g.ndim - len(orig)
        if extra:
            g = g.sum(axis=tuple(range(extra)))
        squeezed = tuple(i for i, (gs, xs) in enumerate(zip(g.shape, orig)) if xs == 1 and gs != 1)
        if squeezed:
            g = g.sum(axis=squeezed, keepdims=True)
        return (g.reshape(orig),)

    return _record("broadcast_to", out, (x,), backward_fn)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat: empty input list")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _record("concat", out, tuple(tensors), backward_fn)


def detach(x):
    """Constant copy: values pass through, gradients stop here."""
    x = as_tensor(x)
    return Tensor(x.data.copy())


# ---------------------------------------------------------------------------
# reductions


def reduce_sum(x, axis=None):
    x = as_tensor(x)
    orig = x.shape
    out = Tensor(x.data.sum(axis=axis))

    def backward_fn(g):
        if axis is None:
            return (np.full(orig, g, dtype=g.dtype) if np.ndim(g) == 0 else np.broadcast_to(g, orig).copy(),)
        return (np.ascontiguousarray(np.broadcast_to(np.expand_dims(g, axis), orig)),)

    return _record("reduce_sum", out, (x,), backward_fn)


def reduce_mean(x, axis=None):
    x = as_tensor(x)
    n = x.size if axis is None else x.shape[axis]
    if n == 0:
        raise ValueError("reduce_mean: empty reduction")
    return mul(reduce_sum(x, axis=axis), 1.0 / n)


def mse(pred, target):
    """Mean over all elements of squared error; scalar output."""
    pred, target = as_tensor(pred), as_tensor(target)
    _require_same_shape(pred, target, "mse")
    if pred.size == 0:
        raise ValueError("mse: empty input")
    diff = pred.data - target.data
    out = Tensor(np.mean(diff * diff))
    scale = 2.0 / pred.size

    def backward_fn(g):
        gp = g * scale * diff
        return gp, -gp

    return _record("mse", out, (pred, target), backward_fn)


# ---------------------------------------------------------------------------
# matmul / convolution / pooling


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)
    a_data, b_data = a.data, b.data
    need_da, need_db = a.requires_grad, b.requires_grad

    def backward_fn(g):
        return (g @ b_data.T if need_da else None), (a_data.T @ g if need_db else None)

    return _record("matmul", out, (a, b), backward_fn)


def _conv_padding(size, kernel, stride, padding):
    if padding == "valid":
        if size < kernel:
            raise ValueError(f"conv2d: input size {size} smaller than kernel {kernel} with valid padding")
        return (size - kernel) // stride + 1, 0, 0
    if padding == "same":
        out = -(-size // stride)  # ceil
        total = max((out - 1) * stride + kernel - size, 0)
        lo = total // 2
        return out, lo, total - lo
    raise ValueError(f"conv2d: unknown padding mode {padding!r}")


def conv2d(x, kernels, stride=1, padding="same"):
    """2-D cross-correlation over HxWxC (or batched BxHxWxC) input.

    ``kernels`` has shape (kh, kw, c_in, c_out). Implemented via im2col so
    both forward and backward reduce to matrix products.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    if kernels.data.ndim != 4:
        raise ValueError(f"conv2d: kernels must be 4-d (kh, kw, c_in, c_out), got {kernels.shape}")
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4:
        raise ValueError(f"conv2d: input must be HxWxC or BxHxWxC, got {x.shape}")
    batch, h, w, c_in = xd.shape
    kh, kw, kc, c_out = kernels.shape
    if kc != c_in:
        raise ValueError(f"conv2d: kernel channels {kc} do not match input channels {c_in}")
    if stride < 1:
        raise ValueError("conv2d: stride must be >= 1")

    h_out, pad_top, pad_bot = _conv_padding(h, kh, stride, padding)
    w_out, pad_left, pad_right = _conv_padding(w, kw, stride, padding)
    xp = np.pad(xd, ((0, 0), (pad_top, pad_bot), (pad_left, pad_right), (0, 0)))

    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (B, h_out, w_out, c_in, kh, kw)
    patches = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(batch * h_out * w_out, kh * kw * c_in)
    kmat = kernels.data.reshape(kh * kw * c_in, c_out)
    out_data = (patches @ kmat).reshape(batch, h_out, w_out, c_out)
    out = Tensor(out_data[0] if single else out_data)

    padded_shape = xp.shape
    need_dx, need_dk = x.requires_grad, kernels.requires_grad

    def backward_fn(g):
        g4 = g[None] if single else g
        gmat = g4.reshape(batch * h_out * w_out, c_out)
        dk = (patches.T @ gmat).reshape(kh, kw, c_in, c_out) if need_dk else None
        if not need_dx:
            return None, dk
        dpatch = (gmat @ kmat.T).reshape(batch, h_out, w_out, kh, kw, c_in)
        dxp = np.zeros(padded_shape, dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + (h_out - 1) * stride + 1 : stride, j : j + (w_out - 1) * stride + 1 : stride, :] += dpatch[:, :, :, i, j, :]
        dx = dxp[:, pad_top : pad_top + h, pad_left : pad_left + w, :]
        return (dx[0] if single else dx), dk

    return _record("conv2d", out, (x, kernels), backward_fn)


def mean_pool2(x):
    """2x2 spatial mean pooling with stride 2; spatial dims must be even."""
    x = as_tensor(x)
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4:
        raise ValueError(f"mean_pool2: input must be HxWxC or BxHxWxC, got {x.shape}")
    batch, h, w, c = xd.shape
    if h % 2 or w % 2:
        raise ValueError(f"mean_pool2: spatial dims must be even, got {h}x{w}")
    folded = xd.reshape(batch, h // 2, 2, w // 2, 2, c)
    out_data = folded.mean(axis=(2, 4))
    out = Tensor(out_data[0] if single else out_data)

    def backward_fn(g):
        g4 = g[None] if single else g
        spread = np.empty((batch, h // 2, 2, w // 2, 2, c), dtype=g.dtype)
        spread[:] = g4[:, :, None, :, None, :]
        spread *= 0.25
        dx = spread.reshape(batch, h, w, c)
        return (dx[0] if single else dx,)

    return _record("mean_pool2", out, (x,), backward_fn)


def global_avg_pool(x):
    """Average over the spatial dims: HxWxC -> C, or BxHxWxC -> BxC."""
    x = as_tensor(x)
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    if xd.ndim != 4:
        raise ValueError(f"global_avg_pool: input must be HxWxC or BxHxWxC, got {x.shape}")
    batch, h, w, c = xd.shape
    out_data = xd.mean(axis=(1, 2))
    out = Tensor(out_data[0] if single else out_data)
    inv = 1.0 / (h * w)

    def backward_fn(g):
        g4 = g[None] if single else g
        dx = np.empty((batch, h, w, c), dtype=g.dtype)
        dx[:] = g4[:, None, None, :]
        dx *= inv
        return (dx[0] if single else dx,)

    return _record("global_avg_pool", out, (x,), backward_fn)


def gaussian_reparam_sample(mean, sigma, noise):
    """Return ``mean + sigma * noise``; gradients pass straight through to ``mean``."""
    mean = as_tensor(mean)
    if sigma < 0:
        raise ValueError("gaussian_reparam_sample: sigma must be >= 0")
    noise_data = noise.data if isinstance(noise, Tensor) else np.asarray(noise)
    if noise_data.shape != mean.shape:
        raise ValueError(f"gaussian_reparam_sample: noise shape {noise_data.shape} != mean shape {mean.shape}")
    offset = Tensor((sigma * noise_data).astype(mean.dtype, copy=False))
    return add(mean, offset)


# ---------------------------------------------------------------------------
# backward pass


def backward(tape, loss):
    """Accumulate gradients of ``loss`` into every requires-grad tensor the tape touches.

    Walks the tape exactly once in reverse. Tensors recorded on the tape but
    not influencing the loss receive zero gradients.
    """
    if not isinstance(loss, Tensor):
        raise ValueError("backward: loss must be a Tensor")
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")

    produced_at = {id(node.out): i for i, node in enumerate(tape.nodes)}
    for i, node in enumerate(tape.nodes):
        for inp in node.inputs:
            j = produced_at.get(id(inp))
            if j is not None and j >= i:
                raise ValueError("backward: tape is not topologically ordered (cycle)")

    produced = set(produced_at)
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g_out = grads.pop(id(node.out), None)
        node.out.grad = g_out if g_out is not None else np.zeros_like(node.out.data)
        if g_out is None:
            continue
        input_grads = node.backward_fn(g_out)
        for inp, g in zip(node.inputs, input_grads):
            if g is None or not inp.requires_grad:
                continue
            acc = grads.get(id(inp))
            grads[id(inp)] = g if acc is None else acc + g

    # leaf inputs (everything not produced on this tape) collect from the walk;
    # leaves the loss never reached get exact zeros
    for node in tape.nodes:
        for t in node.inputs:
            if t.requires_grad and id(t) not in produced:
                t.grad = grads.get(id(t))
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
    if loss.grad is None:
        loss.grad = np.ones_like(loss.data)


# ---------------------------------------------------------------------------
# optimizer and gradient utilities


class AdamState:
    """Per-parameter first/second-moment accumulators plus a shared step counter."""

    def __init__(self, params):
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.step = 0
        self._scratch = [np.empty_like(p.data) for p in params]


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update with bias correction; returns (params, state)."""
    if lr <= 0:
        raise ValueError("adam_step: lr must be > 0")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_step: params/grads/state length mismatch")
    if not hasattr(state, "_scratch") or len(state._scratch) != len(params):
        state._scratch = [np.empty_like(p.data) for p in params]
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v, tmp in zip(params, grads, state.m, state.v, state._scratch):
        g = g.data if isinstance(g, Tensor) else np.asarray(g)
        if g.shape != p.data.shape:
            raise ValueError(f"adam_step: grad shape {g.shape} != param shape {p.data.shape}")
        if not np.isfinite(g).all():
            raise ValueError("adam_step: non-finite gradient")
        # m += (1-b1)(g - m); v += (1-b2)(g^2 - v); p -= lr/c1 * m / (sqrt(v/c2) + eps)
        np.subtract(g, m, out=tmp)
        tmp *= 1.0 - beta1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp -= v
        tmp *= 1.0 - beta2
        v += tmp
        np.divide(v, c2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += eps
        np.divide(m, tmp, out=tmp)
        tmp *= lr / c1
        p.data -= tmp
    return params, state


def clip_global_norm(grads, max_norm):
    """Scale the whole gradient collection so its joint L2 norm is at most ``max_norm``.

    Returns (clipped gradient arrays, pre-clip joint norm). The norm is
    accumulated in float64 so clipping is stable and idempotent.
    """
    if max_norm <= 0:
        raise ValueError("clip_global_norm: max_norm must be > 0")
    arrays = [g.data if isinstance(g, Tensor) else np.asarray(g) for g in grads]
    sq = 0.0
    for g in arrays:
        flat = g.reshape(-1)
        sq += float(np.dot(flat, flat))  # blocked blas accumulation; exact enough at any size
    if not np.isfinite(sq):
        raise ValueError("clip_global_norm: non-finite gradient")
    norm = float(np.sqrt(sq))
    if norm > max_norm:
        scale = max_norm / norm
        arrays = [(g * scale).astype(g.dtype, copy=False) for g in arrays]
    return arrays, norm


# ---------------------------------------------------------------------------
# finite-difference checking


def numeric_gradient(fn, tensor, eps=1e-5, indices=None):
    """Central-difference gradient of scalar ``fn()`` w.r.t. ``tensor``.

    Perturbs the tensor in place and restores it. ``indices`` restricts the
    check to a subset of flat coordinates (for large parameters).
    """
    flat = tensor.data.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    grad = np.zeros(flat.size, dtype=np.float64)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(fn())
        flat[i] = orig - eps
        fm = float(fn())
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * eps)
    return grad.reshape(tensor.data.shape)


def relative_error(analytic, numeric, floor=1e-3):
    """Max elementwise |a - n| / max(|a|, |n|, floor); the floor absorbs noise near zero."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_gradients(fn, tensors, eps=1e-5, coords_per_tensor=None, rng=None):
    """Compare taped gradients of scalar ``fn()`` against central differences.

    Returns the max relative error across all checked tensors. ``fn`` must be
    a pure function of the given tensors' data.
    """
    tape = Tape()
    with tape:
        loss = fn()
    backward(tape, loss)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    worst = 0.0
    for t, a in zip(tensors, analytic):
        if coords_per_tensor is not None and t.size > coords_per_tensor:
            gen = rng if rng is not None else default_rng(0)
            idx = gen.choice(t.size, size=coords_per_tensor, replace=False)
        else:
            idx = None
        numeric = numeric_gradient(lambda: fn().item(), t, eps=eps, indices=idx)
        if idx is not None:
            sel = np.asarray(list(idx))
            worst = max(worst, relative_error(a.reshape(-1)[sel], numeric.reshape(-1)[sel]))
        else:
            worst = max(worst, relative_error(a, numeric))
    return worst


def gradcheck_suite(seed=0):
    """Finite-difference check for every differentiable op, in 64-bit mode.

    Returns an ordered dict mapping op name to max relative error.
    """
    rng = default_rng(seed)

    def rand(*shape):
        return Tensor(rng.standard_normal(shape), requires_grad=True, dtype=np.float64)

    def rand_off_kink(*shape):
        # keep relu inputs away from 0 so finite differences stay smooth
        raw = rng.standard_normal(shape)
        return Tensor(np.sign(raw) * (np.abs(raw) + 0.2), requires_grad=True, dtype=np.float64)

    results = {}

    a, b = rand(3, 4), rand(3, 4)
    results["add"] = check_gradients(lambda: reduce_sum(mul(add(a, b), add(a, 0.5))), [a, b])

    c, d = rand(4, 3), rand(4, 3)
    results["mul"] = check_gradients(lambda: reduce_sum(mul(mul(c, d), 1.5)), [c, d])

    m1, m2 = rand(3, 5), rand(5, 2)
    results["matmul"] = check_gradients(lambda: reduce_sum(mul(matmul(m1, m2), matmul(m1, m2))), [m1, m2])

    r = rand_off_kink(4, 4)
    results["relu"] = check_gradients(lambda: reduce_sum(mul(relu(r), relu(r))), [r])

    th = rand(3, 3)
    results["tanh"] = check_gradients(lambda: reduce_sum(mul(tanh(th), tanh(th))), [th])

    sx = rand(3, 5)
    sw = rand(3, 5)
    results["softmax"] = check_gradients(lambda: reduce_sum(mul(softmax(sx, axis=1), sw)), [sx, sw])

    cx, ck = rand(5, 6, 2), rand(3, 3, 2, 3)
    results["conv2d"] = check_gradients(lambda: reduce_sum(mul(conv2d(cx, ck, 1, "same"), conv2d(cx, ck, 1, "same"))), [cx, ck])

    cx2, ck2 = rand(7, 7, 2), rand(3, 3, 2, 2)
    results["conv2d_stride2_valid"] = check_gradients(
        lambda: reduce_sum(mul(conv2d(cx2, ck2, 2, "valid"), conv2d(cx2, ck2, 2, "valid"))), [cx2, ck2]
    )

    px = rand(4, 6, 3)
    pw = rand(2, 3, 3)
    results["mean_pool2"] = check_gradients(lambda: reduce_sum(mul(mean_pool2(px), pw)), [px])

    gx = rand(4, 5, 3)
    gw = rand(3)
    results["global_avg_pool"] = check_gradients(lambda: reduce_sum(mul(global_avg_pool(gx), gw)), [gx])

    mp, mt = rand(4, 3), rand(4, 3)
    results["mse"] = check_gradients(lambda: mse(mp, mt), [mp, mt])

    gm = rand(6)
    noise = rng.standard_normal(6)
    results["gaussian_reparam_sample"] = check_gradients(
        lambda: reduce_sum(mul(gaussian_reparam_sample(gm, 0.37, noise), gaussian_reparam_sample(gm, 0.37, noise))), [gm]
    )

    bx = rand(1, 4)
    bw = rand(3, 4)
    results["broadcast_to"] = check_gradients(lambda: reduce_sum(mul(broadcast_to(bx, (3, 4)), bw)), [bx])

    rx = rand(2, 6)
    results["reshape"] = check_gradients(lambda: reduce_sum(mul(reshape(rx, (3, 4)), reshape(rx, (3, 4)))), [rx])

    c1, c2 = rand(2, 3), rand(2, 2)
    cw = rand(2, 5)
    results["concat"] = check_gradients(lambda: reduce_sum(mul(concat([c1, c2], axis=1), cw)), [c1, c2])

    ax = rand(3, 4)
    results["reduce_sum_axis"] = check_gradients(lambda: reduce_sum(mul(reduce_sum(ax, axis=1), reduce_sum(ax, axis=1))), [ax])

    return results
