"""Dense-tensor ops with explicit forward/backward passes, plus Adam.

All operations are pure functions over numpy arrays.  Parameters and
activations are stored in float32; every reduction (convolution, matmuls,
moment updates) is accumulated in float64 and cast back to the input
dtype so that repeated runs are bit-identical and gradient checks are
stable.  Passing float64 arrays keeps the whole computation in float64,
which is what the finite-difference checker does.

Layout conventions: images are ``(C, H, W)`` or batched ``(B, C, H, W)``;
fully-connected inputs are ``(n,)`` or ``(B, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NonFiniteGradientError, ShapeMismatchError

__all__ = [
    "conv2d",
    "conv2d_backward",
    "maxpool2",
    "maxpool2_backward",
    "fully_connected",
    "fully_connected_backward",
    "relu",
    "relu_backward",
    "he_uniform",
    "AdamState",
    "adam_step",
    "finite_difference_check",
]


def _batched(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    """Promote a single sample to a batch of one; report whether we did."""
    if x.ndim == ndim:
        return x[None], True
    if x.ndim == ndim + 1:
        return x, False
    raise ShapeMismatchError(f"expected {ndim}- or {ndim + 1}-d input, got shape {x.shape}")


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, C, H, W) -> (B, C*9, H*W) view-based column matrix for 3x3 same-conv."""
    b, c, h, w = x.shape
    xp = np.zeros((b, c, h + 2, w + 2), dtype=np.float64)
    xp[:, :, 1:-1, 1:-1] = x
    # windows: (B, C, H, W, 3, 3) -> (B, C, 3, 3, H, W)
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    return win.transpose(0, 1, 4, 5, 2, 3).reshape(b, c * 9, h * w)


def conv2d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """3x3 convolution, stride 1, zero padding 1 (same-size output).

    ``x`` is (C, H, W) or (B, C, H, W); ``kernels`` is (K, C, 3, 3);
    ``bias`` is (K,).  out[k, y, x] = bias[k] + sum over (c, dy, dx) of
    x[c, y+dy-1, x+dx-1] * kernels[k, c, dy, dx], out-of-range input = 0.
    """
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    bias = np.asarray(bias)
    xb, squeeze = _batched(x, 3)
    if kernels.ndim != 4 or kernels.shape[2:] != (3, 3):
        raise ShapeMismatchError(f"kernels must be (K, C, 3, 3), got {kernels.shape}")
    k, c = kernels.shape[:2]
    if xb.shape[1] != c:
        raise ShapeMismatchError(f"input has {xb.shape[1]} channels, kernels expect {c}")
    if bias.shape != (k,):
        raise ShapeMismatchError(f"bias must be ({k},), got {bias.shape}")
    b, _, h, w = xb.shape
    cols = _im2col(xb)
    wmat = kernels.reshape(k, c * 9).astype(np.float64)
    out = np.matmul(wmat, cols) + bias.astype(np.float64)[:, None]
    out = out.reshape(b, k, h, w).astype(x.dtype)
    return out[0] if squeeze else out


def conv2d_backward(
    grad_out: np.ndarray, x: np.ndarray, kernels: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d: returns (grad_x, grad_kernels, grad_bias) in float64."""
    xb, squeeze = _batched(np.asarray(x), 3)
    gb, _ = _batched(np.asarray(grad_out), 3)
    b, c, h, w = xb.shape
    k = kernels.shape[0]
    g2 = gb.reshape(b, k, h * w).astype(np.float64)
    cols = _im2col(xb)
    grad_b = g2.sum(axis=(0, 2))
    grad_w = np.einsum("bkp,bcp->kc", g2, cols).reshape(kernels.shape)
    wmat = kernels.reshape(k, c * 9).astype(np.float64)
    gcols = np.einsum("kc,bkp->bcp", wmat, g2).reshape(b, c, 3, 3, h, w)
    gxp = np.zeros((b, c, h + 2, w + 2), dtype=np.float64)
    for dy in range(3):
        for dx in range(3):
            gxp[:, :, dy : dy + h, dx : dx + w] += gcols[:, :, dy, dx]
    grad_x = gxp[:, :, 1:-1, 1:-1]
    return (grad_x[0] if squeeze else grad_x), grad_w, grad_b


def maxpool2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling, stride 2; trailing odd row/column dropped.

    Returns (pooled, winner_index) where winner_index holds the row-major
    position 0..3 of the maximum inside each window (first max on ties).
    """
    x = np.asarray(x)
    xb, squeeze = _batched(x, 3)
    b, c, h, w = xb.shape
    if h < 2 or w < 2:
        raise ShapeMismatchError(f"maxpool2 needs H, W >= 2, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    win = (
        xb[:, :, : h2 * 2, : w2 * 2]
        .reshape(b, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h2, w2, 4)
    )
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    if squeeze:
        return out[0], idx[0]
    return out, idx


def maxpool2_backward(grad_out: np.ndarray, idx: np.ndarray, in_shape: tuple[int, ...]) -> np.ndarray:
    """Scatter pooled gradients back to the winner positions; dropped cells get 0."""
    gb, squeeze = _batched(np.asarray(grad_out), 3)
    ib, _ = _batched(np.asarray(idx), 3)
    h, w = in_shape[-2], in_shape[-1]
    b, c, h2, w2 = gb.shape
    win = np.zeros((b, c, h2, w2, 4), dtype=np.float64)
    np.put_along_axis(win, ib[..., None], gb[..., None].astype(np.float64), axis=-1)
    grad = np.zeros((b, c, h, w), dtype=np.float64)
    grad[:, :, : h2 * 2, : w2 * 2] = (
        win.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h2 * 2, w2 * 2)
    )
    return grad[0] if squeeze else grad


def fully_connected(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map W @ x + b for x of shape (n,) or (B, n); W is (m, n)."""
    x = np.asarray(x)
    weight = np.asarray(weight)
    bias = np.asarray(bias)
    if weight.ndim != 2:
        raise ShapeMismatchError(f"weight must be 2-d, got {weight.shape}")
    m, n = weight.shape
    if x.shape[-1] != n or x.ndim not in (1, 2):
        raise ShapeMismatchError(f"input {x.shape} incompatible with weight {weight.shape}")
    if bias.shape != (m,):
        raise ShapeMismatchError(f"bias must be ({m},), got {bias.shape}")
    out = x.astype(np.float64) @ weight.astype(np.float64).T + bias.astype(np.float64)
    return out.astype(x.dtype)


def fully_connected_backward(
    grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of fully_connected: (grad_x, grad_weight, grad_bias) in float64."""
    g = np.atleast_2d(np.asarray(grad_out)).astype(np.float64)
    xb = np.atleast_2d(np.asarray(x)).astype(np.float64)
    grad_x = g @ weight.astype(np.float64)
    grad_w = g.T @ xb
    grad_b = g.sum(axis=0)
    if np.asarray(x).ndim == 1:
        grad_x = grad_x[0]
    return grad_x, grad_w, grad_b


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise max(x, 0)."""
    return np.maximum(np.asarray(x), 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Pass gradient where x > 0; the gradient at exactly 0 is defined as 0."""
    return np.asarray(grad_out).astype(np.float64) * (np.asarray(x) > 0)


def he_uniform(shape: tuple[int, ...], fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """He-uniform draw U(-sqrt(6/fan_in), +sqrt(6/fan_in)) stored as float32."""
    limit = float(np.sqrt(6.0 / fan_in))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter.

    Moments are stored in the parameter dtype; the update itself is
    computed in float64.
    """

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def initialize(cls, params: dict[str, np.ndarray], **kwargs) -> "AdamState":
        m = {name: np.zeros_like(p) for name, p in params.items()}
        v = {name: np.zeros_like(p) for name, p in params.items()}
        return cls(m=m, v=v, **kwargs)


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update with bias correction; returns new params and state."""
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    t = state.t + 1
    b1, b2, eps = state.beta1, state.beta2, state.eps
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ShapeMismatchError(f"gradient for {name!r} has shape {g.shape}, param {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for {name!r}")
        m = b1 * state.m[name].astype(np.float64) + (1 - b1) * g
        v = b2 * state.v[name].astype(np.float64) + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new = p.astype(np.float64) - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_params[name] = new.astype(p.dtype)
        new_m[name] = m.astype(p.dtype)
        new_v[name] = v.astype(p.dtype)
    return new_params, AdamState(m=new_m, v=new_v, t=t, beta1=b1, beta2=b2, eps=eps)


def finite_difference_check(
    loss_fn,
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    h: float = 1e-3,
    entries_per_tensor: int = 0,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``loss_fn(params)`` must return a scalar.  The check runs in float64
    (params are upcast once).  ``entries_per_tensor`` > 0 samples that many
    random entries from every tensor; 0 checks every entry.  Returns the
    max relative error, |ga - gn| / max(|ga|, |gn|, 1e-3); the floor keeps
    near-zero gradients from amplifying finite-difference truncation noise.
    """
    p64 = {k: v.astype(np.float64).copy() for k, v in params.items()}
    worst = 0.0
    for name, p in p64.items():
        flat = p.reshape(-1)
        if entries_per_tensor and flat.size > entries_per_tensor:
            if rng is None:
                rng = np.random.default_rng(0)
            picks = rng.choice(flat.size, size=entries_per_tensor, replace=False)
        else:
            picks = np.arange(flat.size)
        ga_flat = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + h
            lp = float(loss_fn(p64))
            flat[i] = orig - h
            lm = float(loss_fn(p64))
            flat[i] = orig
            gn = (lp - lm) / (2 * h)
            ga = ga_flat[i]
            rel = abs(ga - gn) / max(abs(ga), abs(gn), 1e-3)
            worst = max(worst, rel)
    return worst
