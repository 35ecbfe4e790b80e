"""Confidence-aware gaze network, its variance-weighted loss, and training.

The network ingests a left and a right eye patch through separate
conv->pool->conv->pool->fc branches, concatenates the two 64-d branch
codes, and runs them through a small fully-connected head that also
receives the head pitch/yaw after the first fusion layer.  The four
outputs are pitch, yaw (radians) and one log-variance per angle; the
predicted variance doubles as the per-angle uncertainty, and the sample
uncertainty is the larger of the two.

The loss for each angle is ``s/2 + smooth_l1(residual) * exp(-s) / 2``
with ``s = ln(variance)``: the first term penalizes blanket uncertainty,
the second down-weights the residual of samples the model flags as
unreliable.  Minimizing over ``s`` for a fixed residual ``l`` gives
``variance = l``, so a converged model predicts its own expected error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import (
    CorruptCheckpointError,
    EmptyDatasetError,
    NoForwardPassError,
    ShapeMismatchError,
)
from .synth import PATCH_H, PATCH_W, EyeSample

__all__ = [
    "LOG_VAR_CLAMP",
    "GazeEstimate",
    "TrainConfig",
    "EpochStats",
    "GazeNet",
    "smooth_l1",
    "smooth_l1_grad",
    "nll_loss",
    "batch_nll",
    "train",
    "train_validation_split",
    "save_checkpoint",
    "load_checkpoint",
]

LOG_VAR_CLAMP = 10.0

_SIDES = ("left", "right")
_BRANCH_PARAMS = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc_w", "fc_b")
_FUSION_PARAMS = ("fuse1_w", "fuse1_b", "fuse2_w", "fuse2_b", "head_w", "head_b")
PARAM_ORDER = tuple(f"{s}_{p}" for s in _SIDES for p in _BRANCH_PARAMS) + _FUSION_PARAMS


@dataclass(frozen=True)
class GazeEstimate:
    """One prediction: angles in radians plus per-angle variances."""

    pitch: float
    yaw: float
    log_var_pitch: float
    log_var_yaw: float
    sigma2_pitch: float
    sigma2_yaw: float
    overall_uncertainty: float

    @classmethod
    def from_outputs(cls, raw: np.ndarray) -> "GazeEstimate":
        """Build an estimate from the 4 raw network outputs (log-variances clamped)."""
        s_p = float(np.clip(raw[2], -LOG_VAR_CLAMP, LOG_VAR_CLAMP))
        s_y = float(np.clip(raw[3], -LOG_VAR_CLAMP, LOG_VAR_CLAMP))
        v_p, v_y = float(np.exp(s_p)), float(np.exp(s_y))
        return cls(
            pitch=float(raw[0]),
            yaw=float(raw[1]),
            log_var_pitch=s_p,
            log_var_yaw=s_y,
            sigma2_pitch=v_p,
            sigma2_yaw=v_y,
            overall_uncertainty=max(v_p, v_y),
        )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 40
    lr_decay_epoch: int = 25
    lr_decay_factor: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not (0 < self.lr_decay_factor <= 1):
            raise ValueError("lr_decay_factor must be in (0, 1]")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


def smooth_l1(d):
    """0.5*d^2 for |d| < 1, |d| - 0.5 otherwise; elementwise on arrays."""
    a = np.abs(np.asarray(d, dtype=np.float64))
    out = np.where(a < 1.0, 0.5 * a * a, a - 0.5)
    return float(out) if np.isscalar(d) or np.ndim(d) == 0 else out


def smooth_l1_grad(d):
    """Derivative of smooth_l1: d inside the quadratic zone, sign(d) outside."""
    d64 = np.asarray(d, dtype=np.float64)
    out = np.where(np.abs(d64) < 1.0, d64, np.sign(d64))
    return float(out) if np.isscalar(d) or np.ndim(d) == 0 else out


def nll_loss(pred: GazeEstimate, label: tuple[float, float]) -> float:
    """Variance-weighted loss summed over pitch and yaw for one prediction."""
    total = 0.0
    for angle, s, target in (
        (pred.pitch, pred.log_var_pitch, label[0]),
        (pred.yaw, pred.log_var_yaw, label[1]),
    ):
        total += 0.5 * s + 0.5 * smooth_l1(angle - target) * np.exp(-s)
    return float(total)


def batch_nll(raw: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss over a batch of raw outputs plus its gradient w.r.t. them.

    ``raw`` is (B, 4); log-variances are clamped like in prediction, and
    the clamp blocks the gradient outside (-LOG_VAR_CLAMP, +LOG_VAR_CLAMP).
    """
    raw64 = raw.astype(np.float64)
    b = raw64.shape[0]
    s_raw = raw64[:, 2:4]
    s = np.clip(s_raw, -LOG_VAR_CLAMP, LOG_VAR_CLAMP)
    d = raw64[:, 0:2] - labels.astype(np.float64)
    l = smooth_l1(d)
    inv_var = np.exp(-s)
    loss = float(np.mean(np.sum(0.5 * s + 0.5 * l * inv_var, axis=1)))
    grad = np.empty_like(raw64)
    grad[:, 0:2] = 0.5 * inv_var * smooth_l1_grad(d) / b
    inside = (s_raw > -LOG_VAR_CLAMP) & (s_raw < LOG_VAR_CLAMP)
    grad[:, 2:4] = (0.5 - 0.5 * l * inv_var) * inside / b
    return loss, grad


class GazeNet:
    """Two eye branches plus a fusion head; geometry inferred from the params.

    ``initialize()`` builds the standard desk-scale topology for 36x60
    patches (conv 1->8, pool, conv 8->16, pool, fc 2160->64 per eye;
    fusion 128->64, +head angles, 66->32, 32->4).  Tests use reduced
    widths through the keyword arguments.
    """

    def __init__(self, params: dict[str, np.ndarray], patch_hw: tuple[int, int] = (PATCH_H, PATCH_W)):
        missing = [n for n in PARAM_ORDER if n not in params]
        if missing:
            raise ShapeMismatchError(f"missing parameters: {missing}")
        self.params = dict(params)
        self.patch_h, self.patch_w = patch_hw
        c2 = params["left_conv2_w"].shape[0]
        expected_flat = c2 * (self.patch_h // 4) * (self.patch_w // 4)
        if params["left_fc_w"].shape[1] != expected_flat:
            raise ShapeMismatchError(
                f"fc expects {params['left_fc_w'].shape[1]} features, "
                f"{self.patch_h}x{self.patch_w} patches produce {expected_flat}"
            )
        self._cache: dict | None = None

    @classmethod
    def initialize(
        cls,
        seed: int = 0,
        conv_channels: tuple[int, int] = (8, 16),
        eye_fc: int = 64,
        fusion_fc: tuple[int, int] = (64, 32),
        patch_hw: tuple[int, int] = (PATCH_H, PATCH_W),
    ) -> "GazeNet":
        rng = np.random.default_rng([seed, 0])
        c1, c2 = conv_channels
        h, w = patch_hw
        flat = c2 * (h // 4) * (w // 4)
        params: dict[str, np.ndarray] = {}
        for side in _SIDES:
            params[f"{side}_conv1_w"] = nn.he_uniform((c1, 1, 3, 3), 9, rng)
            params[f"{side}_conv1_b"] = np.zeros(c1, dtype=np.float32)
            params[f"{side}_conv2_w"] = nn.he_uniform((c2, c1, 3, 3), c1 * 9, rng)
            params[f"{side}_conv2_b"] = np.zeros(c2, dtype=np.float32)
            params[f"{side}_fc_w"] = nn.he_uniform((eye_fc, flat), flat, rng)
            params[f"{side}_fc_b"] = np.zeros(eye_fc, dtype=np.float32)
        f1, f2 = fusion_fc
        params["fuse1_w"] = nn.he_uniform((f1, 2 * eye_fc), 2 * eye_fc, rng)
        params["fuse1_b"] = np.zeros(f1, dtype=np.float32)
        params["fuse2_w"] = nn.he_uniform((f2, f1 + 2), f1 + 2, rng)
        params["fuse2_b"] = np.zeros(f2, dtype=np.float32)
        params["head_w"] = nn.he_uniform((4, f2), f2, rng)
        params["head_b"] = np.zeros(4, dtype=np.float32)
        return cls(params, patch_hw=(h, w))

    def astype(self, dtype) -> "GazeNet":
        """Copy of the network with parameters cast to ``dtype``."""
        params = {k: v.astype(dtype) for k, v in self.params.items()}
        return GazeNet(params, patch_hw=(self.patch_h, self.patch_w))

    # -- forward / backward -------------------------------------------------

    def _branch_forward(self, side: str, x: np.ndarray, p: dict, cache: dict) -> np.ndarray:
        a1 = nn.conv2d(x, p[f"{side}_conv1_w"], p[f"{side}_conv1_b"])
        r1 = nn.relu(a1)
        p1, i1 = nn.maxpool2(r1)
        a2 = nn.conv2d(p1, p[f"{side}_conv2_w"], p[f"{side}_conv2_b"])
        r2 = nn.relu(a2)
        p2, i2 = nn.maxpool2(r2)
        flat = p2.reshape(p2.shape[0], -1)
        f = nn.fully_connected(flat, p[f"{side}_fc_w"], p[f"{side}_fc_b"])
        g = nn.relu(f)
        cache[side] = dict(x=x, a1=a1, r1=r1, i1=i1, p1=p1, a2=a2, r2=r2, i2=i2, flat=flat, f=f, g=g)
        return g

    def _branch_backward(self, side: str, grad_g: np.ndarray, p: dict, c: dict, grads: dict) -> None:
        cb = c[side]
        grad_f = nn.relu_backward(grad_g, cb["f"])
        grad_flat, grads[f"{side}_fc_w"], grads[f"{side}_fc_b"] = nn.fully_connected_backward(
            grad_f, cb["flat"], p[f"{side}_fc_w"]
        )
        grad_p2 = grad_flat.reshape((grad_flat.shape[0],) + cb["i2"].shape[1:])
        grad_r2 = nn.maxpool2_backward(grad_p2, cb["i2"], cb["r2"].shape)
        grad_a2 = nn.relu_backward(grad_r2, cb["a2"])
        grad_p1, grads[f"{side}_conv2_w"], grads[f"{side}_conv2_b"] = nn.conv2d_backward(
            grad_a2, cb["p1"], p[f"{side}_conv2_w"]
        )
        grad_r1 = nn.maxpool2_backward(grad_p1, cb["i1"], cb["r1"].shape)
        grad_a1 = nn.relu_backward(grad_r1, cb["a1"])
        _, grads[f"{side}_conv1_w"], grads[f"{side}_conv1_b"] = nn.conv2d_backward(
            grad_a1, cb["x"], p[f"{side}_conv1_w"]
        )

    def _forward(self, left: np.ndarray, right: np.ndarray, head: np.ndarray) -> tuple[np.ndarray, dict]:
        """Pure batched forward; returns raw (B, 4) outputs and the activation cache."""
        p = self.params
        cache: dict = {}
        gl = self._branch_forward("left", left, p, cache)
        gr = self._branch_forward("right", right, p, cache)
        z = np.concatenate([gl, gr], axis=1)
        u_pre = nn.fully_connected(z, p["fuse1_w"], p["fuse1_b"])
        u = nn.relu(u_pre)
        v = np.concatenate([u, head.astype(u.dtype)], axis=1)
        t_pre = nn.fully_connected(v, p["fuse2_w"], p["fuse2_b"])
        t = nn.relu(t_pre)
        out = nn.fully_connected(t, p["head_w"], p["head_b"])
        cache.update(z=z, u_pre=u_pre, u=u, v=v, t_pre=t_pre, t=t)
        return out, cache

    def forward(self, left: np.ndarray, right: np.ndarray, head: np.ndarray) -> np.ndarray:
        """Batched forward that records activations for a following backward()."""
        out, cache = self._forward(left, right, head)
        self._cache = cache
        return out

    def backward(self, grad_out: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of every parameter given d(loss)/d(raw outputs)."""
        if self._cache is None:
            raise NoForwardPassError("forward() must run before backward()")
        c = self._cache
        p = self.params
        grads: dict[str, np.ndarray] = {}
        grad_t, grads["head_w"], grads["head_b"] = nn.fully_connected_backward(
            grad_out, c["t"], p["head_w"]
        )
        grad_t_pre = nn.relu_backward(grad_t, c["t_pre"])
        grad_v, grads["fuse2_w"], grads["fuse2_b"] = nn.fully_connected_backward(
            grad_t_pre, c["v"], p["fuse2_w"]
        )
        n_u = c["u"].shape[1]
        grad_u_pre = nn.relu_backward(grad_v[:, :n_u], c["u_pre"])
        grad_z, grads["fuse1_w"], grads["fuse1_b"] = nn.fully_connected_backward(
            grad_u_pre, c["z"], p["fuse1_w"]
        )
        half = c["left"]["g"].shape[1]
        self._branch_backward("left", grad_z[:, :half], p, c, grads)
        self._branch_backward("right", grad_z[:, half:], p, c, grads)
        return grads

    # -- inference ----------------------------------------------------------

    def _check_patch(self, patch: np.ndarray) -> None:
        if patch.shape != (self.patch_h, self.patch_w):
            raise ShapeMismatchError(
                f"expected {self.patch_h}x{self.patch_w} patch, got {patch.shape}"
            )

    def predict(self, sample: EyeSample) -> GazeEstimate:
        """Deterministic single-sample inference (thread-safe: no cache kept)."""
        self._check_patch(sample.left)
        self._check_patch(sample.right)
        left = sample.left[None, None]
        right = sample.right[None, None]
        head = np.array([[sample.head_pitch, sample.head_yaw]], dtype=np.float32)
        raw, _ = self._forward(left, right, head)
        return GazeEstimate.from_outputs(raw[0])

    def predict_batch(self, samples, chunk: int = 128) -> list[GazeEstimate]:
        """Inference over a sequence of samples, chunked to bound memory."""
        estimates: list[GazeEstimate] = []
        for start in range(0, len(samples), chunk):
            part = samples[start : start + chunk]
            left, right, head, _ = _stack_batch(part)
            raw, _ = self._forward(left, right, head)
            estimates.extend(GazeEstimate.from_outputs(row) for row in raw)
        return estimates


def _stack_batch(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    left = np.stack([s.left for s in samples])[:, None]
    right = np.stack([s.right for s in samples])[:, None]
    head = np.array([[s.head_pitch, s.head_yaw] for s in samples], dtype=np.float32)
    labels = np.array([[s.gaze_pitch, s.gaze_yaw] for s in samples], dtype=np.float32)
    return left, right, head, labels


def loss_and_grads(net: GazeNet, samples) -> tuple[float, dict[str, np.ndarray]]:
    """Mean batch loss and the gradient of every parameter."""
    dtype = net.params["head_w"].dtype
    left, right, head, labels = _stack_batch(samples)
    raw = net.forward(left.astype(dtype), right.astype(dtype), head.astype(dtype))
    loss, grad_raw = batch_nll(raw, labels)
    return loss, net.backward(grad_raw)


def train_validation_split(dataset, seed: int) -> tuple[list, list]:
    """Seeded 80/20 shuffle split; returns (train, validation) lists."""
    rng = np.random.default_rng([seed, 1])
    perm = rng.permutation(len(dataset))
    n_val = len(dataset) // 5
    val = [dataset[i] for i in perm[:n_val]]
    tr = [dataset[i] for i in perm[n_val:]]
    return tr, val


def train(dataset, config: TrainConfig) -> tuple[GazeNet, list[EpochStats]]:
    """Train the standard network on EyeSamples; deterministic per seed.

    The learning rate is multiplied by ``lr_decay_factor`` once, at the
    start of epoch ``lr_decay_epoch + 1``.  History records the mean
    train and validation loss of every epoch.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    net = GazeNet.initialize(seed=config.seed)
    train_set, val_set = train_validation_split(dataset, config.seed)
    epoch_rng = np.random.default_rng([config.seed, 2])
    state = nn.AdamState.initialize(net.params)
    lr = config.lr
    history: list[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        if epoch == config.lr_decay_epoch + 1:
            lr *= config.lr_decay_factor
        order = epoch_rng.permutation(len(train_set))
        total, seen = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start : start + config.batch_size]]
            loss, grads = loss_and_grads(net, batch)
            net.params, state = nn.adam_step(net.params, grads, state, lr)
            total += loss * len(batch)
            seen += len(batch)
        val_loss = _mean_loss(net, val_set) if val_set else float("nan")
        history.append(EpochStats(epoch, total / seen, val_loss, lr))
    return net, history


def _mean_loss(net: GazeNet, samples, chunk: int = 256) -> float:
    total = 0.0
    for start in range(0, len(samples), chunk):
        part = samples[start : start + chunk]
        left, right, head, labels = _stack_batch(part)
        raw, _ = net._forward(left, right, head)
        loss, _ = batch_nll(raw, labels)
        total += loss * len(part)
    return total / len(samples)


# -- checkpoint i/o ----------------------------------------------------------

_MAGIC = b"CAGZ"
_VERSION = 1


def save_checkpoint(net: GazeNet, path) -> None:
    """Write magic, version, layer count, then per-layer dims and float32 LE data."""
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<I", _VERSION)
    blob += struct.pack("<I", len(PARAM_ORDER))
    for name in PARAM_ORDER:
        arr = net.params[name]
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path) -> GazeNet:
    """Read a checkpoint written by save_checkpoint; bit-exact round trip."""
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise CorruptCheckpointError("truncated checkpoint")
        out = blob[off : off + n]
        off += n
        return out

    if take(4) != _MAGIC:
        raise CorruptCheckpointError("bad magic bytes")
    (version,) = struct.unpack("<I", take(4))
    if version != _VERSION:
        raise CorruptCheckpointError(f"unsupported version {version}")
    (count,) = struct.unpack("<I", take(4))
    if count != len(PARAM_ORDER):
        raise CorruptCheckpointError(f"expected {len(PARAM_ORDER)} layers, found {count}")
    params: dict[str, np.ndarray] = {}
    for name in PARAM_ORDER:
        (ndim,) = struct.unpack("<I", take(4))
        if ndim == 0 or ndim > 4:
            raise CorruptCheckpointError(f"implausible ndim {ndim} for {name!r}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape))
        data = np.frombuffer(take(4 * n), dtype="<f4")
        params[name] = data.reshape(shape).astype(np.float32)
    if off != len(blob):
        raise CorruptCheckpointError("trailing bytes after parameter data")
    try:
        return GazeNet(params)
    except (ShapeMismatchError, ZeroDivisionError) as exc:
        raise CorruptCheckpointError(f"inconsistent parameter shapes: {exc}") from exc
