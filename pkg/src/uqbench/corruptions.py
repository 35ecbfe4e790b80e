"""Severity-parameterized image degradations, severity 0 = identity.

Twelve patch-level corruptions cover noise, blur, weather, and value
transforms; two crop-window displacements (horizontal/vertical) consume
the full canvas instead, sliding the 36x60 window off the eye center by
``round(severity/5 * patch dimension)`` pixels with edge replication.

Every corruption is a pure function of (image, spec): randomness comes
from a generator seeded by (spec.seed, kind, severity) only.  Severity
constants are sized for 36x60 grayscale patches and can be overridden
through the ``tables`` argument (see DEFAULT_TABLES for the keys).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import ShapeMismatchError, WrongCorruptionFamilyError
from .synth import CANVAS_H, CANVAS_W, PATCH_H, PATCH_W, EyeSample

__all__ = [
    "KINDS",
    "OFFCROP_KINDS",
    "PATCH_KINDS",
    "DEFAULT_TABLES",
    "CorruptionSpec",
    "apply_corruption",
    "off_crop",
    "off_crop_offset",
    "corrupt_sample",
]

PATCH_KINDS = (
    "gaussian_noise",
    "shot_noise",
    "impulse_noise",
    "defocus_blur",
    "glass_blur",
    "motion_blur",
    "zoom_blur",
    "snow",
    "fog",
    "brightness",
    "contrast",
    "pixelate",
)
OFFCROP_KINDS = ("offcrop_horizontal", "offcrop_vertical")
KINDS = PATCH_KINDS + OFFCROP_KINDS

# index = severity - 1
DEFAULT_TABLES: dict[str, dict[str, tuple]] = {
    "gaussian_noise": {"sigma": (0.04, 0.08, 0.12, 0.18, 0.26)},
    "shot_noise": {"photons": (60, 25, 12, 5, 3)},
    "impulse_noise": {"fraction": (0.02, 0.06, 0.10, 0.17, 0.27)},
    "defocus_blur": {"radius": (1, 2, 3, 4, 6)},
    "glass_blur": {"displacement": (1, 1, 2, 2, 3), "iterations": (1, 2, 2, 3, 3)},
    "motion_blur": {"length": (3, 5, 7, 9, 12)},
    "zoom_blur": {"max_zoom": (1.06, 1.11, 1.16, 1.21, 1.26)},
    "snow": {"density": (0.01, 0.02, 0.04, 0.06, 0.09), "lift": (0.02, 0.04, 0.06, 0.08, 0.10)},
    "fog": {"alpha": (0.15, 0.25, 0.35, 0.45, 0.55)},
    "brightness": {"delta": (0.1, 0.2, 0.3, 0.4, 0.5)},
    "contrast": {"scale": (0.6, 0.45, 0.3, 0.2, 0.1)},
    "pixelate": {"factor": (0.8, 0.65, 0.5, 0.4, 0.3)},
}


@dataclass(frozen=True)
class CorruptionSpec:
    """Corruption kind, integer severity 0-5, and the degradation seed."""

    kind: str
    severity: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown corruption kind {self.kind!r}")
        if not 0 <= self.severity <= 5:
            raise ValueError(f"severity must be 0..5, got {self.severity}")


def _rng(spec: CorruptionSpec) -> np.random.Generator:
    return np.random.default_rng([spec.seed & 0x7FFFFFFF, KINDS.index(spec.kind), spec.severity])


def _param(tables, kind: str, key: str, severity: int):
    table = (tables or DEFAULT_TABLES).get(kind, DEFAULT_TABLES[kind])
    return table[key][severity - 1]


# -- per-kind implementations (img float64 in [0,1], returns float64) --------


def _gaussian_noise(img, rng, sigma):
    return img + rng.normal(0.0, sigma, size=img.shape)


def _shot_noise(img, rng, photons):
    return rng.poisson(img * photons).astype(np.float64) / photons


def _impulse_noise(img, rng, fraction):
    out = img.copy()
    hit = rng.random(img.shape) < fraction
    salt = rng.random(img.shape) < 0.5
    out[hit & salt] = 1.0
    out[hit & ~salt] = 0.0
    return out


def _disk_kernel(radius: int) -> np.ndarray:
    r = int(radius)
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    mask = (dy * dy + dx * dx) <= r * r
    return mask / mask.sum()


def _defocus_blur(img, rng, radius):
    return ndimage.convolve(img, _disk_kernel(radius), mode="nearest")


def _glass_blur(img, rng, displacement, iterations):
    out = img.copy()
    h, w = out.shape
    d = int(displacement)
    for _ in range(int(iterations)):
        offs = rng.integers(-d, d + 1, size=(h - 2 * d, w - 2 * d, 2))
        for y in range(d, h - d):
            for x in range(d, w - d):
                dy, dx = offs[y - d, x - d]
                out[y, x], out[y + dy, x + dx] = out[y + dy, x + dx], out[y, x]
    return out


def _motion_blur(img, rng, length):
    theta = rng.uniform(0.0, np.pi)
    n = int(length)
    half = (n - 1) / 2.0
    r = int(np.ceil(half)) + 1
    kernel = np.zeros((2 * r + 1, 2 * r + 1))
    for i in range(n):
        t = i - half
        y = r + int(np.floor(t * np.sin(theta) + 0.5))
        x = r + int(np.floor(t * np.cos(theta) + 0.5))
        kernel[y, x] += 1.0
    kernel /= kernel.sum()
    return ndimage.convolve(img, kernel, mode="nearest")


def _zoom_blur(img, rng, max_zoom):
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    acc = np.zeros_like(img)
    zooms = np.arange(1.0, max_zoom + 1e-9, 0.01)
    for z in zooms:
        coords = np.stack([(yy - cy) / z + cy, (xx - cx) / z + cx])
        acc += ndimage.map_coordinates(img, coords, order=1, mode="nearest")
    return acc / len(zooms)


def _snow(img, rng, density, lift):
    h, w = img.shape
    layer = np.zeros_like(img)
    n_streaks = int(np.rint(density * h * w))
    for _ in range(n_streaks):
        y0 = rng.uniform(0, h)
        x0 = rng.uniform(0, w)
        theta = rng.uniform(np.pi / 3, 2 * np.pi / 3)  # mostly downward streaks
        length = rng.uniform(4.0, 9.0)
        bright = rng.uniform(0.5, 0.8)
        t = np.linspace(0.0, length, int(2 * length))
        ys = np.clip(np.rint(y0 + t * np.sin(theta)), 0, h - 1).astype(int)
        xs = np.clip(np.rint(x0 + t * np.cos(theta)), 0, w - 1).astype(int)
        np.maximum.at(layer, (ys, xs), bright)
    return img + layer + lift


def _plasma(rng, h: int, w: int) -> np.ndarray:
    """Multi-octave value noise, min-max normalized to [0, 1]."""
    acc = np.zeros((h, w))
    weight = 1.0
    size = (3, 5)
    while size[0] < h or size[1] < w:
        grid = rng.random(size)
        yy = np.linspace(0, size[0] - 1, h)
        xx = np.linspace(0, size[1] - 1, w)
        coords = np.stack(np.meshgrid(yy, xx, indexing="ij"))
        acc += weight * ndimage.map_coordinates(grid, coords, order=1, mode="nearest")
        weight *= 0.5
        size = (size[0] * 2 - 1, size[1] * 2 - 1)
    lo, hi = acc.min(), acc.max()
    return (acc - lo) / (hi - lo) if hi > lo else np.zeros_like(acc)


def _fog(img, rng, alpha):
    fog_layer = 0.7 + 0.3 * _plasma(rng, *img.shape)
    return (1.0 - alpha) * img + alpha * fog_layer


def _brightness(img, rng, delta):
    return img + delta


def _contrast(img, rng, scale):
    mean = img.mean()
    return (img - mean) * scale + mean


def _pixelate(img, rng, factor):
    h, w = img.shape
    hs = max(1, int(np.rint(h * factor)))
    ws = max(1, int(np.rint(w * factor)))
    rowmap = (np.arange(h) * hs) // h
    colmap = (np.arange(w) * ws) // w
    sums = np.zeros((hs, ws))
    counts = np.zeros((hs, ws))
    np.add.at(sums, (rowmap[:, None], colmap[None, :]), img)
    np.add.at(counts, (rowmap[:, None], colmap[None, :]), 1.0)
    low = sums / counts
    return low[rowmap[:, None], colmap[None, :]]


_PATCH_FNS = {
    "gaussian_noise": (_gaussian_noise, ("sigma",)),
    "shot_noise": (_shot_noise, ("photons",)),
    "impulse_noise": (_impulse_noise, ("fraction",)),
    "defocus_blur": (_defocus_blur, ("radius",)),
    "glass_blur": (_glass_blur, ("displacement", "iterations")),
    "motion_blur": (_motion_blur, ("length",)),
    "zoom_blur": (_zoom_blur, ("max_zoom",)),
    "snow": (_snow, ("density", "lift")),
    "fog": (_fog, ("alpha",)),
    "brightness": (_brightness, ("delta",)),
    "contrast": (_contrast, ("scale",)),
    "pixelate": (_pixelate, ("factor",)),
}


def apply_corruption(patch: np.ndarray, spec: CorruptionSpec, tables=None) -> np.ndarray:
    """Degrade a patch at the spec's severity; severity 0 returns it unchanged."""
    if spec.kind in OFFCROP_KINDS:
        raise WrongCorruptionFamilyError(
            f"{spec.kind} operates on canvases; use off_crop()"
        )
    if patch.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-d patch, got shape {patch.shape}")
    if spec.severity == 0:
        return patch.copy()
    fn, keys = _PATCH_FNS[spec.kind]
    args = [_param(tables, spec.kind, k, spec.severity) for k in keys]
    out = fn(patch.astype(np.float64), _rng(spec), *args)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def off_crop_offset(kind: str, severity: int) -> int:
    """Crop-center displacement in pixels: round(severity/5 * patch dimension)."""
    span = PATCH_W if kind == "offcrop_horizontal" else PATCH_H
    return int(np.floor(severity * span / 5.0 + 0.5))


def off_crop(canvas: np.ndarray, kind: str, severity: int) -> np.ndarray:
    """Crop 36x60 from a displaced window; out-of-canvas pixels edge-replicate."""
    if kind not in OFFCROP_KINDS:
        raise ValueError(f"{kind!r} is not an off-crop kind")
    if canvas.shape != (CANVAS_H, CANVAS_W):
        raise ShapeMismatchError(
            f"expected {CANVAS_H}x{CANVAS_W} canvas, got {canvas.shape}"
        )
    if not 0 <= severity <= 5:
        raise ValueError(f"severity must be 0..5, got {severity}")
    offset = off_crop_offset(kind, severity)
    y0 = (CANVAS_H - PATCH_H) // 2
    x0 = (CANVAS_W - PATCH_W) // 2
    rows = np.arange(y0, y0 + PATCH_H)
    cols = np.arange(x0, x0 + PATCH_W)
    if kind == "offcrop_horizontal":
        cols = cols + offset
    else:
        rows = rows + offset
    rows = np.clip(rows, 0, CANVAS_H - 1)
    cols = np.clip(cols, 0, CANVAS_W - 1)
    return np.ascontiguousarray(canvas[rows[:, None], cols[None, :]])


def corrupt_sample(sample: EyeSample, spec: CorruptionSpec, tables=None) -> EyeSample:
    """Corrupt both eye patches; labels, head angles, and canvases unchanged.

    Patch corruptions derive per-eye seeds as seed ^ sample_id ^ eye_index
    so the two eyes see independent noise; off-crops re-crop both canvases
    with the same window displacement.
    """
    if spec.kind in OFFCROP_KINDS:
        left = off_crop(sample.left_canvas, spec.kind, spec.severity)
        right = off_crop(sample.right_canvas, spec.kind, spec.severity)
    else:
        left = apply_corruption(
            sample.left, replace(spec, seed=spec.seed ^ sample.sample_id ^ 0), tables
        )
        right = apply_corruption(
            sample.right, replace(spec, seed=spec.seed ^ sample.sample_id ^ 1), tables
        )
    return EyeSample(
        sample_id=sample.sample_id,
        left=left,
        right=right,
        left_canvas=sample.left_canvas,
        right_canvas=sample.right_canvas,
        head_pitch=sample.head_pitch,
        head_yaw=sample.head_yaw,
        gaze_pitch=sample.gaze_pitch,
        gaze_yaw=sample.gaze_yaw,
    )
