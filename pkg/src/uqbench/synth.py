"""Procedural synthetic eye images and dataset file I/O.

Each sample is rendered on a 72x120 canvas; the network consumes the
36x60 center crop, and the canvas margin is what gives off-cropping real
content to slide into.  The iris center moves 40 px per radian of gaze,
so labels are recoverable from pixel positions by construction; style
parameters (lighting, iris size, eyelid droop) are drawn per sample from
a seeded generator, which is the only source of appearance variety.

Canvases are snapped to the 8-bit grid at generation time so in-memory
samples are bit-identical to a PGM write/read round trip.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import GazeOutOfRangeError, IoFailureError
from .pgm import quantize, read_pgm, write_pgm

__all__ = [
    "CANVAS_H",
    "CANVAS_W",
    "PATCH_H",
    "PATCH_W",
    "GAZE_LIMIT_RAD",
    "PX_PER_RAD",
    "EyeSample",
    "DatasetManifest",
    "render_eye",
    "center_crop",
    "make_samples",
    "generate_dataset",
    "load_dataset",
]

CANVAS_H, CANVAS_W = 72, 120
PATCH_H, PATCH_W = 36, 60
GAZE_LIMIT_RAD = float(np.radians(25.0))
PX_PER_RAD = 40.0

_SS = 2  # supersampling factor for anti-aliased edges


@dataclass(eq=False)
class EyeSample:
    """Network input/label pair: eye patches, their canvases, and angles."""

    sample_id: int
    left: np.ndarray
    right: np.ndarray
    left_canvas: np.ndarray
    right_canvas: np.ndarray
    head_pitch: float
    head_yaw: float
    gaze_pitch: float
    gaze_yaw: float


@dataclass
class DatasetManifest:
    """Rows of (sample_id, image paths, angles); paths relative to base_dir."""

    base_dir: str
    rows: list[dict]


def center_crop(canvas: np.ndarray) -> np.ndarray:
    """The nominal 36x60 crop an off-crop of severity 0 reproduces."""
    y0 = (CANVAS_H - PATCH_H) // 2
    x0 = (CANVAS_W - PATCH_W) // 2
    return canvas[y0 : y0 + PATCH_H, x0 : x0 + PATCH_W]


def render_eye(
    gaze: tuple[float, float], head: tuple[float, float], style_seed: int
) -> np.ndarray:
    """Render one 72x120 eye canvas for (pitch, yaw) gaze in radians.

    Pure function: identical arguments give a bit-identical float32
    canvas.  Head angles are carried for interface symmetry with the
    network input; the canvas itself depends on gaze and style only.
    """
    pitch, yaw = float(gaze[0]), float(gaze[1])
    del head
    if abs(pitch) > GAZE_LIMIT_RAD + 1e-12 or abs(yaw) > GAZE_LIMIT_RAD + 1e-12:
        raise GazeOutOfRangeError(f"gaze ({pitch:.3f}, {yaw:.3f}) rad exceeds +-25 degrees")

    rng = np.random.default_rng(style_seed)
    skin = 0.62 + rng.uniform(-0.06, 0.06)
    shade_dir = rng.uniform(0.0, 2.0 * np.pi)
    shade_amp = rng.uniform(0.0, 0.035)
    sclera_col = 0.94 + rng.uniform(-0.02, 0.02)
    iris_col = 0.27 + rng.uniform(-0.05, 0.05)
    iris_r = rng.uniform(6.5, 8.5)
    droop = rng.uniform(1.0, 6.0)
    pupil_col = 0.08
    lash_col = 0.45

    ys = (np.arange(CANVAS_H * _SS) + 0.5) / _SS
    xs = (np.arange(CANVAS_W * _SS) + 0.5) / _SS
    gx, gy = np.meshgrid(xs, ys)
    cx, cy = CANVAS_W / 2.0, CANVAS_H / 2.0

    background = skin + shade_amp * (
        (gx - cx) * np.cos(shade_dir) + (gy - cy) * np.sin(shade_dir)
    ) / 60.0
    img = background.copy()

    a, b = 27.0, 26.0  # sclera semi-axes; iris offset + radius stays inside
    sclera = ((gx - cx) / a) ** 2 + ((gy - cy) / b) ** 2 <= 1.0
    img[sclera] = sclera_col

    ix = cx + PX_PER_RAD * yaw
    iy = cy + PX_PER_RAD * pitch
    r2 = (gx - ix) ** 2 + (gy - iy) ** 2
    img[sclera & (r2 <= iris_r**2)] = iris_col
    img[sclera & (r2 <= (0.45 * iris_r) ** 2)] = pupil_col

    # upper eyelid: a parabolic arc whose droop eats into the sclera top
    lid_y = cy - (b - droop) * (1.0 - ((gx - cx) / a) ** 2)
    lid = gy < lid_y
    img[lid] = background[lid]
    lash = (np.abs(gy - lid_y) <= 0.9) & (np.abs(gx - cx) <= a)
    img[lash] = lash_col

    small = img.reshape(CANVAS_H, _SS, CANVAS_W, _SS).mean(axis=(1, 3))
    return np.clip(small, 0.0, 1.0).astype(np.float32)


def _sample_params(n: int, seed: int) -> list[dict]:
    """Draw all per-sample randomness up front (keeps threading deterministic)."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        gp = float(np.float32(rng.uniform(-GAZE_LIMIT_RAD, GAZE_LIMIT_RAD)))
        gy = float(np.float32(rng.uniform(-GAZE_LIMIT_RAD, GAZE_LIMIT_RAD)))
        hp = float(np.float32(rng.uniform(-0.2, 0.2)))
        hy = float(np.float32(rng.uniform(-0.2, 0.2)))
        seed_l = int(rng.integers(0, 2**31))
        seed_r = int(rng.integers(0, 2**31))
        out.append(dict(sample_id=i, gp=gp, gy=gy, hp=hp, hy=hy, seed_l=seed_l, seed_r=seed_r))
    return out


def _build_sample(p: dict) -> EyeSample:
    head = (p["hp"], p["hy"])
    right_canvas = quantize(render_eye((p["gp"], p["gy"]), head, p["seed_r"]))
    # the left eye is the mirror image: render with yaw negated, then flip
    left_raw = render_eye((p["gp"], -p["gy"]), head, p["seed_l"])
    left_canvas = quantize(np.ascontiguousarray(np.fliplr(left_raw)))
    return EyeSample(
        sample_id=p["sample_id"],
        left=np.ascontiguousarray(center_crop(left_canvas)),
        right=np.ascontiguousarray(center_crop(right_canvas)),
        left_canvas=left_canvas,
        right_canvas=right_canvas,
        head_pitch=p["hp"],
        head_yaw=p["hy"],
        gaze_pitch=p["gp"],
        gaze_yaw=p["gy"],
    )


def make_samples(n: int, seed: int, threads: int = 1) -> list[EyeSample]:
    """Render n samples in memory; equivalent to generate_dataset + load."""
    if n < 1:
        raise ValueError("n must be >= 1")
    params = _sample_params(n, seed)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_build_sample, params))
    return [_build_sample(p) for p in params]


MANIFEST_COLUMNS = (
    "sample_id",
    "left",
    "right",
    "left_canvas",
    "right_canvas",
    "head_pitch",
    "head_yaw",
    "gaze_pitch",
    "gaze_yaw",
)


def _fmt(x: float) -> str:
    return "%.9g" % x


def generate_dataset(n: int, seed: int, out_dir, threads: int = 1) -> DatasetManifest:
    """Render n samples and write PGMs plus a manifest CSV under out_dir."""
    samples = make_samples(n, seed, threads=threads)
    out_dir = os.fspath(out_dir)
    img_dir = os.path.join(out_dir, "images")
    try:
        os.makedirs(img_dir, exist_ok=True)
    except OSError as exc:
        raise IoFailureError(f"cannot create {img_dir}: {exc}") from exc
    rows = []
    for s in samples:
        paths = {
            "left": f"images/{s.sample_id:06d}_left.pgm",
            "right": f"images/{s.sample_id:06d}_right.pgm",
            "left_canvas": f"images/{s.sample_id:06d}_left_canvas.pgm",
            "right_canvas": f"images/{s.sample_id:06d}_right_canvas.pgm",
        }
        for key, rel in paths.items():
            write_pgm(getattr(s, key), os.path.join(out_dir, rel))
        rows.append(
            dict(
                sample_id=s.sample_id,
                **paths,
                head_pitch=s.head_pitch,
                head_yaw=s.head_yaw,
                gaze_pitch=s.gaze_pitch,
                gaze_yaw=s.gaze_yaw,
            )
        )
    manifest = DatasetManifest(base_dir=out_dir, rows=rows)
    write_manifest(manifest)
    return manifest


def manifest_path(out_dir) -> str:
    return os.path.join(os.fspath(out_dir), "manifest.csv")


def write_manifest(manifest: DatasetManifest) -> None:
    path = manifest_path(manifest.base_dir)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(MANIFEST_COLUMNS)
            for row in manifest.rows:
                writer.writerow(
                    [
                        row["sample_id"],
                        row["left"],
                        row["right"],
                        row["left_canvas"],
                        row["right_canvas"],
                        _fmt(row["head_pitch"]),
                        _fmt(row["head_yaw"]),
                        _fmt(row["gaze_pitch"]),
                        _fmt(row["gaze_yaw"]),
                    ]
                )
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def load_dataset(manifest_csv) -> list[EyeSample]:
    """Read a manifest CSV and the PGM files it references."""
    manifest_csv = os.fspath(manifest_csv)
    base = os.path.dirname(manifest_csv)
    try:
        with open(manifest_csv, newline="") as fh:
            reader = csv.DictReader(fh)
            raw_rows = list(reader)
    except OSError as exc:
        raise IoFailureError(f"cannot read {manifest_csv}: {exc}") from exc
    samples = []
    for row in raw_rows:
        samples.append(
            EyeSample(
                sample_id=int(row["sample_id"]),
                left=read_pgm(os.path.join(base, row["left"])),
                right=read_pgm(os.path.join(base, row["right"])),
                left_canvas=read_pgm(os.path.join(base, row["left_canvas"])),
                right_canvas=read_pgm(os.path.join(base, row["right_canvas"])),
                head_pitch=float(row["head_pitch"]),
                head_yaw=float(row["head_yaw"]),
                gaze_pitch=float(row["gaze_pitch"]),
                gaze_yaw=float(row["gaze_yaw"]),
            )
        )
    return samples
