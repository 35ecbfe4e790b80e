"""Uncertainty-effectiveness evaluation: sweeps, correlations, and scores.

The central idea: corrupt known-clean images at controlled severities and
ask whether the model's predicted uncertainty tracks the severity.  Per
corruption kind i we compute the Spearman rank correlation C_i between
severity and uncertainty and the least-squares slope k_i of uncertainty
on severity, then aggregate

    P = sum_i(k_i * C_i) / sum_i(|k_i|)

so kinds the model shrugs off (near-zero slope) contribute little.  P is
in [-1, 1]; values near 1 mean uncertainty rises with degradation across
the board.  Two reference scores accompany P: the same slope-weighted
aggregate computed on angular error instead of uncertainty, and the
plain Spearman correlation between uncertainty and angular error over
all corrupted predictions.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corruptions import KINDS, CorruptionSpec, corrupt_sample
from .errors import (
    DegenerateInputError,
    DegenerateSlopesError,
    InsufficientCleanImagesError,
    InsufficientDataError,
)

__all__ = [
    "spearman",
    "ls_slope",
    "effectiveness_score",
    "angular_error",
    "SweepConfig",
    "SweepRow",
    "SeveritySweep",
    "run_severity_sweep",
    "CorruptionResult",
    "EffectivenessReport",
    "evaluate_effectiveness",
    "QuantileRow",
    "quantile_report",
    "write_report_csvs",
    "write_quantile_csv",
]

SEVERITIES = (0, 1, 2, 3, 4, 5)


def average_ranks(values) -> np.ndarray:
    """1-based ranks, ties replaced by the mean rank of their run."""
    a = np.asarray(values, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    sorted_a = a[order]
    group = np.concatenate([[0], np.cumsum(sorted_a[1:] != sorted_a[:-1])])
    counts = np.bincount(group)
    ends = np.cumsum(counts)
    starts = ends - counts
    mean_rank = (starts + ends + 1) / 2.0
    ranks = np.empty(len(a), dtype=np.float64)
    ranks[order] = mean_rank[group]
    return ranks


def spearman(xs, ys) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(x) != len(y):
        raise DegenerateInputError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise DegenerateInputError("need at least 2 points")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInputError("zero-variance input")
    rx = average_ranks(x)
    ry = average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    num = np.sum(dx * dy)
    return float(num / np.sqrt(np.sum(dx * dx) * np.sum(dy * dy)))


def ls_slope(xs, ys) -> float:
    """Ordinary least squares slope of ys on xs."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise DegenerateInputError("need two equal-length sequences of >= 2 points")
    dx = x - x.mean()
    denom = np.sum(dx * dx)
    if denom == 0.0:
        raise DegenerateInputError("zero variance in x")
    return float(np.sum(dx * (y - y.mean())) / denom)


def effectiveness_score(rows) -> float:
    """Slope-weighted aggregate of per-kind correlations: sum(kC)/sum(|k|)."""
    rows = list(rows)
    if not rows:
        raise DegenerateInputError("no (slope, correlation) rows")
    num = sum(k * c for k, c in rows)
    denom = sum(abs(k) for k, _ in rows)
    if denom <= 1e-9:
        raise DegenerateSlopesError(
            "all slopes ~0: the model is uniformly insensitive to the corruptions"
        )
    return float(num / denom)


def gaze_vector(pitch: float, yaw: float) -> np.ndarray:
    """Unit 3D gaze direction (x right, y down, z forward)."""
    p, y = float(pitch), float(yaw)
    return np.array([np.cos(p) * np.sin(y), np.sin(p), np.cos(p) * np.cos(y)])


def angular_error(pred: tuple[float, float], label: tuple[float, float]) -> float:
    """Angle in degrees between two (pitch, yaw) gaze directions."""
    dot = float(np.dot(gaze_vector(*pred), gaze_vector(*label)))
    return float(np.degrees(np.arccos(np.clip(dot, -1.0, 1.0))))


# -- severity sweep -----------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    """Step-1/2 protocol knobs: pool fraction, sample count, seeds."""

    quantile: float = 0.20
    m: int = 100
    seed: int = 0
    kinds: tuple[str, ...] = KINDS


@dataclass(frozen=True)
class SweepRow:
    sample_id: int
    kind: str
    severity: int
    uncertainty: float
    angular_error_deg: float


@dataclass(frozen=True)
class SeveritySweep:
    rows: tuple[SweepRow, ...]
    config: SweepConfig
    n_dataset: int


def _predict_all(model, samples):
    if hasattr(model, "predict_batch"):
        return model.predict_batch(samples)
    return [model.predict(s) for s in samples]


def run_severity_sweep(
    model,
    dataset,
    config: SweepConfig = SweepConfig(),
    corrupt=None,
    tables=None,
    threads: int = 1,
) -> SeveritySweep:
    """Corrupt the cleanest images at severities 0-5 and record predictions.

    Step 1 ranks the dataset by predicted uncertainty, keeps the lowest
    ``quantile`` fraction, and draws ``m`` of those at random (seeded).
    Step 2 applies every configured kind at each severity to the selected
    samples and records uncertainty and angular error per row.  Rows come
    back sorted by (sample_id, kind order, severity) regardless of the
    thread count.
    """
    corrupt_fn = corrupt if corrupt is not None else corrupt_sample
    by_id = {s.sample_id: s for s in dataset}
    estimates = _predict_all(model, list(dataset))
    ranked = sorted(
        zip((e.overall_uncertainty for e in estimates), (s.sample_id for s in dataset))
    )
    pool_size = max(1, int(np.floor(config.quantile * len(ranked) + 1e-9)))
    pool = sorted(sid for _, sid in ranked[:pool_size])
    if len(pool) < config.m:
        raise InsufficientCleanImagesError(
            f"low-uncertainty pool has {len(pool)} images, need m={config.m}"
        )
    rng = np.random.default_rng([config.seed & 0x7FFFFFFF, 17])
    chosen = sorted(int(i) for i in rng.choice(np.array(pool), size=config.m, replace=False))

    def sweep_cell(args):
        sid, kind = args
        sample = by_id[sid]
        cell = []
        for severity in SEVERITIES:
            spec = CorruptionSpec(kind=kind, severity=severity, seed=config.seed)
            corrupted = corrupt_fn(sample, spec, tables) if tables is not None else corrupt_fn(sample, spec)
            est = model.predict(corrupted)
            err = angular_error(
                (est.pitch, est.yaw), (sample.gaze_pitch, sample.gaze_yaw)
            )
            cell.append(
                SweepRow(
                    sample_id=sid,
                    kind=kind,
                    severity=severity,
                    uncertainty=est.overall_uncertainty,
                    angular_error_deg=err,
                )
            )
        return cell

    cells = [(sid, kind) for sid in chosen for kind in config.kinds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as tp:
            results = list(tp.map(sweep_cell, cells))
    else:
        results = [sweep_cell(c) for c in cells]
    rows = tuple(row for cell in results for row in cell)
    return SeveritySweep(rows=rows, config=config, n_dataset=len(dataset))


# -- effectiveness report ------------------------------------------------------


@dataclass(frozen=True)
class CorruptionResult:
    kind: str
    spearman_rho: float  # C_i
    slope: float  # k_i
    mean_uncertainty: tuple[float, ...]  # per severity 0..5


@dataclass(frozen=True)
class EffectivenessReport:
    rows: tuple[CorruptionResult, ...]
    score: float  # P
    error_severity_score: float  # slope-weighted aggregate on angular error
    uncertainty_error_rho: float  # spearman(uncertainty, error), corrupted rows
    n_images: int
    quantile: float
    seed: int


def _per_kind(rows, kind: str, value, include_severity_zero: bool, per_image: bool):
    """(C, k) for one kind, pooled across images or averaged per image."""
    kind_rows = [r for r in rows if r.kind == kind]
    if not include_severity_zero:
        kind_rows = [r for r in kind_rows if r.severity > 0]
    try:
        if per_image:
            cs, ks = [], []
            for sid in sorted({r.sample_id for r in kind_rows}):
                sub = [r for r in kind_rows if r.sample_id == sid]
                xs = [r.severity for r in sub]
                ys = [value(r) for r in sub]
                cs.append(spearman(xs, ys))
                ks.append(ls_slope(xs, ys))
            return float(np.mean(cs)), float(np.mean(ks))
        xs = [r.severity for r in kind_rows]
        ys = [value(r) for r in kind_rows]
        return spearman(xs, ys), ls_slope(xs, ys)
    except DegenerateInputError as exc:
        raise DegenerateInputError(f"{kind}: {exc}") from exc


def evaluate_effectiveness(
    sweep: SeveritySweep,
    include_severity_zero: bool = True,
    per_image: bool = False,
) -> EffectivenessReport:
    """Aggregate a sweep into per-kind correlations, P, and reference scores."""
    rows = sweep.rows
    kinds = [k for k in sweep.config.kinds]
    results = []
    u_pairs, e_pairs = [], []
    for kind in kinds:
        c_u, k_u = _per_kind(rows, kind, lambda r: r.uncertainty, include_severity_zero, per_image)
        c_e, k_e = _per_kind(
            rows, kind, lambda r: r.angular_error_deg, include_severity_zero, per_image
        )
        u_pairs.append((k_u, c_u))
        e_pairs.append((k_e, c_e))
        means = tuple(
            float(np.mean([r.uncertainty for r in rows if r.kind == kind and r.severity == s]))
            for s in SEVERITIES
        )
        results.append(
            CorruptionResult(kind=kind, spearman_rho=c_u, slope=k_u, mean_uncertainty=means)
        )
    corrupted = [r for r in rows if r.severity > 0]
    rho = spearman(
        [r.uncertainty for r in corrupted], [r.angular_error_deg for r in corrupted]
    )
    return EffectivenessReport(
        rows=tuple(results),
        score=effectiveness_score(u_pairs),
        error_severity_score=effectiveness_score(e_pairs),
        uncertainty_error_rho=rho,
        n_images=sweep.config.m,
        quantile=sweep.config.quantile,
        seed=sweep.config.seed,
    )


# -- confidence quantiles ------------------------------------------------------


@dataclass(frozen=True)
class QuantileRow:
    quantile: int
    mean_uncertainty: float
    mean_angular_error_deg: float
    top_ids: tuple[int, ...]  # 5 highest-uncertainty members (montage list)
    member_ids: tuple[int, ...]


def quantile_report(model, dataset, k: int) -> list[QuantileRow]:
    """Sort by uncertainty and split into k quantiles (remainder to the last)."""
    if k < 2:
        raise ValueError("k must be >= 2")
    samples = list(dataset)
    if len(samples) < k:
        raise InsufficientDataError(f"{len(samples)} samples cannot fill {k} quantiles")
    estimates = _predict_all(model, samples)
    err = {
        s.sample_id: angular_error((e.pitch, e.yaw), (s.gaze_pitch, s.gaze_yaw))
        for s, e in zip(samples, estimates)
    }
    unc = {s.sample_id: e.overall_uncertainty for s, e in zip(samples, estimates)}
    order = sorted(samples, key=lambda s: (unc[s.sample_id], s.sample_id))
    base = len(samples) // k
    rows = []
    for q in range(k):
        start = q * base
        stop = start + base if q < k - 1 else len(samples)
        members = order[start:stop]
        top = sorted(members, key=lambda s: (-unc[s.sample_id], s.sample_id))[:5]
        rows.append(
            QuantileRow(
                quantile=q + 1,
                mean_uncertainty=float(np.mean([unc[s.sample_id] for s in members])),
                mean_angular_error_deg=float(np.mean([err[s.sample_id] for s in members])),
                top_ids=tuple(s.sample_id for s in top),
                member_ids=tuple(s.sample_id for s in members),
            )
        )
    return rows


# -- CSV serialization ---------------------------------------------------------


def _fmt(x: float) -> str:
    return "%.9g" % x


def write_report_csvs(report: EffectivenessReport, out_dir) -> tuple[str, str]:
    """Write per-corruption and summary CSVs; returns their paths."""
    out_dir = os.fspath(out_dir)
    per_path = os.path.join(out_dir, "per_corruption.csv")
    with open(per_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["kind", "spearman", "slope"] + [f"mean_u{s}" for s in SEVERITIES]
        )
        for row in report.rows:
            writer.writerow(
                [row.kind, _fmt(row.spearman_rho), _fmt(row.slope)]
                + [_fmt(u) for u in row.mean_uncertainty]
            )
    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "effectiveness_score",
                "error_severity_score",
                "uncertainty_error_rho",
                "n_kinds",
                "n_images",
                "quantile",
                "seed",
            ]
        )
        writer.writerow(
            [
                _fmt(report.score),
                _fmt(report.error_severity_score),
                _fmt(report.uncertainty_error_rho),
                len(report.rows),
                report.n_images,
                _fmt(report.quantile),
                report.seed,
            ]
        )
    return per_path, summary_path


def write_quantile_csv(rows: list[QuantileRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["quantile", "mean_uncertainty", "mean_angular_error_deg", "top5_sample_ids"])
        for row in rows:
            writer.writerow(
                [
                    row.quantile,
                    _fmt(row.mean_uncertainty),
                    _fmt(row.mean_angular_error_deg),
                    ";".join(str(i) for i in row.top_ids),
                ]
            )
