"""Minimal deterministic SVG chart emitter (line and scatter styles).

Output is a standalone 800x500 SVG assembled from fixed-format strings,
so identical inputs produce identical bytes -- the charts are golden-file
testable.
"""

from __future__ import annotations

import os

from .errors import EmptyChartError

__all__ = ["emit_svg_chart"]

WIDTH, HEIGHT = 800, 500
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 170, 40, 55

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
    "#8c6d31", "#843c39", "#7b4173", "#3182bd",
)


def _data_range(values: list[float]) -> tuple[float, float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def emit_svg_chart(
    series,
    x_label: str,
    y_label: str,
    path,
    title: str = "",
    style: str = "line",
) -> None:
    """Write a chart of named (xs, ys) series as a standalone SVG file.

    ``series`` is a sequence of (name, xs, ys) with >= 2 points each;
    ``style`` is "line" (one polyline per series) or "scatter" (circles).
    """
    series = list(series)
    if not series:
        raise EmptyChartError("no series to plot")
    for name, xs, ys in series:
        if len(xs) < 2 or len(xs) != len(ys):
            raise EmptyChartError(f"series {name!r} needs >= 2 (x, y) points")

    all_x = [float(x) for _, xs, _ in series for x in xs]
    all_y = [float(y) for _, _, ys in series for y in ys]
    x0, x1 = _data_range(all_x)
    y0, y1 = _data_range(all_y)
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x: float) -> float:
        return MARGIN_L + (x - x0) / (x1 - x0) * plot_w

    def py(y: float) -> float:
        return HEIGHT - MARGIN_B - (y - y0) / (y1 - y0) * plot_h

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}">\n',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>\n',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333333"/>\n',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" '
            f'font-family="sans-serif" font-size="16">{title}</text>\n'
        )

    # axis ticks: 5 per axis with value labels
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        cx = px(fx)
        parts.append(
            f'<line x1="{cx:.2f}" y1="{HEIGHT - MARGIN_B}" x2="{cx:.2f}" '
            f'y2="{HEIGHT - MARGIN_B + 5}" stroke="#333333"/>\n'
            f'<text x="{cx:.2f}" y="{HEIGHT - MARGIN_B + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{fx:.3g}</text>\n'
        )
        fy = y0 + (y1 - y0) * i / 4
        cy = py(fy)
        parts.append(
            f'<line x1="{MARGIN_L - 5}" y1="{cy:.2f}" x2="{MARGIN_L}" y2="{cy:.2f}" '
            'stroke="#333333"/>\n'
            f'<text x="{MARGIN_L - 9}" y="{cy + 4:.2f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{fy:.3g}</text>\n'
        )
    parts.append(
        f'<text x="{MARGIN_L + plot_w / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{x_label}</text>\n'
        f'<text x="18" y="{MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 18 {MARGIN_T + plot_h / 2:.1f})">{y_label}</text>\n'
    )

    for i, (name, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        if style == "scatter":
            for x, y in zip(xs, ys):
                parts.append(
                    f'<circle cx="{px(float(x)):.2f}" cy="{py(float(y)):.2f}" r="2.5" '
                    f'fill="{color}" fill-opacity="0.6"/>\n'
                )
        else:
            points = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys))
            parts.append(
                f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>\n'
            )
        ly = MARGIN_T + 14 + 16 * i
        lx = WIDTH - MARGIN_R + 12
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="3" class="legend"/>\n'
            f'<text x="{lx + 23}" y="{ly}" font-family="sans-serif" '
            f'font-size="11">{name}</text>\n'
        )
    parts.append("</svg>\n")
    blob = "".join(parts).encode("utf-8")
    with open(os.fspath(path), "wb") as fh:
        fh.write(blob)
