"""Minimal SVG panel: samples as dots, the CPWL predictor as a polyline, auxiliary segments dashed."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .cpwl import CpwlPredictor
from .data import Dataset
from .errors import ArgumentError

WIDTH, HEIGHT, PAD = 480, 320, 30
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def render_svg(dataset: Dataset, predictor: CpwlPredictor, title: str = "") -> str:
    """Render a 1-D dataset and predictor; output is deterministic for identical inputs."""
    if dataset.dx != 1:
        raise ArgumentError("plots are drawn for dx = 1 only")
    part = predictor.partition
    lo, hi = part.domain.bounds_1d
    edges = sorted({lo, hi, *[b for r in part.regions for b in r.bounds_1d]})
    xs = np.array(edges)
    ys = predictor(xs[:, None])
    y_all = np.concatenate([ys.ravel(), dataset.Y.ravel()])
    y0, y1 = float(y_all.min()), float(y_all.max())
    if y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0

    def sx(x):
        return PAD + (x - lo) / (hi - lo) * (WIDTH - 2 * PAD)

    def sy(y):
        return HEIGHT - PAD - (y - y0) / (y1 - y0) * (HEIGHT - 2 * PAD)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{PAD}" y="{PAD - 10}" font-size="12">{escape(title)}</text>')
    for k in range(predictor.dy):
        color = COLORS[k % len(COLORS)]
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys[:, k]))
        out.append(f'<polyline class="cpwl" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for r, flag in enumerate(part.auxiliary):
            if not flag:
                continue
            a, b = part.regions[r].bounds_1d
            ya, yb = predictor.pieces[r](np.array([a]))[k], predictor.pieces[r](np.array([b]))[k]
            out.append(
                f'<line class="aux" x1="{_fmt(sx(a))}" y1="{_fmt(sy(ya))}" x2="{_fmt(sx(b))}" '
                f'y2="{_fmt(sy(yb))}" stroke="{color}" stroke-width="2.5" stroke-dasharray="4 3"/>'
            )
    for x, y in zip(dataset.X[:, 0], dataset.Y[:, 0]):
        out.append(f'<circle class="sample" cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="2.5" fill="black"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
