"""Minimal static SVG output: labelled scatter plots and line charts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np
from numpy.typing import ArrayLike

CLASS_COLOURS = ("#1f77b4", "#d62728")
LINE_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class Frame:
    width: int = 480
    height: int = 400
    margin: int = 50

    def mapper(self, xlim: tuple[float, float], ylim: tuple[float, float]):
        x0, x1 = xlim
        y0, y1 = ylim
        sx = (self.width - 2 * self.margin) / ((x1 - x0) or 1.0)
        sy = (self.height - 2 * self.margin) / ((y1 - y0) or 1.0)

        def to_px(x, y):
            return self.margin + (x - x0) * sx, self.height - self.margin - (y - y0) * sy

        return to_px


def _limits(values: ArrayLike, pad: float = 0.05) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if not v.size:
        return 0.0, 1.0
    lo, hi = float(v.min()), float(v.max())
    span = hi - lo or 1.0
    return lo - pad * span, hi + pad * span


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def _axes(frame: Frame, xlim, ylim, title: str, xlabel: str, ylabel: str) -> list[str]:
    to_px = frame.mapper(xlim, ylim)
    (ax0, ay0), (ax1, ay1) = to_px(xlim[0], ylim[0]), to_px(xlim[1], ylim[1])
    out = [
        f'<rect x="{ax0:.2f}" y="{ay1:.2f}" width="{ax1 - ax0:.2f}" height="{ay0 - ay1:.2f}" '
        'fill="none" stroke="#333"/>',
        f'<text x="{frame.width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<text x="{frame.width / 2:.1f}" y="{frame.height - 8}" text-anchor="middle" font-size="12">'
        f"{escape(xlabel)}</text>",
        f'<text x="14" y="{frame.height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {frame.height / 2:.1f})">{escape(ylabel)}</text>',
    ]
    for t in np.linspace(xlim[0], xlim[1], 5):
        px, _ = to_px(t, ylim[0])
        out.append(f'<text x="{px:.2f}" y="{ay0 + 14:.2f}" text-anchor="middle" font-size="10">{_fmt(t)}</text>')
    for t in np.linspace(ylim[0], ylim[1], 5):
        _, py = to_px(xlim[0], t)
        out.append(f'<text x="{ax0 - 4:.2f}" y="{py + 3:.2f}" text-anchor="end" font-size="10">{_fmt(t)}</text>')
    return out


def _document(frame: Frame, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{frame.width}" height="{frame.height}" '
            f'viewBox="0 0 {frame.width} {frame.height}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def scatter_svg(X: ArrayLike, labels: ArrayLike, title: str = "", region: tuple | None = None,
                frame: Frame = Frame()) -> str:
    """Two-class scatter of the first two coordinates.

    ``region`` is an optional ``(gx, gy, grid_labels)`` triple: grid cell
    centres along each axis and the predicted label per cell, drawn as a
    faint background showing the decision regions.
    """
    X = np.asarray(X, dtype=float)
    lab = np.asarray(labels).astype(int)
    xs = X[:, 0]
    ys = X[:, 1] if X.shape[1] > 1 else np.zeros_like(xs)
    if region is not None:
        gx, gy, _ = region
        xlim, ylim = (float(gx[0]), float(gx[-1])), (float(gy[0]), float(gy[-1]))
    else:
        xlim, ylim = _limits(xs), _limits(ys)
    to_px = frame.mapper(xlim, ylim)
    body = []
    if region is not None:
        gx, gy, glab = region
        glab = np.asarray(glab).astype(int)
        dx = (gx[1] - gx[0]) if len(gx) > 1 else 1.0
        dy = (gy[1] - gy[0]) if len(gy) > 1 else 1.0
        for j, yv in enumerate(gy):
            for i, xv in enumerate(gx):
                px0, py0 = to_px(xv - dx / 2, yv + dy / 2)
                px1, py1 = to_px(xv + dx / 2, yv - dy / 2)
                body.append(f'<rect x="{px0:.2f}" y="{py0:.2f}" width="{px1 - px0:.2f}" height="{py1 - py0:.2f}" '
                            f'fill="{CLASS_COLOURS[glab[j, i]]}" fill-opacity="0.15" stroke="none"/>')
    body += _axes(frame, xlim, ylim, title, "x1", "x2")
    for x, y, c in zip(xs, ys, lab):
        px, py = to_px(x, y)
        body.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.5" fill="{CLASS_COLOURS[c]}"/>')
    return _document(frame, body)


def line_svg(series: dict[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
             xlabel: str = "", ylabel: str = "", hlines: dict[str, float] | None = None,
             frame: Frame = Frame()) -> str:
    """Polylines, one per named series, plus optional dashed horizontal reference lines."""
    hlines = dict(hlines or {})
    all_x = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()]) if series else np.zeros(1)
    all_y = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()] +
                           [np.asarray(list(hlines.values()), dtype=float)]) if series or hlines else np.zeros(1)
    xlim, ylim = _limits(all_x), _limits(all_y)
    to_px = frame.mapper(xlim, ylim)
    body = _axes(frame, xlim, ylim, title, xlabel, ylabel)
    legend_y = frame.margin + 12
    for i, (name, (x, y)) in enumerate(series.items()):
        colour = LINE_COLOURS[i % len(LINE_COLOURS)]
        pts = " ".join(f"{px:.2f},{py:.2f}" for px, py in (to_px(a, b) for a, b in zip(x, y)))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        body.append(f'<text x="{frame.width - frame.margin - 4}" y="{legend_y}" text-anchor="end" font-size="11" '
                    f'fill="{colour}">{escape(name)}</text>')
        legend_y += 14
    for j, (name, level) in enumerate(hlines.items()):
        colour = LINE_COLOURS[(len(series) + j) % len(LINE_COLOURS)]
        (px0, py), (px1, _) = to_px(xlim[0], level), to_px(xlim[1], level)
        body.append(f'<line x1="{px0:.2f}" y1="{py:.2f}" x2="{px1:.2f}" y2="{py:.2f}" stroke="{colour}" '
                    'stroke-dasharray="4 3"/>')
        body.append(f'<text x="{px0 + 4:.2f}" y="{py - 3:.2f}" font-size="10" fill="{colour}">{escape(name)}</text>')
    return _document(frame, body)
