"""Minimal self-contained SVG line plots for trajectory time series."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=80, right=20, top=40, bottom=50)


def _ticks(lo, hi, count=5):
    if hi == lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def line_plot(x, y, title: str = "", xlabel: str = "", ylabel: str = "", log_y: bool = False) -> str:
    """SVG text for one polyline with labelled axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if log_y:
        keep = y > 0
        x, y = x[keep], np.log10(y[keep])
        ylabel = f"log10 {ylabel}"
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="24" text-anchor="middle" font-size="16" font-family="sans-serif">{escape(title)}</text>',
    ]
    if x.size:
        x0, x1 = float(x.min()), float(x.max())
        y0, y1 = float(y.min()), float(y.max())
        if x1 == x0:
            x1 = x0 + 1.0
        if y1 == y0:
            pad = max(abs(y0) * 1e-3, 1e-12)
            y0, y1 = y0 - pad, y1 + pad

        def px(v):
            return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

        def py(v):
            return MARGIN["top"] + ph - (v - y0) / (y1 - y0) * ph

        # thin the polyline to at most ~2000 vertices
        stride = max(1, x.size // 2000)
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x[::stride], y[::stride]))
        parts.append(f'<polyline fill="none" stroke="#1f4e9c" stroke-width="1.5" points="{pts}"/>')
        for v in _ticks(x0, x1):
            parts.append(f'<text x="{px(v):.1f}" y="{HEIGHT - MARGIN["bottom"] + 18}" text-anchor="middle" font-size="11" font-family="sans-serif">{v:.4g}</text>')
        for v in _ticks(y0, y1):
            parts.append(f'<text x="{MARGIN["left"] - 6}" y="{py(v) + 4:.1f}" text-anchor="end" font-size="11" font-family="sans-serif">{v:.4g}</text>')
    left, bottom = MARGIN["left"], HEIGHT - MARGIN["bottom"]
    parts += [
        f'<line x1="{left}" y1="{MARGIN["top"]}" x2="{left}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{WIDTH - MARGIN["right"]}" y2="{bottom}" stroke="black"/>',
        f'<text x="{left + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="13" font-family="sans-serif">{escape(xlabel)}</text>',
        f'<text x="16" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" font-size="13" font-family="sans-serif" transform="rotate(-90 16 {MARGIN["top"] + ph / 2})">{escape(ylabel)}</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


# (column, label, log scale)
SERIES = (
    ("A", "area", True),
    ("omega_p", "p-affine length", False),
    ("p_ratio", "isoperimetric ratio", False),
    ("santalo", "Santalo product", False),
    ("hausdorff_circle", "Hausdorff distance to circle", False),
)


def trajectory_plots(traj) -> dict:
    """Map of plot name to SVG text, each series against t and against tau."""
    out = {}
    for clock in ("t", "tau"):
        xs = traj.column(clock)
        for col, label, log_y in SERIES:
            out[f"{col}_{clock}"] = line_plot(xs, traj.column(col), f"{label} vs {clock}", clock, label, log_y=log_y)
    return out
