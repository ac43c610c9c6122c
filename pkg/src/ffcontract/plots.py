"""Minimal native SVG line plots (fixed 800x500 viewBox)."""
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 500
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 50
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf", "#7f7f7f", "#bcbd22")


def _range(values):
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi == lo:
        pad = 1.0 if lo == 0 else 0.05 * abs(lo)
    else:
        pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo, hi, count=5):
    return [lo + (hi - lo) * i / count for i in range(count + 1)]


def line_plot(series, xlabel="t", ylabel="", title=""):
    """
    Render polylines as an SVG document string.

    Parameters
    ----------
    series : list of (x, y, label)
        Non-finite points are dropped.
    """
    clean = []
    for x, y, label in series:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y)
        if np.any(ok):
            clean.append((x[ok], y[ok], label))
    if clean:
        x0, x1 = _range(np.concatenate([s[0] for s in clean]))
        y0, y1 = _range(np.concatenate([s[1] for s in clean]))
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        out.append(f'<line x1="{px(v):.2f}" y1="{TOP + ph}" x2="{px(v):.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(v):.2f}" y="{TOP + ph + 20}" font-size="12" text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(y0, y1):
        out.append(f'<line x1="{LEFT - 5}" y1="{py(v):.2f}" x2="{LEFT}" y2="{py(v):.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{py(v) + 4:.2f}" font-size="12" text-anchor="end">{v:.3g}</text>')
    out.append(
        f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 10}" font-size="14" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="18" y="{TOP + ph / 2}" font-size="14" text-anchor="middle" '
        f'transform="rotate(-90 18 {TOP + ph / 2})">{escape(ylabel)}</text>'
    )
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="24" font-size="16" text-anchor="middle">{escape(title)}</text>')
    for i, (x, y, label) in enumerate(clean):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        color = PALETTE[i % len(PALETTE)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{pts}">')
        out.append(f"<title>{escape(str(label))}</title></polyline>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def trajectory_plot(trajectories, title="", labels=None):
    """Time plot of every state coordinate, or a phase plot when n = 2."""
    ok = [tr for tr in trajectories if tr.status == "ok"]
    labels = labels or [f"#{i}" for i in range(len(ok))]
    if ok and ok[0].dimension == 2:
        series = [(tr.states[:, 0], tr.states[:, 1], lab) for tr, lab in zip(ok, labels)]
        return line_plot(series, "x1", "x2", title)
    series = []
    for tr, lab in zip(ok, labels):
        for j in range(tr.dimension):
            name = "x" if tr.dimension == 1 else f"x{j + 1}"
            series.append((tr.times, tr.states[:, j], f"{lab} {name}"))
    return line_plot(series, "t", "x" if ok and ok[0].dimension == 1 else "x_i", title)
