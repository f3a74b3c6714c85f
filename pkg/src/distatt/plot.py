"""Minimal SVG line charts for simulation logs; no plotting library needed."""

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
WIDTH, HEIGHT = 720, 360
MARGIN = dict(left=64, right=120, top=36, bottom=48)
MAX_POINTS = 2000


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def _decimate(x, ys):
    if len(x) <= MAX_POINTS:
        return x, ys
    idx = np.unique(np.linspace(0, len(x) - 1, MAX_POINTS).astype(int))
    return x[idx], [y[idx] for y in ys]


def line_chart(x, series, title, xlabel="t [s]", ylabel="", logy=False):
    """
    Render named series over a shared x axis as an SVG document.

    Parameters
    ----------
    x : array of shape (K,)
    series : dict of label -> array of shape (K,)
    logy : bool
        Plot ``log10`` of the values; nonpositive samples are dropped.
    """
    x = np.asarray(x, dtype=float)
    labels = list(series)
    ys = [np.asarray(series[k], dtype=float) for k in labels]
    x, ys = _decimate(x, ys)
    if logy:
        ys = [np.where(y > 0, np.log10(np.where(y > 0, y, 1.0)), np.nan) for y in ys]
    finite = np.concatenate([y[np.isfinite(y)] for y in ys]) if ys else np.array([0.0])
    y0, y1 = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5
    x0, x1 = (float(x.min()), float(x.max())) if len(x) else (0.0, 1.0)
    if x1 <= x0:
        x1 = x0 + 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return MARGIN["top"] + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for v in _ticks(x0, x1):
        px = sx(v)
        out.append(f'<line x1="{px:.1f}" y1="{MARGIN["top"] + ph}" x2="{px:.1f}" y2="{MARGIN["top"] + ph + 4}" stroke="#444"/>')
        out.append(f'<text x="{px:.1f}" y="{MARGIN["top"] + ph + 18}" text-anchor="middle">{v:g}</text>')
    for v in _ticks(y0, y1):
        py = sy(v)
        label = f"1e{v:g}" if logy else f"{v:.3g}"
        out.append(f'<line x1="{MARGIN["left"]}" y1="{py:.1f}" x2="{MARGIN["left"] + pw}" y2="{py:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{py + 4:.1f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="16" y="{MARGIN["top"] + ph / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2})">{escape(ylabel)}</text>'
        )
    for n, (label, y) in enumerate(zip(labels, ys)):
        color = PALETTE[n % len(PALETTE)]
        ok = np.isfinite(y)
        pts = " ".join(f"{sx(a):.1f},{sy(b):.1f}" for a, b in zip(x[ok], y[ok]))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = MARGIN["top"] + 14 + 16 * n
        lx = MARGIN["left"] + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def log_figures(log):
    """SVG documents for the standard panels of a coupled-simulation log, keyed by file stem."""
    a = log.array()
    cols = log.columns
    t = a[:, 0]

    def pick(prefix):
        return {c: a[:, i] for i, c in enumerate(cols) if c.startswith(prefix) and c[len(prefix) :].isdigit()}

    return {
        "rbar": line_chart(t, pick("rbar_"), "relative attitude error |Rbar_k|_I", ylabel="|Rbar_k|_I"),
        "xi": line_chart(t, pick("xi_"), "auxiliary variables xi_k", ylabel="xi_k [rad]"),
        "ptilde": line_chart(t, pick("ptilde_"), "position estimation error", ylabel="|ptilde_i|"),
        "e_norm": line_chart(t, {"|e|": log.column("e_norm")}, "relative position error", ylabel="log10 |e|", logy=True),
    }
