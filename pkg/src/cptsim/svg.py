"""Bare-bones SVG line plots: axes, ticks, polylines and a legend."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-9 * step:
        out.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return out


def _fmt(v):
    return f"{v:.4g}"


class LinePlot:
    """Collects series and renders one panel.

    Each series is a list of (x, y) points; non-finite points break the line.
    """

    def __init__(self, title="", xlabel="", ylabel="", width=640, height=420, xlog=False):
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.width, self.height = width, height
        self.xlog = xlog
        self.series = []

    def add(self, xs, ys, label="", markers=False, dashed=False):
        self.series.append((list(map(float, xs)), list(map(float, ys)), label, markers, dashed))
        return self

    def _tx(self, x):
        return math.log10(x) if self.xlog else x

    def _bounds(self):
        xs, ys = [], []
        for sx, sy, *_ in self.series:
            for x, y in zip(sx, sy):
                if math.isfinite(x) and math.isfinite(y) and (x > 0 or not self.xlog):
                    xs.append(self._tx(x))
                    ys.append(y)
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        pad = 0.05 * (y1 - y0 or abs(y1) or 1.0)
        return x0, x1, y0 - pad, y1 + pad

    def render(self):
        W, H = self.width, self.height
        left, right, top, bottom = 70, 20, 40, 55
        pw, ph = W - left - right, H - top - bottom
        x0, x1, y0, y1 = self._bounds()

        def px(x):
            return left + (self._tx(x) - x0) / (x1 - x0) * pw

        def py(y):
            return top + (1 - (y - y0) / (y1 - y0)) * ph

        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'font-family="sans-serif" font-size="12">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
            f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="14">{escape(self.title)}</text>',
            f'<text x="{left + pw / 2}" y="{H - 12}" text-anchor="middle">{escape(self.xlabel)}</text>',
            f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {top + ph / 2})">{escape(self.ylabel)}</text>',
        ]
        for t in _ticks(y0, y1):
            y = py(t)
            out.append(f'<line x1="{left - 4}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
            out.append(f'<text x="{left - 7}" y="{y + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
        for t in _ticks(x0, x1):
            x = left + (t - x0) / (x1 - x0) * pw
            label = _fmt(10 ** t) if self.xlog else _fmt(t)
            out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 4}" stroke="black"/>')
            out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle">{label}</text>')
        for k, (sx, sy, label, markers, dashed) in enumerate(self.series):
            color = PALETTE[k % len(PALETTE)]
            runs, cur = [], []
            for x, y in zip(sx, sy):
                if math.isfinite(x) and math.isfinite(y) and (x > 0 or not self.xlog):
                    cur.append((px(x), py(y)))
                elif cur:
                    runs.append(cur)
                    cur = []
            if cur:
                runs.append(cur)
            dash = ' stroke-dasharray="6 4"' if dashed else ""
            for run in runs:
                pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in run)
                out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
                if markers:
                    out.extend(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{color}"/>' for a, b in run)
            if label:
                ly = top + 14 + 16 * k
                out.append(f'<line x1="{left + pw - 150}" y1="{ly - 4}" x2="{left + pw - 128}" '
                           f'y2="{ly - 4}" stroke="{color}" stroke-width="2"{dash}/>')
                out.append(f'<text x="{left + pw - 122}" y="{ly}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.render())
