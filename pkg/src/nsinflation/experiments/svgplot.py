"""A minimal dependency-free SVG line chart."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

__all__ = ["line_chart"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    out = []
    t = first
    while t <= hi + 1e-9 * step:
        out.append(round(t, 12))
        t += step
    return out


def line_chart(path: str | Path, x: Sequence[float], series: dict, title: str = "",
               xlabel: str = "", ylabel: str = "", annotation: str = "",
               width: int = 560, height: int = 380) -> Path:
    """Write an SVG chart of ``series`` (name -> y values) against ``x``.

    Non-finite points are skipped.  Returns the written path.
    """
    path = Path(path)
    pts = [(float(a), float(b)) for ys in series.values() for a, b in zip(x, ys)
           if math.isfinite(float(a)) and math.isfinite(float(b))]
    ml, mr, mt, mb = 70, 20, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        x0 = x1 = y0 = y1 = 0.0
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - abs(y0) * 0.1 - 1e-300, y1 + abs(y1) * 0.1 + 1e-300
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def sx(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
           f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
           f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="13">'
           f'{escape(title)}</text>',
           f'<text x="{ml + pw / 2}" y="{height - 12}" text-anchor="middle">'
           f'{escape(xlabel)}</text>',
           f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" '
           f'transform="rotate(-90 16 {mt + ph / 2})">{escape(ylabel)}</text>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{mt + ph}" x2="{sx(t):.2f}" y2="{mt + ph + 4}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{mt + ph + 16}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ml - 4}" y1="{sy(t):.2f}" x2="{ml}" y2="{sy(t):.2f}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{ml - 6}" y="{sy(t) + 4:.2f}" text-anchor="end">{t:.3g}</text>')
    for i, (name, ys) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        seg = [(sx(float(a)), sy(float(b))) for a, b in zip(x, ys)
               if math.isfinite(float(a)) and math.isfinite(float(b))]
        if seg:
            pts_s = " ".join(f"{a:.2f},{b:.2f}" for a, b in seg)
            out.append(f'<polyline points="{pts_s}" fill="none" stroke="{color}" '
                       f'stroke-width="1.5"/>')
            for a, b in seg:
                out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="{color}"/>')
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 14 * i}" fill="{color}">'
                   f'{escape(str(name))}</text>')
    if annotation:
        out.append(f'<text x="{ml + pw - 6}" y="{mt + 14}" text-anchor="end">'
                   f'{escape(annotation)}</text>')
    out.append("</svg>")
    path.write_text("\n".join(out) + "\n")
    return path
