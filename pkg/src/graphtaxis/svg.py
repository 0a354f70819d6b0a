"""Dependency-free SVG rendering of the threshold curve chi(lambda).

Output is plain text with fixed number formatting, so the same inputs give
byte-identical files.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .stability import BifurcationPoint, ModelParams, chi_curve_minimum, chi_of_lambda

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 64, "right": 24, "top": 40, "bottom": 52}


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    x = first
    while x <= hi + 1e-9 * step:
        ticks.append(round(x, 12) + 0.0)
        x += step
    return ticks


class _Frame:
    def __init__(self, xlim, ylim):
        self.xlim, self.ylim = xlim, ylim
        self.x0, self.x1 = MARGIN["left"], WIDTH - MARGIN["right"]
        self.y0, self.y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def x(self, v):
        lo, hi = self.xlim
        return self.x0 + (v - lo) / (hi - lo) * (self.x1 - self.x0)

    def y(self, v):
        lo, hi = self.ylim
        return self.y0 + (v - lo) / (hi - lo) * (self.y1 - self.y0)


def _star(cx: float, cy: float, r: float) -> str:
    pts = []
    for i in range(10):
        ang = -math.pi / 2 + i * math.pi / 5
        rad = r if i % 2 == 0 else 0.42 * r
        pts.append(f"{cx + rad * math.cos(ang):.2f},{cy + rad * math.sin(ang):.2f}")
    return " ".join(pts)


def chi_curve_svg(
    eigenvalues: np.ndarray,
    points: list[BifurcationPoint],
    p: ModelParams,
    chi_star: float,
    star_index: int,
    title: str = "",
    lam_min: float | None = None,
) -> str:
    """Red chi(lambda) curve, stars at the eigenvalues, open circles at
    admissible bifurcation points, dashed line and label at chi*."""
    lam = np.asarray(eigenvalues, dtype=float)
    lam = lam[lam < 0]
    if lam_min is None:
        lam_min = min(-4.0 * math.sqrt(p.a), float(lam.min()) if len(lam) else -1.0)
    y_hi = 3.0 * chi_curve_minimum(p)
    fr = _Frame((lam_min, 0.0), (0.0, y_hi))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')

    # axes and ticks
    out.append(
        f'<path d="M{fr.x0},{fr.y1} L{fr.x0},{fr.y0} L{fr.x1},{fr.y0}" fill="none" stroke="black"/>'
    )
    for t in nice_ticks(lam_min, 0.0):
        x = fr.x(t)
        out.append(f'<line x1="{x:.2f}" y1="{fr.y0}" x2="{x:.2f}" y2="{fr.y0 + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{fr.y0 + 18}" text-anchor="middle">{t:g}</text>')
    for t in nice_ticks(0.0, y_hi):
        y = fr.y(t)
        out.append(f'<line x1="{fr.x0 - 5}" y1="{y:.2f}" x2="{fr.x0}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{fr.x0 - 8}" y="{y + 4:.2f}" text-anchor="end">{t:g}</text>')
    out.append(f'<text x="{(fr.x0 + fr.x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">λ</text>')
    out.append(f'<text x="16" y="{(fr.y0 + fr.y1) / 2:.1f}" text-anchor="middle">χ</text>')

    # the curve, split wherever it leaves the plotting window
    grid = np.linspace(lam_min, -1e-6, 800)
    chis = chi_of_lambda(grid, p)
    segment: list[str] = []
    segments = []
    for g, c in zip(grid, chis):
        if c <= y_hi:
            segment.append(f"{fr.x(g):.2f},{fr.y(c):.2f}")
        elif segment:
            segments.append(segment)
            segment = []
    if segment:
        segments.append(segment)
    for seg in segments:
        out.append(f'<polyline points="{" ".join(seg)}" fill="none" stroke="red" stroke-width="1.5"/>')

    # chi* reference line
    ys = fr.y(chi_star)
    out.append(
        f'<line x1="{fr.x0}" y1="{ys:.2f}" x2="{fr.x1}" y2="{ys:.2f}" '
        'stroke="gray" stroke-dasharray="4,3"/>'
    )
    out.append(
        f'<text x="{fr.x1 - 4}" y="{ys - 6:.2f}" text-anchor="end">'
        f"χ* = {chi_star:.5f} (eigenvalue {star_index})</text>"
    )

    for lam_i in np.unique(lam):
        if lam_i < lam_min:
            continue
        c = chi_of_lambda(float(lam_i), p)
        if c <= y_hi:
            out.append(f'<polygon points="{_star(fr.x(lam_i), fr.y(c), 6)}" fill="black"/>')
    for bp in points:
        if bp.admissible and bp.lam >= lam_min and bp.chi <= y_hi:
            out.append(
                f'<circle cx="{fr.x(bp.lam):.2f}" cy="{fr.y(bp.chi):.2f}" r="9" '
                'fill="none" stroke="blue" stroke-width="1.2"/>'
            )
    out.append("</svg>")
    return "\n".join(out) + "\n"
