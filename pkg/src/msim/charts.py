"""Minimal self-contained SVG line charts (no display server, no deps)."""

from __future__ import annotations

from typing import Sequence

WIDTH, HEIGHT = 640, 420
MARGIN = 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _scale(vals: Sequence[float]) -> tuple[float, float]:
    lo, hi = min(vals), max(vals)
    if hi == lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_chart(
    title: str,
    xlabel: str,
    ylabel: str,
    series: dict[str, list[tuple[float, float]]],
) -> str:
    """Render named (x, y) series as an SVG document string."""
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    if not xs:
        raise ValueError("no data to chart")
    x0, x1 = _scale(xs)
    y0, y1 = _scale(ys)
    iw, ih = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def px(x: float) -> float:
        return MARGIN + (x - x0) / (x1 - x0) * iw

    def py(y: float) -> float:
        return HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ih

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH/2:.1f}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<line x1="{MARGIN}" y1="{HEIGHT-MARGIN}" x2="{WIDTH-MARGIN}" '
        f'y2="{HEIGHT-MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT-MARGIN}" stroke="black"/>',
        f'<text x="{WIDTH/2:.1f}" y="{HEIGHT-14}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{HEIGHT/2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {HEIGHT/2:.1f})">{ylabel}</text>',
    ]
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        parts.append(
            f'<text x="{px(xv):.1f}" y="{HEIGHT-MARGIN+16}" text-anchor="middle">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{MARGIN-6}" y="{py(yv)+4:.1f}" text-anchor="end">{yv:.3g}</text>'
        )
        parts.append(
            f'<line x1="{MARGIN}" y1="{py(yv):.1f}" x2="{WIDTH-MARGIN}" '
            f'y2="{py(yv):.1f}" stroke="#dddddd"/>'
        )
    for i, (name, pts) in enumerate(sorted(series.items())):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in sorted(pts))
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for x, y in pts:
            parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>')
        ly = MARGIN + 16 * i
        parts.append(
            f'<line x1="{WIDTH-MARGIN-110}" y1="{ly}" x2="{WIDTH-MARGIN-90}" '
            f'y2="{ly}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(f'<text x="{WIDTH-MARGIN-84}" y="{ly+4}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def save_chart(path: str, title: str, xlabel: str, ylabel: str, series) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(line_chart(title, xlabel, ylabel, series))
