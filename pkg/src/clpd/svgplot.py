"""Minimal deterministic SVG line plots.

The harness only needs semilog-y convergence curves, so this emits plain
polylines with decade gridlines: no plotting dependency, and byte-stable
output for a given input.
"""

from __future__ import annotations

import math

_PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#7f7f7f",
)

_WIDTH, _HEIGHT = 720, 480
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 64, 160, 28, 44


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def semilogy_svg(curves, title: str, xlabel: str) -> str:
    """Render curves = [(label, xs, ys), ...] with log-scale y.

    Points with y <= 0 or non-finite values are dropped; a curve with no
    usable points is skipped but keeps its legend slot so solver colors
    stay stable across plots.
    """
    cleaned = []
    for label, xs, ys in curves:
        pts = [
            (float(x), float(y))
            for x, y in zip(xs, ys)
            if math.isfinite(x) and math.isfinite(y) and y > 0.0
        ]
        cleaned.append((label, pts))
    usable = [pts for _, pts in cleaned if pts]
    body = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH/2:.0f}" y="18" text-anchor="middle" font-family="monospace" '
        f'font-size="13">{title}</text>',
    ]
    x0, x1 = _MARGIN_L, _WIDTH - _MARGIN_R
    y0, y1 = _HEIGHT - _MARGIN_B, _MARGIN_T
    body.append(
        f'<rect x="{x0}" y="{y1}" width="{x1-x0}" height="{y0-y1}" fill="none" '
        f'stroke="#444444" stroke-width="1"/>'
    )
    if usable:
        xmin = min(p[0] for pts in usable for p in pts)
        xmax = max(p[0] for pts in usable for p in pts)
        ymin = min(p[1] for pts in usable for p in pts)
        ymax = max(p[1] for pts in usable for p in pts)
        if xmax == xmin:
            xmax = xmin + 1.0
        lo = math.floor(math.log10(ymin))
        hi = math.ceil(math.log10(ymax))
        if hi == lo:
            hi = lo + 1

        def px(x):
            return x0 + (x - xmin) / (xmax - xmin) * (x1 - x0)

        def py(y):
            return y0 + (math.log10(y) - lo) / (hi - lo) * (y1 - y0)

        for dec in range(lo, hi + 1):
            yy = py(10.0**dec)
            body.append(
                f'<line x1="{x0}" y1="{_fmt(yy)}" x2="{x1}" y2="{_fmt(yy)}" '
                f'stroke="#dddddd" stroke-width="1"/>'
            )
            body.append(
                f'<text x="{x0-6}" y="{_fmt(yy+4)}" text-anchor="end" '
                f'font-family="monospace" font-size="10">1e{dec:+03d}</text>'
            )
        n_xticks = 5
        for j in range(n_xticks + 1):
            xv = xmin + j * (xmax - xmin) / n_xticks
            xx = px(xv)
            body.append(
                f'<line x1="{_fmt(xx)}" y1="{y0}" x2="{_fmt(xx)}" y2="{y0+4}" '
                f'stroke="#444444" stroke-width="1"/>'
            )
            body.append(
                f'<text x="{_fmt(xx)}" y="{y0+16}" text-anchor="middle" '
                f'font-family="monospace" font-size="10">{xv:.4g}</text>'
            )
        body.append(
            f'<text x="{(x0+x1)/2:.0f}" y="{_HEIGHT-8}" text-anchor="middle" '
            f'font-family="monospace" font-size="11">{xlabel}</text>'
        )
        for i, (label, pts) in enumerate(cleaned):
            color = _PALETTE[i % len(_PALETTE)]
            if pts:
                coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in pts)
                body.append(
                    f'<polyline points="{coords}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5"/>'
                )
            ly = _MARGIN_T + 14 + 16 * i
            body.append(
                f'<line x1="{x1+10}" y1="{ly-4}" x2="{x1+30}" y2="{ly-4}" '
                f'stroke="{color}" stroke-width="2"/>'
            )
            body.append(
                f'<text x="{x1+34}" y="{ly}" font-family="monospace" font-size="10">{label}</text>'
            )
    else:
        body.append(
            f'<text x="{_WIDTH/2:.0f}" y="{_HEIGHT/2:.0f}" text-anchor="middle" '
            f'font-family="monospace" font-size="12">no positive data</text>'
        )
    body.append("</svg>")
    return "\n".join(body) + "\n"
