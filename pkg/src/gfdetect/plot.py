"""Static SVG rendering of benchmark sweeps.

Produces a self-contained SVG line plot (no rendering dependency): one
series per detector, the swept quantity on a linear x axis and the error
rate on a log y axis.  Zero error rates cannot be shown on a log axis,
so they are clamped to the resolution floor 1 / (2 * N * trials) of
their row; the floor is documented in the plot title.
"""

from __future__ import annotations

import math

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
)

WIDTH, HEIGHT = 720, 440
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80, 170, 50, 55


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def render_error_rate_svg(rows: list[dict], x_column: str) -> str:
    """Render MetricRow-like dicts as an SVG document string.

    Each row needs the keys ``detector``, ``N``, ``trials``,
    ``error_rate``, and the x column.  Rows are grouped into one series
    per detector, ordered as first seen.
    """
    if not rows:
        raise ValueError("no data rows to plot")
    series: dict[str, list[tuple[float, float]]] = {}
    floor_used = math.inf
    for row in rows:
        x = float(row[x_column])
        y = float(row["error_rate"])
        floor = 1.0 / (2.0 * float(row["N"]) * float(row["trials"]))
        if y <= 0.0:
            y = floor
            floor_used = min(floor_used, floor)
        series.setdefault(str(row["detector"]), []).append((x, y))

    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    y_lo = 10.0 ** math.floor(math.log10(min(ys)))
    y_hi = 10.0 ** math.ceil(math.log10(max(ys)) + 1e-12)
    if y_hi == y_lo:
        y_hi = y_lo * 10.0

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x: float) -> float:
        return MARGIN_L + plot_w * (x - x_lo) / (x_hi - x_lo)

    def sy(y: float) -> float:
        frac = (math.log10(y) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo))
        return MARGIN_T + plot_h * (1.0 - frac)

    title = f"error_rate vs {x_column}"
    if math.isfinite(floor_used):
        title += f" (zero rates clamped to 1/(2*N*trials) = {floor_used:.3g})"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<title>{title}</title>',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        # axes
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" '
        f'y2="{HEIGHT - MARGIN_B}" stroke="black"/>',
        f'<line x1="{MARGIN_L}" y1="{HEIGHT - MARGIN_B}" x2="{WIDTH - MARGIN_R}" '
        f'y2="{HEIGHT - MARGIN_B}" stroke="black"/>',
        f'<text x="{MARGIN_L + plot_w / 2}" y="{HEIGHT - 12}" '
        f'text-anchor="middle">{x_column}</text>',
        f'<text x="18" y="{MARGIN_T + plot_h / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {MARGIN_T + plot_h / 2})">error rate</text>',
    ]

    # x ticks at the distinct data abscissae
    for x in sorted(set(xs)):
        px = sx(x)
        parts.append(f'<line x1="{_fmt(px)}" y1="{HEIGHT - MARGIN_B}" '
                     f'x2="{_fmt(px)}" y2="{HEIGHT - MARGIN_B + 5}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(px)}" y="{HEIGHT - MARGIN_B + 18}" '
                     f'text-anchor="middle">{x:g}</text>')
    # y ticks at decades
    decade = math.log10(y_lo)
    while decade <= math.log10(y_hi) + 1e-9:
        y = 10.0 ** decade
        py = sy(y)
        parts.append(f'<line x1="{MARGIN_L - 5}" y1="{_fmt(py)}" '
                     f'x2="{MARGIN_L}" y2="{_fmt(py)}" stroke="black"/>')
        parts.append(f'<line x1="{MARGIN_L}" y1="{_fmt(py)}" x2="{WIDTH - MARGIN_R}" '
                     f'y2="{_fmt(py)}" stroke="#dddddd"/>')
        parts.append(f'<text x="{MARGIN_L - 10}" y="{_fmt(py + 4)}" '
                     f'text-anchor="end">1e{int(round(decade))}</text>')
        decade += 1.0

    for k, (name, pts) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = sorted(pts)
        coords = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{_fmt(sx(x))}" cy="{_fmt(sy(y))}" r="3" '
                         f'fill="{color}"/>')
        ly = MARGIN_T + 16 * k
        lx = WIDTH - MARGIN_R + 12
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{lx + 24}" y="{ly + 4}">{name}</text>')

    parts.append("</svg>")
    return "\n".join(parts)
