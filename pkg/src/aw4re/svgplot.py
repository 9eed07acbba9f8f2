"""Tiny SVG line/bar chart writer.

Result figures here only display numbers, so a hand-rolled writer beats a
plotting dependency.  Charts are deliberately plain: axes, ticks, legend,
one polyline or bar group per series.
"""

from __future__ import annotations

from pathlib import Path

_PALETTE = ["#2266aa", "#cc5533", "#338855", "#884499", "#aa8822", "#446677"]
_W, _H = 640, 400
_ML, _MR, _MT, _MB = 64, 24, 36, 48


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    return [lo + span * k / (n - 1) for k in range(n)]


def _esc(text: str) -> str:
    return (
        str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def _header(title: str):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2}" y="20" text-anchor="middle" font-size="14">{_esc(title)}</text>',
    ]


def _axes(parts, y_lo, y_hi, ylabel):
    x0, x1 = _ML, _W - _MR
    y0, y1 = _H - _MB, _MT
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>'
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>'
    )
    for tick in _ticks(y_lo, y_hi):
        py = y0 - (tick - y_lo) / (y_hi - y_lo or 1.0) * (y0 - y1)
        parts.append(
            f'<line x1="{x0 - 4}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>'
            f'<text x="{x0 - 8}" y="{py + 4:.1f}" text-anchor="end">{tick:.3g}</text>'
        )
    parts.append(
        f'<text x="14" y="{(_MT + _H - _MB) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 14 {(_MT + _H - _MB) / 2})">{_esc(ylabel)}</text>'
    )
    return x0, x1, y0, y1


def line_chart(series: dict, path, title: str = "", xlabel: str = "", ylabel: str = "") -> Path:
    """``series`` maps name -> list of (x, y) pairs."""
    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if y_lo == y_hi:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    if x_lo == x_hi:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5

    parts = _header(title)
    x0, x1, y0, y1 = _axes(parts, y_lo, y_hi, ylabel)

    def px(x):
        return x0 + (x - x_lo) / (x_hi - x_lo) * (x1 - x0)

    def py(y):
        return y0 - (y - y_lo) / (y_hi - y_lo) * (y0 - y1)

    for k, (name, pts) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<rect x="{x1 - 150}" y="{_MT + 16 * k}" width="10" height="10" fill="{color}"/>'
            f'<text x="{x1 - 136}" y="{_MT + 16 * k + 9}">{_esc(name)}</text>'
        )
    parts.append(
        f'<text x="{(x0 + x1) / 2}" y="{_H - 12}" text-anchor="middle">{_esc(xlabel)}</text>'
    )
    parts.append("</svg>")
    out = Path(path)
    out.write_text("\n".join(parts))
    return out


def bar_chart(labels, groups: dict, path, title: str = "", ylabel: str = "") -> Path:
    """Grouped bars: ``labels`` index the x axis, ``groups`` maps name -> values."""
    values = [v for vals in groups.values() for v in vals]
    y_lo = min(0.0, min(values)) if values else 0.0
    y_hi = max(values) if values else 1.0
    if y_lo == y_hi:
        y_hi = y_lo + 1.0

    parts = _header(title)
    x0, x1, y0, y1 = _axes(parts, y_lo, y_hi, ylabel)

    def py(y):
        return y0 - (y - y_lo) / (y_hi - y_lo) * (y0 - y1)

    n_labels = max(1, len(labels))
    n_groups = max(1, len(groups))
    slot = (x1 - x0) / n_labels
    bar = slot * 0.8 / n_groups
    for k, (name, vals) in enumerate(groups.items()):
        color = _PALETTE[k % len(_PALETTE)]
        for idx, val in enumerate(vals):
            bx = x0 + idx * slot + slot * 0.1 + k * bar
            top = py(val)
            base = py(0.0) if y_lo < 0 else y0
            parts.append(
                f'<rect x="{bx:.1f}" y="{min(top, base):.1f}" width="{bar:.1f}" '
                f'height="{abs(base - top):.1f}" fill="{color}"/>'
            )
        parts.append(
            f'<rect x="{x1 - 150}" y="{_MT + 16 * k}" width="10" height="10" fill="{color}"/>'
            f'<text x="{x1 - 136}" y="{_MT + 16 * k + 9}">{_esc(name)}</text>'
        )
    for idx, label in enumerate(labels):
        cx = x0 + idx * slot + slot / 2
        parts.append(f'<text x="{cx:.1f}" y="{y0 + 16}" text-anchor="middle">{_esc(label)}</text>')
    parts.append("</svg>")
    out = Path(path)
    out.write_text("\n".join(parts))
    return out
