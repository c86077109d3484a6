"""Loss-curve smoothing and a dependency-free SVG line plot.

SVG output is plain text built with fixed-precision coordinates, so two
plots of the same trace are byte-identical and diff cleanly in tests.
"""

from __future__ import annotations

__all__ = ["ema_smooth", "loss_curve_svg"]

_SERIES = ("rpn_cls", "rpn_reg", "det_cls", "det_reg", "total")
_COLORS = {
    "rpn_cls": "#1f77b4",
    "rpn_reg": "#ff7f0e",
    "det_cls": "#2ca02c",
    "det_reg": "#d62728",
    "total": "#000000",
}

_WIDTH, _HEIGHT = 800, 480
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 60, 150, 20, 40


def ema_smooth(values, factor: float = 0.9) -> list[float]:
    """Exponential moving average: s[0] = v[0], s[t] = f*s[t-1] + (1-f)*v[t]."""
    if not 0.0 <= factor < 1.0:
        raise ValueError(f"smoothing factor must lie in [0, 1), got {factor}")
    values = [float(v) for v in values]
    if not values:
        return []
    out = [values[0]]
    for v in values[1:]:
        out.append(factor * out[-1] + (1.0 - factor) * v)
    return out


def _polyline(xs, ys, color: str) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return (
        f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'
    )


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    step = (hi - lo) / (n - 1)
    return [lo + i * step for i in range(n)]


def loss_curve_svg(trace, path, factor: float = 0.9) -> None:
    """Plot the five EMA-smoothed loss series of a training trace to SVG.

    ``trace`` is a TrainTrace (or any iterable of rows with the attributes
    rpn_cls, rpn_reg, det_cls, det_reg, total).
    """
    rows = list(trace)
    if not rows:
        raise ValueError("cannot plot an empty trace")
    series = {
        name: ema_smooth([getattr(r, name) for r in rows], factor) for name in _SERIES
    }

    n = len(rows)
    y_max = max(max(v) for v in series.values())
    y_max = y_max if y_max > 0 else 1.0
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(step: int) -> float:
        return _MARGIN_L + (plot_w * step / max(n - 1, 1))

    def sy(v: float) -> float:
        return _MARGIN_T + plot_h * (1.0 - v / y_max)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" x2="{_MARGIN_L}" '
        f'y2="{_HEIGHT - _MARGIN_B}" stroke="#333"/>',
        f'<line x1="{_MARGIN_L}" y1="{_HEIGHT - _MARGIN_B}" '
        f'x2="{_WIDTH - _MARGIN_R}" y2="{_HEIGHT - _MARGIN_B}" stroke="#333"/>',
    ]
    for v in _ticks(0.0, y_max):
        y = sy(v)
        parts.append(
            f'<line x1="{_MARGIN_L - 4}" y1="{y:.2f}" x2="{_MARGIN_L}" y2="{y:.2f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{_MARGIN_L - 8}" y="{y + 4:.2f}" font-size="11" '
            f'text-anchor="end" font-family="sans-serif">{v:.3g}</text>'
        )
    for s in _ticks(0, max(n - 1, 1)):
        x = sx(s)
        parts.append(
            f'<line x1="{x:.2f}" y1="{_HEIGHT - _MARGIN_B}" x2="{x:.2f}" '
            f'y2="{_HEIGHT - _MARGIN_B + 4}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{x:.2f}" y="{_HEIGHT - _MARGIN_B + 16}" font-size="11" '
            f'text-anchor="middle" font-family="sans-serif">{int(round(s))}</text>'
        )
    parts.append(
        f'<text x="{_MARGIN_L + plot_w / 2:.2f}" y="{_HEIGHT - 6}" font-size="12" '
        f'text-anchor="middle" font-family="sans-serif">step</text>'
    )

    xs = [sx(i) for i in range(n)]
    for name in _SERIES:
        parts.append(_polyline(xs, [sy(v) for v in series[name]], _COLORS[name]))
    for i, name in enumerate(_SERIES):
        ly = _MARGIN_T + 14 + 18 * i
        lx = _WIDTH - _MARGIN_R + 12
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{_COLORS[name]}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{lx + 28}" y="{ly}" font-size="12" '
            f'font-family="sans-serif">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
