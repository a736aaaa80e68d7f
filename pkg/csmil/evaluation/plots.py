# csmil/evaluation/plots.py
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from jinja2 import Environment, PackageLoader

logger = logging.getLogger(__name__)

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 64, 620, 36, 370
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]

env = Environment(loader=PackageLoader("csmil.evaluation", "templates"), autoescape=True, trim_blocks=True)

Series = Tuple[str, Sequence[Tuple[float, float]]]


def _ticks(lo: float, hi: float, n: int = 5) -> List[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _label(value: float) -> str:
    return f"{value:.3g}"


def _write(svg: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def render_line_plot(
    series: Sequence[Series],
    path: Union[str, Path],
    title: str = "",
    x_label: str = "",
    y_label: str = "",
    log_x: bool = False,
    y_range: Optional[Tuple[float, float]] = None,
    diagonal: bool = False,
) -> Path:
    """Polyline per series; log_x plots log10(x) (x must be > 0)"""
    fx = (lambda v: math.log10(v)) if log_x else (lambda v: v)
    xs = [fx(x) for _, points in series for x, _ in points]
    ys = [y for _, points in series for _, y in points]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = y_range if y_range else ((min(ys), max(ys)) if ys else (0.0, 1.0))
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def px(v: float) -> float:
        return LEFT + (fx(v) - x_lo) / x_span * (RIGHT - LEFT)

    def py(v: float) -> float:
        return BOTTOM - (v - y_lo) / y_span * (BOTTOM - TOP)

    rendered = [
        {
            "name": name,
            "color": COLORS[i % len(COLORS)],
            "points": " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in points),
        }
        for i, (name, points) in enumerate(series)
    ]
    x_ticks = [
        {"pos": round(LEFT + (t - x_lo) / x_span * (RIGHT - LEFT), 2), "label": _label(10**t if log_x else t)}
        for t in _ticks(x_lo, x_hi)
    ]
    y_ticks = [{"pos": round(py(t), 2), "label": _label(t)} for t in _ticks(y_lo, y_hi)]
    svg = env.get_template("line_plot.svg.j2").render(
        width=WIDTH, height=HEIGHT, left=LEFT, right=RIGHT, top=TOP, bottom=BOTTOM,
        title=title, x_label=x_label, y_label=y_label,
        series=rendered, x_ticks=x_ticks, y_ticks=y_ticks, diagonal=diagonal,
    )
    return _write(svg, path)


def render_bar_plot(
    bars: Sequence[Tuple[str, float]],
    path: Union[str, Path],
    title: str = "",
    y_label: str = "",
) -> Path:
    """Vertical bars around zero; negative values drawn red"""
    values = [v for _, v in bars]
    y_lo = min(0.0, min(values, default=0.0))
    y_hi = max(0.0, max(values, default=0.0))
    y_span = (y_hi - y_lo) or 1.0

    def py(v: float) -> float:
        return BOTTOM - (v - y_lo) / y_span * (BOTTOM - TOP)

    slot = (RIGHT - LEFT) / max(len(bars), 1)
    zero = py(0.0)
    rendered = []
    for i, (label, value) in enumerate(bars):
        top = min(py(value), zero)
        rendered.append(
            {
                "label": label,
                "x": round(LEFT + i * slot + slot * 0.15, 2),
                "y": round(top, 2),
                "width": round(slot * 0.7, 2),
                "height": round(abs(py(value) - zero), 2),
                "color": COLORS[1] if value < 0 else COLORS[0],
            }
        )
    svg = env.get_template("bar_plot.svg.j2").render(
        width=WIDTH, height=HEIGHT, left=LEFT, right=RIGHT, top=TOP, bottom=BOTTOM,
        zero=round(zero, 2), title=title, y_label=y_label, bars=rendered,
        y_ticks=[{"pos": round(py(t), 2), "label": _label(t)} for t in _ticks(y_lo, y_hi)],
    )
    return _write(svg, path)
