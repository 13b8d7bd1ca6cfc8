from __future__ import annotations

import csv
import logging
import re
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from reportlab.lib import colors
from reportlab.lib.units import inch
from reportlab.pdfgen import canvas

from ptdi.errors import PlotDataError
from ptdi.models import EvalSummary
from ptdi.utils import atomic_output

logger = logging.getLogger(__name__)

FIGURE_KINDS: Dict[str, str] = {
    "fdr_power": "estimator",
    "calibration_size": "rho",
    "eta": "eta",
    "pi_test": "pi_test",
}
SERIES_HEADER = ("alpha", "fdr", "fdr_sd", "power", "power_sd")
SERIES_AXES = ("estimator", "pi_test", "rho", "eta")

PAGE_SIZE = (7.5 * inch, 5.0 * inch)
PLOT_LEFT = 0.9 * inch
PLOT_BOTTOM = 0.8 * inch
PLOT_WIDTH = 4.6 * inch
PLOT_HEIGHT = 3.4 * inch
LEGEND_X = PLOT_LEFT + PLOT_WIDTH + 0.3 * inch

PALETTE = ["#174064", "#C0392B", "#1E8449", "#B9770E", "#6C3483", "#117A65", "#5D6D7E"]


def _series_label(summary: EvalSummary, column: str) -> str:
    value = getattr(summary, column)
    if value is None:
        return "all"
    if hasattr(value, "value"):
        return str(value.value)
    return f"{value:g}"


def group_series(rows: Sequence[EvalSummary], kind: str) -> "OrderedDict[str, List[EvalSummary]]":
    """
    Rows grouped by the column the figure kind varies, each sorted by alpha.
    Any other axis that still varies inside a group splits it further, e.g.
    "subtraction_pi_test=0.5"; a series may hold one row per alpha.
    """
    if kind not in FIGURE_KINDS:
        raise PlotDataError(f"unknown figure kind {kind!r}; choose from {', '.join(FIGURE_KINDS)}")
    if not rows:
        raise PlotDataError("no rows")
    column = FIGURE_KINDS[kind]
    groups: "OrderedDict[str, List[EvalSummary]]" = OrderedDict()
    for row in rows:
        groups.setdefault(_series_label(row, column), []).append(row)

    series: "OrderedDict[str, List[EvalSummary]]" = OrderedDict()
    for label, group in groups.items():
        varying = [
            axis for axis in SERIES_AXES
            if axis != column and len({_series_label(r, axis) for r in group}) > 1
        ]
        for row in group:
            key = "_".join([label] + [f"{axis}={_series_label(row, axis)}" for axis in varying])
            series.setdefault(key, []).append(row)

    for label, series_rows in series.items():
        series_rows.sort(key=lambda r: r.alpha)
        alphas = [r.alpha for r in series_rows]
        if len(set(alphas)) != len(alphas):
            raise PlotDataError(f"series {label!r} holds several rows at the same alpha")
    return series


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", label)


def _write_series(path: Path, rows: Sequence[EvalSummary]) -> None:
    with atomic_output(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SERIES_HEADER)
        for r in rows:
            writer.writerow([repr(r.alpha), repr(r.fdr), repr(r.fdr_sd), repr(r.power_mean), repr(r.power_sd)])


# ----------------------------------------------------
# CHART DRAWING
# ----------------------------------------------------
def _to_page(x: float, y: float, x_max: float) -> Tuple[float, float]:
    return PLOT_LEFT + (x / x_max) * PLOT_WIDTH, PLOT_BOTTOM + y * PLOT_HEIGHT


def _draw_axes(c: canvas.Canvas, x_max: float, alphas: Sequence[float]) -> None:
    c.setStrokeColor(colors.HexColor("#D6E2F0"))
    c.setLineWidth(0.5)
    for tick in (0.2, 0.4, 0.6, 0.8, 1.0):
        _, y = _to_page(0, tick, x_max)
        c.line(PLOT_LEFT, y, PLOT_LEFT + PLOT_WIDTH, y)

    c.setStrokeColor(colors.black)
    c.setLineWidth(1)
    c.line(PLOT_LEFT, PLOT_BOTTOM, PLOT_LEFT + PLOT_WIDTH, PLOT_BOTTOM)
    c.line(PLOT_LEFT, PLOT_BOTTOM, PLOT_LEFT, PLOT_BOTTOM + PLOT_HEIGHT)

    c.setFont("Helvetica", 8)
    for tick in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        _, y = _to_page(0, tick, x_max)
        c.drawRightString(PLOT_LEFT - 0.08 * inch, y - 3, f"{tick:.1f}")
    for alpha in alphas:
        x, _ = _to_page(alpha, 0, x_max)
        c.drawCentredString(x, PLOT_BOTTOM - 0.18 * inch, f"{alpha:g}")

    c.setFont("Helvetica-Bold", 10)
    c.drawCentredString(PLOT_LEFT + PLOT_WIDTH / 2, PLOT_BOTTOM - 0.45 * inch, "target FDR level (alpha)")
    c.saveState()
    c.translate(PLOT_LEFT - 0.5 * inch, PLOT_BOTTOM + PLOT_HEIGHT / 2)
    c.rotate(90)
    c.drawCentredString(0, 0, "FDR / power")
    c.restoreState()


def _draw_diagonal(c: canvas.Canvas, x_max: float) -> None:
    end = min(x_max, 1.0)
    c.setStrokeColor(colors.HexColor("#6B7280"))
    c.setDash(4, 3)
    c.line(*_to_page(0, 0, x_max), *_to_page(end, end, x_max))
    c.setDash()


def _draw_power_bars(
    c: canvas.Canvas,
    series: "OrderedDict[str, List[EvalSummary]]",
    alphas: Sequence[float],
    x_max: float,
) -> None:
    spacing = min(b - a for a, b in zip(alphas, alphas[1:])) if len(alphas) > 1 else x_max / 2
    group_width = (spacing / x_max) * PLOT_WIDTH * 0.7
    bar_width = group_width / len(series)
    for idx, (label, rows) in enumerate(series.items()):
        fill = colors.HexColor(PALETTE[idx % len(PALETTE)])
        c.setFillColor(fill, alpha=0.3)
        for r in rows:
            x, _ = _to_page(r.alpha, 0, x_max)
            left = x - group_width / 2 + idx * bar_width
            c.rect(left, PLOT_BOTTOM, bar_width, r.power_mean * PLOT_HEIGHT, fill=1, stroke=0)
    c.setFillColor(colors.black, alpha=1)


def _draw_fdr_lines(c: canvas.Canvas, series: "OrderedDict[str, List[EvalSummary]]", x_max: float) -> None:
    for idx, (label, rows) in enumerate(series.items()):
        color = colors.HexColor(PALETTE[idx % len(PALETTE)])
        c.setStrokeColor(color)
        c.setFillColor(color)
        c.setLineWidth(1.5)
        points = [_to_page(r.alpha, r.fdr, x_max) for r in rows]
        if len(points) > 1:
            path = c.beginPath()
            path.moveTo(*points[0])
            for point in points[1:]:
                path.lineTo(*point)
            c.drawPath(path, stroke=1, fill=0)
        for x, y in points:
            c.circle(x, y, 2.2, stroke=0, fill=1)


def _draw_legend(c: canvas.Canvas, series: "OrderedDict[str, List[EvalSummary]]", column: str) -> None:
    y = PLOT_BOTTOM + PLOT_HEIGHT
    c.setFont("Helvetica-Bold", 9)
    c.setFillColor(colors.black)
    c.drawString(LEGEND_X, y, column.upper())
    y -= 0.22 * inch
    c.setFont("Helvetica", 8.5)
    for idx, label in enumerate(series):
        color = colors.HexColor(PALETTE[idx % len(PALETTE)])
        c.setStrokeColor(color)
        c.setLineWidth(1.5)
        c.line(LEGEND_X, y + 3, LEGEND_X + 0.3 * inch, y + 3)
        c.setFillColor(color, alpha=0.3)
        c.rect(LEGEND_X + 0.35 * inch, y, 0.15 * inch, 0.12 * inch, fill=1, stroke=0)
        c.setFillColor(colors.black, alpha=1)
        c.drawString(LEGEND_X + 0.58 * inch, y + 1, label)
        y -= 0.2 * inch
    c.setFillColor(colors.HexColor("#6B7280"))
    c.setFont("Helvetica-Oblique", 7.5)
    c.drawString(LEGEND_X, y - 0.1 * inch, "lines: FDR  bars: power")
    c.drawString(LEGEND_X, y - 0.25 * inch, "dashed: FDR = alpha")


def render_chart(path: Path, series: "OrderedDict[str, List[EvalSummary]]", kind: str) -> None:
    """Static vector chart: FDR lines over power bars with the alpha = FDR reference line."""
    alphas = sorted({r.alpha for rows in series.values() for r in rows})
    x_max = max(alphas) * 1.15

    with atomic_output(path, "wb") as handle:
        c = canvas.Canvas(handle, pagesize=PAGE_SIZE)
        c.setTitle(f"PTDI {kind} chart")
        c.setFillColor(colors.HexColor("#0E2F52"))
        c.setFont("Helvetica-Bold", 13)
        c.drawString(PLOT_LEFT, PAGE_SIZE[1] - 0.5 * inch, f"FDR and power by alpha ({kind.replace('_', ' ')})")
        _draw_axes(c, x_max, alphas)
        _draw_power_bars(c, series, alphas, x_max)
        _draw_diagonal(c, x_max)
        _draw_fdr_lines(c, series, x_max)
        _draw_legend(c, series, FIGURE_KINDS[kind])
        c.showPage()
        c.save()


def write_plot_data(rows: Sequence[EvalSummary], kind: str, out_dir: str | Path) -> List[Path]:
    """
    Write one CSV per series plus <kind>.pdf into out_dir.
    Files already written are removed again if a later one fails.
    """
    series = group_series(rows, kind)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    written: List[Path] = []
    try:
        for label, series_rows in series.items():
            path = out / f"{kind}_{_safe_name(label)}.csv"
            _write_series(path, series_rows)
            written.append(path)
        chart = out / f"{kind}.pdf"
        render_chart(chart, series, kind)
        written.append(chart)
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    logger.info("Wrote %d plot files to %s", len(written), out)
    return written
