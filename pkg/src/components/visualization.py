"""
Bench report output: CSV tables, static SVG plots and an interactive HTML page.

Both plot kinds come from the same plotly figure of error against N (or wall
clock) on log-log axes; SVG export goes through kaleido.
"""
from pathlib import Path
from typing import Dict, List

import pandas as pd
import plotly.express as px
import plotly.graph_objects as go
from tabulate import tabulate

from src.components.bench import GainTable
from src.utils.errors import SQMCError
from src.utils.formatters import format_table_for_display
from src.utils.logger import get_logger

logger = get_logger(__name__)

REPORT_FORMATS = ('csv', 'svg', 'html', 'all')
ENGINE_COLORS = ['#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd', '#8c564b', '#e377c2', '#7f7f7f']

WIDTH, HEIGHT = 640, 420


def _error_column(rows: pd.DataFrame) -> str:
    return 'mse' if rows['mse'].notna().any() else 'variance'


class BenchReport:
    """Renders one GainTable in the report formats."""

    def __init__(self, table: GainTable):
        if table.rows.empty:
            raise SQMCError("cannot report an empty table")
        self.table = table
        self.rows = table.rows
        self.error_column = _error_column(self.rows)

    def curves(self, x_column: str) -> Dict[str, pd.DataFrame]:
        """Per engine, the (x, error) cells usable on log axes, sorted by x."""
        curves = {}
        for engine in self.table.engines:
            cells = self.rows[self.rows['engine'] == engine][[x_column, self.error_column]].astype(float)
            cells = cells[(cells[x_column] > 0) & (cells[self.error_column] > 0)]
            if cells.empty:
                logger.warning("engine %s has no positive %s values to plot", engine, self.error_column)
                continue
            curves[engine] = cells.sort_values(x_column)
        return curves

    def figure(self, x_column: str, x_label: str) -> go.Figure:
        """One line per engine, error against `x_column` on log-log axes."""
        curves = self.curves(x_column)
        if not curves:
            raise SQMCError(f"nothing to plot: no positive {self.error_column} values")
        frame = pd.concat([cells.assign(engine=engine) for engine, cells in curves.items()], ignore_index=True)
        fig = px.line(
            frame,
            x=x_column, y=self.error_column, color='engine', markers=True,
            log_x=True, log_y=True,
            title=f"<b>{self.table.target}: {self.error_column} vs {x_label}</b>",
            labels={x_column: x_label, self.error_column: self.error_column.upper()},
            color_discrete_sequence=ENGINE_COLORS,
            category_orders={'engine': list(curves)},
        )
        fig.update_layout(width=WIDTH, height=HEIGHT, template='plotly_white')
        if self.table.reference is not None:
            fig.add_annotation(
                text=f"* reference value: {self.table.reference!r}",
                xref="paper", yref="paper",
                x=1, y=1.02, xanchor='right', yanchor='bottom',
                showarrow=False,
                font=dict(size=10, color="gray")
            )
        return fig

    def write_svg(self, path, x_column: str, x_label: str) -> Path:
        path = Path(path)
        self.figure(x_column, x_label).write_image(str(path), format='svg')
        return path

    def to_html(self) -> str:
        fig = self.figure('n', 'N')
        return fig.to_html(include_plotlyjs='cdn', full_html=True)

    def console_table(self) -> str:
        return tabulate(format_table_for_display(self.rows), headers='keys', tablefmt='github', showindex=False)


def emit_report(table: GainTable, fmt: str, out_dir) -> List[Path]:
    """
    Writes the report files for `fmt` into out_dir.

    Args:
        table: aggregated bench table
        fmt: 'csv' (table.csv, gains.csv), 'svg' (plot_mse_vs_n.svg,
            plot_mse_vs_time.svg), 'html' (report.html) or 'all'

    Returns:
        list of written paths
    """
    if fmt not in REPORT_FORMATS:
        raise SQMCError(f"unknown report format '{fmt}' (choose from {', '.join(REPORT_FORMATS)})")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = BenchReport(table)
    written = []

    if fmt in ('csv', 'all'):
        path = out_dir / 'table.csv'
        table.to_csv(path)
        written.append(path)
        try:
            gains = table.gains()
        except SQMCError as e:
            logger.info("no gains.csv: %s", e)
        else:
            path = out_dir / 'gains.csv'
            gains.to_csv(path, index=False, float_format='%r')
            written.append(path)

    if fmt in ('svg', 'all'):
        for name, x_column, label in (('plot_mse_vs_n.svg', 'n', 'N'),
                                      ('plot_mse_vs_time.svg', 'seconds', 'seconds')):
            try:
                written.append(report.write_svg(out_dir / name, x_column, label))
            except SQMCError as e:
                logger.warning("skipping %s: %s", name, e)

    if fmt in ('html', 'all'):
        path = out_dir / 'report.html'
        try:
            path.write_text(report.to_html())
        except SQMCError as e:
            logger.warning("skipping %s: %s", path.name, e)
        else:
            written.append(path)

    logger.info("report written: %s", ', '.join(p.name for p in written))
    return written
