"""
Report generation from run output files.

Percentile tables and CDF points of the improvement over the default
configuration, per-model-update median distance from optimal, and arm
fractions per update bucket. Reports are pure functions of the files; charts
are rendered with reportlab graphics (SVG) and an optional PDF summary.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from reportlab.graphics import renderSVG
from reportlab.graphics.charts.legends import Legend
from reportlab.graphics.charts.lineplots import LinePlot
from reportlab.graphics.shapes import Drawing, String
from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.styles import getSampleStyleSheet
from reportlab.lib.units import cm
from reportlab.platypus import Paragraph, SimpleDocTemplate, Spacer, Table, TableStyle

from .bandit_controller import arm_contributions
from .exceptions import ConfigError, EmptyDataError

logger = logging.getLogger(__name__)

RESULTS_COLUMNS = ['ts_ms', 'client_id', 'class_id', 'website_id', 'algo', 'arm', 'config_ids',
                   'plt_ms', 'default_plt_ms', 'optimal_plt_ms']
DECISIONS_COLUMNS = ['ts', 'client', 'class', 'config_id', 'arm', 'class_step']
EVENTS_COLUMNS = ['ts', 'event', 'detail']
UPDATES_COLUMNS = ['ts_ms', 'manager', 'version', 'processed_samples', 'classes']

PERCENTILES = (10, 25, 50, 75, 90, 95, 99)
CDF_POINTS = 200

SERIES_COLORS = [colors.HexColor(c) for c in (
    '#1f77b4', '#ff7f0e', '#2ca02c', '#d62728', '#9467bd', '#8c564b', '#e377c2', '#7f7f7f',
    '#bcbd22', '#17becf', '#393b79',
)]


def percentiles(values: Sequence[float]) -> List[float]:
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        raise EmptyDataError("no values to summarize")
    return [float(v) for v in np.percentile(values, PERCENTILES)]


def sidecar(results_path: Union[str, Path], name: str, suffix: str = '.csv') -> Path:
    path = Path(results_path)
    return path.with_name(f"{path.stem}.{name}{suffix}")


def load_results(paths: Sequence[Union[str, Path]]) -> pd.DataFrame:
    """
    Concatenate results files, tagging each row with its source file.

    Raises:
        EmptyDataError: no paths or no rows
        ConfigError: missing file or unexpected header
    """
    if not paths:
        raise EmptyDataError("no results files given")
    frames = []
    for path in paths:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Results file not found: {path}")
        frame = pd.read_csv(path, dtype={'client_id': str, 'website_id': str, 'config_ids': str})
        if list(frame.columns) != RESULTS_COLUMNS:
            raise ConfigError(f"{path} does not have the results header")
        frame['source'] = path.name
        frames.append(frame)
    results = pd.concat(frames, ignore_index=True)
    if results.empty:
        raise EmptyDataError("results are empty")
    return add_metrics(results)


def add_metrics(results: pd.DataFrame) -> pd.DataFrame:
    results = results.copy()
    results['improvement'] = (results['default_plt_ms'] - results['plt_ms']) / results['default_plt_ms']
    results['distance'] = (results['plt_ms'] - results['optimal_plt_ms']) / results['optimal_plt_ms']
    return results


def percentile_table(results: pd.DataFrame, column: str = 'improvement') -> pd.DataFrame:
    """One row per (source, algo): session count plus the improvement percentiles."""
    rows = []
    for (source, algo), group in results.groupby(['source', 'algo'], sort=True):
        row = {'source': source, 'algo': algo, 'sessions': len(group)}
        row.update({f"p{q}": v for q, v in zip(PERCENTILES, percentiles(group[column]))})
        rows.append(row)
    return pd.DataFrame(rows)


def cdf_points(values: Sequence[float], max_points: int = CDF_POINTS) -> pd.DataFrame:
    """Empirical CDF, down-sampled to at most max_points; both columns non-decreasing."""
    ordered = np.sort(np.asarray(values, dtype=float))
    n = len(ordered)
    if n == 0:
        raise EmptyDataError("no values for a CDF")
    positions = np.unique(np.linspace(0, n - 1, min(n, max_points)).round().astype(int))
    return pd.DataFrame({'value': ordered[positions], 'fraction': (positions + 1) / n})


def update_bounds(updates: Optional[pd.DataFrame]) -> np.ndarray:
    if updates is None or updates.empty:
        return np.zeros(0)
    return np.unique(updates['ts_ms'].to_numpy(dtype=float))


def convergence(results: pd.DataFrame, updates: Optional[pd.DataFrame]) -> pd.DataFrame:
    """
    Median distance from optimal per model-update bucket.

    Bucket 0 holds sessions before the first update; bucket i holds sessions
    that started between update i and update i + 1.
    """
    bounds = update_bounds(updates)
    buckets = np.searchsorted(bounds, results['ts_ms'].to_numpy(dtype=float), side='right')
    rows = []
    for bucket in range(len(bounds) + 1):
        members = results['distance'].to_numpy()[buckets == bucket]
        if len(members) == 0:
            logger.warning(f"Update bucket {bucket} has no sessions")
            continue
        rows.append({
            'update': bucket,
            'start_ms': float(bounds[bucket - 1]) if bucket > 0 else 0.0,
            'sessions': int(len(members)),
            'median_distance': float(np.median(members)),
        })
    return pd.DataFrame(rows, columns=['update', 'start_ms', 'sessions', 'median_distance'])


def arm_series(decisions: Optional[pd.DataFrame], updates: Optional[pd.DataFrame]) -> pd.DataFrame:
    """Arm fractions per update bucket, one column per arm tag."""
    if decisions is None or decisions.empty:
        return pd.DataFrame(columns=['update'])
    bounds = update_bounds(updates)
    records = list(zip(decisions['ts'].astype(int), decisions['arm'].astype(str)))
    fractions = arm_contributions(records, bounds)
    tags = sorted({tag for bucket in fractions for tag in bucket})
    rows = []
    for bucket, values in enumerate(fractions):
        if not values:
            continue
        row = {'update': bucket}
        row.update({tag: values.get(tag, 0.0) for tag in tags})
        rows.append(row)
    return pd.DataFrame(rows, columns=['update'] + tags)


def _read_optional(path: Path) -> Optional[pd.DataFrame]:
    if not path.exists():
        return None
    return pd.read_csv(path)


@dataclass
class Report:
    percentiles: pd.DataFrame
    cdf: Dict[str, pd.DataFrame] = field(default_factory=dict)
    convergence: Dict[str, pd.DataFrame] = field(default_factory=dict)
    arms: Dict[str, pd.DataFrame] = field(default_factory=dict)


def build_report(paths: Sequence[Union[str, Path]]) -> Report:
    results = load_results(paths)
    report = Report(percentiles=percentile_table(results))
    for path in paths:
        path = Path(path)
        rows = results[results['source'] == path.name]
        label = f"{rows['algo'].iloc[0]} ({path.stem})" if not rows.empty else path.stem
        if rows.empty:
            continue
        updates = _read_optional(sidecar(path, 'updates'))
        report.cdf[label] = cdf_points(rows['improvement'])
        report.convergence[label] = convergence(rows, updates)
        report.arms[label] = arm_series(_read_optional(sidecar(path, 'decisions')), updates)
    return report


def _line_chart(title: str, series: Dict[str, pd.DataFrame], x: str, y: str,
                x_label: str, y_label: str) -> Drawing:
    width, height = 480, 300
    drawing = Drawing(width, height)
    drawing.add(String(width / 2, height - 16, title, textAnchor='middle', fontSize=11))
    plot = LinePlot()
    plot.x, plot.y = 50, 50
    plot.width, plot.height = width - 170, height - 90
    data = []
    for frame in series.values():
        if frame.empty:
            data.append([(0.0, 0.0)])
        else:
            data.append(list(zip(frame[x].astype(float), frame[y].astype(float))))
    plot.data = data
    for i in range(len(data)):
        plot.lines[i].strokeColor = SERIES_COLORS[i % len(SERIES_COLORS)]
        plot.lines[i].strokeWidth = 1.2
    drawing.add(plot)
    drawing.add(String(50 + plot.width / 2, 18, x_label, textAnchor='middle', fontSize=9))
    drawing.add(String(14, 50 + plot.height / 2, y_label, fontSize=9))

    legend = Legend()
    legend.x, legend.y = width - 110, height - 40
    legend.fontSize = 7
    legend.colorNamePairs = [(SERIES_COLORS[i % len(SERIES_COLORS)], name) for i, name in enumerate(series)]
    drawing.add(legend)
    return drawing


def cdf_chart(report: Report) -> Drawing:
    return _line_chart('Improvement over default (CDF)', report.cdf, 'value', 'fraction',
                       'improvement', 'CDF')


def convergence_chart(report: Report) -> Drawing:
    return _line_chart('Median distance from optimal', report.convergence, 'update', 'median_distance',
                       'model update', 'distance')


def write_report(report: Report, prefix: Union[str, Path], svg: bool = True, pdf: bool = False) -> List[Path]:
    """Write CSV tables (always), SVG charts and a PDF summary; returns written paths."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    written = []

    def target(name: str, suffix: str) -> Path:
        return prefix.with_name(f"{prefix.name}.{name}{suffix}")

    report.percentiles.to_csv(target('percentiles', '.csv'), index=False, float_format='%.6f',
                              lineterminator='\n')
    written.append(target('percentiles', '.csv'))
    for name, tables in (('cdf', report.cdf), ('convergence', report.convergence), ('arms', report.arms)):
        frames = [frame.assign(series=label) for label, frame in tables.items() if not frame.empty]
        combined = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=['series'])
        combined.to_csv(target(name, '.csv'), index=False, float_format='%.6f', lineterminator='\n')
        written.append(target(name, '.csv'))

    if svg:
        for name, drawing in (('cdf', cdf_chart(report)), ('convergence', convergence_chart(report))):
            renderSVG.drawToFile(drawing, str(target(name, '.svg')))
            written.append(target(name, '.svg'))
    if pdf:
        written.append(write_pdf(report, target('summary', '.pdf')))

    logger.info(f"Report written: {', '.join(p.name for p in written)}")
    return written


def write_pdf(report: Report, path: Union[str, Path]) -> Path:
    path = Path(path)
    styles = getSampleStyleSheet()
    doc = SimpleDocTemplate(str(path), pagesize=A4, rightMargin=2 * cm, leftMargin=2 * cm,
                            topMargin=2 * cm, bottomMargin=2 * cm)
    story = [Paragraph('Configuration tuning report', styles['Title']), Spacer(1, 12),
             Paragraph('Improvement over the default configuration', styles['Heading2'])]

    header = ['algo', 'sessions'] + [f"p{q}" for q in PERCENTILES]
    rows = [header]
    for _, row in report.percentiles.iterrows():
        rows.append([row['algo'], str(int(row['sessions']))] + [f"{row[f'p{q}']:.1%}" for q in PERCENTILES])
    table = Table(rows, repeatRows=1)
    table.setStyle(TableStyle([
        ('BACKGROUND', (0, 0), (-1, 0), colors.HexColor('#1a237e')),
        ('TEXTCOLOR', (0, 0), (-1, 0), colors.white),
        ('FONTSIZE', (0, 0), (-1, -1), 8),
        ('GRID', (0, 0), (-1, -1), 0.5, colors.grey),
        ('ROWBACKGROUNDS', (0, 1), (-1, -1), [colors.white, colors.HexColor('#f5f5f5')]),
    ]))
    story.extend([table, Spacer(1, 18), cdf_chart(report), Spacer(1, 12), convergence_chart(report)])
    doc.build(story)
    return path
