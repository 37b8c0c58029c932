"""
CSV and SVG emission for run reports and summary tables.

Floats are written with ``repr`` so files parse back to the exact values and
repeated runs produce identical bytes. Charts are plain SVG strings; each
plotted point carries its value in ``data-x``/``data-y`` attributes and each
panel its axis range in ``data-x-min``/``data-x-max``/``data-y-min``/
``data-y-max``.
"""
import csv
import json
import logging
import math
from pathlib import Path
from xml.sax.saxutils import escape

from losslab import FORMAT_VERSION, __version__
from losslab.exceptions import InputError
from losslab.harness import RunReport, SummaryTable

logger = logging.getLogger(__name__)

RUN_HEADER = (
    'epoch', 'lr', 'total', 'softmax_term', 'mean_term', 'tail_term',
    'median_k', 'mean_k', 'eval_mae', 'eval_eps',
)
SUMMARY_COLUMNS = ('mae_mean', 'mae_std', 'eps_mean', 'eps_std')
COMPARISON_HEADER = ('loss',) + SUMMARY_COLUMNS
GRADCHECK_HEADER = ('loss', 'cases', 'max_rel_error')
TRAJECTORY_HEADER = ('epoch', 'median_k')
FORMATS = ('csv', 'svg')

COLORS = ('#4a90d9', '#d94a4a', '#4ab07a', '#d9a84a')
PANEL_WIDTH = 500
PANEL_HEIGHT = 220
MARGIN_LEFT = 70
MARGIN_RIGHT = 20
MARGIN_TOP = 40
MARGIN_BOTTOM = 50


def format_value(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, header, rows):
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
    logger.info('Wrote %s', path)
    return Path(path)


def read_csv_rows(path):
    """Header and rows of a CSV file; numeric cells come back as floats."""
    def parse(cell):
        try:
            return float(cell)
        except ValueError:
            return cell

    with open(path, newline='') as handle:
        reader = csv.reader(handle)
        header = tuple(next(reader))
        return header, [tuple(parse(cell) for cell in row) for row in reader]


def run_rows(report):
    return [
        (
            r.epoch, r.lr, r.total, r.softmax_term, r.mean_term, r.tail_term,
            r.median_k, r.mean_k, r.eval_mae, r.eval_eps,
        )
        for r in report.records
    ]


def summary_header(table):
    header = (table.key_column,) + SUMMARY_COLUMNS
    if table.key_column == 'k':
        header += ('overcentralized_mean',)
    return header


def summary_rows(table):
    rows = []
    for row in table.rows:
        values = (row.key, row.mae_mean, row.mae_std, row.eps_mean, row.eps_std)
        if table.key_column == 'k':
            values += (row.overcentralized_mean,)
        rows.append(values)
    return rows


def chart_bounds(values, pad=0.05):
    """Axis range covering ``values`` with a small margin."""
    finite = [v for v in values if v is not None and math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    low, high = min(finite), max(finite)
    span = high - low
    margin = span * pad if span else max(abs(high) * pad, 0.5)
    return low - margin, high + margin


def _panel(index, title, x_values, x_labels, series, x_title, y_title):
    x_min, x_max = chart_bounds(x_values, pad=0.0)
    if x_min == x_max:
        x_min, x_max = x_min - 0.5, x_max + 0.5
    y_min, y_max = chart_bounds([y for _, ys in series for y in ys])
    top = index * (MARGIN_TOP + PANEL_HEIGHT + MARGIN_BOTTOM) + MARGIN_TOP

    def sx(x):
        return MARGIN_LEFT + (x - x_min) / (x_max - x_min) * PANEL_WIDTH

    def sy(y):
        return top + PANEL_HEIGHT - (y - y_min) / (y_max - y_min) * PANEL_HEIGHT

    parts = [
        f'  <g class="panel" data-title="{escape(title)}" '
        f'data-x-min="{x_min!r}" data-x-max="{x_max!r}" '
        f'data-y-min="{y_min!r}" data-y-max="{y_max!r}">',
        f'    <text x="{MARGIN_LEFT + PANEL_WIDTH / 2}" y="{top - 14}" '
        f'text-anchor="middle" font-size="14" font-weight="600" fill="#333">'
        f'{escape(title)}</text>',
    ]
    for step in range(6):
        value = y_min + step / 5 * (y_max - y_min)
        y = sy(value)
        parts.append(
            f'    <line x1="{MARGIN_LEFT}" y1="{y:.2f}" x2="{MARGIN_LEFT + PANEL_WIDTH}" '
            f'y2="{y:.2f}" stroke="#e0e0e0" stroke-width="1"/>'
        )
        parts.append(
            f'    <text x="{MARGIN_LEFT - 8}" y="{y + 4:.2f}" text-anchor="end" '
            f'font-size="11" fill="#666">{value:.3g}</text>'
        )
    for x, label in zip(x_values, x_labels):
        parts.append(
            f'    <text x="{sx(x):.2f}" y="{top + PANEL_HEIGHT + 18}" '
            f'text-anchor="middle" font-size="11" fill="#333">{escape(label)}</text>'
        )
    parts.append(
        f'    <text x="{MARGIN_LEFT + PANEL_WIDTH / 2}" y="{top + PANEL_HEIGHT + 40}" '
        f'text-anchor="middle" font-size="12" fill="#666">{escape(x_title)}</text>'
    )
    parts.append(
        f'    <text x="15" y="{top + PANEL_HEIGHT / 2}" text-anchor="middle" '
        f'font-size="12" fill="#666" transform="rotate(-90, 15, {top + PANEL_HEIGHT / 2})">'
        f'{escape(y_title)}</text>'
    )
    for number, (name, ys) in enumerate(series):
        color = COLORS[number % len(COLORS)]
        points = [(x, y) for x, y in zip(x_values, ys) if y is not None and math.isfinite(y)]
        path = ' '.join(f'{sx(x):.2f},{sy(y):.2f}' for x, y in points)
        parts.append(
            f'    <polyline class="series" data-name="{escape(name)}" points="{path}" '
            f'fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for x, y in points:
            parts.append(
                f'    <circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}" '
                f'data-series="{escape(name)}" data-x="{x!r}" data-y="{y!r}"/>'
            )
    parts.append(
        f'    <line x1="{MARGIN_LEFT}" y1="{top}" x2="{MARGIN_LEFT}" '
        f'y2="{top + PANEL_HEIGHT}" stroke="#333" stroke-width="1"/>'
    )
    parts.append(
        f'    <line x1="{MARGIN_LEFT}" y1="{top + PANEL_HEIGHT}" '
        f'x2="{MARGIN_LEFT + PANEL_WIDTH}" y2="{top + PANEL_HEIGHT}" '
        f'stroke="#333" stroke-width="1"/>'
    )
    parts.append('  </g>')
    return parts


def svg_line_chart(title, x_values, panels, x_title, x_labels=None):
    """
    One SVG document with a line-chart panel per ``(y_title, series)``;
    ``series`` is a list of ``(name, y_values)``. Give ``x_labels`` for
    categorical axes (``x_values`` are then the category positions).
    """
    x_values = [float(x) for x in x_values]
    if not x_values:
        raise InputError('cannot chart an empty series')
    if x_labels is None:
        x_labels = [format(x, 'g') for x in x_values]
    width = MARGIN_LEFT + PANEL_WIDTH + MARGIN_RIGHT
    height = len(panels) * (MARGIN_TOP + PANEL_HEIGHT + MARGIN_BOTTOM) + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'width="{width}" height="{height}" font-family="sans-serif">',
        f'  <title>{escape(title)}</title>',
        f'  <rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for index, (y_title, series) in enumerate(panels):
        parts.extend(_panel(
            index, f'{title}: {y_title}', x_values, x_labels, series, x_title, y_title
        ))
    parts.append('</svg>')
    return '\n'.join(parts) + '\n'


def run_chart(report):
    epochs = [record.epoch for record in report.records]
    return svg_line_chart(
        f'{report.config["loss"]} seed {report.seed}',
        epochs,
        [
            ('MAE', [('eval_mae', [r.eval_mae for r in report.records])]),
            ('epsilon-error', [('eval_eps', [r.eval_eps for r in report.records])]),
        ],
        'epoch',
    )


def summary_chart(table):
    keys = [row.key for row in table.rows]
    if table.key_column == 'lambda2':
        x_values, x_labels = [float(key) for key in keys], None
    else:
        x_values, x_labels = list(range(len(keys))), keys
    panels = [
        ('MAE', [('mae_mean', [row.mae_mean for row in table.rows])]),
        ('epsilon-error', [('eps_mean', [row.eps_mean for row in table.rows])]),
    ]
    return svg_line_chart(
        f'final metrics by {table.key_column}', x_values, panels,
        table.key_column, x_labels=x_labels,
    )


def emit_report(obj, output_dir, stem, formats=FORMATS):
    """Write ``<stem>.csv`` and/or ``<stem>.svg``; returns the written paths."""
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise InputError(f'unknown report formats {sorted(unknown)}')
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(obj, RunReport):
        header, rows, chart = RUN_HEADER, run_rows(obj), run_chart
    elif isinstance(obj, SummaryTable):
        header, rows, chart = summary_header(obj), summary_rows(obj), summary_chart
    else:
        raise InputError(f'cannot emit a report for {type(obj).__name__}')
    paths = []
    if 'csv' in formats:
        paths.append(write_csv(output_dir / f'{stem}.csv', header, rows))
    if 'svg' in formats:
        path = output_dir / f'{stem}.svg'
        path.write_text(chart(obj))
        logger.info('Wrote %s', path)
        paths.append(path)
    return paths


def write_trajectory(table, output_dir, stem):
    return write_csv(Path(output_dir) / f'{stem}.csv', TRAJECTORY_HEADER, table.trajectory)


def write_gradcheck(rows, output_dir):
    return write_csv(
        Path(output_dir) / 'gradcheck.csv',
        GRADCHECK_HEADER,
        [(row.loss, row.cases, row.max_rel_error) for row in rows],
    )


def write_manifest(output_dir, command, config, seeds, files, extra=None):
    """Describe a command's outputs; no timestamps so reruns are identical."""
    document = {
        'command': command,
        'format_version': FORMAT_VERSION,
        'code_version': __version__,
        'config': config,
        'seeds': list(seeds),
        'files': sorted(Path(f).name for f in files),
    }
    if extra:
        document.update(extra)
    path = Path(output_dir) / 'manifest.json'
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + '\n')
    logger.info('Wrote %s', path)
    return path
