"""
Parameter sweeps: one experiment per axis value, summarized in a table.
"""

import re
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from loguru import logger

from analysis.config import SWEEP_CONFIG
from parsers.workload_loader import WorkloadCatalog

from .experiment_config import ExperimentConfig, ExperimentError
from .runner import run_experiment

LEAD_COLUMNS = ['workload', 'axis']
EXTRA_COLUMNS = ['entries_written', 'rb', 'cb', 'db', 'cfn', 'dfn', 'exit_status']


def _slug(text: str) -> str:
    return re.sub(r'[^A-Za-z0-9_.-]+', '_', text)


def _row(axis: str, value: Any, report) -> Dict[str, Any]:
    data = report.to_dict()
    row: Dict[str, Any] = {'workload': report.workload, 'axis': axis, 'value': value,
                           'wall_seconds': data['timing']['total_wall_seconds'],
                           'target_steps': data['timing']['target_steps']}
    for column in SWEEP_CONFIG['columns'] + EXTRA_COLUMNS:
        if column not in row:
            row[column] = data[column]
    return row


def run_sweep(base: ExperimentConfig, axis: str, values: Sequence[Any],
              catalog: Optional[WorkloadCatalog] = None,
              output_dir: Optional[str] = None) -> pd.DataFrame:
    """
    Run one experiment per value of `axis` and summarize them.

    Args:
        base: Configuration shared by every run
        axis: One of SWEEP_CONFIG['axes']
        values: Axis values, in row order
        catalog: Workload catalog; the default catalog when omitted
        output_dir: When given, per-run reports and the CSV and JSON summaries are written there

    Returns:
        DataFrame with one row per value
    """
    if not values:
        raise ExperimentError("a sweep needs at least one value")
    catalog = catalog or WorkloadCatalog()
    out = Path(output_dir) if output_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    rows: List[Dict[str, Any]] = []
    for value in values:
        config = base.with_value(axis, value)
        report_path = str(out / f"{_slug(base.workload)}_{axis}_{_slug(str(value))}.json") if out else None
        config = replace(config, report_path=report_path, verify=False)
        result = run_experiment(config, catalog)
        rows.append(_row(axis, getattr(config, axis), result.report))
        logger.info(f"Sweep {axis}={value}: BF={result.report.bf} CF={result.report.cf} GSR={result.report.gsr:.3f}")

    table = pd.DataFrame(rows, columns=LEAD_COLUMNS + SWEEP_CONFIG['columns'] + EXTRA_COLUMNS)
    if out is not None:
        stem = f"sweep_{_slug(base.workload)}_{axis}"
        table.to_csv(out / f"{stem}.csv", index=False)
        table.to_json(out / f"{stem}.json", orient='records', indent=2)
        logger.info(f"Sweep summary written to {out / stem}.csv and .json")
    return table


def parse_values(axis: str, text: str) -> List[Any]:
    """Split a comma-separated CLI value list; numeric axes become ints."""
    parts = [p.strip() for p in text.split(',') if p.strip()]
    if axis in ('buffer_entries', 'throttle'):
        try:
            return [int(p, 0) for p in parts]
        except ValueError as e:
            raise ExperimentError(f"axis {axis} takes integers: {e}")
    return parts
