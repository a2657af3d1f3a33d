"""
JSON schema check for MetricsReport files.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import jsonschema

from sync.metrics_report import MetricsReport

from .experiment_config import ExperimentError

SCHEMA_PATH = Path(__file__).with_name('report.schema.json')

_schema_cache: Optional[Dict[str, Any]] = None


def load_schema() -> Dict[str, Any]:
    global _schema_cache
    if _schema_cache is None:
        with open(SCHEMA_PATH, 'r', encoding='utf-8') as f:
            _schema_cache = json.load(f)
    return _schema_cache


def schema_errors(report: Union[MetricsReport, Dict[str, Any]]) -> List[str]:
    """Return every schema violation as 'path: message', empty for a valid report."""
    data = report.to_dict() if isinstance(report, MetricsReport) else report
    validator = jsonschema.Draft7Validator(load_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    return [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]


def validate_report(report: Union[MetricsReport, Dict[str, Any]]) -> None:
    """
    Validate a report against the published schema.

    Raises:
        ExperimentError: Naming the first violation
    """
    errors = schema_errors(report)
    if errors:
        raise ExperimentError(f"report does not match the schema ({len(errors)} errors): {errors[0]}")


def load_report(path: Union[str, Path]) -> Dict[str, Any]:
    """Read and validate a report file."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ExperimentError(f"cannot read report {path}: {e}")
    validate_report(data)
    return data
