"""
Experiment configuration built from command line flags.
"""

from dataclasses import dataclass, fields, replace
from typing import Any, Dict, Optional

from analysis.config import CHANNEL_CONFIG, SCHEDULER_CONFIG, SHADOW_CONFIG, SWEEP_CONFIG
from analysis.session import SCHEMES, SessionOptions


class ExperimentError(ValueError):
    """Raised for invalid experiment configurations and unknown workloads."""


_BOOL_WORDS = {'on': True, 'off': False, 'true': True, 'false': False, '1': True, '0': False,
               'yes': True, 'no': False}


def parse_switch(value: Any) -> bool:
    """Accept on/off style words as well as real booleans."""
    if isinstance(value, bool):
        return value
    word = str(value).strip().lower()
    if word not in _BOOL_WORDS:
        raise ExperimentError(f"expected on/off, got '{value}'")
    return _BOOL_WORDS[word]


@dataclass(frozen=True)
class ExperimentConfig:
    workload: str
    scheme: str = 'mirror'
    buffer_entries: int = CHANNEL_CONFIG['buffer_entries']
    buffers_per_thread: int = CHANNEL_CONFIG['buffers_per_thread']
    sync_submit: bool = True
    record_only: bool = False
    seed: int = SCHEDULER_CONFIG['seed']
    throttle: int = 0
    deterministic: bool = False
    halt_on_alert: bool = False
    prealloc_base: Optional[int] = SHADOW_CONFIG['prealloc_base']
    spill_file: Optional[str] = None
    report_path: Optional[str] = None
    alert_log: Optional[str] = None
    oracle: bool = False
    verify: bool = False

    def validate(self) -> 'ExperimentConfig':
        """
        Check field ranges and combinations.

        Returns:
            self, so calls can be chained

        Raises:
            ExperimentError: On the first invalid field
        """
        if not self.workload:
            raise ExperimentError("a workload id is required")
        if self.scheme not in SCHEMES:
            raise ExperimentError(f"unknown scheme '{self.scheme}', expected one of {', '.join(SCHEMES)}")
        if self.scheme == 'prealloc' and self.prealloc_base is None:
            raise ExperimentError("scheme=prealloc requires a reservation base")
        if self.throttle < 0:
            raise ExperimentError(f"throttle must be >= 0, got {self.throttle}")
        if self.buffers_per_thread < 2:
            raise ExperimentError(f"buffers per thread must be >= 2, got {self.buffers_per_thread}")
        if self.buffer_entries <= CHANNEL_CONFIG['guard_entries'] + 1:
            raise ExperimentError(f"buffer entries must exceed the guard region, got {self.buffer_entries}")
        if self.oracle and self.record_only:
            raise ExperimentError("--oracle and --record-only are mutually exclusive")
        if self.verify and (self.oracle or self.record_only):
            raise ExperimentError("--verify needs a decoupled analysis run")
        if self.verify and self.halt_on_alert:
            raise ExperimentError("--verify compares complete runs and cannot halt on alerts")
        return self

    def with_value(self, axis: str, value: Any) -> 'ExperimentConfig':
        """Copy of this config with one sweep axis set to `value`."""
        if axis not in SWEEP_CONFIG['axes']:
            raise ExperimentError(f"unknown sweep axis '{axis}', expected one of {', '.join(SWEEP_CONFIG['axes'])}")
        if axis in ('sync_submit', 'record_only'):
            value = parse_switch(value)
        elif axis in ('buffer_entries', 'throttle'):
            value = int(value)
        return replace(self, **{axis: value}).validate()

    def to_session_options(self) -> SessionOptions:
        options = SessionOptions(
            scheme=self.scheme,
            buffer_entries=self.buffer_entries,
            buffers_per_thread=self.buffers_per_thread,
            sync_submit=self.sync_submit,
            record_only=self.record_only,
            deterministic=self.deterministic,
            seed=self.seed,
            throttle=self.throttle,
            halt_on_alert=self.halt_on_alert,
            alert_log=self.alert_log,
        )
        if self.spill_file:
            options.spill_file = self.spill_file
        if self.prealloc_base is not None:
            options.prealloc_base = self.prealloc_base
        return options

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}
