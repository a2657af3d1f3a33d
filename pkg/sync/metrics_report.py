"""
MetricsReport: the counters of one experiment, serialized with the
abbreviations used throughout the reports (pi, am_bytes, bf, tf, tc, cf, rb,
cb, db, wsn, ssn, cfn, dfn, gsr).
"""

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional

from .sync_state import compute_gsr

REPORT_VERSION = 1


@dataclass
class MetricsReport:
    workload: str = ''
    mode: str = 'decoupled'
    scheme: str = 'mirror'
    config: Dict = field(default_factory=dict)

    pi: float = 0.0
    am_bytes: int = 0
    bf: int = 0
    buffer_switches: int = 0
    entries_written: int = 0
    tf: int = 0
    tc: int = 0
    cf: int = 0
    rb: int = 0
    cb: int = 0
    db: int = 0
    wsn: int = 0
    ssn: int = 0
    cfn: int = 0
    dfn: int = 0
    gsr: float = 1.0

    blocks: int = 0
    instructions: int = 0
    threads: int = 0
    steps: int = 0
    exit_status: str = 'ok'
    halted: bool = False
    shadow_committed_bytes: int = 0
    shadow_reserved_bytes: int = 0
    spilled_pages: int = 0

    markers: Dict[str, bool] = field(default_factory=dict)
    outputs: Dict[str, int] = field(default_factory=dict)
    alerts: List[Dict] = field(default_factory=list)
    workers: List[Dict] = field(default_factory=list)
    timing: Dict = field(default_factory=dict)
    taint: Dict = field(default_factory=lambda: {'shadow': [], 'registers': {}})
    version: int = REPORT_VERSION

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + '\n'

    def save(self, path) -> None:
        with open(path, 'w') as f:
            f.write(self.to_json())


def shadow_runs(snapshot: Dict[int, int]) -> List[List[int]]:
    """Compress a {address: label} map into [start, length, label] runs."""
    runs: List[List[int]] = []
    for addr in sorted(snapshot):
        label = snapshot[addr]
        if runs and runs[-1][0] + runs[-1][1] == addr and runs[-1][2] == label:
            runs[-1][1] += 1
        else:
            runs.append([addr, 1, label])
    return runs


def expand_runs(runs: Iterable[Iterable[int]]) -> Dict[int, int]:
    """Inverse of shadow_runs."""
    flat: Dict[int, int] = {}
    for start, length, label in runs:
        for addr in range(start, start + length):
            flat[addr] = label
    return flat


def finalize_report(*, workload: str, mode: str, scheme: str, config: Dict,
                    region=None, channels: Optional[Dict] = None, world=None, summary=None,
                    shadow=None, reservation=None, counters=None, sync=None, alerts=None,
                    workers: Optional[Dict] = None, registers: Optional[Dict[int, Dict]] = None,
                    markers: Optional[Dict[str, bool]] = None, halted: bool = False,
                    wall: Optional[Dict[str, Optional[float]]] = None) -> MetricsReport:
    """
    Aggregate the counters of every module into one report.

    Every source is optional so record-only runs and the coupled oracle can
    report what they have; missing sources leave their fields at zero.
    """
    report = MetricsReport(workload=workload, mode=mode, scheme=scheme, config=dict(config), halted=halted)

    if region is not None:
        report.pi = round(region.pi, 6)
        report.am_bytes = region.am_bytes
        report.blocks = len(region)
        report.instructions = region.instructions

    for channel in (channels or {}).values():
        report.bf += channel.counters.bf
        report.buffer_switches += channel.counters.buffer_switches
        report.entries_written += channel.counters.entries_written

    if world is not None:
        report.tf = world.memory.tf
        report.tc = world.memory.tc
        report.threads = len(world.threads)
        report.exit_status = world.exit_status
        report.outputs = {name: len(data) for name, data in sorted(world.outputs.items())}
    if summary is not None:
        report.steps = summary.steps

    if shadow is not None:
        report.cf = shadow.fault_count
        report.shadow_committed_bytes = shadow.committed_bytes
        report.spilled_pages = shadow.spilled_pages
        report.taint['shadow'] = shadow_runs(shadow.snapshot())
    if reservation is not None:
        report.shadow_reserved_bytes = reservation.size

    if counters is not None:
        report.rb, report.cb, report.db = counters.rb, counters.cb, counters.db
    if sync is not None:
        report.wsn, report.ssn, report.cfn, report.dfn = sync.wsn, sync.ssn, sync.cfn, sync.dfn
    report.gsr = compute_gsr(report.cfn, report.dfn)

    if alerts is not None:
        report.alerts = [a.to_dict() for a in alerts]
    worker_reports = [w.report() for _, w in sorted((workers or {}).items())]
    report.workers = [w.to_dict() for w in worker_reports]
    if registers:
        report.taint['registers'] = {str(tid): {str(reg): labels for reg, labels in sorted(regs.items())}
                                     for tid, regs in sorted(registers.items()) if regs}
    report.markers = dict(sorted((markers or {}).items()))

    wall = wall or {}
    report.timing = {
        'target_steps': report.steps,
        'analysis_blocks': sum(w.blocks_executed for w in worker_reports),
        'target_wall_seconds': wall.get('target'),
        'total_wall_seconds': wall.get('total'),
    }
    return report
