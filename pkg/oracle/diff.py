"""
Comparison of taint results: oracle ground truth against a decoupled run,
or any two reports.
"""

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from analysis.alerts import Alert
from sync.metrics_report import MetricsReport, expand_runs

from .coupled import TaintGroundTruth


@dataclass
class Observation:
    """The taint-relevant results of one run in comparable form."""
    shadow: Dict[int, int]
    registers: Dict[int, Dict[int, List[int]]]
    rb: int
    cb: int
    db: int
    alert_keys: List[Tuple]


@dataclass(frozen=True)
class DiffEntry:
    field: str
    key: str
    expected: object
    observed: object

    def __str__(self) -> str:
        return f"{self.field} {self.key}: expected {self.expected}, observed {self.observed}"


@dataclass
class Diff:
    entries: List[DiffEntry] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.entries

    @property
    def first(self) -> Optional[DiffEntry]:
        return self.entries[0] if self.entries else None

    def summary(self, limit: int = 10) -> str:
        if self.empty:
            return "no differences"
        lines = [str(e) for e in self.entries[:limit]]
        if len(self.entries) > limit:
            lines.append(f"... {len(self.entries) - limit} more")
        return "\n".join(lines)


Comparable = Union[TaintGroundTruth, Observation, MetricsReport, Dict]


def from_report(report: Union[MetricsReport, Dict]) -> Observation:
    """Rebuild an Observation from a report object or its JSON dict."""
    data = report.to_dict() if isinstance(report, MetricsReport) else report
    taint = data.get('taint', {})
    registers = {int(tid): {int(reg): list(labels) for reg, labels in regs.items()}
                 for tid, regs in taint.get('registers', {}).items()}
    alerts = [Alert.from_dict(a).key() for a in data.get('alerts', [])]
    return Observation(shadow=expand_runs(taint.get('shadow', [])), registers=registers,
                       rb=data.get('rb', 0), cb=data.get('cb', 0), db=data.get('db', 0), alert_keys=alerts)


def observe(result: Comparable) -> Observation:
    if isinstance(result, Observation):
        return result
    if isinstance(result, TaintGroundTruth):
        return Observation(shadow=dict(result.shadow),
                           registers={tid: regs for tid, regs in result.registers.items() if regs},
                           rb=result.rb, cb=result.cb, db=result.db,
                           alert_keys=[a.key() for a in result.alerts])
    return from_report(result)


def compare(truth: Comparable, observed: Comparable) -> Diff:
    """
    Compare shadow maps, register taint, RB/CB/DB and alert multisets.

    Returns:
        Diff; empty iff everything matches. Shadow and register differences are
        listed in address and register order, so `first` is the first divergence.
    """
    a, b = observe(truth), observe(observed)
    diff = Diff()

    for addr in sorted(set(a.shadow) | set(b.shadow)):
        expected, seen = a.shadow.get(addr, 0), b.shadow.get(addr, 0)
        if expected != seen:
            diff.entries.append(DiffEntry('shadow', f"{addr:#x}", f"{expected:#04x}", f"{seen:#04x}"))

    untainted = [0] * 8
    for tid in sorted(set(a.registers) | set(b.registers)):
        regs_a, regs_b = a.registers.get(tid, {}), b.registers.get(tid, {})
        for reg in sorted(set(regs_a) | set(regs_b)):
            expected, seen = regs_a.get(reg, untainted), regs_b.get(reg, untainted)
            if list(expected) != list(seen):
                diff.entries.append(DiffEntry('register', f"t{tid}.r{reg}", expected, seen))

    for name in ('rb', 'cb', 'db'):
        if getattr(a, name) != getattr(b, name):
            diff.entries.append(DiffEntry('counter', name, getattr(a, name), getattr(b, name)))

    counts_a, counts_b = Counter(a.alert_keys), Counter(b.alert_keys)
    for key in sorted(set(counts_a) | set(counts_b), key=repr):
        if counts_a[key] != counts_b[key]:
            kind, tid, site_pc, address, labels = key
            diff.entries.append(DiffEntry('alert', f"{kind} t{tid} pc={site_pc:#x} addr={address:#x} "
                                                   f"labels={labels:#04x}", counts_a[key], counts_b[key]))
    return diff
