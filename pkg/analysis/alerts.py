"""
Alerts raised by analysis tasks and the sink that collects them.

The alert log is JSON lines, one object per alert:

    {"kind": "SinkHit", "tid": 0, "site_pc": "0x400012", "block": "0x700000000010",
     "address": "0x10000000", "labels": 1, "bytes": 64}
"""

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from loguru import logger


class AlertKind(Enum):
    SINK_HIT = 'SinkHit'
    TAINTED_INDIRECT_TARGET = 'TaintedIndirectTarget'


@dataclass(frozen=True)
class Alert:
    kind: AlertKind
    tid: int
    site_pc: int
    block_address: int
    address: int
    labels: int
    tainted_bytes: int = 0

    def key(self) -> Tuple:
        """Identity used to compare alerts across runs; the block address is run specific."""
        return (self.kind.value, self.tid, self.site_pc, self.address, self.labels)

    def to_dict(self) -> Dict:
        return {
            'kind': self.kind.value,
            'tid': self.tid,
            'site_pc': hex(self.site_pc),
            'block': hex(self.block_address),
            'address': hex(self.address),
            'labels': self.labels,
            'bytes': self.tainted_bytes,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Alert':
        return cls(kind=AlertKind(data['kind']), tid=int(data['tid']), site_pc=int(data['site_pc'], 16),
                   block_address=int(data.get('block', '0x0'), 16), address=int(data['address'], 16),
                   labels=int(data['labels']), tainted_bytes=int(data.get('bytes', 0)))


class AlertSink:
    """Ordered alert collection with an optional JSON-lines log and subscribers."""

    def __init__(self, log_path: Optional[str] = None):
        self.alerts: List[Alert] = []
        self.log_path = Path(log_path) if log_path else None
        self._subscribers: List[Callable[[Alert], None]] = []
        if self.log_path is not None:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            self.log_path.write_text('')

    def __len__(self) -> int:
        return len(self.alerts)

    def subscribe(self, callback: Callable[[Alert], None]) -> None:
        self._subscribers.append(callback)

    def emit(self, alert: Alert) -> Alert:
        self.alerts.append(alert)
        logger.warning(f"{alert.kind.value} in thread {alert.tid} at pc {alert.site_pc:#x} "
                       f"(address {alert.address:#x}, labels {alert.labels:#04x})")
        if self.log_path is not None:
            with open(self.log_path, 'a') as f:
                f.write(json.dumps(alert.to_dict(), sort_keys=True) + '\n')
        for callback in self._subscribers:
            callback(alert)
        return alert

    def counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for alert in self.alerts:
            counts[alert.kind.value] = counts.get(alert.kind.value, 0) + 1
        return dict(sorted(counts.items()))


def read_alert_log(path: str) -> List[Alert]:
    """Load an alert log written by AlertSink."""
    with open(path, 'r') as f:
        return [Alert.from_dict(json.loads(line)) for line in f if line.strip()]
