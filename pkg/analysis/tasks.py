"""
Task dispatch: taint sources, sink checks, indirect-target checks, shadow
allocation mirroring and user-registered custom tasks.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from loguru import logger

from instrumenter.task_stubs import TASK_ARGS, TaskKind
from shadow.shadow_memory import ShadowMemory

from .alerts import Alert, AlertKind, AlertSink
from .errors import StreamCorruption, UnknownTask


@dataclass(frozen=True)
class TaskInvocation:
    """A task call read back from the record stream."""
    kind: TaskKind
    tid: int
    site_pc: int
    args: Tuple[int, ...]
    custom_id: Optional[int] = None
    block_address: int = 0
    register_labels: Tuple[int, ...] = ()   # IndirectCheck: taint of the target register

    def __post_init__(self):
        expected = len(TASK_ARGS[self.kind])
        if len(self.args) != expected:
            raise StreamCorruption(f"{self.kind.value} at {self.site_pc:#x} takes {expected} arguments, "
                                   f"got {len(self.args)}")

    def arg(self, name: str) -> int:
        return self.args[TASK_ARGS[self.kind].index(name)]


@dataclass
class TaintCounters:
    rb: int = 0     # bytes tainted at sources
    cb: int = 0     # bytes checked at sinks
    db: int = 0     # tainted bytes found at sinks
    tasks: Dict[str, int] = field(default_factory=dict)

    def count(self, kind: TaskKind) -> None:
        self.tasks[kind.value] = self.tasks.get(kind.value, 0) + 1

    @property
    def tasks_dispatched(self) -> int:
        return sum(self.tasks.values())

    def to_dict(self) -> Dict:
        return {'rb': self.rb, 'cb': self.cb, 'db': self.db, 'tasks': dict(sorted(self.tasks.items()))}


CustomHandler = Callable[[TaskInvocation, ShadowMemory, TaintCounters], Optional[Alert]]


class TaskDispatcher:
    """Runs task invocations against the shared shadow memory and counters."""

    def __init__(self, shadow: ShadowMemory, sink: Optional[AlertSink] = None,
                 counters: Optional[TaintCounters] = None):
        self.shadow = shadow
        self.sink = sink if sink is not None else AlertSink()
        self.counters = counters if counters is not None else TaintCounters()
        self._handlers: Dict[int, CustomHandler] = {}

    def register(self, custom_id: int, handler: CustomHandler) -> None:
        """Register the handler of Custom(custom_id) tasks."""
        self._handlers[custom_id] = handler
        logger.debug(f"Registered custom task handler {custom_id}")

    def dispatch(self, inv: TaskInvocation) -> Optional[Alert]:
        """
        Run one task.

        Args:
            inv: Task invocation

        Returns:
            The alert the task raised, if any

        Raises:
            UnknownTask: For a Custom id without a registered handler
        """
        self.counters.count(inv.kind)
        kind = inv.kind
        if kind is TaskKind.SOURCE:
            length = inv.arg('len')
            if length:
                self.shadow.fill(inv.arg('addr'), length, inv.arg('label'))
                self.counters.rb += length
            return None
        if kind is TaskKind.CHECK:
            return self._check(inv)
        if kind is TaskKind.INDIRECT:
            labels = 0
            for b in inv.register_labels:
                labels |= b
            if labels:
                return self._raise(inv, AlertKind.TAINTED_INDIRECT_TARGET, inv.arg('target'), labels,
                                   sum(1 for b in inv.register_labels if b))
            return None
        if kind is TaskKind.MIRROR_ALLOC:
            self.shadow.mirror_alloc(inv.arg('addr'), inv.arg('size'))
            return None
        if kind is TaskKind.MIRROR_FREE:
            self.shadow.mirror_free(inv.arg('addr'), inv.arg('size'))
            return None

        handler = self._handlers.get(inv.custom_id)
        if handler is None:
            raise UnknownTask(f"no handler registered for custom task {inv.custom_id}")
        alert = handler(inv, self.shadow, self.counters)
        if alert is not None:
            self.sink.emit(alert)
        return alert

    def _check(self, inv: TaskInvocation) -> Optional[Alert]:
        length = inv.arg('len')
        if not length:
            return None
        addr = inv.arg('addr')
        labels = self.shadow.taint_read(addr, length)
        tainted = int(np.count_nonzero(labels))
        self.counters.cb += length
        self.counters.db += tainted
        if not tainted:
            return None
        return self._raise(inv, AlertKind.SINK_HIT, addr, int(np.bitwise_or.reduce(labels)), tainted)

    def _raise(self, inv: TaskInvocation, kind: AlertKind, address: int, labels: int, tainted: int) -> Alert:
        return self.sink.emit(Alert(kind=kind, tid=inv.tid, site_pc=inv.site_pc, block_address=inv.block_address,
                                    address=address, labels=labels, tainted_bytes=tainted))
