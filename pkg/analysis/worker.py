"""
Analysis worker: consumes one target thread's record stream and executes the
analysis block each header names.

The worker is a generator-driven state machine so a cooperative scheduler can
run it in slices. It yields after every executed block and whenever the
stream has nothing submitted yet.

A thread that stops mid-block leaves a TRUNCATE marker followed by the number
of instructions of the block that completed. If the marker arrives before the
block's entries are complete, only the completed instructions' ops run. If
every entry was already present, the block has run in full; the trailing
register-only ops of instructions that never executed are then rolled back
from a small journal.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Generator, List, Optional, Tuple

import numpy as np
from loguru import logger

from channel.record_channel import EventKind, RecordChannel, StreamEvent
from instrumenter.codegen import AnalysisBlock, AnalysisCodeRegion
from instrumenter.taint_rules import TaintOp, TaintOpKind
from shadow.register_taint import RegisterTaint
from shadow.shadow_memory import ShadowMemory

from .errors import AnalysisError, EntryUnderrun, StreamCorruption
from .taint_ops import REGISTER_ONLY, apply_taint_op
from .tasks import TaskDispatcher, TaskInvocation


class SliceStatus(Enum):
    PROGRESS = 'progress'
    BLOCKED = 'blocked'     # waiting for the producer to submit
    DONE = 'done'


@dataclass
class WorkerReport:
    tid: int
    blocks_executed: int
    entries_consumed: int
    tasks_dispatched: int
    truncated_blocks: int
    buffer_switches: int
    stopped_early: bool

    def to_dict(self) -> Dict:
        return {
            'tid': self.tid,
            'blocks_executed': self.blocks_executed,
            'entries_consumed': self.entries_consumed,
            'tasks_dispatched': self.tasks_dispatched,
            'truncated_blocks': self.truncated_blocks,
            'buffer_switches': self.buffer_switches,
            'stopped_early': self.stopped_early,
        }


class AnalysisWorker:
    """The analysis thread bound to one target thread."""

    def __init__(self, tid: int, channel: RecordChannel, region: AnalysisCodeRegion,
                 shadow: ShadowMemory, dispatcher: TaskDispatcher):
        self.tid = tid
        self.channel = channel
        self.region = region
        self.shadow = shadow
        self.dispatcher = dispatcher
        self.reg_taint = RegisterTaint()

        self.blocks_executed = 0
        self.entries_consumed = 0
        self.tasks_dispatched = 0
        self.truncated_blocks = 0
        self.buffer_switches = 0
        self.stop_requested = False
        self.done = False

        self._journal: List[Tuple[int, int, np.ndarray]] = []
        self._last_captured: Dict[int, int] = {}
        self._steps = self._run()

    def request_stop(self) -> None:
        """Stop at the next block boundary."""
        self.stop_requested = True

    def run_slice(self, budget: Optional[int] = None) -> SliceStatus:
        """
        Execute up to `budget` blocks (unbounded when None).

        Returns:
            PROGRESS if at least one block ran, BLOCKED if the stream had nothing
            to offer, DONE once the stream ended or the worker was stopped
        """
        if self.done:
            return SliceStatus.DONE
        executed = 0
        while budget is None or executed < budget:
            try:
                progressed = next(self._steps)
            except StopIteration:
                self.done = True
                return SliceStatus.DONE
            if not progressed:
                return SliceStatus.PROGRESS if executed else SliceStatus.BLOCKED
            executed += 1
        return SliceStatus.PROGRESS

    def report(self) -> WorkerReport:
        return WorkerReport(tid=self.tid, blocks_executed=self.blocks_executed,
                            entries_consumed=self.entries_consumed, tasks_dispatched=self.tasks_dispatched,
                            truncated_blocks=self.truncated_blocks, buffer_switches=self.buffer_switches,
                            stopped_early=self.stop_requested and not self.channel.ended)

    # Stream reading

    def _read(self, expect_header: bool = False) -> Generator[bool, None, StreamEvent]:
        while True:
            event = self.channel.next_event(expect_header)
            if event.kind is EventKind.PENDING:
                yield False
                continue
            if event.kind is EventKind.SWITCH_TO_NEXT:
                self.buffer_switches += 1
                continue
            return event

    def _read_count(self) -> Generator[bool, None, int]:
        event = yield from self._read()
        if event.kind is not EventKind.DATUM:
            raise StreamCorruption(f"thread {self.tid}: truncation marker without an instruction count")
        return event.value

    def _run(self) -> Generator[bool, None, None]:
        while not self.stop_requested:
            event = yield from self._read(expect_header=True)
            if event.kind is EventKind.END_OF_STREAM:
                logger.debug(f"Worker {self.tid} reached end of stream after {self.blocks_executed} blocks")
                return
            if event.kind is EventKind.TRUNCATE:
                completed = yield from self._read_count()
                self._rewind(completed)
                continue

            block = self.region.lookup(event.value)
            if block is None:
                raise StreamCorruption(f"thread {self.tid}: header {event.value:#x} names no analysis block")
            entries = [event.value]
            completed: Optional[int] = None
            while len(entries) < block.expected_entry_count:
                event = yield from self._read()
                if event.kind is EventKind.END_OF_STREAM:
                    raise EntryUnderrun(f"thread {self.tid}: stream ended after {len(entries)} of "
                                        f"{block.expected_entry_count} entries of block {block.address:#x}")
                if event.kind is EventKind.TRUNCATE:
                    completed = yield from self._read_count()
                    break
                entries.append(event.value)
            self._execute(block, entries, completed)
            yield True

    # Execution

    def _execute(self, block: AnalysisBlock, entries: List[int], completed: Optional[int]) -> None:
        self.blocks_executed += 1
        self.entries_consumed += len(entries) - 1
        self._journal = []
        last_captured = self._last_captured_index(block)
        for op in block.ops:
            if completed is not None and not _ran(op, completed, len(entries)):
                continue
            if completed is None and op.kind in REGISTER_ONLY and op.insn_index >= last_captured:
                self._journal.append((op.insn_index, op.dst, self.reg_taint.get(op.dst).copy()))
            apply_taint_op(op, entries, self.shadow, self.reg_taint, self._dispatch, self.tid, block.address)
        if completed is not None:
            self.truncated_blocks += 1
            self._journal = []

    def _rewind(self, completed: int) -> None:
        """Undo register ops of instructions at or past `completed` in the last block."""
        if not self._journal and self.blocks_executed == 0:
            raise AnalysisError(f"thread {self.tid}: truncation marker before any block")
        for insn_index, reg, labels in reversed(self._journal):
            if insn_index < completed:
                break
            self.reg_taint.set(reg, labels)
        self._journal = []
        self.truncated_blocks += 1

    def _last_captured_index(self, block: AnalysisBlock) -> int:
        index = self._last_captured.get(block.address)
        if index is None:
            index = max((op.insn_index for op in block.ops if op.entries), default=0)
            self._last_captured[block.address] = index
        return index

    def _dispatch(self, inv: TaskInvocation):
        self.tasks_dispatched += 1
        return self.dispatcher.dispatch(inv)


def _ran(op: TaintOp, completed: int, available: int) -> bool:
    if op.insn_index < completed:
        return True
    # entry-site tasks of the interrupted syscall fired before it stopped
    return (op.insn_index == completed and op.kind is TaintOpKind.TASK_CALL
            and all(e < available for e in op.entries))


def run_worker(worker: AnalysisWorker) -> WorkerReport:
    """
    Run a worker over its whole stream.

    Raises:
        AnalysisError: If the stream is still open (nothing more submitted)
    """
    status = worker.run_slice(None)
    if status is not SliceStatus.DONE:
        raise AnalysisError(f"thread {worker.tid}: record stream is still open")
    return worker.report()
