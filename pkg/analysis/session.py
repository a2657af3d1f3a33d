"""
Decoupled analysis session: one target run with its recording side and
analysis side wired together.

Lifecycle: load the image, place the shadow scheme, start the main thread,
run target threads under the seeded scheduler while workers are pumped
(after every submission in deterministic mode, otherwise a seeded number of
blocks after every target quantum), drain every worker once the target is
done, and finalize the report.
"""

import itertools
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from loguru import logger

from analysis.config import CHANNEL_CONFIG, SCHEDULER_CONFIG, SHADOW_CONFIG, VM_CONFIG
from channel.record_buffer import RecordBuffer
from channel.record_channel import RecordChannel, create_channel
from instrumenter.codegen import AnalysisCodeRegion
from instrumenter.recorder import Recorder
from instrumenter.task_stubs import TaskBindings
from shadow.prealloc import Reservation, prealloc_reserve
from shadow.shadow_memory import ShadowMemory
from sync.metrics_report import MetricsReport, finalize_report
from sync.sync_state import SyncState
from vm.isa import Program
from vm.scheduler import ScheduleSummary, ThreadScheduler
from vm.syscalls import WorldState

from .alerts import Alert, AlertSink
from .errors import AnalysisError
from .tasks import CustomHandler, TaskDispatcher
from .worker import AnalysisWorker, SliceStatus

SCHEMES = ('mirror', 'prealloc')

MarkerProbe = Callable[[WorldState], Dict[str, bool]]


@dataclass
class SessionOptions:
    """Knobs of one decoupled run; defaults come from analysis.config."""
    scheme: str = 'mirror'
    buffer_entries: int = CHANNEL_CONFIG['buffer_entries']
    buffers_per_thread: int = CHANNEL_CONFIG['buffers_per_thread']
    guard_entries: int = CHANNEL_CONFIG['guard_entries']
    sync_submit: bool = True
    record_only: bool = False
    deterministic: bool = False
    seed: int = SCHEDULER_CONFIG['seed']
    quantum: int = SCHEDULER_CONFIG['quantum']
    worker_slice: int = SCHEDULER_CONFIG['worker_slice']
    max_steps: int = SCHEDULER_CONFIG['max_steps']
    throttle: int = 0
    halt_on_alert: bool = False
    span: int = VM_CONFIG['span']
    high_water_pages: int = SHADOW_CONFIG['high_water_pages']
    spill_file: Optional[str] = SHADOW_CONFIG['spill_file']
    prealloc_base: int = SHADOW_CONFIG['prealloc_base']
    prealloc_ratio: int = SHADOW_CONFIG['prealloc_ratio']
    alert_log: Optional[str] = None
    custom_handlers: Dict[int, CustomHandler] = field(default_factory=dict)

    def describe(self) -> Dict:
        """Report-friendly view (no callables, no paths)."""
        return {
            'scheme': self.scheme,
            'buffer_entries': self.buffer_entries,
            'buffers_per_thread': self.buffers_per_thread,
            'guard_entries': self.guard_entries,
            'sync_submit': self.sync_submit,
            'record_only': self.record_only,
            'deterministic': self.deterministic,
            'seed': self.seed,
            'quantum': self.quantum,
            'worker_slice': self.worker_slice,
            'throttle': self.throttle,
            'halt_on_alert': self.halt_on_alert,
            'high_water_pages': self.high_water_pages,
        }


class DecoupledSession:
    """Runs a program under decoupled taint analysis."""

    def __init__(self, program: Program, inputs: Optional[Dict[str, bytes]] = None,
                 options: Optional[SessionOptions] = None, bindings: Optional[TaskBindings] = None,
                 workload: str = 'program'):
        self.options = options or SessionOptions()
        opts = self.options
        if opts.scheme not in SCHEMES:
            raise AnalysisError(f"unknown shadow scheme '{opts.scheme}', expected one of {SCHEMES}")
        self.workload = workload
        self.program = program

        self.world = WorldState(program, inputs, span=opts.span, throttle=opts.throttle)
        self.world.load_image()
        self.shadow = ShadowMemory(opts.high_water_pages, opts.spill_file)
        self.reservation: Optional[Reservation] = None
        if opts.scheme == 'prealloc':
            self.reservation = prealloc_reserve(self.world, opts.prealloc_ratio, opts.prealloc_base)
            self.shadow.reserved_in_target = self.reservation

        self.bindings = bindings if bindings is not None else TaskBindings()
        self.region = AnalysisCodeRegion(program, self.bindings)
        self.sync = SyncState(opts.sync_submit)
        self.alerts = AlertSink(opts.alert_log)
        self.dispatcher = TaskDispatcher(self.shadow, self.alerts)
        for custom_id, handler in opts.custom_handlers.items():
            self.dispatcher.register(custom_id, handler)

        self.channels: Dict[int, RecordChannel] = {}
        self.workers: Dict[int, AnalysisWorker] = {}
        self._segment_ids = itertools.count(1)
        self._worker_rng = random.Random(opts.seed * 2 + 1)
        self.halted = False

        self.recorder = Recorder(self.region, self.sync, self._open_thread)
        self.scheduler = ThreadScheduler(self.world, self.recorder, seed=opts.seed, quantum=opts.quantum,
                                         max_steps=opts.max_steps,
                                         on_quantum_end=None if opts.deterministic else self._pump_workers)
        if opts.halt_on_alert:
            self.alerts.subscribe(self._on_alert)

    # Wiring

    def _open_thread(self, tid: int) -> RecordChannel:
        opts = self.options
        channel = create_channel(opts.buffers_per_thread, opts.buffer_entries, opts.guard_entries, tid=tid,
                                 record_only=opts.record_only, segment_ids=self._segment_ids,
                                 listener=self.sync)
        self.channels[tid] = channel
        self.sync.register(tid, channel)
        if not opts.record_only:
            worker = AnalysisWorker(tid, channel, self.region, self.shadow, self.dispatcher)
            self.workers[tid] = worker
            channel.starvation_handler = self._starvation_handler(worker, channel)
            if opts.deterministic:
                channel.on_submit = self._drain_after_submit
        return channel

    def _starvation_handler(self, worker: AnalysisWorker, channel: RecordChannel) -> Callable[[], bool]:
        def relieve() -> bool:
            while not channel.free_list:
                if worker.run_slice(1) is SliceStatus.PROGRESS:
                    continue
                # The worker may be held at a checkpoint that another thread's analysis has to clear.
                others = [w.run_slice(None) for _, w in sorted(self.workers.items()) if w is not worker]
                if not any(s is SliceStatus.PROGRESS for s in others):
                    break
            return bool(channel.free_list)
        return relieve

    def _drain_after_submit(self, channel: RecordChannel, buf: RecordBuffer) -> None:
        self._settle_workers()

    def _settle_workers(self) -> None:
        """Run every worker until none can advance."""
        while True:
            statuses = [w.run_slice(None) for _, w in sorted(self.workers.items())]
            if not any(s is SliceStatus.PROGRESS for s in statuses):
                return

    def _pump_workers(self) -> None:
        for _, worker in sorted(self.workers.items()):
            budget = self._worker_rng.randint(0, self.options.worker_slice)
            if budget:
                worker.run_slice(budget)

    def _on_alert(self, alert: Alert) -> None:
        if self.halted:
            return
        self.halted = True
        logger.warning(f"Halting on {alert.kind.value} from thread {alert.tid}")
        self.scheduler.request_stop(f"alert {alert.kind.value}")
        for worker in self.workers.values():
            worker.request_stop()

    def _drain_all(self) -> None:
        while True:
            statuses = [w.run_slice(None) for _, w in sorted(self.workers.items())]
            if all(s is SliceStatus.DONE for s in statuses):
                return
            if not any(s is SliceStatus.PROGRESS for s in statuses):
                stuck = [tid for tid, w in sorted(self.workers.items()) if not w.done]
                raise AnalysisError(f"analysis stalled with open streams for threads {stuck}")

    # Running

    def run(self, arg: int = 0, markers: Optional[MarkerProbe] = None) -> MetricsReport:
        """
        Run the target to completion and finish analysis.

        Args:
            arg: Value placed in the main thread's r1
            markers: Evaluates declared output markers on the finished world

        Returns:
            MetricsReport of the run
        """
        opts = self.options
        logger.info(f"Decoupled run of {self.workload}: scheme={opts.scheme} buffers={opts.buffers_per_thread}x"
                    f"{opts.buffer_entries} sync_submit={opts.sync_submit} record_only={opts.record_only} "
                    f"deterministic={opts.deterministic} seed={opts.seed}")
        started = time.perf_counter()
        try:
            self.scheduler.start(arg)
            summary = self.scheduler.run()
            target_done = time.perf_counter()
            if not self.halted:
                self._drain_all()
            finished = time.perf_counter()
            wall = {} if opts.deterministic else {'target': round(target_done - started, 6),
                                                  'total': round(finished - started, 6)}
            report = self.finalize(summary, wall, markers(self.world) if markers else None)
        finally:
            self.shadow.close()
        logger.info(f"Run of {self.workload} finished: {report.exit_status}, {report.steps} steps, "
                    f"{len(self.alerts)} alerts")
        return report

    def finalize(self, summary: ScheduleSummary, wall: Dict, markers: Optional[Dict[str, bool]] = None) -> MetricsReport:
        report = finalize_report(
            workload=self.workload, mode='record-only' if self.options.record_only else 'decoupled',
            scheme=self.options.scheme, config=self.options.describe(), region=self.region,
            channels=self.channels, world=self.world, summary=summary, shadow=self.shadow,
            reservation=self.reservation, counters=self.dispatcher.counters, sync=self.sync,
            alerts=self.alerts.alerts, workers=self.workers, registers=self.register_taint(),
            markers=markers, halted=self.halted, wall=wall)
        if self.halted:
            report.exit_status = 'AlertHalt' if report.exit_status == 'ok' else report.exit_status
        return report

    def register_taint(self) -> Dict[int, Dict[int, List[int]]]:
        return {tid: worker.reg_taint.snapshot() for tid, worker in self.workers.items()}
