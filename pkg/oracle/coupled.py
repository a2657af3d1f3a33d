"""
Coupled taint oracle: applies the same rule table inline, instruction by
instruction, with no record stream in between.

It drives the target with the same seeded scheduler as a decoupled run, so
for the same program, inputs, seed and quantum the target executes the same
interleaving; only the place where taint ops run differs.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from loguru import logger

from analysis.alerts import Alert, AlertSink
from analysis.config import SCHEDULER_CONFIG, SHADOW_CONFIG, VM_CONFIG
from analysis.taint_ops import apply_taint_op
from analysis.tasks import TaintCounters, TaskDispatcher
from instrumenter.record_plan import InstructionPlan, Phase, capture_words, plan_instruction
from instrumenter.task_stubs import TaskBindings, TaskSite
from instrumenter.taint_rules import TaintOp, TaintOpKind, ops_for_instruction
from shadow.prealloc import prealloc_reserve
from shadow.register_taint import RegisterTaint
from shadow.shadow_memory import ShadowMemory
from sync.metrics_report import MetricsReport, finalize_report
from vm.isa import Instruction, Opcode, Program
from vm.machine import InstrumentationHooks, MachineState
from vm.scheduler import ThreadScheduler
from vm.syscalls import WorldState


def _entry_task(op: TaintOp) -> bool:
    return op.kind is TaintOpKind.TASK_CALL and op.stub.site is TaskSite.ENTRY


class CoupledHooks(InstrumentationHooks):
    """Hooks that propagate taint synchronously on the executing thread."""

    def __init__(self, shadow: ShadowMemory, dispatcher: TaskDispatcher, bindings: TaskBindings):
        self.shadow = shadow
        self.dispatcher = dispatcher
        self.bindings = bindings
        self.registers: Dict[int, RegisterTaint] = {}
        self._plans: Dict[int, Tuple[InstructionPlan, Tuple[TaintOp, ...]]] = {}
        self._pending: Dict[int, List[int]] = {}

    def _plan(self, pc: int, insn: Instruction) -> Tuple[InstructionPlan, Tuple[TaintOp, ...]]:
        cached = self._plans.get(pc)
        if cached is None:
            plan = plan_instruction(insn, pc, 0, self.bindings)
            cached = (plan, tuple(ops_for_instruction(plan, 0)))
            self._plans[pc] = cached
        return cached

    def _apply(self, op: TaintOp, words: List[int], tid: int) -> None:
        apply_taint_op(op, words, self.shadow, self.registers[tid], self.dispatcher.dispatch, tid)

    def on_thread_start(self, state: MachineState) -> None:
        self.registers[state.tid] = RegisterTaint()

    def before_instruction(self, state: MachineState, insn: Instruction, values) -> None:
        plan, ops = self._plan(state.pc, insn)
        words = capture_words(plan, Phase.BEFORE, state, values)
        if insn.opcode is Opcode.SYSCALL:
            self._pending[state.tid] = words
            for op in ops:
                if _entry_task(op):
                    self._apply(op, words, state.tid)
            return
        for op in ops:
            self._apply(op, words, state.tid)

    def after_syscall(self, state: MachineState, insn: Instruction, result) -> None:
        plan, ops = self._plan(state.pc - 1, insn)
        words = self._pending.pop(state.tid, []) + capture_words(plan, Phase.AFTER, state, result=result)
        for op in ops:
            if not _entry_task(op):
                self._apply(op, words, state.tid)

    def on_thread_exit(self, state: MachineState, reason: str) -> None:
        self._pending.pop(state.tid, None)


@dataclass
class TaintGroundTruth:
    shadow: Dict[int, int]
    registers: Dict[int, Dict[int, List[int]]]
    rb: int
    cb: int
    db: int
    alerts: List[Alert] = field(default_factory=list)
    exit_status: str = 'ok'
    steps: int = 0
    report: Optional[MetricsReport] = None


def run_coupled(program: Program, inputs: Optional[Dict[str, bytes]] = None,
                seed: int = SCHEDULER_CONFIG['seed'], bindings: Optional[TaskBindings] = None,
                quantum: int = SCHEDULER_CONFIG['quantum'], max_steps: int = SCHEDULER_CONFIG['max_steps'],
                throttle: int = 0, scheme: str = 'mirror', span: int = VM_CONFIG['span'],
                prealloc_base: int = SHADOW_CONFIG['prealloc_base'], workload: str = 'program',
                markers: Optional[Callable[[WorldState], Dict[str, bool]]] = None) -> TaintGroundTruth:
    """
    Run a program with inline taint propagation.

    Args:
        program: Program to run
        inputs: Input streams by name
        seed: Scheduler seed; must match the decoupled run being checked
        bindings: Task bindings; the default table when omitted
        quantum: Scheduler quantum; must match the decoupled run
        max_steps: Target step limit
        throttle: RECV throttle in scheduler steps
        scheme: 'mirror' or 'prealloc' (the latter changes which fixed ALLOCs succeed)
        span: Target address space span
        prealloc_base: Reservation base for the prealloc scheme
        workload: Name recorded in the report
        markers: Evaluates declared output markers on the finished world

    Returns:
        TaintGroundTruth, with a MetricsReport in mode 'oracle'
    """
    bindings = bindings if bindings is not None else TaskBindings()
    world = WorldState(program, inputs, span=span, throttle=throttle)
    world.load_image()
    reservation = prealloc_reserve(world, SHADOW_CONFIG['prealloc_ratio'], prealloc_base) \
        if scheme == 'prealloc' else None
    shadow = ShadowMemory()
    sink = AlertSink()
    counters = TaintCounters()
    dispatcher = TaskDispatcher(shadow, sink, counters)
    hooks = CoupledHooks(shadow, dispatcher, bindings)

    scheduler = ThreadScheduler(world, hooks, seed=seed, quantum=quantum, max_steps=max_steps)
    try:
        scheduler.start()
        summary = scheduler.run()
        registers = {tid: regs.snapshot() for tid, regs in hooks.registers.items()}
        report = finalize_report(workload=workload, mode='oracle', scheme=scheme,
                                 config={'seed': seed, 'quantum': quantum, 'throttle': throttle, 'scheme': scheme},
                                 world=world, summary=summary, shadow=shadow, reservation=reservation,
                                 counters=counters, alerts=sink.alerts, registers=registers,
                                 markers=markers(world) if markers else None)
        snapshot = shadow.snapshot()
    finally:
        shadow.close()
    logger.info(f"Coupled run of {workload}: {summary.steps} steps, RB={counters.rb} CB={counters.cb} "
                f"DB={counters.db}, {len(sink)} alerts")
    return TaintGroundTruth(shadow=snapshot, registers=registers, rb=counters.rb, cb=counters.cb,
                            db=counters.db, alerts=list(sink.alerts), exit_status=world.exit_status,
                            steps=summary.steps, report=report)
