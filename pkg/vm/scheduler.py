"""
Seeded cooperative scheduler for the threads of one target program.

Target threads run in quanta of `quantum` instructions. The next thread is
drawn from the runnable set with a private RNG, so the target schedule is a
function of the seed and the program alone; whatever the hooks do between
steps (recording, analysis pumping) cannot perturb it. The decoupled session
and the coupled oracle both drive their targets through this class.
"""

import random
from dataclasses import dataclass
from typing import Callable, Optional

from loguru import logger

from analysis.config import SCHEDULER_CONFIG

from .isa import Program
from .machine import NO_HOOKS, InstrumentationHooks, MachineState, OutcomeKind, VMError, step
from .syscalls import ThreadStatus, WorldState, exec_syscall


@dataclass
class ScheduleSummary:
    steps: int
    quanta: int
    threads: int
    exit_status: str


class ThreadScheduler:
    """Round-robin-by-lottery quantum scheduler over the world's target threads."""

    def __init__(self, world: WorldState, hooks: InstrumentationHooks = NO_HOOKS,
                 seed: int = SCHEDULER_CONFIG['seed'], quantum: int = SCHEDULER_CONFIG['quantum'],
                 max_steps: int = SCHEDULER_CONFIG['max_steps'],
                 on_quantum_end: Optional[Callable[[], None]] = None):
        if quantum < 1:
            raise VMError(f"quantum must be positive, got {quantum}")
        self.world = world
        self.program: Program = world.program
        self.hooks = hooks
        self.quantum = quantum
        self.max_steps = max_steps
        self.on_quantum_end = on_quantum_end
        self._rng = random.Random(seed)
        self._stop_reason: Optional[str] = None
        self.steps = 0
        self.quanta = 0

    def start(self, arg: int = 0) -> MachineState:
        """Create the main thread at the program entry."""
        if self.program.entry is None:
            raise VMError("program has no entry point")
        state = self.world.create_thread(self.program.entry, arg)
        self.hooks.on_thread_start(state)
        logger.debug(f"Main thread {state.tid} starts at {self.program.entry:#x}")
        return state

    def request_stop(self, reason: str) -> None:
        """Stop after the current instruction; live threads are closed as interrupted."""
        if self._stop_reason is None:
            self._stop_reason = reason
            logger.info(f"Scheduler stop requested: {reason}")

    @property
    def stopped(self) -> bool:
        return self._stop_reason is not None

    def run(self) -> ScheduleSummary:
        """
        Run until every thread has exited, a deadlock, the step limit or a stop request.

        Returns:
            ScheduleSummary of the run
        """
        world = self.world
        while not self.stopped:
            self._wake_sleepers()
            runnable = [tid for tid, rec in sorted(world.threads.items())
                        if rec.status is ThreadStatus.RUNNABLE]
            if not runnable:
                sleepers = [rec.wake_step for rec in world.threads.values()
                            if rec.status is ThreadStatus.SLEEPING]
                if sleepers:
                    world.clock = max(world.clock, min(sleepers))
                    continue
                if any(rec.status is ThreadStatus.BLOCKED for rec in world.threads.values()):
                    logger.warning("All live threads are blocked on events")
                    if world.exit_status == 'ok':
                        world.exit_status = 'Deadlock'
                break
            tid = self._rng.choice(runnable)
            self._run_quantum(tid)
            self.quanta += 1
            if self.on_quantum_end is not None:
                self.on_quantum_end()

        self._close_live_threads()
        return ScheduleSummary(steps=self.steps, quanta=self.quanta,
                               threads=len(world.threads), exit_status=world.exit_status)

    def _wake_sleepers(self) -> None:
        for rec in self.world.threads.values():
            if rec.status is ThreadStatus.SLEEPING and rec.wake_step <= self.world.clock:
                rec.status = ThreadStatus.RUNNABLE

    def _run_quantum(self, tid: int) -> None:
        world = self.world
        record = world.threads[tid]
        state = record.state
        for _ in range(self.quantum):
            if self.steps >= self.max_steps:
                if world.exit_status == 'ok':
                    world.exit_status = 'StepLimit'
                self.request_stop('step limit')
                return
            outcome = step(state, self.program, self.hooks)
            self.steps += 1
            world.clock += 1

            if outcome.kind is OutcomeKind.CONTINUE:
                pass
            elif outcome.kind is OutcomeKind.HALTED:
                record.status = ThreadStatus.EXITED
                self.hooks.on_thread_exit(state, 'halt')
                return
            elif outcome.kind is OutcomeKind.FAULT:
                world.record_fault(tid, outcome.fault, outcome.address)
                self.hooks.on_thread_exit(state, 'fault')
                return
            else:
                insn = self.program.fetch(state.pc)
                result = exec_syscall(state, outcome.syscall, world)
                if result.fault is not None:
                    world.record_fault(tid, result.fault, result.addr or None)
                    self.hooks.on_thread_exit(state, 'fault')
                    return
                self.hooks.after_syscall(state, insn, result)
                if result.new_tid is not None:
                    child = world.threads[result.new_tid].state
                    logger.debug(f"Thread {tid} spawned thread {child.tid} at {child.pc:#x}")
                    self.hooks.on_thread_start(child)
                if result.exited:
                    self.hooks.on_thread_exit(state, 'exit')
                    return
                if record.status is not ThreadStatus.RUNNABLE:
                    return

            if self.stopped:
                return

    def _close_live_threads(self) -> None:
        reason = 'interrupted' if self.stopped else 'blocked'
        for tid, rec in sorted(self.world.threads.items()):
            if rec.alive:
                self.hooks.on_thread_exit(rec.state, reason)
