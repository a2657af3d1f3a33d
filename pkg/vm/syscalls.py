"""
World state shared by the threads of one target program, and the syscall surface.
"""

from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Deque, Dict, List, Optional

from loguru import logger

from analysis.constants import PAGE_SIZE, VM_CONFIG, WORD_MASK

from .isa import ARG_REGISTERS, RESULT_REGISTER, Program, SyscallKind
from .machine import FaultKind, MachineState, VMError
from .memory import AddressSpace, page_of

SPAWN_FAILED = WORD_MASK    # r0 after a SPAWN refused at the thread limit


class ThreadStatus(Enum):
    RUNNABLE = 'runnable'
    BLOCKED = 'blocked'
    SLEEPING = 'sleeping'
    EXITED = 'exited'
    FAULTED = 'faulted'


@dataclass
class ThreadRecord:
    state: MachineState
    status: ThreadStatus = ThreadStatus.RUNNABLE
    wait_event: Optional[int] = None
    wake_step: int = 0
    exit_code: int = 0
    fault: Optional[FaultKind] = None
    fault_address: Optional[int] = None

    @property
    def alive(self) -> bool:
        return self.status not in (ThreadStatus.EXITED, ThreadStatus.FAULTED)


@dataclass
class SyscallResult:
    kind: SyscallKind
    value: int = 0
    addr: int = 0
    length: int = 0
    stream: int = 0
    new_tid: Optional[int] = None
    blocked: bool = False
    exited: bool = False
    fault: Optional[FaultKind] = None


class WorldState:
    """Memory, threads, events, input streams and output sinks of one target run."""

    def __init__(self, program: Program, inputs: Optional[Dict[str, bytes]] = None,
                 span: int = VM_CONFIG['span'], event_count: int = VM_CONFIG['event_count'],
                 throttle: int = 0):
        self.program = program
        self.memory = AddressSpace(span=span)
        self.inputs: Dict[str, bytes] = dict(inputs or {})
        self._cursors: Dict[str, int] = {}
        self.outputs: Dict[str, bytearray] = {}
        self.event_count = event_count
        self._latched: List[bool] = [False] * event_count
        self._waiters: Dict[int, Deque[int]] = {}
        self.throttle = throttle
        self.threads: Dict[int, ThreadRecord] = {}
        self._next_tid = 0
        self.clock = 0
        self.exit_status = 'ok'
        self.syscall_counts: Dict[str, int] = {}

        self.memory.reserve(program.code_base, program.code_end + 1, 'code')

    def load_image(self) -> None:
        """Commit and fill the pages of the program's data image."""
        for addr, data in sorted(self.program.data_image.items()):
            self.memory.commit(addr, len(data))
            self.memory.write(addr, data)
        self.memory.reset_touch_counters()

    @property
    def at_thread_limit(self) -> bool:
        return len(self.threads) >= VM_CONFIG['max_threads']

    def create_thread(self, entry: int, arg: int = 0) -> MachineState:
        if self.at_thread_limit:
            raise VMError("thread limit reached")
        tid = self._next_tid
        self._next_tid += 1
        state = MachineState(tid=tid, memory=self.memory, pc=entry)
        state.regs[1] = arg
        self.threads[tid] = ThreadRecord(state=state)
        return state

    def record_fault(self, tid: int, fault: FaultKind, address: Optional[int] = None) -> None:
        record = self.threads[tid]
        record.status = ThreadStatus.FAULTED
        record.fault = fault
        record.fault_address = address
        if self.exit_status == 'ok':
            self.exit_status = fault.value
        logger.warning(f"Thread {tid} faulted: {fault.value} at {address if address is None else hex(address)}")

    def read_input(self, name: str, length: int) -> bytes:
        data = self.inputs.get(name, b'')
        cursor = self._cursors.get(name, 0)
        chunk = data[cursor:cursor + length]
        self._cursors[name] = cursor + len(chunk)
        return chunk


def exec_syscall(state: MachineState, kind: SyscallKind, world: WorldState) -> SyscallResult:
    """
    Perform a pending syscall for a thread.

    Args:
        state: Calling thread, pc on the SYSCALL instruction
        kind: Syscall kind
        world: Shared world state

    Returns:
        SyscallResult describing the effect; a set `fault` terminates the thread
    """
    args = [state.regs[r] for r in ARG_REGISTERS]
    result = SyscallResult(kind=kind)
    record = world.threads[state.tid]
    memory = world.memory
    world.syscall_counts[kind.value] = world.syscall_counts.get(kind.value, 0) + 1

    if kind in (SyscallKind.RECV, SyscallKind.FREAD):
        buf, length, stream = args
        prefix = 'net' if kind is SyscallKind.RECV else 'file'
        data = world.read_input(f"{prefix}:{stream}", length)
        if data:
            memory.write(buf, data)
        result.value, result.addr, result.length, result.stream = len(data), buf, len(data), stream
        if kind is SyscallKind.RECV and world.throttle > 0:
            record.status = ThreadStatus.SLEEPING
            record.wake_step = world.clock + world.throttle

    elif kind in (SyscallKind.SEND, SyscallKind.FWRITE):
        buf, length, sink = args
        prefix = 'net' if kind is SyscallKind.SEND else 'file'
        data = memory.read(buf, length) if length else b''
        world.outputs.setdefault(f"{prefix}:{sink}", bytearray()).extend(data)
        result.value, result.addr, result.length, result.stream = length, buf, length, sink

    elif kind is SyscallKind.ALLOC:
        size, fixed = args[0], args[1]
        if size == 0 or size > memory.span:
            result.fault = FaultKind.INVALID_ALLOC
            return result
        if fixed:
            start = page_of(fixed)
            end = -(-(fixed + size) // PAGE_SIZE) * PAGE_SIZE
            owner = memory.overlaps_reserved(start, end)
            if end > memory.span or owner is not None or not memory.is_committed_range_free(start, end):
                logger.warning(f"Fixed ALLOC [{start:#x},{end:#x}) conflicts with {owner or 'committed memory'}")
                result.fault = FaultKind.ADDRESS_CONFLICT
                result.addr, result.length = start, end - start
                return result
        else:
            found = memory.find_free(size)
            if found is None:
                result.fault = FaultKind.INVALID_ALLOC
                return result
            start = found
            end = start + -(-size // PAGE_SIZE) * PAGE_SIZE
        memory.commit(start, end - start)
        result.value, result.addr, result.length = start, start, end - start

    elif kind is SyscallKind.FREE:
        addr, size = args[0], args[1]
        start = page_of(addr)
        end = -(-(addr + size) // PAGE_SIZE) * PAGE_SIZE if size else start
        memory.decommit(start, end - start)
        result.addr, result.length = start, end - start

    elif kind is SyscallKind.SPAWN:
        entry, arg = args[0], args[1]
        if not world.program.is_valid_pc(entry):
            result.fault = FaultKind.BAD_TARGET
            return result
        if world.at_thread_limit:
            logger.warning(f"Thread {state.tid}: SPAWN refused, {len(world.threads)} threads exist")
            result.value = SPAWN_FAILED
            return result
        child = world.create_thread(entry, arg)
        result.value = result.new_tid = child.tid

    elif kind in (SyscallKind.WAIT, SyscallKind.SIGNAL):
        event = args[0]
        if event >= world.event_count:
            result.fault = FaultKind.INVALID_EVENT
            return result
        waiters = world._waiters.setdefault(event, deque())
        if kind is SyscallKind.WAIT:
            if world._latched[event]:
                world._latched[event] = False
            else:
                record.status = ThreadStatus.BLOCKED
                record.wait_event = event
                waiters.append(state.tid)
                result.blocked = True
        elif waiters:
            woken = world.threads[waiters.popleft()]
            woken.status = ThreadStatus.RUNNABLE
            woken.wait_event = None
        else:
            world._latched[event] = True
        result.value = event

    elif kind is SyscallKind.EXIT:
        record.status = ThreadStatus.EXITED
        record.exit_code = args[0]
        result.exited = True
        result.value = args[0]

    state.regs[RESULT_REGISTER] = result.value
    state.pc += 1
    return result
