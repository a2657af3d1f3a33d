"""
Target thread state and the single-instruction interpreter.

`step` validates every memory range and indirect target before it calls the
instrumentation hooks, so hooks only ever see instructions that complete.
Runtime values handed to `before_instruction` follow a fixed per-opcode order:

    LOAD / STORE       (effective_address,)
    SHL / SHR          (count & 63,)
    MEMCPY             (src, dst, count)
    CMOV               (1 if the move is selected else 0,)
    JMPIND / CALLIND   (target,)
    everything else    ()
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

from analysis.constants import REGISTER_COUNT, WORD_MASK

from .isa import Condition, Instruction, Mem, Opcode, Program, Reg, SyscallKind
from .memory import AddressSpace

SIGN_BIT = 1 << 63


class VMError(Exception):
    """Base class for interpreter errors raised to the caller."""


class FaultKind(Enum):
    UNMAPPED_MEMORY = 'UnmappedMemory'
    BAD_OPCODE = 'BadOpcode'
    BAD_TARGET = 'BadTarget'
    ADDRESS_CONFLICT = 'AddressConflict'
    INVALID_EVENT = 'InvalidEvent'
    INVALID_ALLOC = 'InvalidAlloc'


class OutcomeKind(Enum):
    CONTINUE = 'Continue'
    SYSCALL_PENDING = 'SyscallPending'
    HALTED = 'Halted'
    FAULT = 'Fault'


@dataclass(frozen=True)
class StepOutcome:
    kind: OutcomeKind
    syscall: Optional[SyscallKind] = None
    fault: Optional[FaultKind] = None
    address: Optional[int] = None

    @classmethod
    def fault_at(cls, fault: FaultKind, address: Optional[int] = None) -> 'StepOutcome':
        return cls(OutcomeKind.FAULT, fault=fault, address=address)


CONTINUE = StepOutcome(OutcomeKind.CONTINUE)
HALTED = StepOutcome(OutcomeKind.HALTED)


@dataclass
class Flags:
    z: int = 0
    s: int = 0
    c: int = 0
    o: int = 0

    def holds(self, cond: Condition) -> bool:
        if cond is Condition.EQ:
            return self.z == 1
        if cond is Condition.NE:
            return self.z == 0
        if cond is Condition.LT:
            return self.s != self.o
        if cond is Condition.GE:
            return self.s == self.o
        if cond is Condition.LE:
            return self.z == 1 or self.s != self.o
        if cond is Condition.GT:
            return self.z == 0 and self.s == self.o
        if cond is Condition.LTU:
            return self.c == 1
        return self.c == 0


@dataclass
class MachineState:
    """Architectural state of one target thread; memory is shared with sibling threads."""
    tid: int
    memory: AddressSpace
    pc: int = 0
    regs: List[int] = field(default_factory=lambda: [0] * REGISTER_COUNT)
    flags: Flags = field(default_factory=Flags)
    call_stack: List[int] = field(default_factory=list)

    def snapshot(self) -> Tuple:
        return (self.tid, self.pc, tuple(self.regs), (self.flags.z, self.flags.s, self.flags.c, self.flags.o),
                tuple(self.call_stack))


class InstrumentationHooks:
    """No-op hook set; the recorder and the coupled oracle override these."""

    def on_thread_start(self, state: MachineState) -> None:
        pass

    def before_instruction(self, state: MachineState, insn: Instruction, values: Tuple[int, ...]) -> None:
        pass

    def after_syscall(self, state: MachineState, insn: Instruction, result) -> None:
        pass

    def on_thread_exit(self, state: MachineState, reason: str) -> None:
        pass


NO_HOOKS = InstrumentationHooks()


def effective_address(state: MachineState, mem: Mem) -> int:
    addr = mem.disp
    if mem.base is not None:
        addr += state.regs[mem.base]
    if mem.index is not None:
        addr += state.regs[mem.index] * mem.scale
    return addr & WORD_MASK


def _arith_flags(flags: Flags, a: int, b: int, result: int, subtract: bool) -> None:
    flags.z = int(result == 0)
    flags.s = int(bool(result & SIGN_BIT))
    if subtract:
        flags.c = int(a < b)
        flags.o = int(bool((a ^ b) & (a ^ result) & SIGN_BIT))
    else:
        flags.c = int(a + b > WORD_MASK)
        flags.o = int(bool(~(a ^ b) & (a ^ result) & SIGN_BIT))


def _logic_flags(flags: Flags, result: int) -> None:
    flags.z = int(result == 0)
    flags.s = int(bool(result & SIGN_BIT))
    flags.c = 0
    flags.o = 0


def alu(opcode: Opcode, a: int, b: int) -> int:
    """Architectural result of a two-operand ALU/shift opcode (b is the shift count for shifts)."""
    if opcode is Opcode.ADD:
        return (a + b) & WORD_MASK
    if opcode in (Opcode.SUB, Opcode.CMP):
        return (a - b) & WORD_MASK
    if opcode is Opcode.AND:
        return a & b
    if opcode is Opcode.OR:
        return a | b
    if opcode is Opcode.XOR:
        return a ^ b
    if opcode is Opcode.SHL:
        return (a << (b & 63)) & WORD_MASK
    if opcode is Opcode.SHR:
        return a >> (b & 63)
    raise VMError(f"{opcode} is not an ALU opcode")


# Syscalls whose (buf, len) arguments name target memory that must be mapped
_BUFFER_SYSCALLS = (SyscallKind.RECV, SyscallKind.FREAD, SyscallKind.SEND, SyscallKind.FWRITE)


def step(state: MachineState, program: Program, hooks: InstrumentationHooks = NO_HOOKS) -> StepOutcome:
    """
    Execute one instruction of a target thread.

    Args:
        state: Thread state; pc must be a valid code address
        program: Program being executed
        hooks: Instrumentation hooks, invoked before the instruction takes effect

    Returns:
        StepOutcome; SYSCALL_PENDING leaves pc on the SYSCALL for exec_syscall
    """
    pc = state.pc
    if not program.is_valid_pc(pc):
        return StepOutcome.fault_at(FaultKind.BAD_TARGET, pc)
    insn = program.fetch(pc)
    op = insn.opcode
    regs = state.regs
    memory = state.memory
    operands = insn.operands

    if op is Opcode.MOVRI:
        hooks.before_instruction(state, insn, ())
        regs[operands[0].index] = operands[1].value & WORD_MASK

    elif op is Opcode.MOVRR:
        hooks.before_instruction(state, insn, ())
        regs[operands[0].index] = regs[operands[1].index]

    elif op is Opcode.LOAD or op is Opcode.STORE:
        ea = effective_address(state, insn.mem_operand)
        if not memory.is_mapped(ea, 8):
            return StepOutcome.fault_at(FaultKind.UNMAPPED_MEMORY, ea)
        hooks.before_instruction(state, insn, (ea,))
        if op is Opcode.LOAD:
            regs[operands[0].index] = memory.read_word(ea)
        else:
            memory.write_word(ea, regs[operands[1].index])

    elif op in (Opcode.ADD, Opcode.SUB, Opcode.AND, Opcode.OR, Opcode.XOR, Opcode.CMP):
        hooks.before_instruction(state, insn, ())
        dst = operands[0].index
        src = operands[1]
        a = regs[dst]
        b = regs[src.index] if isinstance(src, Reg) else src.value & WORD_MASK
        result = alu(op, a, b)
        if op in (Opcode.ADD, Opcode.SUB, Opcode.CMP):
            _arith_flags(state.flags, a, b, result, subtract=op is not Opcode.ADD)
        else:
            _logic_flags(state.flags, result)
        if op is not Opcode.CMP:
            regs[dst] = result

    elif op is Opcode.SHL or op is Opcode.SHR:
        count = regs[operands[1].index] & 63
        hooks.before_instruction(state, insn, (count,))
        dst = operands[0].index
        result = alu(op, regs[dst], count)
        _logic_flags(state.flags, result)
        regs[dst] = result

    elif op is Opcode.JCC:
        hooks.before_instruction(state, insn, ())
        state.pc = operands[0].value if state.flags.holds(insn.cond) else pc + 1
        return CONTINUE

    elif op is Opcode.JMP:
        hooks.before_instruction(state, insn, ())
        state.pc = operands[0].value
        return CONTINUE

    elif op is Opcode.CALL:
        hooks.before_instruction(state, insn, ())
        state.call_stack.append(pc + 1)
        state.pc = operands[0].value
        return CONTINUE

    elif op is Opcode.JMPIND or op is Opcode.CALLIND:
        target = regs[operands[0].index]
        if not program.is_valid_pc(target):
            return StepOutcome.fault_at(FaultKind.BAD_TARGET, target)
        hooks.before_instruction(state, insn, (target,))
        if op is Opcode.CALLIND:
            state.call_stack.append(pc + 1)
        state.pc = target
        return CONTINUE

    elif op is Opcode.RET:
        hooks.before_instruction(state, insn, ())
        if not state.call_stack:
            return HALTED
        state.pc = state.call_stack.pop()
        return CONTINUE

    elif op is Opcode.CMOV:
        selected = state.flags.holds(insn.cond)
        hooks.before_instruction(state, insn, (1 if selected else 0,))
        if selected:
            regs[operands[0].index] = regs[operands[1].index]

    elif op is Opcode.MEMCPY:
        dst, src, count = (regs[o.index] for o in operands)
        if count:
            if count > memory.span:
                return StepOutcome.fault_at(FaultKind.UNMAPPED_MEMORY, src)
            if not memory.is_mapped(src, count):
                return StepOutcome.fault_at(FaultKind.UNMAPPED_MEMORY, src)
            if not memory.is_mapped(dst, count):
                return StepOutcome.fault_at(FaultKind.UNMAPPED_MEMORY, dst)
        hooks.before_instruction(state, insn, (src, dst, count))
        if count:
            memory.write(dst, memory.read(src, count))

    elif op is Opcode.SYSCALL:
        if insn.syscall in _BUFFER_SYSCALLS:
            buf, length = regs[1], regs[2]
            if length and (length > memory.span or not memory.is_mapped(buf, length)):
                return StepOutcome.fault_at(FaultKind.UNMAPPED_MEMORY, buf)
        hooks.before_instruction(state, insn, ())
        return StepOutcome(OutcomeKind.SYSCALL_PENDING, syscall=insn.syscall)

    elif op is Opcode.HALT:
        hooks.before_instruction(state, insn, ())
        return HALTED

    else:
        return StepOutcome.fault_at(FaultKind.BAD_OPCODE, pc)

    state.pc = pc + 1
    return CONTINUE
