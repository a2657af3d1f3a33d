"""
Record plans: which runtime values each instruction of a block must put in the stream.

Entry 0 of every block is the header (the analysis block address). Captures
follow in execution order; within an instruction, VM-supplied values come
first in the order `vm.machine.step` hands them over, then task words.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from vm.isa import Instruction, Opcode
from vm.machine import MachineState

from .blocks import BasicBlock
from .task_stubs import TaskBindings, TaskSite, TaskStub


class CaptureKind(Enum):
    EFFECTIVE_ADDRESS = 'EffectiveAddress'
    REGISTER_VALUE = 'RegisterValue'
    FLAG_BIT = 'FlagBit'
    TASK_ARGS = 'TaskArgs'


class Phase(Enum):
    BEFORE = 'before'   # written by the before-instruction hook
    AFTER = 'after'     # written by the after-syscall hook


@dataclass(frozen=True)
class Capture:
    """One stream word an instruction contributes."""
    kind: CaptureKind
    phase: Phase = Phase.BEFORE
    slot: int = 0                   # index into the VM value tuple, or into the stub's words
    operand: Optional[int] = None   # operand position for EffectiveAddress
    reg: Optional[int] = None       # register for RegisterValue
    stub: Optional[int] = None      # index into InstructionPlan.stubs for TaskArgs

    def __str__(self) -> str:
        if self.kind is CaptureKind.EFFECTIVE_ADDRESS:
            return f"ea(op{self.operand})"
        if self.kind is CaptureKind.REGISTER_VALUE:
            return f"r{self.reg}"
        if self.kind is CaptureKind.FLAG_BIT:
            return "flag"
        return f"task{self.stub}[{self.slot}]"


@dataclass(frozen=True)
class InstructionPlan:
    index: int
    pc: int
    insn: Instruction
    captures: Tuple[Capture, ...]
    stubs: Tuple[TaskStub, ...]

    @property
    def instrumented(self) -> bool:
        return bool(self.captures) or bool(self.stubs)

    def captures_in(self, phase: Phase) -> Tuple[Capture, ...]:
        return tuple(c for c in self.captures if c.phase is phase)


@dataclass(frozen=True)
class RecordPlan:
    block_start: int
    instructions: Tuple[InstructionPlan, ...]

    @property
    def captures(self) -> Tuple[Capture, ...]:
        return tuple(c for ip in self.instructions for c in ip.captures)

    @property
    def expected_entry_count(self) -> int:
        return len(self.captures) + 1

    @property
    def instrumented_count(self) -> int:
        return sum(1 for ip in self.instructions if ip.instrumented)

    @property
    def pi(self) -> float:
        return self.instrumented_count / len(self.instructions)


def _vm_captures(insn: Instruction) -> List[Capture]:
    op = insn.opcode
    operands = insn.operands
    if op is Opcode.LOAD:
        return [Capture(CaptureKind.EFFECTIVE_ADDRESS, operand=1)]
    if op is Opcode.STORE:
        return [Capture(CaptureKind.EFFECTIVE_ADDRESS, operand=0)]
    if op in (Opcode.SHL, Opcode.SHR):
        return [Capture(CaptureKind.REGISTER_VALUE, reg=operands[1].index)]
    if op is Opcode.MEMCPY:
        dst, src, count = (o.index for o in operands)
        return [Capture(CaptureKind.REGISTER_VALUE, slot=0, reg=src),
                Capture(CaptureKind.REGISTER_VALUE, slot=1, reg=dst),
                Capture(CaptureKind.REGISTER_VALUE, slot=2, reg=count)]
    if op is Opcode.CMOV:
        return [Capture(CaptureKind.FLAG_BIT)]
    if op in (Opcode.JMPIND, Opcode.CALLIND):
        return [Capture(CaptureKind.REGISTER_VALUE, reg=operands[0].index)]
    return []


def plan_instruction(insn: Instruction, pc: int, index: int = 0,
                     bindings: Optional[TaskBindings] = None) -> InstructionPlan:
    """Captures and task stubs of a single instruction."""
    bindings = bindings if bindings is not None else default_bindings()
    stubs = bindings.stubs_for(insn, pc)
    captures = _vm_captures(insn)
    for phase, sites in ((Phase.BEFORE, (TaskSite.ENTRY, TaskSite.INSTRUCTION)), (Phase.AFTER, (TaskSite.RETURN,))):
        for stub_index, stub in enumerate(stubs):
            if stub.site in sites:
                captures.extend(Capture(CaptureKind.TASK_ARGS, phase=phase, slot=word, stub=stub_index)
                                for word in range(stub.entry_count))
    return InstructionPlan(index, pc, insn, tuple(captures), stubs)


def plan_block(block: BasicBlock, bindings: Optional[TaskBindings] = None) -> RecordPlan:
    """
    Plan the runtime records of a block.

    Args:
        block: Basic block
        bindings: Task bindings; the default table when omitted

    Returns:
        RecordPlan; the same block always yields an equal plan
    """
    return RecordPlan(block.start, tuple(
        plan_instruction(insn, block.pc_of(i), i, bindings) for i, insn in enumerate(block.instructions)))


def capture_words(plan: InstructionPlan, phase: Phase, state: MachineState,
                  values: Sequence[int] = (), result=None) -> List[int]:
    """
    Resolve the stream words an instruction writes in one hook phase.

    Args:
        plan: The instruction's plan
        phase: BEFORE (values from `step`) or AFTER (syscall result)
        state: Executing thread
        values: Runtime values `step` passed to the before-instruction hook
        result: SyscallResult, AFTER phase only

    Returns:
        Words in capture order
    """
    words: List[int] = []
    emitted: Dict[int, Tuple[int, ...]] = {}
    masked = plan.insn.opcode is Opcode.MEMCPY and len(values) == 3 and values[2] == 0
    for capture in plan.captures:
        if capture.phase is not phase:
            continue
        if capture.kind is CaptureKind.TASK_ARGS:
            if capture.stub not in emitted:
                emitted[capture.stub] = plan.stubs[capture.stub].emit(state, result, values)
            words.append(emitted[capture.stub][capture.slot])
        elif masked:
            # a zero-length copy skips address validation; record it as a null copy
            words.append(0)
        else:
            words.append(values[capture.slot])
    return words


_DEFAULT_BINDINGS: Optional[TaskBindings] = None


def default_bindings() -> TaskBindings:
    global _DEFAULT_BINDINGS
    if _DEFAULT_BINDINGS is None:
        _DEFAULT_BINDINGS = TaskBindings()
    return _DEFAULT_BINDINGS
