"""
Taint propagation rule table.

This is the single definition of per-instruction taint semantics. The code
generator concatenates these ops into analysis blocks and the coupled oracle
applies them inline, so the two cannot drift apart.

    MOVRR / LOAD / STORE     bytewise copy
    ADD / SUB / AND / OR     bytewise union (immediate operand: no change)
    XOR                      union; XOR r, r clears
    MOVRI                    clear
    SHL / SHR                destination keeps its taint; count consumed
    MEMCPY                   taint(dst[i]) = taint(src[i]) for i < count
    CMOV                     copy source taint when the recorded flag selected the move
    JMPIND / CALLIND         check the target register's taint
    SYSCALL                  entry tasks, clear r0, return tasks
    LOAD / STORE / MEMCPY     then any task bound at the instruction site
    CMP JCC JMP CALL RET HALT   nothing
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

from analysis.constants import ANALYSIS_CODE_CONFIG
from vm.isa import RESULT_REGISTER, Imm, Opcode

from .record_plan import CaptureKind, InstructionPlan, Phase
from .task_stubs import TaskKind, TaskStub


class TaintOpKind(Enum):
    COPY = 'Copy'
    UNION = 'Union'
    CLEAR = 'Clear'
    COPY_MEM2REG = 'CopyMem2Reg'
    COPY_REG2MEM = 'CopyReg2Mem'
    BLOCK_COPY = 'BlockCopy'
    SHIFT_ADJUST = 'ShiftAdjust'
    COND_COPY = 'CondCopy'
    CHECK_INDIRECT = 'CheckIndirect'
    TASK_CALL = 'TaskCall'


RULE_TABLE: Dict[Opcode, str] = {
    Opcode.MOVRI: 'clear',
    Opcode.MOVRR: 'copy',
    Opcode.LOAD: 'copy mem->reg',
    Opcode.STORE: 'copy reg->mem',
    Opcode.ADD: 'union',
    Opcode.SUB: 'union',
    Opcode.AND: 'union',
    Opcode.OR: 'union',
    Opcode.XOR: 'union, self-xor clears',
    Opcode.SHL: 'pass-through',
    Opcode.SHR: 'pass-through',
    Opcode.CMP: 'none',
    Opcode.JCC: 'none',
    Opcode.JMP: 'none',
    Opcode.JMPIND: 'check target',
    Opcode.CALL: 'none',
    Opcode.CALLIND: 'check target',
    Opcode.RET: 'none',
    Opcode.CMOV: 'conditional copy',
    Opcode.MEMCPY: 'block copy',
    Opcode.SYSCALL: 'tasks, clear r0',
    Opcode.HALT: 'none',
}

# Entry arity per op kind; TaskCall arity depends on the stub
OP_ARITY: Dict[TaintOpKind, int] = {
    TaintOpKind.COPY: 0,
    TaintOpKind.UNION: 0,
    TaintOpKind.CLEAR: 0,
    TaintOpKind.COPY_MEM2REG: 1,
    TaintOpKind.COPY_REG2MEM: 1,
    TaintOpKind.BLOCK_COPY: 3,
    TaintOpKind.SHIFT_ADJUST: 1,
    TaintOpKind.COND_COPY: 1,
    TaintOpKind.CHECK_INDIRECT: 1,
}


@dataclass(frozen=True)
class TaintOp:
    """
    One step of generated analysis code.

    `entries` are indices into the block's record entries (0 is the header);
    the oracle uses instruction-local indices starting at 0 instead.
    """
    kind: TaintOpKind
    insn_index: int
    site_pc: int
    dst: Optional[int] = None
    src: Optional[int] = None
    entries: Tuple[int, ...] = ()
    stub: Optional[TaskStub] = None

    @property
    def byte_size(self) -> int:
        return ANALYSIS_CODE_CONFIG['bytes_per_op'] + ANALYSIS_CODE_CONFIG['bytes_per_entry'] * len(self.entries)

    def __str__(self) -> str:
        parts = [self.kind.value]
        if self.dst is not None:
            parts.append(f"r{self.dst}")
        if self.src is not None:
            parts.append(f"r{self.src}")
        if self.entries:
            parts.append("e[" + ",".join(str(e) for e in self.entries) + "]")
        if self.stub is not None:
            parts.append(self.stub.kind.value if self.stub.custom_id is None
                         else f"{self.stub.kind.value}#{self.stub.custom_id}")
        return " ".join(parts)


def ops_for_instruction(plan: InstructionPlan, first_entry: int = 0) -> List[TaintOp]:
    """
    Taint ops of one instruction, consuming its captures in order.

    Args:
        plan: InstructionPlan of the instruction
        first_entry: Entry index of the instruction's first capture

    Returns:
        Ops in application order; together they consume every capture exactly once
    """
    insn = plan.insn
    op = insn.opcode
    operands = insn.operands
    idx = plan.index
    pc = plan.pc
    numbered = [(first_entry + i, c) for i, c in enumerate(plan.captures)]

    def make(kind: TaintOpKind, **kw) -> TaintOp:
        return TaintOp(kind, idx, pc, **kw)

    vm_entries = tuple(e for e, c in numbered if c.kind is not CaptureKind.TASK_ARGS)

    def site_tasks() -> List[TaintOp]:
        return _task_calls(plan, Phase.BEFORE, numbered, make)

    if op is Opcode.MOVRI:
        return [make(TaintOpKind.CLEAR, dst=operands[0].index)]
    if op is Opcode.MOVRR:
        return [make(TaintOpKind.COPY, dst=operands[0].index, src=operands[1].index)]
    if op is Opcode.LOAD:
        return [make(TaintOpKind.COPY_MEM2REG, dst=operands[0].index, entries=vm_entries)] + site_tasks()
    if op is Opcode.STORE:
        return [make(TaintOpKind.COPY_REG2MEM, src=operands[1].index, entries=vm_entries)] + site_tasks()
    if op in (Opcode.ADD, Opcode.SUB, Opcode.AND, Opcode.OR, Opcode.XOR):
        dst, src = operands
        if isinstance(src, Imm):
            return []
        if op is Opcode.XOR and src.index == dst.index:
            return [make(TaintOpKind.CLEAR, dst=dst.index)]
        return [make(TaintOpKind.UNION, dst=dst.index, src=src.index)]
    if op in (Opcode.SHL, Opcode.SHR):
        return [make(TaintOpKind.SHIFT_ADJUST, dst=operands[0].index, entries=vm_entries)]
    if op is Opcode.MEMCPY:
        return [make(TaintOpKind.BLOCK_COPY, entries=vm_entries)] + site_tasks()
    if op is Opcode.CMOV:
        return [make(TaintOpKind.COND_COPY, dst=operands[0].index, src=operands[1].index, entries=vm_entries)]
    if op in (Opcode.JMPIND, Opcode.CALLIND):
        stub = next((s for s in plan.stubs if s.kind is TaskKind.INDIRECT), None)
        return [make(TaintOpKind.CHECK_INDIRECT, src=operands[0].index, entries=vm_entries, stub=stub)]
    if op is Opcode.SYSCALL:
        ops = _task_calls(plan, Phase.BEFORE, numbered, make)
        ops.append(make(TaintOpKind.CLEAR, dst=RESULT_REGISTER))
        ops.extend(_task_calls(plan, Phase.AFTER, numbered, make))
        return ops
    return []


def _task_calls(plan: InstructionPlan, phase: Phase, numbered, make) -> List[TaintOp]:
    ops = []
    for stub_index, stub in enumerate(plan.stubs):
        entries = tuple(e for e, c in numbered
                        if c.kind is CaptureKind.TASK_ARGS and c.stub == stub_index and c.phase is phase)
        if entries:
            ops.append(make(TaintOpKind.TASK_CALL, entries=entries, stub=stub))
    return ops
