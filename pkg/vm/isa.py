"""
Toy ISA definitions.

Opcodes, operand kinds, syscall kinds and the Program container shared by the
assembler, the interpreter and the instrumenter.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple, Union

from analysis.constants import REGISTER_COUNT, VM_CONFIG, in_sentinel_range


class Opcode(Enum):
    MOVRI = 'MOVRI'
    MOVRR = 'MOVRR'
    LOAD = 'LOAD'
    STORE = 'STORE'
    ADD = 'ADD'
    SUB = 'SUB'
    AND = 'AND'
    OR = 'OR'
    XOR = 'XOR'
    SHL = 'SHL'
    SHR = 'SHR'
    CMP = 'CMP'
    JCC = 'JCC'
    JMP = 'JMP'
    JMPIND = 'JMPIND'
    CALL = 'CALL'
    CALLIND = 'CALLIND'
    RET = 'RET'
    CMOV = 'CMOV'
    MEMCPY = 'MEMCPY'
    SYSCALL = 'SYSCALL'
    HALT = 'HALT'


class Condition(Enum):
    EQ = 'EQ'
    NE = 'NE'
    LT = 'LT'
    GE = 'GE'
    LE = 'LE'
    GT = 'GT'
    LTU = 'LTU'
    GEU = 'GEU'


class SyscallKind(Enum):
    RECV = 'RECV'
    SEND = 'SEND'
    FREAD = 'FREAD'
    FWRITE = 'FWRITE'
    ALLOC = 'ALLOC'
    FREE = 'FREE'
    SPAWN = 'SPAWN'
    WAIT = 'WAIT'
    SIGNAL = 'SIGNAL'
    EXIT = 'EXIT'


# Argument registers per syscall kind; the result is returned in r0
SYSCALL_ARGS: Dict[SyscallKind, Tuple[str, ...]] = {
    SyscallKind.RECV: ('buf', 'len', 'stream'),
    SyscallKind.SEND: ('buf', 'len', 'sink'),
    SyscallKind.FREAD: ('buf', 'len', 'stream'),
    SyscallKind.FWRITE: ('buf', 'len', 'sink'),
    SyscallKind.ALLOC: ('size', 'fixed'),
    SyscallKind.FREE: ('addr', 'size'),
    SyscallKind.SPAWN: ('entry', 'arg'),
    SyscallKind.WAIT: ('event',),
    SyscallKind.SIGNAL: ('event',),
    SyscallKind.EXIT: ('code',),
}

ARG_REGISTERS = (1, 2, 3)
RESULT_REGISTER = 0

MEMORY_OPCODES: FrozenSet[Opcode] = frozenset({Opcode.LOAD, Opcode.STORE, Opcode.MEMCPY})
DYNAMIC_COUNT_OPCODES: FrozenSet[Opcode] = frozenset({Opcode.SHL, Opcode.SHR})
FLAG_READERS: FrozenSet[Opcode] = frozenset({Opcode.CMOV, Opcode.JCC})
INDIRECT_OPCODES: FrozenSet[Opcode] = frozenset({Opcode.JMPIND, Opcode.CALLIND})
TERMINATORS: FrozenSet[Opcode] = frozenset({
    Opcode.JCC, Opcode.JMP, Opcode.JMPIND, Opcode.CALL, Opcode.CALLIND,
    Opcode.RET, Opcode.SYSCALL, Opcode.HALT,
})
ALU_OPCODES: FrozenSet[Opcode] = frozenset({
    Opcode.ADD, Opcode.SUB, Opcode.AND, Opcode.OR, Opcode.XOR, Opcode.CMP,
})
DIRECT_TARGET_OPCODES: FrozenSet[Opcode] = frozenset({Opcode.JCC, Opcode.JMP, Opcode.CALL})

VALID_SCALES = (1, 2, 4, 8)


@dataclass(frozen=True)
class Reg:
    index: int

    def __str__(self) -> str:
        return f"r{self.index}"


@dataclass(frozen=True)
class Imm:
    value: int

    def __str__(self) -> str:
        return hex(self.value) if abs(self.value) > 9 else str(self.value)


@dataclass(frozen=True)
class Mem:
    """Address expression base + index*scale + disp."""
    base: Optional[int] = None
    index: Optional[int] = None
    scale: int = 1
    disp: int = 0

    def __str__(self) -> str:
        parts = []
        if self.base is not None:
            parts.append(f"r{self.base}")
        if self.index is not None:
            parts.append(f"r{self.index}*{self.scale}")
        if self.disp or not parts:
            parts.append(hex(self.disp))
        return "[" + "+".join(parts) + "]"


Operand = Union[Reg, Imm, Mem]

R, I, M = 'R', 'I', 'M'

# Operand shapes per opcode; 'RI' accepts a register or an immediate
OPERAND_SHAPES: Dict[Opcode, Tuple[str, ...]] = {
    Opcode.MOVRI: (R, I),
    Opcode.MOVRR: (R, R),
    Opcode.LOAD: (R, M),
    Opcode.STORE: (M, R),
    Opcode.ADD: (R, 'RI'),
    Opcode.SUB: (R, 'RI'),
    Opcode.AND: (R, 'RI'),
    Opcode.OR: (R, 'RI'),
    Opcode.XOR: (R, 'RI'),
    Opcode.SHL: (R, R),
    Opcode.SHR: (R, R),
    Opcode.CMP: (R, 'RI'),
    Opcode.JCC: (I,),
    Opcode.JMP: (I,),
    Opcode.JMPIND: (R,),
    Opcode.CALL: (I,),
    Opcode.CALLIND: (R,),
    Opcode.RET: (),
    Opcode.CMOV: (R, R),
    Opcode.MEMCPY: (R, R, R),
    Opcode.SYSCALL: (),
    Opcode.HALT: (),
}

_KIND_OF = {Reg: R, Imm: I, Mem: M}


class ISAError(ValueError):
    """Raised when an instruction violates the ISA invariants."""


@dataclass(frozen=True)
class Instruction:
    """One toy-ISA instruction; `cond` and `syscall` qualify JCC/CMOV and SYSCALL."""
    opcode: Opcode
    operands: Tuple[Operand, ...] = ()
    cond: Optional[Condition] = None
    syscall: Optional[SyscallKind] = None
    line: int = 0

    def __post_init__(self):
        shape = OPERAND_SHAPES[self.opcode]
        if len(shape) != len(self.operands):
            raise ISAError(f"{self.opcode.value} takes {len(shape)} operands, got {len(self.operands)}")
        for expected, operand in zip(shape, self.operands):
            kind = _KIND_OF.get(type(operand))
            if kind is None or kind not in expected:
                raise ISAError(f"{self.opcode.value}: operand {operand} does not match shape {expected}")
            if isinstance(operand, Reg) and not 0 <= operand.index < REGISTER_COUNT:
                raise ISAError(f"register index {operand.index} out of range")
            if isinstance(operand, Mem):
                for reg in (operand.base, operand.index):
                    if reg is not None and not 0 <= reg < REGISTER_COUNT:
                        raise ISAError(f"register index {reg} out of range")
                if operand.scale not in VALID_SCALES:
                    raise ISAError(f"scale {operand.scale} not in {VALID_SCALES}")
        if (self.opcode in FLAG_READERS) != (self.cond is not None):
            raise ISAError(f"{self.opcode.value}: condition code mismatch")
        if (self.opcode is Opcode.SYSCALL) != (self.syscall is not None):
            raise ISAError(f"{self.opcode.value}: syscall kind mismatch")

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    @property
    def mem_operand(self) -> Optional[Mem]:
        for operand in self.operands:
            if isinstance(operand, Mem):
                return operand
        return None

    def __str__(self) -> str:
        head = self.opcode.value
        if self.cond is not None:
            head += f" {self.cond.value}"
        if self.syscall is not None:
            head += f" {self.syscall.value}"
        if not self.operands:
            return head
        joiner = " " if self.cond is None else ", "
        return head + joiner + ", ".join(str(o) for o in self.operands)


HALT_SENTINEL = Instruction(Opcode.HALT)


@dataclass
class Program:
    """Assembled program: code at code_base + index, plus an initial data image."""
    instructions: List[Instruction] = field(default_factory=list)
    entry: Optional[int] = None
    data_image: Dict[int, bytes] = field(default_factory=dict)
    labels: Dict[str, int] = field(default_factory=dict)
    code_base: int = VM_CONFIG['code_base']

    @property
    def code_end(self) -> int:
        """Address of the implicit HALT sentinel that follows the last instruction."""
        return self.code_base + len(self.instructions)

    def is_valid_pc(self, pc: int) -> bool:
        return self.code_base <= pc <= self.code_end

    def fetch(self, pc: int) -> Instruction:
        if pc == self.code_end:
            return HALT_SENTINEL
        return self.instructions[pc - self.code_base]

    def data_ranges(self) -> List[Tuple[int, int]]:
        return [(addr, addr + len(data)) for addr, data in sorted(self.data_image.items())]

    def validate(self) -> None:
        """Check jump targets and code/data disjointness."""
        for offset, insn in enumerate(self.instructions):
            if insn.opcode in DIRECT_TARGET_OPCODES:
                target = insn.operands[0].value
                if not self.is_valid_pc(target):
                    raise ISAError(f"instruction {offset}: jump target {target:#x} is not a code address")
        for start, end in self.data_ranges():
            if start < self.code_end + 1 and self.code_base < end:
                raise ISAError(f"data [{start:#x},{end:#x}) overlaps the code region")
            if in_sentinel_range(start) or in_sentinel_range(end - 1):
                raise ISAError(f"data [{start:#x},{end:#x}) lies in the reserved sentinel range")
