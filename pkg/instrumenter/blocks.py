"""
Basic block discovery over an assembled Program.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

from loguru import logger

from analysis.constants import INSTRUMENTER_CONFIG
from vm.isa import Instruction, Opcode, Program


class InstrumentationError(Exception):
    """Raised when a block, plan or task stub cannot be built."""


class Terminator(Enum):
    FALLTHROUGH = 'fallthrough'
    JUMP = 'jump'
    INDIRECT = 'indirect'
    SYSCALL = 'syscall'
    HALT = 'halt'


_TERMINATOR_OF = {
    Opcode.JCC: Terminator.JUMP,
    Opcode.JMP: Terminator.JUMP,
    Opcode.CALL: Terminator.JUMP,
    Opcode.JMPIND: Terminator.INDIRECT,
    Opcode.CALLIND: Terminator.INDIRECT,
    Opcode.RET: Terminator.INDIRECT,
    Opcode.SYSCALL: Terminator.SYSCALL,
    Opcode.HALT: Terminator.HALT,
}


@dataclass(frozen=True)
class BasicBlock:
    """Straight-line run of instructions; only the last one may transfer control."""
    start: int
    instructions: Tuple[Instruction, ...]
    terminator: Terminator

    def __len__(self) -> int:
        return len(self.instructions)

    def pc_of(self, index: int) -> int:
        return self.start + index


def _scan(program: Program, entry: int, limit: int) -> BasicBlock:
    if not program.is_valid_pc(entry):
        raise InstrumentationError(f"block entry {entry:#x} is not a code address")
    insns = []
    pc = entry
    while True:
        insn = program.fetch(pc)
        insns.append(insn)
        if insn.is_terminator:
            return BasicBlock(entry, tuple(insns), _TERMINATOR_OF[insn.opcode])
        if len(insns) >= limit:
            return BasicBlock(entry, tuple(insns), Terminator.FALLTHROUGH)
        pc += 1


class BlockCache:
    """Blocks keyed by entry address; entries are never invalidated (no self-modifying code)."""

    def __init__(self, program: Program, limit: int = INSTRUMENTER_CONFIG['max_block_instructions']):
        self.program = program
        self.limit = limit
        self._blocks: Dict[int, BasicBlock] = {}
        self.hits = 0

    def __len__(self) -> int:
        return len(self._blocks)

    def get(self, entry: int) -> BasicBlock:
        block = self._blocks.get(entry)
        if block is not None:
            self.hits += 1
            return block
        block = _scan(self.program, entry, self.limit)
        self._blocks[entry] = block
        logger.debug(f"Discovered block at {entry:#x}: {len(block)} instructions, {block.terminator.value}")
        return block


def discover_block(program: Program, entry: int, cache: Optional[BlockCache] = None) -> BasicBlock:
    """
    Find the maximal straight-line block starting at `entry`.

    Args:
        program: Program to scan
        entry: Code address of the first instruction
        cache: Optional cache; a cached entry returns the identical block object

    Returns:
        BasicBlock ending at the first terminator (or the length cap)

    Raises:
        InstrumentationError: If entry is not a code address
    """
    if cache is not None:
        return cache.get(entry)
    return _scan(program, entry, INSTRUMENTER_CONFIG['max_block_instructions'])
