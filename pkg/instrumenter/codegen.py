"""
Analysis code generation and the shared analysis-code region.

Each basic block the target executes gets one AnalysisBlock: the block's taint
ops, concatenated from the rule table, plus the entry layout they consume.
Blocks are published into the region only once complete, and the region is
append-only, so a header word in a record stream always names a finished block.
"""

from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

from loguru import logger

from analysis.constants import ANALYSIS_CODE_CONFIG
from vm.isa import Program

from .blocks import BasicBlock, BlockCache, InstrumentationError
from .record_plan import RecordPlan, plan_block
from .task_stubs import TaskBindings
from .taint_rules import TaintOp, ops_for_instruction


@dataclass(frozen=True)
class AnalysisBlock:
    address: int
    block: BasicBlock
    plan: RecordPlan
    ops: Tuple[TaintOp, ...]
    consumes: Tuple[int, ...]

    @property
    def expected_entry_count(self) -> int:
        return self.plan.expected_entry_count

    @property
    def byte_size(self) -> int:
        return sum(op.byte_size for op in self.ops)

    @property
    def start(self) -> int:
        return self.block.start

    def listing(self) -> List[str]:
        lines = [f"block {self.address:#x} pc={self.start:#x} bytes={self.byte_size} "
                 f"entries={self.expected_entry_count} terminator={self.block.terminator.value}"]
        for op in self.ops:
            lines.append(f"    {str(op):<40} ; {self.block.instructions[op.insn_index]}")
        return lines


def gen_analysis_block(block: BasicBlock, plan: Optional[RecordPlan] = None,
                       sinks: Optional[TaskBindings] = None,
                       region: Optional['AnalysisCodeRegion'] = None) -> AnalysisBlock:
    """
    Generate the analysis code of one block.

    Args:
        block: Basic block
        plan: Its record plan; planned with `sinks` when omitted
        sinks: Task bindings used to plan the block
        region: Region to publish into; the block gets a fresh address there

    Returns:
        AnalysisBlock

    Raises:
        InstrumentationError: If the plan does not belong to the block
    """
    if plan is None:
        plan = plan_block(block, sinks)
    if plan.block_start != block.start or len(plan.instructions) != len(block):
        raise InstrumentationError(f"record plan for {plan.block_start:#x} does not match block {block.start:#x}")

    ops: List[TaintOp] = []
    next_entry = 1
    for iplan in plan.instructions:
        ops.extend(ops_for_instruction(iplan, next_entry))
        next_entry += len(iplan.captures)
    consumes = tuple(e for op in ops for e in op.entries)
    if consumes != tuple(range(1, plan.expected_entry_count)):
        raise InstrumentationError(f"block {block.start:#x}: ops consume {consumes}, "
                                   f"expected 1..{plan.expected_entry_count - 1}")

    draft = AnalysisBlock(0, block, plan, tuple(ops), consumes)
    if region is None:
        return draft
    return region.publish(draft)


class AnalysisCodeRegion:
    """Append-only registry of analysis blocks, addressed like code in the container."""

    def __init__(self, program: Program, bindings: Optional[TaskBindings] = None,
                 base: int = ANALYSIS_CODE_CONFIG['base']):
        self.program = program
        self.bindings = bindings
        self.base = base
        self._next_address = base
        self._by_address: Dict[int, AnalysisBlock] = {}
        self._by_pc: Dict[int, AnalysisBlock] = {}
        self.blocks = BlockCache(program)

    def __len__(self) -> int:
        return len(self._by_address)

    def __iter__(self) -> Iterator[AnalysisBlock]:
        return iter(self._by_address.values())

    def publish(self, draft: AnalysisBlock) -> AnalysisBlock:
        address = self._next_address
        self._next_address += max(draft.byte_size, 1)
        published = AnalysisBlock(address, draft.block, draft.plan, draft.ops, draft.consumes)
        self._by_address[address] = published
        return published

    def block_at(self, pc: int) -> AnalysisBlock:
        """Analysis block for the basic block entered at `pc`, generating it on first use."""
        found = self._by_pc.get(pc)
        if found is None:
            block = self.blocks.get(pc)
            found = gen_analysis_block(block, plan_block(block, self.bindings), self.bindings, self)
            self._by_pc[pc] = found
            logger.debug(f"Generated analysis block {found.address:#x} for pc {pc:#x} ({found.byte_size} bytes)")
        return found

    def lookup(self, address: int) -> Optional[AnalysisBlock]:
        return self._by_address.get(address)

    @property
    def am_bytes(self) -> int:
        return sum(b.byte_size for b in self._by_address.values())

    @property
    def instructions(self) -> int:
        return sum(len(b.block) for b in self._by_address.values())

    @property
    def instrumented_instructions(self) -> int:
        return sum(b.plan.instrumented_count for b in self._by_address.values())

    @property
    def pi(self) -> float:
        total = self.instructions
        return self.instrumented_instructions / total if total else 0.0

    def dump(self) -> str:
        """Textual listing of every published block in address order."""
        lines: List[str] = []
        for address in sorted(self._by_address):
            lines.extend(self._by_address[address].listing())
        return "\n".join(lines) + ("\n" if lines else "")
