"""
Recording hooks: the target-side half of the decoupled analysis.

For every basic block a thread enters, the recorder writes the analysis
block's address as a header word, then the runtime values the record plan
asks for. WAIT and SIGNAL are filtered here and handed to the sync registry
before they take effect.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Optional

from loguru import logger

from channel.record_buffer import SubmitReason
from channel.record_channel import RecordChannel
from vm.isa import Instruction, Opcode, SyscallKind
from vm.machine import InstrumentationHooks, MachineState

from .blocks import InstrumentationError
from .codegen import AnalysisBlock, AnalysisCodeRegion
from .record_plan import Phase, capture_words


@dataclass
class ThreadCursor:
    """Where a thread is inside the block it is recording."""
    channel: RecordChannel
    block: Optional[AnalysisBlock] = None
    index: int = 0                      # instructions of the block completed so far
    awaiting_wait_return: bool = False
    blocks_recorded: int = 0


class Recorder(InstrumentationHooks):
    """Instrumentation hooks that stream runtime records into per-thread channels."""

    def __init__(self, region: AnalysisCodeRegion, sync, open_channel: Callable[[int], RecordChannel]):
        self.region = region
        self.sync = sync
        self.open_channel = open_channel
        self.cursors: Dict[int, ThreadCursor] = {}

    def on_thread_start(self, state: MachineState) -> None:
        self.cursors[state.tid] = ThreadCursor(channel=self.open_channel(state.tid))
        logger.debug(f"Recording thread {state.tid}")

    def before_instruction(self, state: MachineState, insn: Instruction, values) -> None:
        cursor = self.cursors[state.tid]
        channel = cursor.channel
        if cursor.awaiting_wait_return:
            cursor.awaiting_wait_return = False
            self.sync.on_wait_return(state.tid)

        block = cursor.block
        if block is None or cursor.index >= len(block.block):
            block = self.region.block_at(state.pc)
            cursor.block = block
            cursor.index = 0
            cursor.blocks_recorded += 1
            channel.write_entry(block.address)
        elif block.block.pc_of(cursor.index) != state.pc:
            raise InstrumentationError(f"thread {state.tid} left block {block.start:#x} at {state.pc:#x} "
                                       f"before its terminator")

        plan = block.plan.instructions[cursor.index]
        for word in capture_words(plan, Phase.BEFORE, state, values):
            channel.write_entry(word)

        if insn.opcode is Opcode.SYSCALL:
            if insn.syscall is SyscallKind.SIGNAL:
                self.sync.on_signal(state.tid)
            elif insn.syscall is SyscallKind.WAIT:
                self.sync.on_wait(state.tid)
        else:
            cursor.index += 1

    def after_syscall(self, state: MachineState, insn: Instruction, result) -> None:
        cursor = self.cursors[state.tid]
        plan = cursor.block.plan.instructions[cursor.index]
        for word in capture_words(plan, Phase.AFTER, state, result=result):
            cursor.channel.write_entry(word)
        cursor.index += 1
        if insn.syscall is SyscallKind.WAIT:
            if result.blocked:
                cursor.awaiting_wait_return = True
            else:
                self.sync.on_wait_return(state.tid)

    def on_thread_exit(self, state: MachineState, reason: str) -> None:
        cursor = self.cursors[state.tid]
        if cursor.block is not None and cursor.index < len(cursor.block.block):
            logger.debug(f"Thread {state.tid} stopped ({reason}) after {cursor.index} of "
                         f"{len(cursor.block.block)} instructions of block {cursor.block.start:#x}")
            cursor.channel.write_truncate(cursor.index)
        cursor.channel.submit_current(SubmitReason.THREAD_EXIT)
        logger.debug(f"Thread {state.tid} closed its record stream ({reason}, {cursor.blocks_recorded} blocks)")
