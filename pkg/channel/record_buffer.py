"""
Fixed-capacity record buffer with a guard region at its tail.
"""

from enum import Enum
from typing import Optional

import numpy as np


class ChannelError(Exception):
    """Base class for record channel errors."""


class ChannelConfigError(ChannelError):
    """Invalid channel geometry."""


class SentinelViolation(ChannelError):
    """A producer tried to record a word in the reserved sentinel range."""


class OwnershipError(ChannelError):
    """A buffer was used by a side that does not own it."""


class BufferState(Enum):
    FREE = 'free'
    PRODUCING = 'producing'
    SUBMITTED = 'submitted'
    CONSUMING = 'consuming'


class SubmitReason(Enum):
    FULL = 'Full'
    SYNC_WAIT = 'SyncWait'
    SYNC_SIGNAL = 'SyncSignal'
    THREAD_EXIT = 'ThreadExit'


class RecordBuffer:
    """
    One record buffer. Slots [capacity - guard, capacity) are the guard region:
    a data write landing there switches buffers, and only sentinels are stored there.
    """

    def __init__(self, index: int, capacity: int, guard: int):
        self.index = index
        self.capacity = capacity
        self.guard = guard
        self.entries = np.zeros(capacity, dtype=np.uint64)
        self.state = BufferState.FREE
        self.write_pos = 0
        self.length = 0
        self.segment: Optional[int] = None
        self.signal_flag = False
        self.submit_reason: Optional[SubmitReason] = None

    @property
    def usable(self) -> int:
        return self.capacity - self.guard

    @property
    def in_guard(self) -> bool:
        return self.write_pos >= self.usable

    @property
    def empty(self) -> bool:
        return self.write_pos == 0

    @property
    def terminal(self) -> bool:
        return self.submit_reason is SubmitReason.THREAD_EXIT and self.length == 0

    def require(self, state: BufferState) -> None:
        if self.state is not state:
            raise OwnershipError(f"buffer {self.index} is {self.state.value}, expected {state.value}")

    def open(self, segment: int) -> None:
        """Hand the buffer to the producer as a fresh segment."""
        self.require(BufferState.FREE)
        self.state = BufferState.PRODUCING
        self.write_pos = 0
        self.length = 0
        self.segment = segment
        self.signal_flag = False
        self.submit_reason = None

    def put(self, word: int) -> None:
        self.entries[self.write_pos] = word
        self.write_pos += 1

    def seal(self, reason: SubmitReason) -> None:
        self.require(BufferState.PRODUCING)
        self.length = self.write_pos
        self.submit_reason = reason
        if reason is SubmitReason.SYNC_SIGNAL:
            self.signal_flag = True
        self.state = BufferState.SUBMITTED

    def word(self, pos: int) -> int:
        return int(self.entries[pos])

    def __repr__(self) -> str:
        return (f"RecordBuffer(index={self.index}, segment={self.segment}, state={self.state.value}, "
                f"write_pos={self.write_pos}, length={self.length})")
