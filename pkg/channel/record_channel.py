"""
Record channel: the stream of runtime records from one target thread to its analysis worker.

The producer never checks for fullness. A write landing in a buffer's guard
region submits the buffer and re-issues the word into a fresh one. Early
submissions (sync points, thread exit) append the EARLY_SWITCH sentinel so the
consumer knows to move on before the buffer is full. The consumer sees three
ways to leave a buffer: the sentinel, the end of a Full buffer, and the empty
terminal buffer that closes the stream.

Each producer acquisition opens a segment with a fresh id; segment ids, not
physical buffers, are what sync bookkeeping refers to, since buffers recycle.
"""

import itertools
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Deque, Dict, Iterator, List, Optional

from loguru import logger

from analysis.constants import CHANNEL_CONFIG, EARLY_SWITCH, TRUNCATE, in_sentinel_range

from .record_buffer import (
    BufferState,
    ChannelConfigError,
    ChannelError,
    OwnershipError,
    RecordBuffer,
    SentinelViolation,
    SubmitReason,
)


class WriteOutcome(Enum):
    OK = 'Ok'
    SWITCHED_THEN_OK = 'SwitchedThenOk'


class EventKind(Enum):
    HEADER = 'Header'
    DATUM = 'Datum'
    SWITCH_TO_NEXT = 'SwitchToNext'
    END_OF_STREAM = 'EndOfStream'
    PENDING = 'Pending'         # nothing submitted yet; the consumer yields
    TRUNCATE = 'Truncate'       # the producer stopped mid-block


@dataclass(frozen=True)
class StreamEvent:
    kind: EventKind
    value: Optional[int] = None


PENDING = StreamEvent(EventKind.PENDING)
SWITCH_TO_NEXT = StreamEvent(EventKind.SWITCH_TO_NEXT)
END_OF_STREAM = StreamEvent(EventKind.END_OF_STREAM)
TRUNCATED = StreamEvent(EventKind.TRUNCATE)


@dataclass
class ChannelCounters:
    bf: int = 0                 # Full submissions
    buffer_switches: int = 0    # every data-bearing submission
    entries_written: int = 0
    submissions: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            'bf': self.bf,
            'buffer_switches': self.buffer_switches,
            'entries_written': self.entries_written,
            'submissions': dict(sorted(self.submissions.items())),
        }


class SegmentListener:
    """Receives segment lifecycle events from the consumer side; the sync registry implements it."""

    def segment_ready(self, tid: int, segment: int) -> bool:
        return True

    def segment_begun(self, tid: int, segment: int) -> None:
        pass

    def segment_finished(self, tid: int, segment: int) -> None:
        pass


class RecordChannel:
    """Single-producer, single-consumer stream of record buffers for one target thread."""

    def __init__(self, tid: int, n_buffers: int, capacity: int, guard: int, record_only: bool = False,
                 segment_ids: Optional[Iterator[int]] = None, listener: Optional[SegmentListener] = None):
        self.tid = tid
        self.capacity = capacity
        self.guard = guard
        self.record_only = record_only
        self.listener = listener or SegmentListener()
        self.counters = ChannelCounters()
        self.starvation_handler: Optional[Callable[[], bool]] = None
        self.on_submit: Optional[Callable[['RecordChannel', RecordBuffer], None]] = None

        self._segment_ids = segment_ids if segment_ids is not None else itertools.count(1)
        self.buffers: List[RecordBuffer] = [RecordBuffer(i, capacity, guard) for i in range(n_buffers)]
        self.free_list: Deque[RecordBuffer] = deque(self.buffers)
        self.work_list: Deque[RecordBuffer] = deque()
        self.producer: Optional[RecordBuffer] = None
        self.consumer: Optional[RecordBuffer] = None
        self.read_pos = 0
        self._ended = False
        self._acquire()

    # Producer side

    @property
    def closed(self) -> bool:
        return self.producer is None

    @property
    def current_segment(self) -> Optional[int]:
        return self.producer.segment if self.producer is not None else None

    @property
    def pending_entries(self) -> int:
        return self.producer.write_pos if self.producer is not None else 0

    def write_entry(self, value: int) -> WriteOutcome:
        """
        Append one word to the stream.

        Args:
            value: Word to record; must lie outside the sentinel range

        Returns:
            OK, or SWITCHED_THEN_OK when the write hit the guard region

        Raises:
            SentinelViolation: If value is a reserved sentinel word
        """
        if in_sentinel_range(value):
            raise SentinelViolation(f"thread {self.tid}: refusing to record reserved word {value:#x}")
        self.counters.entries_written += 1
        return self._write(value)

    def write_truncate(self, completed: int) -> None:
        """Mark the current block as cut short after `completed` instructions."""
        self._write(TRUNCATE)
        self.write_entry(completed)

    def _write(self, word: int) -> WriteOutcome:
        buf = self._producing()
        if buf.in_guard:
            self._submit(buf, SubmitReason.FULL)
            buf = self._acquire()
            buf.put(word)
            return WriteOutcome.SWITCHED_THEN_OK
        buf.put(word)
        return WriteOutcome.OK

    def submit_current(self, reason: SubmitReason) -> None:
        """
        Submit the producer's buffer before it is full.

        Empty buffers are not submitted, except that THREAD_EXIT always ends the
        stream with an empty terminal buffer.
        """
        if reason is SubmitReason.FULL:
            raise ChannelError("Full submissions happen only through the guard region")
        buf = self.producer
        if buf is None:
            if reason is SubmitReason.THREAD_EXIT:
                return
            raise OwnershipError(f"thread {self.tid}: stream already closed")
        if reason is SubmitReason.THREAD_EXIT:
            if not buf.empty:
                buf.put(EARLY_SWITCH)
                self._submit(buf, reason)
                buf = self._acquire()
            self._submit(buf, reason)
            return
        if buf.empty:
            return
        buf.put(EARLY_SWITCH)
        self._submit(buf, reason)
        self._acquire()

    def flag_current(self) -> Optional[int]:
        """Set the signal flag on the producer's unsubmitted segment and return its id."""
        if self.producer is None or self.producer.empty:
            return None
        self.producer.signal_flag = True
        return self.producer.segment

    def _producing(self) -> RecordBuffer:
        if self.producer is None:
            raise OwnershipError(f"thread {self.tid}: write after the stream was closed")
        return self.producer

    def _submit(self, buf: RecordBuffer, reason: SubmitReason) -> None:
        buf.seal(reason)
        self.producer = None
        if buf.length:
            self.counters.buffer_switches += 1
            self.counters.submissions[reason.value] = self.counters.submissions.get(reason.value, 0) + 1
            if reason is SubmitReason.FULL:
                self.counters.bf += 1
        logger.debug("Thread {} submitted segment {} ({}, {} entries)", self.tid, buf.segment, reason.value, buf.length)
        if self.record_only:
            self.listener.segment_begun(self.tid, buf.segment)
            self.listener.segment_finished(self.tid, buf.segment)
            buf.state = BufferState.FREE
            self.free_list.append(buf)
            if buf.terminal:
                self._ended = True
        else:
            self.work_list.append(buf)
        if self.on_submit is not None:
            self.on_submit(self, buf)

    def _acquire(self) -> RecordBuffer:
        while not self.free_list:
            if self.starvation_handler is None or not self.starvation_handler():
                raise ChannelError(f"thread {self.tid}: no free record buffer and the consumer cannot release one")
        buf = self.free_list.popleft()
        buf.open(next(self._segment_ids))
        self.producer = buf
        return buf

    # Consumer side

    @property
    def ended(self) -> bool:
        return self._ended

    @property
    def has_submitted(self) -> bool:
        return bool(self.work_list) or self.consumer is not None

    def next_event(self, expect_header: bool = False) -> StreamEvent:
        """
        Read the next stream event.

        Args:
            expect_header: The consumer is at a block boundary, so a plain word is a header

        Returns:
            HEADER or DATUM with the word, SWITCH_TO_NEXT after leaving a buffer,
            TRUNCATE, END_OF_STREAM after the terminal buffer, or PENDING when
            nothing is submitted yet or the next segment is held back by the listener
        """
        if self._ended:
            return END_OF_STREAM
        buf = self.consumer
        if buf is None:
            if not self.work_list or not self.listener.segment_ready(self.tid, self.work_list[0].segment):
                return PENDING
            buf = self.work_list.popleft()
            buf.require(BufferState.SUBMITTED)
            buf.state = BufferState.CONSUMING
            self.consumer = buf
            self.read_pos = 0
            self.listener.segment_begun(self.tid, buf.segment)
            if buf.terminal:
                self._release(buf)
                self._ended = True
                return END_OF_STREAM

        if self.read_pos >= buf.length:
            self._release(buf)
            return SWITCH_TO_NEXT
        word = buf.word(self.read_pos)
        self.read_pos += 1
        if word == EARLY_SWITCH:
            self._release(buf)
            return SWITCH_TO_NEXT
        if word == TRUNCATE:
            return TRUNCATED
        return StreamEvent(EventKind.HEADER if expect_header else EventKind.DATUM, word)

    def _release(self, buf: RecordBuffer) -> None:
        buf.require(BufferState.CONSUMING)
        self.listener.segment_finished(self.tid, buf.segment)
        buf.state = BufferState.FREE
        self.consumer = None
        self.free_list.append(buf)


def create_channel(n_buffers: int = CHANNEL_CONFIG['buffers_per_thread'],
                   capacity: int = CHANNEL_CONFIG['buffer_entries'],
                   guard: int = CHANNEL_CONFIG['guard_entries'],
                   tid: int = 0, **kwargs) -> RecordChannel:
    """
    Create a channel whose producer already holds a buffer.

    Args:
        n_buffers: Buffers in the pool, at least 2
        capacity: Words per buffer
        guard: Guard slots at each buffer's tail, 1 <= guard < capacity
        tid: Target thread the channel belongs to

    Returns:
        RecordChannel

    Raises:
        ChannelConfigError: On invalid sizes
    """
    if n_buffers < 2:
        raise ChannelConfigError(f"a channel needs at least 2 buffers, got {n_buffers}")
    if guard < 1:
        raise ChannelConfigError(f"guard must be at least 1 slot, got {guard}")
    if capacity <= guard:
        raise ChannelConfigError(f"capacity {capacity} must exceed guard {guard}")
    return RecordChannel(tid, n_buffers, capacity, guard, **kwargs)
