"""
Tests for the Record Channel

Tests the guard-region switch, early submission sentinels, the terminal
buffer and ordering under randomized producer/consumer interleavings.
"""

import math
import os
import random
import unittest

from analysis.constants import EARLY_SWITCH, SENTINEL_RANGE
from channel.record_buffer import ChannelConfigError, ChannelError, OwnershipError, SentinelViolation, SubmitReason
from channel.record_channel import EventKind, WriteOutcome, create_channel

PROPERTY_CASES = int(os.environ.get('HALF_CHANNEL_CASES', '25'))


def drain(channel, sink):
    """Consume every submitted word into `sink`; returns (switches seen, event kind that stopped it)."""
    switches = 0
    while True:
        event = channel.next_event()
        if event.kind is EventKind.DATUM:
            sink.append(event.value)
        elif event.kind is EventKind.SWITCH_TO_NEXT:
            switches += 1
        else:
            return switches, event.kind


class TestRecordChannel(unittest.TestCase):
    """Test cases for RecordChannel"""

    def setUp(self):
        """Set up test fixtures"""
        self.channel = create_channel(n_buffers=2, capacity=4, guard=1)

    def test_guard_write_switches(self):
        """The write that lands in the guard region submits and re-issues into a fresh buffer"""
        outcomes = [self.channel.write_entry(v) for v in (1, 2, 3, 4)]
        self.assertEqual(outcomes[:3], [WriteOutcome.OK] * 3)
        self.assertIs(outcomes[3], WriteOutcome.SWITCHED_THEN_OK)
        self.assertEqual(self.channel.counters.bf, 1)

        words = []
        switches, last = drain(self.channel, words)
        self.assertEqual(words, [1, 2, 3])
        self.assertEqual(switches, 1)
        self.assertIs(last, EventKind.PENDING)

    def test_early_submit_and_terminal_buffer(self):
        """Sync submission appends the sentinel; thread exit closes the stream"""
        self.channel.write_entry(7)
        self.channel.submit_current(SubmitReason.SYNC_WAIT)
        self.assertEqual(self.channel.buffers[0].word(1), EARLY_SWITCH)
        words = []
        switches, last = drain(self.channel, words)
        self.assertEqual((words, switches, last), ([7], 1, EventKind.PENDING))

        self.channel.write_entry(8)
        self.channel.submit_current(SubmitReason.THREAD_EXIT)
        switches, last = drain(self.channel, words)
        self.assertEqual(words, [7, 8])
        self.assertIs(last, EventKind.END_OF_STREAM)
        self.assertTrue(self.channel.ended)
        self.assertEqual(self.channel.counters.buffer_switches, 2)
        self.assertEqual(self.channel.counters.submissions, {'SyncWait': 1, 'ThreadExit': 1})

    def test_empty_sync_submission_is_skipped(self):
        """An empty producer buffer is not submitted at a sync point"""
        self.channel.submit_current(SubmitReason.SYNC_SIGNAL)
        self.assertEqual(self.channel.counters.buffer_switches, 0)
        self.assertIs(self.channel.next_event().kind, EventKind.PENDING)

    def test_header_events(self):
        """A consumer at a block boundary reads plain words as headers"""
        self.channel.write_entry(0x7000)
        self.channel.submit_current(SubmitReason.SYNC_WAIT)
        event = self.channel.next_event(expect_header=True)
        self.assertIs(event.kind, EventKind.HEADER)
        self.assertEqual(event.value, 0x7000)

    def test_truncate_marker(self):
        """write_truncate produces a TRUNCATE event followed by the instruction count"""
        self.channel.write_entry(0x7000)
        self.channel.write_truncate(2)
        self.channel.submit_current(SubmitReason.THREAD_EXIT)
        kinds = [self.channel.next_event().kind for _ in range(3)]
        self.assertEqual(kinds, [EventKind.DATUM, EventKind.TRUNCATE, EventKind.DATUM])

    def test_sentinel_words_are_refused(self):
        """Words in the reserved range cannot be recorded"""
        for word in (SENTINEL_RANGE[0], EARLY_SWITCH, SENTINEL_RANGE[1]):
            with self.assertRaises(SentinelViolation):
                self.channel.write_entry(word)
        self.assertEqual(self.channel.counters.entries_written, 0)

    def test_full_is_not_an_explicit_reason(self):
        """Full submissions only happen through the guard region"""
        with self.assertRaises(ChannelError):
            self.channel.submit_current(SubmitReason.FULL)

    def test_write_after_close(self):
        """Writing to a closed stream is an ownership error"""
        self.channel.submit_current(SubmitReason.THREAD_EXIT)
        with self.assertRaises(OwnershipError):
            self.channel.write_entry(1)

    def test_starved_producer_without_relief(self):
        """With every buffer submitted and no consumer, the producer cannot continue"""
        for value in range(6):
            self.channel.write_entry(value)
        with self.assertRaises(ChannelError):
            self.channel.write_entry(99)

    def test_bad_geometry(self):
        """Channels need two buffers and a guard smaller than the buffer"""
        with self.assertRaises(ChannelConfigError):
            create_channel(n_buffers=1)
        with self.assertRaises(ChannelConfigError):
            create_channel(capacity=4, guard=0)
        with self.assertRaises(ChannelConfigError):
            create_channel(capacity=4, guard=4)

    def test_record_only_recycles_buffers(self):
        """Record-only channels count submissions but never queue buffers"""
        channel = create_channel(n_buffers=2, capacity=4, guard=1, record_only=True)
        for value in range(20):
            channel.write_entry(value)
        channel.submit_current(SubmitReason.THREAD_EXIT)
        self.assertTrue(channel.ended)
        self.assertEqual(channel.counters.entries_written, 20)
        self.assertEqual(channel.counters.buffer_switches, math.ceil(20 / 3))


class TestChannelProperties(unittest.TestCase):
    """Randomized interleavings of producer and consumer"""

    def test_stream_is_lossless_and_ordered(self):
        """Every recorded word comes out once, in order, whatever the interleaving"""
        for case in range(PROPERTY_CASES):
            rng = random.Random(case)
            capacity = rng.choice([2, 3, 5, 16, 64])
            n_buffers = rng.randint(2, 4)
            channel = create_channel(n_buffers=n_buffers, capacity=capacity, guard=1)
            received = []

            def relieve():
                drain(channel, received)
                return bool(channel.free_list)

            channel.starvation_handler = relieve
            written = []
            for _ in range(rng.randint(0, 400)):
                roll = rng.random()
                if roll < 0.75:
                    word = rng.getrandbits(64)
                    if SENTINEL_RANGE[0] <= word <= SENTINEL_RANGE[1]:
                        continue
                    channel.write_entry(word)
                    written.append(word)
                elif roll < 0.85:
                    channel.submit_current(rng.choice([SubmitReason.SYNC_WAIT, SubmitReason.SYNC_SIGNAL]))
                else:
                    drain(channel, received)
            channel.submit_current(SubmitReason.THREAD_EXIT)
            _, last = drain(channel, received)

            with self.subTest(case=case, capacity=capacity, buffers=n_buffers):
                self.assertIs(last, EventKind.END_OF_STREAM)
                self.assertEqual(received, written)
                self.assertEqual(channel.counters.entries_written, len(written))
                self.assertLessEqual(channel.counters.bf, channel.counters.buffer_switches)

    def test_full_buffers_only_closed_form(self):
        """Without sync points the switch count is ceil(entries / usable slots)"""
        for case in range(PROPERTY_CASES):
            rng = random.Random(1000 + case)
            capacity = rng.randint(2, 40)
            entries = rng.randint(1, 500)
            channel = create_channel(n_buffers=2, capacity=capacity, guard=1, record_only=True)
            for value in range(entries):
                channel.write_entry(value)
            channel.submit_current(SubmitReason.THREAD_EXIT)
            with self.subTest(capacity=capacity, entries=entries):
                self.assertEqual(channel.counters.buffer_switches, math.ceil(entries / (capacity - 1)))
                self.assertEqual(channel.counters.bf, channel.counters.buffer_switches - 1)


if __name__ == '__main__':
    unittest.main()
