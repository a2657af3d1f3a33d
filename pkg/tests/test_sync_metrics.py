"""
Tests for Sync Metrics

Tests the GSR bookkeeping, sync-aware submission and the metrics report.
"""

import itertools
import math
import unittest
from pathlib import Path

from channel.record_buffer import SubmitReason
from channel.record_channel import EventKind, create_channel
from harness.experiment_config import ExperimentConfig
from harness.runner import run_experiment
from parsers.workload_loader import WorkloadCatalog
from sync.metrics_report import expand_runs, shadow_runs
from sync.sync_state import SyncState, compute_gsr

CATALOG_PATH = Path(__file__).resolve().parent.parent / 'workloads' / 'catalog.json'


def drain(channel):
    while channel.next_event().kind not in (EventKind.PENDING, EventKind.END_OF_STREAM):
        pass


class TestComputeGsr(unittest.TestCase):
    """Test cases for compute_gsr"""

    def test_values(self):
        """GSR is the share of checkpoint entries already analyzed"""
        self.assertEqual(round(compute_gsr(1076, 5) * 100, 1), 99.5)
        self.assertEqual(compute_gsr(0, 0), 1.0)
        self.assertEqual(compute_gsr(4, 4), 0.0)


class TestSyncState(unittest.TestCase):
    """Test cases for SyncState driven by hand"""

    def setUp(self):
        """Set up test fixtures"""
        self.segments = itertools.count(1)

    def wire(self, sync_submit):
        sync = SyncState(sync_submit)
        channels = []
        for tid in (0, 1):
            channel = create_channel(n_buffers=3, capacity=16, guard=1, tid=tid,
                                     segment_ids=self.segments, listener=sync)
            sync.register(tid, channel)
            channels.append(channel)
        return sync, channels

    def test_flagged_segment_still_pending(self):
        """Without sync submission the waiter can resume ahead of the signaler's analysis"""
        sync, (signaler, waiter) = self.wire(sync_submit=False)
        signaler.write_entry(5)
        sync.on_signal(0)
        waiter.write_entry(6)
        sync.on_wait(1)
        sync.on_wait_return(1)
        waiter.submit_current(SubmitReason.THREAD_EXIT)
        drain(waiter)
        self.assertEqual((sync.ssn, sync.wsn, sync.cfn, sync.dfn), (1, 1, 1, 1))
        self.assertEqual(sync.gsr, 0.0)
        self.assertEqual(signaler.counters.buffer_switches, 0)

    def test_sync_submission_hands_segment_over(self):
        """With sync submission the flagged segment is analyzed before the waiter resumes"""
        sync, (signaler, waiter) = self.wire(sync_submit=True)
        signaler.write_entry(5)
        sync.on_signal(0)
        self.assertEqual(signaler.counters.submissions, {'SyncSignal': 1})
        waiter.write_entry(6)
        sync.on_wait(1)
        sync.on_wait_return(1)
        drain(signaler)
        waiter.write_entry(7)
        waiter.submit_current(SubmitReason.THREAD_EXIT)
        drain(waiter)
        self.assertEqual((sync.cfn, sync.dfn), (1, 0))
        self.assertEqual(sync.to_dict()['gsr'], 1.0)

    def test_checkpoint_holds_waiter_until_flagged_segment_finishes(self):
        """The waiter's post-wait segment stays pending until the signaler's segment is analyzed"""
        sync, (signaler, waiter) = self.wire(sync_submit=True)
        signaler.write_entry(5)
        sync.on_signal(0)
        waiter.write_entry(6)
        sync.on_wait(1)
        sync.on_wait_return(1)
        waiter.write_entry(7)
        waiter.submit_current(SubmitReason.THREAD_EXIT)
        drain(waiter)
        self.assertEqual(waiter.next_event().kind, EventKind.PENDING)
        self.assertEqual((sync.cfn, sync.dfn), (1, 1))
        drain(signaler)
        self.assertEqual(waiter.next_event().kind, EventKind.DATUM)
        drain(waiter)
        self.assertEqual(sync.dfn, 1)
        self.assertFalse(sync.checkpoints)

    def test_flag_raised_while_blocked_joins_checkpoint(self):
        """A SIGNAL that wakes a blocked waiter is counted even when its segment is already analyzed"""
        sync, (signaler, waiter) = self.wire(sync_submit=True)
        waiter.write_entry(6)
        sync.on_wait(1)
        self.assertEqual(sync.cfn, 0)
        signaler.write_entry(5)
        sync.on_signal(0)
        drain(signaler)
        self.assertEqual(sync.flagged[0], set())
        sync.on_wait_return(1)
        self.assertEqual(sync.cfn, 1)
        waiter.write_entry(7)
        waiter.submit_current(SubmitReason.THREAD_EXIT)
        drain(waiter)
        self.assertEqual((sync.cfn, sync.dfn), (1, 0))

    def test_flag_precedes_submission(self):
        """A segment analyzed inside its own SIGNAL submission is still flagged"""
        sync, (signaler, waiter) = self.wire(sync_submit=True)
        signaler.on_submit = lambda channel, buf: drain(channel)
        signaler.write_entry(5)
        sync.on_signal(0)
        sync.on_wait(1)
        self.assertEqual(sync.cfn, 1)
        self.assertEqual(sync.detection[1], [(0, 1)])

    def test_own_segments_are_not_checkpointed(self):
        """A thread never waits on its own flagged segment"""
        sync, (signaler, _) = self.wire(sync_submit=False)
        signaler.write_entry(5)
        sync.on_signal(0)
        sync.on_wait(0)
        self.assertEqual(sync.cfn, 0)


class TestShadowRuns(unittest.TestCase):
    """Test cases for the run-length shadow encoding"""

    def test_runs(self):
        """Adjacent equal labels merge into one run"""
        snapshot = {0x100: 1, 0x101: 1, 0x102: 2, 0x200: 1}
        self.assertEqual(shadow_runs(snapshot), [[0x100, 2, 1], [0x102, 1, 2], [0x200, 1, 1]])
        self.assertEqual(expand_runs(shadow_runs(snapshot)), snapshot)
        self.assertEqual(shadow_runs({}), [])


class TestWorkloadMetrics(unittest.TestCase):
    """Sync and buffer metrics on catalog workloads"""

    @classmethod
    def setUpClass(cls):
        cls.catalog = WorkloadCatalog(str(CATALOG_PATH))

    def run_workload(self, workload, **overrides):
        config = ExperimentConfig(workload=workload, deterministic=True, **overrides)
        return run_experiment(config, self.catalog).report

    def test_producer_consumer_gsr(self):
        """Handing records over with WAIT/SIGNAL keeps every checkpoint analyzed"""
        report = self.run_workload('producer_consumer')
        self.assertEqual(report.exit_status, 'ok')
        self.assertGreater(report.cfn, 0)
        self.assertEqual(report.gsr, 1.0)
        self.assertGreater(report.wsn, 0)
        self.assertGreater(report.ssn, 0)

    def test_adversarial_without_sync_submission(self):
        """The adversarial schedule resumes the waiter ahead of the signaler's analysis"""
        report = self.run_workload('sync_adversarial', sync_submit=False)
        self.assertGreaterEqual(report.dfn, 1)
        self.assertLess(report.gsr, 1.0)

    def test_adversarial_with_sync_submission(self):
        """Sync submission closes the gap"""
        report = self.run_workload('sync_adversarial', sync_submit=True)
        self.assertEqual(report.dfn, 0)
        self.assertEqual(report.gsr, 1.0)

    def test_membound_buffer_switches(self):
        """Full switches follow the closed form and shrink with larger buffers"""
        previous = None
        for entries in (1024, 8192, 65536):
            with self.subTest(buffer_entries=entries):
                report = self.run_workload('membound', buffer_entries=entries)
                self.assertGreaterEqual(report.entries_written, 24000)
                self.assertEqual(report.buffer_switches, math.ceil(report.entries_written / (entries - 1)))
                if previous is not None:
                    self.assertLess(report.bf, previous)
                previous = report.bf

    def test_deterministic_reports_are_identical(self):
        """Deterministic runs serialize byte for byte the same"""
        first = self.run_workload('producer_consumer').to_json()
        second = self.run_workload('producer_consumer').to_json()
        self.assertEqual(first, second)

    def test_record_only(self):
        """Record-only runs count buffers but do no taint work"""
        report = self.run_workload('downloader', record_only=True)
        self.assertEqual(report.mode, 'record-only')
        self.assertEqual((report.rb, report.cb, report.db), (0, 0, 0))
        self.assertGreater(report.buffer_switches, 0)
        self.assertEqual(report.workers, [])


if __name__ == '__main__':
    unittest.main()
