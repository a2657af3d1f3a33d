"""
Tests for Oracle Equivalence

Decoupled analysis must reach the same shadow state, register taint,
counters and alerts as inline propagation, for generated programs and for
every catalog workload.
"""

import os
import struct
import unittest
from pathlib import Path

from analysis.session import DecoupledSession, SessionOptions
from harness.experiment_config import ExperimentConfig
from harness.program_generator import INDIRECT_STREAM_BASE, generate_workload, shared_slot
from harness.runner import run_experiment
from instrumenter.task_stubs import TaskBindings, TaskKind
from oracle.coupled import run_coupled
from oracle.diff import Diff, DiffEntry, Observation, compare
from parsers.assembler import assemble
from parsers.workload_loader import WorkloadCatalog
from vm.isa import Opcode

CATALOG_PATH = Path(__file__).resolve().parent.parent / 'workloads' / 'catalog.json'
FUZZ_PROGRAMS = int(os.environ.get('HALF_FUZZ_PROGRAMS', '5'))


STORE_SITE_PROGRAM = """
.entry main
.data 0x600000 "0123456789abcdef0123456789abcdef0123456789abcdef0123456789abcdef0123456789abcdef"
main:
    MOVRI r1, 0x600000
    MOVRI r2, 16
    MOVRI r3, 0
    SYSCALL RECV
    LOAD r4, [r1]
    STORE [r1+64], r4
    MOVRI r5, 7
quiet:
    STORE [r1+72], r5
    MOVRI r1, 0
    SYSCALL EXIT
"""


class TestInstructionSiteTasks(unittest.TestCase):
    """Tasks bound to STORE sites agree with the oracle"""

    def run_both(self, bindings):
        program = assemble(STORE_SITE_PROGRAM)
        inputs = {'net:0': bytes(range(16))}
        truth = run_coupled(program, inputs, bindings=bindings(program))
        report = DecoupledSession(program, inputs, SessionOptions(deterministic=True),
                                  bindings=bindings(program)).run()
        diff = compare(truth, report)
        self.assertTrue(diff.empty, diff.summary())
        return report

    def test_every_store(self):
        """Only the store of received data hits the check"""
        def bindings(program):
            table = TaskBindings()
            table.bind_instruction(Opcode.STORE, TaskKind.CHECK)
            return table
        report = self.run_both(bindings)
        self.assertEqual((report.rb, report.cb, report.db), (16, 16, 8))
        self.assertEqual([a['kind'] for a in report.alerts], ['SinkHit'])

    def test_one_address(self):
        """A check bound to one STORE ignores the others"""
        def bindings(program):
            table = TaskBindings()
            table.bind_instruction(Opcode.STORE, TaskKind.CHECK, address=program.labels['quiet'])
            return table
        report = self.run_both(bindings)
        self.assertEqual((report.cb, report.db), (8, 0))
        self.assertEqual(report.alerts, [])


class TestGeneratedPrograms(unittest.TestCase):
    """Randomized programs against the coupled oracle"""

    def test_fuzz(self):
        """Every generated program agrees with the oracle at every buffer size"""
        for seed in range(FUZZ_PROGRAMS):
            workload = generate_workload(seed)
            truth = run_coupled(workload.program, workload.inputs, seed=0)
            for entries in (16, 256, 65536):
                for deterministic in (True, False):
                    options = SessionOptions(buffer_entries=entries, deterministic=deterministic, seed=0)
                    report = DecoupledSession(workload.program, workload.inputs, options).run()
                    with self.subTest(seed=seed, buffer_entries=entries, deterministic=deterministic):
                        diff = compare(truth, report)
                        self.assertTrue(diff.empty, diff.summary())
                        self.assertEqual(report.exit_status, truth.exit_status)

    def test_generator_is_seeded(self):
        """The same seed yields the same program and inputs"""
        first, second = generate_workload(3), generate_workload(3)
        self.assertEqual(first.source, second.source)
        self.assertEqual(first.inputs, second.inputs)
        self.assertLessEqual(len(first.program.instructions), 500)

    def test_generated_cross_thread_and_indirect_shapes(self):
        """Generated programs hand data over WAIT/SIGNAL and transfer control through received words"""
        handovers = indirect_sites = 0
        for seed in range(40):
            workload = generate_workload(seed)
            if workload.threads > 1:
                handovers += 1
                self.assertIn(f"MOVRI r13, {shared_slot(1):#x}", workload.source)
            for name, data in workload.inputs.items():
                if int(name.split(':')[1]) >= INDIRECT_STREAM_BASE:
                    indirect_sites += 1
                    self.assertTrue(workload.program.is_valid_pc(struct.unpack('<Q', data)[0]))
        self.assertGreater(handovers, 0)
        self.assertGreater(indirect_sites, 0)

    def test_received_targets_agree_with_oracle(self):
        """Both modes flag every transfer through a received address"""
        checked = 0
        for seed in range(40):
            workload = generate_workload(seed)
            sites = [n for n in workload.inputs if int(n.split(':')[1]) >= INDIRECT_STREAM_BASE]
            if not sites:
                continue
            truth = run_coupled(workload.program, workload.inputs, seed=0)
            report = DecoupledSession(workload.program, workload.inputs,
                                      SessionOptions(deterministic=True, seed=0)).run()
            with self.subTest(seed=seed):
                diff = compare(truth, report)
                self.assertTrue(diff.empty, diff.summary())
                kinds = [alert['kind'] for alert in report.alerts]
                self.assertGreaterEqual(kinds.count('TaintedIndirectTarget'), len(sites))
            checked += 1
            if checked == 3:
                break
        self.assertEqual(checked, 3)


class TestCatalogWorkloads(unittest.TestCase):
    """Catalog workloads run with --verify"""

    @classmethod
    def setUpClass(cls):
        cls.catalog = WorkloadCatalog(str(CATALOG_PATH))

    def test_verify_every_workload(self):
        """Every workload matches the oracle under both shadow schemes"""
        for workload in self.catalog.ids():
            for scheme in ('mirror', 'prealloc'):
                config = ExperimentConfig(workload=workload, scheme=scheme, verify=True)
                result = run_experiment(config, self.catalog)
                with self.subTest(workload=workload, scheme=scheme):
                    self.assertTrue(result.diff.empty, result.diff.summary())
                    self.assertNotEqual(result.exit_code, 4)

    def test_seeds_change_schedule_not_taint(self):
        """Different scheduler seeds each match their own oracle run"""
        workload = self.catalog.get('producer_consumer')
        for seed in (0, 1, 7):
            truth = run_coupled(workload.program, workload.inputs, seed=seed)
            report = DecoupledSession(workload.program, workload.inputs, SessionOptions(seed=seed)).run()
            with self.subTest(seed=seed):
                self.assertTrue(compare(truth, report).empty)
                self.assertEqual(report.db, 640)

    def test_waiter_analysis_follows_signaler(self):
        """Without a drain after each submission the consumer still sees the producer's taint"""
        workload = self.catalog.get('producer_consumer')
        for scheme in ('mirror', 'prealloc'):
            for seed in range(6):
                truth = run_coupled(workload.program, workload.inputs, seed=seed)
                options = SessionOptions(scheme=scheme, seed=seed, worker_slice=1, buffer_entries=64)
                session = DecoupledSession(workload.program, workload.inputs, options)
                report = session.run()
                with self.subTest(scheme=scheme, seed=seed):
                    diff = compare(truth, report)
                    self.assertTrue(diff.empty, diff.summary())
                    self.assertEqual(report.db, 640)
                    self.assertFalse(session.sync.checkpoints)


class TestDiff(unittest.TestCase):
    """Test cases for compare and Diff"""

    def observation(self, **overrides):
        values = dict(shadow={0x10: 1, 0x11: 1}, registers={0: {4: [1, 0, 0, 0, 0, 0, 0, 0]}},
                      rb=2, cb=2, db=2, alert_keys=[])
        values.update(overrides)
        return Observation(**values)

    def test_identical(self):
        """Equal observations have no differences"""
        diff = compare(self.observation(), self.observation())
        self.assertTrue(diff.empty)
        self.assertIsNone(diff.first)
        self.assertEqual(diff.summary(), "no differences")

    def test_first_difference_is_lowest_address(self):
        """Shadow differences come first, in address order"""
        diff = compare(self.observation(), self.observation(shadow={0x10: 2}, db=1))
        self.assertEqual(diff.first, DiffEntry('shadow', '0x10', '0x01', '0x02'))
        self.assertEqual([e.field for e in diff.entries], ['shadow', 'shadow', 'counter'])

    def test_registers_default_to_untainted(self):
        """A register missing on one side compares as untainted"""
        diff = compare(self.observation(), self.observation(registers={}))
        self.assertEqual(diff.first.key, 't0.r4')

    def test_summary_limit(self):
        """Long diffs are cut with a remainder line"""
        diff = Diff([DiffEntry('counter', str(i), 0, 1) for i in range(5)])
        lines = diff.summary(limit=2).splitlines()
        self.assertEqual(len(lines), 3)
        self.assertEqual(lines[-1], "... 3 more")


if __name__ == '__main__':
    unittest.main()
