"""
Tests for the Experiment Harness

Tests the catalog workloads' published numbers, experiment configuration,
report schema checks, sweeps and the command line.
"""

import importlib.util
import io
import json
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path
from unittest.mock import patch

from harness.experiment_config import ExperimentConfig, ExperimentError, parse_switch
from harness.report_schema import load_report, schema_errors, validate_report
from harness.runner import run_experiment
from harness.sweep import parse_values, run_sweep
from parsers.workload_loader import WorkloadCatalog, WorkloadError, decode_input

ROOT = Path(__file__).resolve().parent.parent
CATALOG_PATH = ROOT / 'workloads' / 'catalog.json'


def load_cli():
    spec = importlib.util.spec_from_file_location('half_cli', ROOT / 'scripts' / 'half_cli.py')
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


class TestCatalogWorkloads(unittest.TestCase):
    """Published numbers of the catalog workloads"""

    @classmethod
    def setUpClass(cls):
        cls.catalog = WorkloadCatalog(str(CATALOG_PATH))

    def run_workload(self, workload, **overrides):
        return run_experiment(ExperimentConfig(workload=workload, **overrides), self.catalog)

    def test_downloader_counters(self):
        """Every received byte is tainted, checked and detected"""
        report = self.run_workload('downloader').report
        self.assertEqual((report.rb, report.cb, report.db), (10240, 10240, 10240))
        self.assertEqual(report.outputs['file:0'], 10240)
        self.assertGreater(report.pi, 0)
        self.assertGreater(report.am_bytes, 0)

    def test_heap_spray_mirror(self):
        """Without a reservation the spray lands and the payload runs"""
        result = self.run_workload('heap_spray', scheme='mirror')
        self.assertEqual(result.report.exit_status, 'ok')
        self.assertTrue(result.report.markers['payload_executed'])
        self.assertEqual(result.exit_code, 0)

    def test_heap_spray_prealloc(self):
        """A preallocated reservation turns the spray into an address conflict"""
        result = self.run_workload('heap_spray', scheme='prealloc')
        self.assertEqual(result.report.exit_status, 'AddressConflict')
        self.assertFalse(result.report.markers['payload_executed'])
        self.assertEqual(result.exit_code, 3)

    def test_sparse_touch_footprint(self):
        """Mirror shadow commits what was touched; the reservation is fixed up front"""
        mirror = self.run_workload('sparse_touch', scheme='mirror').report
        prealloc = self.run_workload('sparse_touch', scheme='prealloc').report
        self.assertEqual(mirror.exit_status, 'ok')
        self.assertEqual(prealloc.exit_status, 'ok')
        self.assertLessEqual(mirror.shadow_committed_bytes, 819200)
        self.assertEqual(prealloc.shadow_reserved_bytes, 134217728)
        self.assertGreater(prealloc.shadow_reserved_bytes / mirror.shadow_committed_bytes, 100)

    def test_beacon_alerts(self):
        """A received call target raises TaintedIndirectTarget, then the echoed descriptor hits the sink"""
        report = self.run_workload('beacon', deterministic=True).report
        kinds = [a['kind'] for a in report.alerts]
        self.assertEqual(kinds[0], 'TaintedIndirectTarget')
        self.assertIn('SinkHit', kinds)
        self.assertEqual((report.rb, report.cb, report.db), (16, 56, 48))

    def test_beacon_halt_on_alert(self):
        """Halting on the first alert exits with the alert code"""
        result = self.run_workload('beacon', deterministic=True, halt_on_alert=True)
        self.assertTrue(result.report.halted)
        self.assertEqual(result.report.alerts[0]['kind'], 'TaintedIndirectTarget')
        self.assertEqual(result.exit_code, 2)

    def test_report_file_and_dump(self):
        """Reports are written where asked and validate on reload"""
        with tempfile.TemporaryDirectory() as tmp:
            report_path = Path(tmp) / 'nested' / 'report.json'
            dump_path = Path(tmp) / 'code.txt'
            config = ExperimentConfig(workload='downloader', deterministic=True, report_path=str(report_path))
            result = run_experiment(config, self.catalog, dump_analysis_code=str(dump_path))
            self.assertEqual(result.report_path, report_path)
            self.assertEqual(load_report(report_path)['rb'], 10240)
            self.assertTrue(dump_path.read_text().startswith('block 0x'))

    def test_oracle_mode(self):
        """--oracle reports the coupled run"""
        result = self.run_workload('downloader', oracle=True)
        self.assertEqual(result.report.mode, 'oracle')
        self.assertEqual(result.report.db, 10240)

    def test_unknown_workload(self):
        """Unknown ids list the valid ones"""
        with self.assertRaises(WorkloadError) as ctx:
            self.catalog.get('nope')
        self.assertIn('downloader', str(ctx.exception))
        with self.assertRaises(WorkloadError):
            self.catalog.get('random:xyz')

    def test_random_workloads(self):
        """random:<seed> ids generate programs"""
        workload = self.catalog.get('random:4')
        self.assertEqual(workload.id, 'random:4')
        self.assertIs(self.catalog.get('random:4'), workload)


class TestInputDecoding(unittest.TestCase):
    """Test cases for decode_input"""

    def test_forms(self):
        """Every declared input form decodes"""
        self.assertEqual(decode_input('hi', {}), b'hi')
        self.assertEqual(decode_input({'hex': '0aff'}, {}), b'\x0a\xff')
        self.assertEqual(decode_input({'repeat': [7, 3]}, {}), b'\x07\x07\x07')
        self.assertEqual(decode_input({'words': ['@h', 1]}, {'h': 0x400002}),
                         (0x400002).to_bytes(8, 'little') + (1).to_bytes(8, 'little'))
        self.assertEqual(decode_input({'random': 8, 'seed': 1}, {}), decode_input({'random': 8, 'seed': 1}, {}))

    def test_bad_forms(self):
        """Unknown forms and labels are rejected"""
        with self.assertRaises(WorkloadError):
            decode_input({'words': ['@missing']}, {})
        with self.assertRaises(WorkloadError):
            decode_input({'bogus': 1}, {})


class TestExperimentConfig(unittest.TestCase):
    """Test cases for ExperimentConfig"""

    def test_invalid_fields(self):
        """Each invalid field or combination is rejected"""
        bad = [
            dict(workload=''),
            dict(workload='w', scheme='bogus'),
            dict(workload='w', scheme='prealloc', prealloc_base=None),
            dict(workload='w', throttle=-1),
            dict(workload='w', buffers_per_thread=1),
            dict(workload='w', buffer_entries=2),
            dict(workload='w', oracle=True, record_only=True),
            dict(workload='w', verify=True, record_only=True),
            dict(workload='w', verify=True, halt_on_alert=True),
        ]
        for values in bad:
            with self.subTest(**values):
                with self.assertRaises(ExperimentError):
                    ExperimentConfig(**values).validate()

    def test_with_value(self):
        """Sweep axes coerce their values"""
        base = ExperimentConfig(workload='membound')
        self.assertFalse(base.with_value('sync_submit', 'off').sync_submit)
        self.assertEqual(base.with_value('buffer_entries', '1024').buffer_entries, 1024)
        with self.assertRaises(ExperimentError):
            base.with_value('quantum', 3)

    def test_session_options(self):
        """Session options carry the experiment fields"""
        options = ExperimentConfig(workload='w', throttle=5, sync_submit=False).to_session_options()
        self.assertEqual((options.throttle, options.sync_submit), (5, False))

    def test_parse_switch(self):
        """On/off words parse case-insensitively"""
        self.assertTrue(parse_switch('ON'))
        self.assertFalse(parse_switch('no'))
        self.assertTrue(parse_switch(True))
        with self.assertRaises(ExperimentError):
            parse_switch('maybe')

    def test_parse_values(self):
        """Numeric axes take integers in any base"""
        self.assertEqual(parse_values('buffer_entries', '1024, 0x2000'), [1024, 8192])
        self.assertEqual(parse_values('scheme', 'mirror,prealloc'), ['mirror', 'prealloc'])
        with self.assertRaises(ExperimentError):
            parse_values('throttle', 'fast')


class TestReportSchema(unittest.TestCase):
    """Test cases for report schema validation"""

    @classmethod
    def setUpClass(cls):
        config = ExperimentConfig(workload='downloader', deterministic=True)
        cls.report = run_experiment(config, WorkloadCatalog(str(CATALOG_PATH))).report

    def test_valid_report(self):
        """A real report validates"""
        self.assertEqual(schema_errors(self.report), [])

    def test_invalid_report(self):
        """Schema violations name their path"""
        data = self.report.to_dict()
        data['mode'] = 'bogus'
        data['rb'] = -1
        errors = schema_errors(data)
        self.assertEqual(len(errors), 2)
        self.assertTrue(errors[0].startswith('mode:'))
        with self.assertRaises(ExperimentError):
            validate_report(data)

    def test_unreadable_report(self):
        """Missing report files are experiment errors"""
        with self.assertRaises(ExperimentError):
            load_report('/nonexistent/report.json')


class TestSweep(unittest.TestCase):
    """Test cases for run_sweep"""

    def test_buffer_sweep(self):
        """One row per value, summaries written, BF falling with buffer size"""
        base = ExperimentConfig(workload='membound', deterministic=True)
        with tempfile.TemporaryDirectory() as tmp:
            table = run_sweep(base, 'buffer_entries', [1024, 65536], WorkloadCatalog(str(CATALOG_PATH)),
                              output_dir=tmp)
            self.assertEqual(list(table['value']), [1024, 65536])
            self.assertGreater(table['bf'].iloc[0], table['bf'].iloc[1])
            self.assertTrue((Path(tmp) / 'sweep_membound_buffer_entries.csv').exists())
            self.assertTrue((Path(tmp) / 'membound_buffer_entries_1024.json').exists())

            from src.visualizers.sweep_plot import SweepPlotter
            figure = SweepPlotter(tmp).plot(table)
            self.assertTrue(figure.exists())

    def test_empty_sweep(self):
        """A sweep needs values"""
        with self.assertRaises(ExperimentError):
            run_sweep(ExperimentConfig(workload='membound'), 'buffer_entries', [])


class TestCommandLine(unittest.TestCase):
    """Test cases for scripts/half_cli.py"""

    @classmethod
    def setUpClass(cls):
        cls.cli = load_cli()

    def setUp(self):
        """Set up test fixtures"""
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        patcher = patch.dict(self.cli.LOGGING_CONFIG, {'file': str(Path(self.tmp.name) / 'half.log')})
        patcher.start()
        self.addCleanup(patcher.stop)

    def call(self, *argv):
        out = io.StringIO()
        with redirect_stdout(out):
            code = self.cli.main(list(argv))
        return code, out.getvalue()

    def test_list(self):
        """list --json prints the catalog"""
        code, out = self.call('list', '--json', '--catalog', str(CATALOG_PATH))
        self.assertEqual(code, 0)
        ids = [row['id'] for row in json.loads(out)]
        self.assertIn('downloader', ids)
        self.assertIn('random:<seed>', ids)

    def test_diff(self):
        """diff exits 0 on equal reports and 4 on a mismatch"""
        a = Path(self.tmp.name) / 'a.json'
        b = Path(self.tmp.name) / 'b.json'
        code, _ = self.call('run', 'beacon', '--deterministic', '--catalog', str(CATALOG_PATH), '--report', str(a))
        self.assertEqual(code, 0)
        data = json.loads(a.read_text())
        b.write_text(json.dumps(data))
        self.assertEqual(self.call('diff', str(a), str(b))[0], 0)
        data['db'] += 1
        b.write_text(json.dumps(data))
        code, out = self.call('diff', str(a), str(b))
        self.assertEqual(code, 4)
        self.assertIn('counter db', out)

    def test_failure(self):
        """Errors are logged and exit 1"""
        code, _ = self.call('run', 'nope', '--catalog', str(CATALOG_PATH))
        self.assertEqual(code, 1)


if __name__ == '__main__':
    unittest.main()
