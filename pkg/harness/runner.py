"""
Experiment runner: one workload, one configuration, one report.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from loguru import logger

from analysis.config import EXIT_CODES
from analysis.session import DecoupledSession
from oracle.coupled import TaintGroundTruth, run_coupled
from oracle.diff import Diff, compare
from parsers.workload_loader import Workload, WorkloadCatalog
from sync.metrics_report import MetricsReport

from .experiment_config import ExperimentConfig
from .report_schema import validate_report


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    report: MetricsReport
    truth: Optional[TaintGroundTruth] = None
    diff: Optional[Diff] = None
    report_path: Optional[Path] = None

    @property
    def exit_code(self) -> int:
        if self.diff is not None and not self.diff.empty:
            return EXIT_CODES['oracle_mismatch']
        if self.report.halted and self.report.alerts:
            return EXIT_CODES['alert']
        if self.report.exit_status == 'AddressConflict':
            return EXIT_CODES['address_conflict']
        return EXIT_CODES['ok']


def list_workloads(catalog: Optional[WorkloadCatalog] = None) -> List[Dict]:
    """Catalog rows: id, description, threads."""
    return (catalog or WorkloadCatalog()).describe()


def _oracle_run(workload: Workload, config: ExperimentConfig) -> TaintGroundTruth:
    options = config.to_session_options()
    return run_coupled(workload.program, workload.inputs, seed=options.seed, quantum=options.quantum,
                       max_steps=options.max_steps, throttle=options.throttle, scheme=options.scheme,
                       span=options.span, prealloc_base=options.prealloc_base, workload=workload.id,
                       markers=workload.marker_probe())


def run_experiment(config: ExperimentConfig, catalog: Optional[WorkloadCatalog] = None,
                   dump_analysis_code: Optional[str] = None) -> ExperimentResult:
    """
    Run one experiment end to end and write its report.

    Args:
        config: Validated experiment configuration
        catalog: Workload catalog; the default catalog when omitted
        dump_analysis_code: Optional path for the analysis code listing

    Returns:
        ExperimentResult with the report, and the oracle diff when verifying

    Raises:
        ExperimentError: On invalid configurations or reports
        WorkloadError: On unknown workloads
        AssemblyError: If the workload does not assemble
    """
    config.validate()
    workload = (catalog or WorkloadCatalog()).get(config.workload)
    logger.info(f"Starting experiment {workload.id} ({config.scheme}, {config.buffer_entries} entries, "
                f"seed {config.seed})")

    truth = diff = None
    if config.oracle:
        truth = _oracle_run(workload, config)
        report = truth.report
    else:
        session = DecoupledSession(workload.program, workload.inputs, config.to_session_options(),
                                   workload=workload.id)
        report = session.run(markers=workload.marker_probe())
        if dump_analysis_code:
            Path(dump_analysis_code).write_text(session.region.dump(), encoding='utf-8')
            logger.info(f"Analysis code listing written to {dump_analysis_code}")
        if config.verify:
            truth = _oracle_run(workload, config)
            diff = compare(truth, report)
            if diff.empty:
                logger.success(f"{workload.id}: decoupled results match the coupled oracle")
            else:
                logger.error(f"{workload.id}: oracle mismatch, first difference: {diff.first}")

    validate_report(report)
    result = ExperimentResult(config=config, report=report, truth=truth, diff=diff)
    if config.report_path:
        path = Path(config.report_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        report.save(path)
        result.report_path = path
        logger.info(f"Report written to {path}")
    logger.success(f"Finished {workload.id}: exit status {report.exit_status}, BF={report.bf} CF={report.cf} "
                   f"GSR={report.gsr:.3f} RB={report.rb} CB={report.cb} DB={report.db}")
    return result
