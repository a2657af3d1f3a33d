"""
Decoupled Analysis Module

This module hosts the analysis side of the framework: the workers that
consume record streams, the taint op interpreter, task dispatch, alerts,
and the session that wires target threads to their workers.

Submodules are imported directly (``from analysis.worker import AnalysisWorker``)
so that the low-level packages can read ``analysis.config`` without import cycles.
"""

__all__ = [
    'config',
    'constants',
    'errors',
    'taint_ops',
    'tasks',
    'alerts',
    'worker',
    'session',
]
