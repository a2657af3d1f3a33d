"""
Constants for the analysis module.

This module re-exports the configuration values shared across packages.
"""

from .config import (
    VM_CONFIG,
    SENTINEL_CONFIG,
    CHANNEL_CONFIG,
    SHADOW_CONFIG,
    ANALYSIS_CODE_CONFIG,
    INSTRUMENTER_CONFIG,
    TASK_BINDINGS,
)

PAGE_SIZE = VM_CONFIG['page_size']
WORD_SIZE = VM_CONFIG['word_size']
REGISTER_COUNT = VM_CONFIG['register_count']
WORD_MASK = (1 << 64) - 1

SENTINEL_RANGE = (SENTINEL_CONFIG['range_start'], SENTINEL_CONFIG['range_end'])
EARLY_SWITCH = SENTINEL_CONFIG['early_switch']
TRUNCATE = SENTINEL_CONFIG['truncate']


def in_sentinel_range(value: int) -> bool:
    """Return True if a word falls in the reserved sentinel range."""
    return SENTINEL_RANGE[0] <= value <= SENTINEL_RANGE[1]


__all__ = [
    'VM_CONFIG',
    'CHANNEL_CONFIG',
    'SHADOW_CONFIG',
    'ANALYSIS_CODE_CONFIG',
    'INSTRUMENTER_CONFIG',
    'TASK_BINDINGS',
    'PAGE_SIZE',
    'WORD_SIZE',
    'REGISTER_COUNT',
    'WORD_MASK',
    'SENTINEL_RANGE',
    'EARLY_SWITCH',
    'TRUNCATE',
    'in_sentinel_range',
]
