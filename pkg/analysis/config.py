"""
Configuration settings for the decoupled taint analysis framework.

Centralizes all hardcoded values, thresholds, and settings.
"""

# Data paths
DEFAULT_CATALOG_PATH = "workloads/catalog.json"
DEFAULT_OUTPUT_DIR = "reports"

# Target virtual machine
VM_CONFIG = {
    'page_size': 4096,
    'word_size': 8,
    'register_count': 16,
    'span': 1 << 30,                # 1 GiB data address space
    'code_base': 0x0040_0000,
    'heap_base': 0x1000_0000,
    'event_count': 64,
    'max_threads': 64,
}

# Reserved stream sentinels, unmappable in the target
SENTINEL_CONFIG = {
    'range_start': 0xFFFF_FFFF_FFFF_0000,
    'range_end': 0xFFFF_FFFF_FFFF_00FF,
    'early_switch': 0xFFFF_FFFF_FFFF_0001,
    'truncate': 0xFFFF_FFFF_FFFF_0002,
}

# Record buffers: double buffering, 65536 words (512KB) per buffer
CHANNEL_CONFIG = {
    'buffers_per_thread': 2,
    'buffer_entries': 65536,
    'guard_entries': 1,
}

# Shadow memory
SHADOW_CONFIG = {
    'high_water_pages': 16384,
    'spill_file': None,             # temporary file when unset
    'prealloc_ratio': 8,            # 8 target bytes per reserved shadow byte
    'prealloc_base': 0x2000_0000,
}

# Block discovery
INSTRUMENTER_CONFIG = {
    'max_block_instructions': 256,  # longer straight-line runs end in a fallthrough
}

# Analysis code region in the container address space
ANALYSIS_CODE_CONFIG = {
    'base': 0x7000_0000_0000,
    'bytes_per_op': 1,
    'bytes_per_entry': 8,
}

# Cooperative scheduling
SCHEDULER_CONFIG = {
    'seed': 0,
    'quantum': 16,                  # target instructions per scheduling decision
    'worker_slice': 8,              # upper bound of blocks per worker turn
    'max_steps': 50_000_000,
}

# Syscall to task bindings
TASK_BINDINGS = {
    'RECV': 'source',
    'FREAD': 'source',
    'FWRITE': 'check',
    'SEND': 'check',
    'ALLOC': 'mirror_alloc',
    'FREE': 'mirror_free',
}

# Exit codes of the command line interface
EXIT_CODES = {
    'ok': 0,
    'failure': 1,
    'alert': 2,
    'address_conflict': 3,
    'oracle_mismatch': 4,
}

# Logging configuration
LOGGING_CONFIG = {
    'level': 'INFO',
    'format': '{time:YYYY-MM-DD HH:mm:ss} | {level} | {name}:{function}:{line} | {message}',
    'file': 'logs/half.log',
    'rotation': '10 MB',
}

# Sweep defaults
SWEEP_CONFIG = {
    'axes': ['buffer_entries', 'scheme', 'sync_submit', 'throttle', 'record_only'],
    'columns': ['value', 'wall_seconds', 'target_steps', 'bf', 'buffer_switches', 'cf', 'gsr',
                'shadow_committed_bytes', 'shadow_reserved_bytes'],
}
