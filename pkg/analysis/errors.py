"""
Analysis-side exceptions. Unlike target faults these always propagate.
"""


class AnalysisError(Exception):
    """Base class for analysis engine errors."""


class StreamCorruption(AnalysisError):
    """A record stream word cannot be interpreted (unknown block, bad task tag)."""


class EntryUnderrun(AnalysisError):
    """A record stream ended in the middle of a block."""


class UnknownTask(AnalysisError):
    """A custom task id has no registered handler."""
