"""
Shadow memory exceptions.
"""


class ShadowError(Exception):
    """Base class for shadow memory errors."""


class ShadowFault(ShadowError):
    """Access to an address that can never hold target data (the sentinel range)."""


class SpillError(ShadowError):
    """Spill store I/O failure."""


class ReservationError(ShadowError):
    """A preallocated shadow region cannot be placed in the target address space."""
