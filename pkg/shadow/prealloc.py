"""
Preallocated shadow scheme for the comparison experiments.

A conventional taint engine reserves its shadow inside the target's own
address space, one shadow byte per `ratio` target bytes. The reservation is
all this scheme changes: taint itself is still kept in the sparse shadow map,
but a target ALLOC at a fixed address inside the reserved range now fails
with AddressConflict.
"""

from dataclasses import dataclass

from loguru import logger

from analysis.constants import PAGE_SIZE, SHADOW_CONFIG
from vm.syscalls import WorldState

from .errors import ReservationError

RESERVATION_OWNER = 'prealloc'


@dataclass(frozen=True)
class Reservation:
    start: int
    size: int
    ratio: int

    @property
    def end(self) -> int:
        return self.start + self.size

    def contains(self, addr: int) -> bool:
        return self.start <= addr < self.end


def prealloc_reserve(world: WorldState, ratio: int = SHADOW_CONFIG['prealloc_ratio'],
                     base: int = SHADOW_CONFIG['prealloc_base']) -> Reservation:
    """
    Reserve span/ratio bytes at `base` in the target address space.

    Args:
        world: Target world whose address space receives the reservation
        ratio: Target bytes per shadow byte
        base: Page-aligned start of the reservation

    Returns:
        Reservation

    Raises:
        ReservationError: If the region is misaligned, leaves the span, or collides
            with the program image or committed memory
    """
    if ratio < 1:
        raise ReservationError(f"prealloc ratio must be at least 1, got {ratio}")
    if base % PAGE_SIZE:
        raise ReservationError(f"prealloc base {base:#x} is not page aligned")
    memory = world.memory
    size = -(-(memory.span // ratio) // PAGE_SIZE) * PAGE_SIZE
    end = base + size
    if end > memory.span:
        raise ReservationError(f"reservation [{base:#x},{end:#x}) exceeds the {memory.span:#x}-byte span")

    owner = memory.overlaps_reserved(base, end)
    if owner is not None:
        raise ReservationError(f"reservation [{base:#x},{end:#x}) collides with the {owner} region")
    for start, data in world.program.data_image.items():
        if start < end and base < start + len(data):
            raise ReservationError(f"reservation [{base:#x},{end:#x}) collides with program data at {start:#x}")
    if not memory.is_committed_range_free(base, end):
        raise ReservationError(f"reservation [{base:#x},{end:#x}) overlaps committed target memory")

    memory.reserve(base, end, RESERVATION_OWNER)
    logger.info(f"Preallocated shadow reservation [{base:#x},{end:#x}) ({size >> 20} MiB, 1/{ratio})")
    return Reservation(base, size, ratio)
