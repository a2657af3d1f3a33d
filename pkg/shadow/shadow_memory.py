"""
Mirror shadow memory: taint labels for target address A live at address A of a
separate, sparse, demand-committed page table.

One label byte per target byte (bit i: derived from source i, 0: untainted).
A page is resident, spilled, or absent; absent pages read as zeros.
"""

from typing import Dict, Iterator, Optional, Set, Tuple

import numpy as np
from loguru import logger

from analysis.constants import PAGE_SIZE, SHADOW_CONFIG, WORD_MASK, SENTINEL_RANGE

from .errors import ShadowError, ShadowFault
from .spill_store import SpillStore


class ShadowMemory:
    """Identical-address taint store with demand commit, deferred release and spill."""

    def __init__(self, high_water_pages: int = SHADOW_CONFIG['high_water_pages'],
                 spill_path: Optional[str] = SHADOW_CONFIG['spill_file']):
        if high_water_pages < 1:
            raise ShadowError(f"high-water mark must be at least one page, got {high_water_pages}")
        self.high_water_pages = high_water_pages
        self.spill_store = SpillStore(spill_path)
        self.reserved_in_target = None
        self._pages: Dict[int, np.ndarray] = {}
        self._free_marked: Set[int] = set()
        self._last_touch: Dict[int, int] = {}
        self._clock = 0

        self.fault_count = 0        # first-touch commits plus reloads
        self.first_touch_commits = 0
        self.reloads = 0
        self.spilled_pages = 0
        self.peak_committed = 0

    # Accounting

    @property
    def committed_pages(self) -> int:
        return len(self._pages)

    @property
    def committed_bytes(self) -> int:
        return len(self._pages) * PAGE_SIZE

    def is_committed(self, page: int) -> bool:
        return page in self._pages

    def is_spilled(self, page: int) -> bool:
        return page in self.spill_store

    def is_free_marked(self, page: int) -> bool:
        return page in self._free_marked

    # Label access

    def taint_read(self, addr: int, length: int) -> np.ndarray:
        """
        Read `length` labels starting at `addr`.

        Absent pages read as zeros without being committed; spilled pages are
        reloaded (one fault each).

        Raises:
            ShadowFault: If the range touches the reserved sentinel range
        """
        out = np.zeros(length, dtype=np.uint8)
        if length <= 0:
            return out
        self._check_range(addr, length)
        touched = set()
        for page, offset, pos, chunk in _chunks(addr, length):
            labels = self._resident(page, create=False)
            if labels is not None:
                out[pos:pos + chunk] = labels[offset:offset + chunk]
                touched.add(page)
        self._relieve_pressure(touched)
        return out

    def taint_write(self, addr: int, length: int, labels) -> None:
        """
        Store `labels` at [addr, addr + length), committing absent pages.

        The write is unconditional: all-zero labels still commit their pages.

        Raises:
            ShadowError: If the label count differs from `length`
            ShadowFault: If the range touches the reserved sentinel range
        """
        if length <= 0:
            return
        values = np.asarray(labels, dtype=np.uint8)
        if values.ndim == 0:
            values = np.full(length, values, dtype=np.uint8)
        if values.size != length:
            raise ShadowError(f"taint_write of {length} bytes got {values.size} labels")
        self._check_range(addr, length)
        touched = set()
        for page, offset, pos, chunk in _chunks(addr, length):
            page_labels = self._resident(page, create=True)
            page_labels[offset:offset + chunk] = values[pos:pos + chunk]
            touched.add(page)
        self._relieve_pressure(touched)

    def fill(self, addr: int, length: int, label: int) -> None:
        self.taint_write(addr, length, np.full(length, label, dtype=np.uint8))

    # Allocation mirroring

    def mirror_alloc(self, addr: int, size: int) -> None:
        """
        Commit the shadow of a fresh target allocation eagerly (not counted as faults).

        Pages left over from an earlier free, resident or spilled, start clean.
        """
        touched = set()
        for page in _pages_of(addr, size):
            if page in self._free_marked:
                self._free_marked.discard(page)
                self.spill_store.discard(page)
                if page in self._pages:
                    self._pages[page][:] = 0
            if page not in self._pages and page not in self.spill_store:
                self._install(page, np.zeros(PAGE_SIZE, dtype=np.uint8))
            elif page in self._pages:
                self._touch(page)
            touched.add(page)
        self._relieve_pressure(touched)

    def mirror_free(self, addr: int, size: int) -> None:
        """Mark the shadow of a freed range reclaimable; its labels stay readable until spilled."""
        for page in _pages_of(addr, size):
            if page in self._pages or page in self.spill_store:
                self._free_marked.add(page)

    # Spilling

    def spill(self, target_bytes: int, protect: Optional[Set[int]] = None) -> int:
        """
        Write the coldest reclaimable pages to the spill store and drop them.

        Free-marked pages go first, then least recently touched pages.

        Args:
            target_bytes: Bytes to release, > 0
            protect: Pages that must stay resident

        Returns:
            Bytes released (whole pages)
        """
        if target_bytes <= 0:
            raise ShadowError(f"spill target must be positive, got {target_bytes}")
        protect = protect or set()
        candidates = sorted((p for p in self._pages if p not in protect),
                            key=lambda p: (p not in self._free_marked, self._last_touch.get(p, 0), p))
        released = 0
        for page in candidates:
            if released >= target_bytes:
                break
            self.spill_store.store(page, self._pages.pop(page))
            self._last_touch.pop(page, None)
            self.spilled_pages += 1
            released += PAGE_SIZE
        if released:
            logger.debug("Spilled {} shadow pages", released // PAGE_SIZE)
        return released

    def _relieve_pressure(self, protect: Set[int]) -> None:
        excess = len(self._pages) - self.high_water_pages
        if excess > 0:
            self.spill(excess * PAGE_SIZE, protect)

    # Inspection

    def snapshot(self) -> Dict[int, int]:
        """Flat {address: label} map of every nonzero label, resident or spilled."""
        result: Dict[int, int] = {}
        for page, labels in self._iter_all_pages():
            for offset in np.flatnonzero(labels):
                result[page + int(offset)] = int(labels[offset])
        return result

    def _iter_all_pages(self) -> Iterator[Tuple[int, np.ndarray]]:
        for page in sorted(set(self._pages) | set(self.spill_store.pages())):
            if page in self._pages:
                yield page, self._pages[page]
            else:
                yield page, self.spill_store.peek(page)

    def close(self) -> None:
        self.spill_store.close()

    # Internals

    def _check_range(self, addr: int, length: int) -> None:
        end = addr + length - 1
        if addr < 0 or end > WORD_MASK or (addr <= SENTINEL_RANGE[1] and SENTINEL_RANGE[0] <= end):
            raise ShadowFault(f"shadow access [{addr:#x}, +{length}) touches the reserved range")

    def _touch(self, page: int) -> None:
        self._clock += 1
        self._last_touch[page] = self._clock

    def _install(self, page: int, labels: np.ndarray) -> None:
        self._pages[page] = labels
        self._touch(page)
        self.peak_committed = max(self.peak_committed, len(self._pages))

    def _resident(self, page: int, create: bool) -> Optional[np.ndarray]:
        labels = self._pages.get(page)
        if labels is not None:
            self._touch(page)
            return labels
        if page in self.spill_store:
            labels = self.spill_store.load(page)
            self.reloads += 1
            self.fault_count += 1
            self._install(page, labels)
            return labels
        if not create:
            return None
        labels = np.zeros(PAGE_SIZE, dtype=np.uint8)
        self.first_touch_commits += 1
        self.fault_count += 1
        self._install(page, labels)
        return labels


def _pages_of(addr: int, size: int) -> range:
    if size <= 0:
        return range(0)
    start = addr - addr % PAGE_SIZE
    return range(start, addr + size, PAGE_SIZE)


def _chunks(addr: int, length: int) -> Iterator[Tuple[int, int, int, int]]:
    """Split [addr, addr+length) into (page, offset in page, offset in range, chunk length)."""
    pos = 0
    while pos < length:
        page = addr - addr % PAGE_SIZE
        offset = addr - page
        chunk = min(length - pos, PAGE_SIZE - offset)
        yield page, offset, pos, chunk
        addr += chunk
        pos += chunk
