"""
Target address space: sparse 4096-byte pages shared by the threads of one program.
"""

from typing import Dict, List, Optional, Set, Tuple

from loguru import logger

from analysis.constants import PAGE_SIZE, SENTINEL_RANGE, VM_CONFIG, WORD_MASK


def page_of(addr: int) -> int:
    return addr - (addr % PAGE_SIZE)


def pages_spanning(addr: int, length: int) -> range:
    """Page addresses touched by [addr, addr+length)."""
    if length <= 0:
        return range(0)
    return range(page_of(addr), page_of(addr + length - 1) + 1, PAGE_SIZE)


class AddressSpace:
    """
    Sparse byte-addressable memory with committed pages and reserved regions.

    Reserved regions (the code range, the sentinel range, a prealloc shadow
    reservation) can never be committed by the target.
    """

    def __init__(self, span: int = VM_CONFIG['span'], heap_base: int = VM_CONFIG['heap_base']):
        self.span = span
        self._pages: Dict[int, bytearray] = {}
        self._reserved: List[Tuple[int, int, str]] = [(SENTINEL_RANGE[0], SENTINEL_RANGE[1] + 1, 'sentinel')]
        self._touched: Set[int] = set()
        self._next_heap = heap_base
        self.tc = 0     # pages committed by the target
        self.tf = 0     # first-touch faults on committed pages

    # Regions

    def reserve(self, start: int, end: int, owner: str) -> None:
        self._reserved.append((start, end, owner))
        logger.debug(f"Reserved [{start:#x},{end:#x}) for {owner}")

    def reserved_regions(self, owner: Optional[str] = None) -> List[Tuple[int, int, str]]:
        return [r for r in self._reserved if owner is None or r[2] == owner]

    def overlaps_reserved(self, start: int, end: int) -> Optional[str]:
        for r_start, r_end, owner in self._reserved:
            if start < r_end and r_start < end:
                return owner
        return None

    def is_committed_range_free(self, start: int, end: int) -> bool:
        return all(page not in self._pages for page in pages_spanning(start, end - start))

    def commit(self, start: int, size: int) -> None:
        for page in pages_spanning(start, size):
            if page not in self._pages:
                self._pages[page] = bytearray(PAGE_SIZE)
                self.tc += 1

    def decommit(self, start: int, size: int) -> int:
        released = 0
        for page in pages_spanning(start, size):
            if self._pages.pop(page, None) is not None:
                self._touched.discard(page)
                released += 1
        return released

    def find_free(self, size: int) -> Optional[int]:
        """Bump-allocate a page-aligned range clear of commits and reservations."""
        size = -(-size // PAGE_SIZE) * PAGE_SIZE
        start = self._next_heap
        while start + size <= self.span:
            end = start + size
            blocker = self._blocking_end(start, end)
            if blocker is None:
                self._next_heap = end
                return start
            start = page_of(blocker + PAGE_SIZE - 1)
        return None

    def _blocking_end(self, start: int, end: int) -> Optional[int]:
        for r_start, r_end, _ in self._reserved:
            if start < r_end and r_start < end:
                return r_end
        for page in pages_spanning(start, end - start):
            if page in self._pages:
                return page + PAGE_SIZE
        return None

    # Access

    def is_mapped(self, addr: int, length: int) -> bool:
        if addr < 0 or addr + length - 1 > WORD_MASK:
            return False
        return all(page in self._pages for page in pages_spanning(addr, length))

    def committed_pages(self) -> int:
        return len(self._pages)

    def reset_touch_counters(self) -> None:
        """Forget first-touch history, e.g. after the loader populated the image."""
        self._touched.clear()
        self.tf = 0

    def _touch(self, page: int) -> None:
        if page not in self._touched:
            self._touched.add(page)
            self.tf += 1

    def read(self, addr: int, length: int) -> bytes:
        out = bytearray()
        while length > 0:
            page = page_of(addr)
            offset = addr - page
            chunk = min(length, PAGE_SIZE - offset)
            self._touch(page)
            out += self._pages[page][offset:offset + chunk]
            addr += chunk
            length -= chunk
        return bytes(out)

    def write(self, addr: int, data: bytes) -> None:
        pos = 0
        while pos < len(data):
            page = page_of(addr)
            offset = addr - page
            chunk = min(len(data) - pos, PAGE_SIZE - offset)
            self._touch(page)
            self._pages[page][offset:offset + chunk] = data[pos:pos + chunk]
            addr += chunk
            pos += chunk

    def read_word(self, addr: int) -> int:
        return int.from_bytes(self.read(addr, 8), 'little')

    def write_word(self, addr: int, value: int) -> None:
        self.write(addr, (value & WORD_MASK).to_bytes(8, 'little'))
