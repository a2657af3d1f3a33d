"""
Spill store: an append-only file of (page address, page labels) records.

Record layout: 8-byte little-endian page address followed by PAGE_SIZE label
bytes. The in-memory index maps a page to the offset of its newest record;
discarding a page only drops it from the index.
"""

import os
import tempfile
from pathlib import Path
from typing import Dict, Optional

import numpy as np
from loguru import logger

from analysis.constants import PAGE_SIZE

from .errors import SpillError

RECORD_HEADER = 8
RECORD_SIZE = RECORD_HEADER + PAGE_SIZE


class SpillStore:
    """File-backed page records with an in-memory index."""

    def __init__(self, path: Optional[str] = None):
        self._requested_path = path
        self.path: Optional[Path] = None
        self._file = None
        self._owns_file = False
        self._index: Dict[int, int] = {}
        self.records_written = 0

    def __contains__(self, page: int) -> bool:
        return page in self._index

    def __len__(self) -> int:
        return len(self._index)

    def pages(self):
        return sorted(self._index)

    def _open(self) -> None:
        if self._file is not None:
            return
        try:
            if self._requested_path is None:
                fd, name = tempfile.mkstemp(prefix='half-spill-', suffix='.bin')
                self._file = os.fdopen(fd, 'w+b')
                self.path = Path(name)
                self._owns_file = True
            else:
                self.path = Path(self._requested_path)
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._file = open(self.path, 'w+b')
            logger.debug(f"Spill store opened at {self.path}")
        except OSError as e:
            raise SpillError(f"cannot open spill file: {e}") from e

    def store(self, page: int, labels: np.ndarray) -> None:
        """Append a page record and point the index at it."""
        self._open()
        try:
            self._file.seek(0, os.SEEK_END)
            offset = self._file.tell()
            self._file.write(page.to_bytes(RECORD_HEADER, 'little'))
            self._file.write(labels.tobytes())
        except OSError as e:
            raise SpillError(f"cannot spill page {page:#x}: {e}") from e
        self._index[page] = offset
        self.records_written += 1

    def load(self, page: int) -> np.ndarray:
        """Read a page's labels back and drop it from the index."""
        labels = self.peek(page)
        del self._index[page]
        return labels

    def peek(self, page: int) -> np.ndarray:
        """Read a page's labels without removing it."""
        if page not in self._index:
            raise SpillError(f"page {page:#x} is not in the spill store")
        try:
            self._file.flush()
            self._file.seek(self._index[page])
            record = self._file.read(RECORD_SIZE)
        except OSError as e:
            raise SpillError(f"cannot reload page {page:#x}: {e}") from e
        if len(record) != RECORD_SIZE or int.from_bytes(record[:RECORD_HEADER], 'little') != page:
            raise SpillError(f"corrupt spill record for page {page:#x}")
        return np.frombuffer(record[RECORD_HEADER:], dtype=np.uint8).copy()

    def discard(self, page: int) -> bool:
        return self._index.pop(page, None) is not None

    def close(self) -> None:
        if self._file is None:
            return
        try:
            self._file.close()
            if self._owns_file and self.path is not None:
                self.path.unlink(missing_ok=True)
        except OSError as e:
            logger.warning(f"Could not clean up spill file {self.path}: {e}")
        self._file = None
