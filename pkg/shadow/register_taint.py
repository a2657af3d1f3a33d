"""
Register taint of one analysis worker: 16 registers x 8 label bytes.
"""

from typing import Dict, List

import numpy as np

from analysis.constants import REGISTER_COUNT, WORD_SIZE


class RegisterTaint:
    """Bytewise taint labels of the target thread's registers, all clear at thread start."""

    def __init__(self):
        self.labels = np.zeros((REGISTER_COUNT, WORD_SIZE), dtype=np.uint8)

    def get(self, reg: int) -> np.ndarray:
        return self.labels[reg]

    def set(self, reg: int, labels) -> None:
        self.labels[reg] = labels

    def clear(self, reg: int) -> None:
        self.labels[reg] = 0

    def copy(self, dst: int, src: int) -> None:
        self.labels[dst] = self.labels[src]

    def union(self, dst: int, src: int) -> None:
        np.bitwise_or(self.labels[dst], self.labels[src], out=self.labels[dst])

    def combined(self, reg: int) -> int:
        """All labels of a register OR-ed together."""
        return int(np.bitwise_or.reduce(self.labels[reg]))

    def is_tainted(self, reg: int) -> bool:
        return bool(self.labels[reg].any())

    def reset(self) -> None:
        self.labels[:] = 0

    def snapshot(self) -> Dict[int, List[int]]:
        """Tainted registers only, as {register: [8 labels]}."""
        return {reg: [int(b) for b in self.labels[reg]]
                for reg in range(REGISTER_COUNT) if self.labels[reg].any()}
