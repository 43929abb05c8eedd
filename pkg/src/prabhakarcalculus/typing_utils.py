from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ValueRange:
    lo: float
    hi: float

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi
