"""Column-oriented time series shared by every simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

TRACE_COLUMNS = ("t", "s", "h", "hdot", "mx", "my", "mz", "kink_total", "nplus", "nminus", "energy")


@dataclass
class HysteresisTrace:
    """Column-oriented time series of a simulated hysteresis protocol."""

    columns: dict
    segments: list
    populations: list | None = None
    partial: bool = False
    meta: dict = field(default_factory=dict)

    @classmethod
    def empty(cls):
        return cls({name: [] for name in TRACE_COLUMNS}, [])

    def append(self, segment, **values):
        for name in TRACE_COLUMNS:
            self.columns[name].append(float(values[name]))
        self.segments.append(segment)

    def __len__(self):
        return len(self.segments)

    def __getattr__(self, name):
        columns = self.__dict__.get("columns")
        if columns is not None and name in columns:
            return np.asarray(columns[name], dtype=float)
        raise AttributeError(name)

    def mask(self, segment: str) -> np.ndarray:
        return np.array([tag == segment for tag in self.segments], dtype=bool)

    def segment(self, tag: str) -> "HysteresisTrace":
        keep = self.mask(tag)
        cols = {name: list(np.asarray(vals, float)[keep]) for name, vals in self.columns.items()}
        pops = [p for p, k in zip(self.populations, keep) if k] if self.populations else None
        return HysteresisTrace(cols, [s for s, k in zip(self.segments, keep) if k], pops, self.partial, dict(self.meta))

    def validate(self):
        t = self.t
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ContractViolation("trace times must be strictly increasing")
