import time
from collections import defaultdict
from contextlib import contextmanager

PHASES = (
    "local_preprocessing",
    "min_edges",
    "contraction",
    "label_exchange",
    "redistribute",
    "base_case",
    "filter",
    "pivot_selection",
    "mst_redistribution",
    # whole sequential solve (kruskal reference runs only)
    "sequential",
)


class PhaseTimer:
    """Exclusive wall-clock accounting: a nested phase pauses its parent."""

    def __init__(self):
        self.totals = defaultdict(float)
        self._stack = []
        self._mark = None

    @contextmanager
    def phase(self, name):
        now = time.perf_counter()
        if self._stack:
            self.totals[self._stack[-1]] += now - self._mark
        self._stack.append(name)
        self._mark = now
        try:
            yield
        finally:
            now = time.perf_counter()
            self.totals[self._stack.pop()] += now - self._mark
            self._mark = now

    def as_dict(self):
        return {name: self.totals.get(name, 0.0) for name in PHASES}

    def total(self):
        return sum(self.totals.values())
