from __future__ import annotations

from fractions import Fraction

import pytest

from dynlab.core import Batch, Item, Trace

ACCEPTANCE_LINES: list[str] = []


def make_trace(weights, variant="kcomponent", name=""):
    """Batches from a list of weights; an entry may be None (empty) or a list."""
    batches, c = [], 0
    for t, entry in enumerate(weights, start=1):
        entry = [] if entry is None else entry if isinstance(entry, (list, tuple)) else [entry]
        items = []
        for w in entry:
            c += 1
            items.append(Item(f"x{c}", Fraction(w)))
        batches.append(Batch(t, tuple(items)))
    cost = "max-weight" if variant == "general" else None
    return Trace(tuple(batches), variant, cost, name)


@pytest.fixture
def trace_of():
    return make_trace


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
