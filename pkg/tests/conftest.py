"""Shared dataset builders and the acceptance summary printer."""

import re

import numpy as np

from labelpool import DataItem, Dataset, LabelCounts, LabelSpace


def random_dataset(seed, n, d, m=10, features=False, alpha_conc=1.0):
    """Items drawn from independent Dirichlet-multinomial label sets."""
    rng = np.random.default_rng(seed)
    dists = rng.dirichlet(np.full(d, alpha_conc), size=n)
    counts = np.vstack([rng.multinomial(m, row) for row in dists])
    space = LabelSpace(tuple(f"L{y}" for y in range(d)))
    items = []
    for i in range(n):
        feats = tuple(rng.normal(size=3)) if features else None
        items.append(DataItem(f"x{i}", LabelCounts(counts[i]), feats))
    return Dataset(space, items)


def mixture_dataset(seed, components, n, m=10, features=False):
    """Items drawn from a known multinomial mixture with uniform weights."""
    components = np.asarray(components, dtype=np.float64)
    rng = np.random.default_rng(seed)
    z = rng.integers(0, components.shape[0], size=n)
    counts = np.vstack([rng.multinomial(m, components[zi]) for zi in z])
    space = LabelSpace(tuple(f"L{y}" for y in range(components.shape[1])))
    items = []
    for i in range(n):
        feats = None
        if features:
            feats = tuple(components[z[i]] + rng.normal(scale=0.05, size=components.shape[1]))
        items.append(DataItem(f"x{i}", LabelCounts(counts[i]), feats))
    return Dataset(space, items), z


_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_([a-z0-9_]+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = {}
    for outcome, verdict in (("passed", "PASS"), ("failed", "FAIL"), ("skipped", "SKIP")):
        for report in terminalreporter.stats.get(outcome, []):
            match = _CRITERION.search(getattr(report, "nodeid", ""))
            if match is None:
                continue
            number, name = int(match.group(1)), match.group(2)
            # A test contributes setup/call/teardown reports; failures and
            # skips may surface in any phase, so let those override.
            if number not in results or verdict != "PASS":
                results[number] = (name, verdict)
    if not results:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria")
    for number in sorted(results):
        name, verdict = results[number]
        terminalreporter.write_line(f"  criterion {number:2d} ({name.replace('_', ' ')}): {verdict}")
