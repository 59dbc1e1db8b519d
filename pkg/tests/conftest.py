import numpy as np
import pytest

from percpeak.harness import SweepSpec, default_grid, format_csv, read_csv, run_sweep

ACCEPTANCE = {}


def record(criterion: int, name: str, ok: bool, detail: str = ""):
    ACCEPTANCE[criterion] = (name, bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {k:2d} {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def kick_sweeps():
    """Default-grid sweeps over the 8 synthetic kicks, one per compared method."""
    out = {}
    for method in ("min_peak", "drc", "hard_clip", "soft_clip"):
        text = format_csv(run_sweep(SweepSpec(method, tuple(default_grid(method)), synthetic_kicks=8)))
        out[method] = read_csv(text)
    return out
