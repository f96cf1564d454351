import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from parapde.fields import Field1D, Grid1D, uniform_axis

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


def make_field(u, dx=0.1, dt=0.05, periodic=True, x0=0.0):
    u = np.asarray(u, dtype=float)
    n, m = u.shape
    grid = Grid1D(uniform_axis(x0, dx, n), uniform_axis(0.0, dt, m), dx, dt, periodic)
    return Field1D(grid, u)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


# Acceptance checks record their outcome here; the terminal summary prints
# one line per criterion, so the report is visible without ``-s``.
_ACCEPTANCE = {}


class AcceptanceLog:
    def record(self, criterion, label, ok, detail=""):
        _ACCEPTANCE.setdefault(criterion, []).append((label, bool(ok), detail))
        return bool(ok)


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for criterion in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[criterion]
        verdict = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        failed = [label for label, ok, _ in parts if not ok]
        note = f" (failing: {'; '.join(failed)})" if failed else ""
        tr.write_line(f"criterion {criterion}: {verdict}{note}")
        for label, ok, detail in parts:
            tr.write_line(f"    [{'ok' if ok else 'FAIL'}] {label}: {detail}")
