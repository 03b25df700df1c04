import numpy as np
import pytest

from avfusion.tensor import make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


def numeric_grad(f, x, h=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def assert_grad_close(analytic, numeric, rtol=1e-4):
    err = np.abs(analytic - numeric) / (np.abs(analytic) + 1e-8)
    # entries where both sides are at rounding level are not informative
    err = np.where(np.abs(analytic - numeric) < 1e-9, 0.0, err)
    assert err.max() < rtol, f"max relative error {err.max():.3e}"


# one "[n] PASS|FAIL ..." line per acceptance criterion, filled by test_acceptance
ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_RESULTS, key=lambda s: int(s[1:s.index("]")])):
            terminalreporter.write_line(line)
