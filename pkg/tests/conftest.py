import numpy as np
import pytest

from netsense import _backend, channel, scenario

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def fig4():
    cfg = scenario.paper_scenario_fig4()
    geo = scenario.solve_geometry(cfg)
    return cfg, geo, channel.default_precoder(cfg, geo)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hpd(rng, n, cond=100.0):
    """Random Hermitian positive-definite matrix with bounded condition number."""
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(A)
    ev = np.geomspace(1.0, cond, n)
    rng.shuffle(ev)
    R = (Q * ev) @ Q.conj().T
    return 0.5 * (R + R.conj().T)


ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """Record one pass/fail line per acceptance criterion."""
    def record(number, ok, detail):
        tag = request.node.callspec.id if hasattr(request.node, "callspec") else ""
        ACCEPTANCE[number, tag] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, tag in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n, tag]
        label = f"criterion {n:2d}" + (f" [{tag}]" if tag else "")
        terminalreporter.write_line(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
