import numpy as np
import pytest

from delaylin.delay_system import LinearTapSystem, Nonlinearity, SemilinearSystem
from delaylin.dichotomy import make_diagonal_dichotomy
from delaylin.evolution import EvolutionFamily
from delaylin.phase_space import PhaseSpaceParams


def random_tap_system(rng, dim, lags, scale=0.4, kind="constant", times=1):
    taps = scale * rng.standard_normal((times, lags + 1, dim, dim)) / np.sqrt(dim * (lags + 1))
    return LinearTapSystem(taps if kind != "constant" else taps[0], kind)


def random_semilinear(rng, p, lags=2, eps=0.2, shape="tanh"):
    dim = p.state_dim
    linear = random_tap_system(rng, dim, lags)
    read = sorted(set(int(x) for x in rng.integers(0, lags + 1, size=2)))
    nl = Nonlinearity(eps, read, rng.standard_normal((len(read), dim)), rng.standard_normal(dim), shape)
    return SemilinearSystem(linear, nl, p)


def diagonal_setup(beta=1.0, L=48, a=0.5, b=2.0, eps=0.05, lags=(0,), shape="tanh"):
    p = PhaseSpaceParams(beta, 2, L)
    d = make_diagonal_dichotomy([a], [b], p)
    nl = Nonlinearity(eps, list(lags), np.ones((len(lags), 2)), [1.0, 1.0], shape)
    sys = SemilinearSystem(d.linear_system, nl, p)
    return p, d, sys, EvolutionFamily(d.linear_system, p)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# acceptance summary: tests marked ``criterion(n, title)`` record a detail line
# through the ``criterion`` fixture; one PASS/FAIL line per criterion is printed
ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def criterion(request):
    mark = request.node.get_closest_marker("criterion")
    entry = ACCEPTANCE.setdefault(mark.args[0], {"title": mark.args[1], "detail": "", "outcome": None})

    def record(detail):
        entry["detail"] = detail

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    entry = ACCEPTANCE.setdefault(mark.args[0], {"title": mark.args[1], "detail": "", "outcome": None})
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        entry["outcome"] = rep.passed if entry["outcome"] is None else (entry["outcome"] and rep.passed)
        if rep.failed and not entry["detail"]:
            entry["detail"] = str(rep.longrepr).strip().splitlines()[-1][:200]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        e = ACCEPTANCE[n]
        status = "PASS" if e["outcome"] else ("FAIL" if e["outcome"] is False else "NOT RUN")
        terminalreporter.write_line(f"criterion {n} {status}: {e['title']} | {e['detail']}")
