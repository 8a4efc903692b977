import numpy as np
import pytest

from nelsonlab import presets
from nelsonlab.grid import CoefficientSpec, Confining, Grid


@pytest.fixture(scope="session")
def harmonic():
    return presets.get("harmonic-1d")


@pytest.fixture(scope="session")
def tiny():
    return presets.get("tiny-chain")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_confined(d=1, R=3.0, N=17, **kw):
    spec = CoefficientSpec(V=Confining(1.0, 1.0), delta=1.0, b0=1.0, **kw)
    return Grid(d, R, N), spec


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``record(criterion, ok, detail)`` stores one outcome and asserts it."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(criterion: int, ok: bool, detail: str = ""):
        store.setdefault(criterion, []).append((bool(ok), f"{request.node.name}: {detail}"))
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        parts = store[n]
        ok = all(p for p, _ in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {n}  ({len(parts)} part(s))")
        for p, d in parts:
            if not p:
                terminalreporter.write_line(f"        failed part {d}")
