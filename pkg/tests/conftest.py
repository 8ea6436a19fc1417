import numpy as np
import pytest

from lillab.corrector import corrector_ctmc
from lillab.models import OuModel, two_state_chain
from lillab.space import Observable, tanh_observable


@pytest.fixture
def chain():
    return two_state_chain(1.0)


@pytest.fixture
def chain_g():
    return Observable.from_values([1.0, -1.0])


@pytest.fixture
def chain_chi(chain, chain_g):
    return corrector_ctmc(chain, chain_g)


@pytest.fixture
def ou():
    return OuModel()


@pytest.fixture
def ou_g():
    return tanh_observable(1.0)


@pytest.fixture
def three_state():
    from lillab.models import CtmcModel
    from lillab.space import Metric

    q = np.array([[-1.0, 0.6, 0.4], [0.5, -1.2, 0.7], [0.3, 0.9, -1.2]])
    rho = np.array([[0.0, 1.0, 2.0], [1.0, 0.0, 1.5], [2.0, 1.5, 0.0]])
    return CtmcModel(q, Metric.explicit(rho))


# ------------------------------------------------------- acceptance summary

_CRITERIA = {}


@pytest.fixture
def criterion(capsys):
    """Record and print a one-line verdict, then assert it."""

    def check(number, ok, detail, part=None):
        label = f"{number}{part or ''}"
        _CRITERIA.setdefault(number, []).append((label, bool(ok), detail))
        with capsys.disabled():
            print(f"\ncriterion {label}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, detail

    return check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        parts = _CRITERIA[number]
        ok = all(p[1] for p in parts)
        failed = [p[0] for p in parts if not p[1]]
        tail = f" (failing: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}{tail}")
