import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

from oracles import KEYS  # noqa: E402

from vaxmed.levels import NEG  # noqa: E402
from vaxmed.popmodel import Atom, BinaryTypeDistribution, GeneralPopulation, PhiTable  # noqa: E402

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = HERE.parent / "data"

WORKED_PHI = dict(vaf=0.0002, vas=0.7998, vnf=0.0008, vns=0.1992, pnf=0.01, pns=0.99)


@pytest.fixture
def worked_phi():
    return PhiTable(**WORKED_PHI)


@pytest.fixture
def data_dir():
    return DATA


weights = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@st.composite
def binary_pis(draw, min_positive=1):
    raw = draw(st.lists(weights, min_size=12, max_size=12))
    if sum(raw) < 1e-3:
        raw = [1.0] * 12
    total = sum(raw)
    return BinaryTypeDistribution.from_mapping({k: r / total for k, r in zip(KEYS, raw)})


@st.composite
def y_marginals(draw):
    raw = draw(st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=6, max_size=6))
    total = sum(raw)
    return dict(zip(("0000", "0001", "0011", "0101", "0111", "1111"), (r / total for r in raw)))


def _monotone_vector(draw, k):
    # non-increasing 0/1 vector: ones up to a cut point
    cut = draw(st.integers(0, k))
    return tuple(1 if j < cut else 0 for j in range(k))


@st.composite
def general_populations(draw, max_levels=4, monotone=True):
    k = draw(st.integers(1, max_levels))
    support = (NEG,) + tuple(range(1, k))
    n_atoms = draw(st.integers(1, 8))
    atoms = []
    for _ in range(n_atoms):
        y0 = _monotone_vector(draw, k)
        if monotone:
            cut1 = draw(st.integers(0, sum(y0)))
            y1 = tuple(1 if j < cut1 else 0 for j in range(k))
        else:
            y1 = tuple(draw(st.integers(0, 1)) for _ in range(k))
            y0 = tuple(draw(st.integers(0, 1)) for _ in range(k))
        atoms.append(Atom(draw(st.integers(0, k - 1)), y1, y0, draw(st.floats(0.01, 1.0))))
    total = sum(a.prob for a in atoms)
    atoms = [Atom(a.m1, a.y1, a.y0, a.prob / total) for a in atoms]
    return GeneralPopulation.from_atoms(support, atoms, monotone=monotone)


# acceptance summary ------------------------------------------------------------

ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])


@st.composite
def admissible_phis(draw, model_consistent=False):
    """Margins with 0 < vf < pnf < 1 and vns <= pns (every tau reachable).

    ``model_consistent`` also keeps the responder event rate at or below the
    non-responder rate, as any base-model population does.
    """
    pnf = draw(st.floats(0.02, 0.5))
    vn = draw(st.floats(0.05, 0.5))
    rate_n = pnf * draw(st.floats(0.01, 0.99))
    rate_a = (rate_n if model_consistent else pnf) * draw(st.floats(0.01, 0.99))
    return PhiTable(
        vaf=(1 - vn) * rate_a, vas=(1 - vn) * (1 - rate_a),
        vnf=vn * rate_n, vns=vn * (1 - rate_n),
        pnf=pnf, pns=1 - pnf,
    )
