import warnings

import numpy as np
import pytest

from refloc.geometry import Side, parse_hyperplane, side_of
from refloc.locate import LocationInstance, StandingAssumptionWarning
from refloc.norms import NormSpec

PARLAR18 = [(1, 2), (2, 8), (3, 12), (6, 11), (5, 5), (6, 1), (7, 4), (8, 8), (9, 1), (9, 5), (9, 10),
            (10, 12), (14, 2), (14, 4), (16, 8), (17, 4), (17, 10), (19, 13)]


def split_instance(points, hyperplane, norm_a, norm_b, norm_h=None, weights=None):
    """Instance with every point assigned by ``side_of`` (points on H go to A)."""
    h = parse_hyperplane(hyperplane) if isinstance(hyperplane, str) else hyperplane
    weights = [1.0] * len(points) if weights is None else weights
    from refloc.geometry import DemandPoint
    A = [DemandPoint(p, w) for p, w in zip(points, weights) if side_of(h, p) != Side.B]
    B = [DemandPoint(p, w) for p, w in zip(points, weights) if side_of(h, p) == Side.B]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StandingAssumptionWarning)
        return LocationInstance(h.dim, h, norm_a, norm_b, A, B, norm_h)


@pytest.fixture(scope="session")
def example1():
    return split_instance(PARLAR18, "y=3/2x", NormSpec.lp(2), NormSpec.lp(3), NormSpec.linf(0.25))


@pytest.fixture(scope="session")
def table_instance():
    return split_instance(PARLAR18, "y=3/2x", NormSpec.l1(), NormSpec.lp(2), NormSpec.linf(0.25))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
