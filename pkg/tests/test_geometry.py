import numpy as np
import pytest

from refloc.geometry import (DemandPoint, GeometryError, Hyperplane, Side, distance_to_hyperplane,
                             format_hyperplane, generalized_sine, parse_hyperplane, project_lp,
                             projection_face, side_of)
from refloc.norms import NormSpec, dual_norm, norm_eval


def test_side_of_examples():
    h = parse_hyperplane("y=1.5x")
    np.testing.assert_array_equal(h.alpha, [1.5, -1.0])
    assert h.beta == 0.0
    assert side_of(h, (1, 2)) == Side.A
    assert side_of(h, (9, 1)) == Side.B
    assert side_of(h, (2, 3)) == Side.ON


def test_default_tolerance_is_scale_aware():
    h = Hyperplane(np.array([3.0, 4.0]), 10.0)
    assert h.default_tol == pytest.approx(1e-9 * (1 + 10 + 5))
    assert side_of(h, (2, 1 + 1e-9)) == Side.ON
    assert side_of(h, (2, 1 + 1e-6)) == Side.B


def test_parse_forms():
    h = parse_hyperplane("alpha=1,-1,2;beta=0.5")
    assert h.dim == 3 and h.beta == 0.5
    assert parse_hyperplane(format_hyperplane(h)) == h
    assert parse_hyperplane("y=3/2x") == parse_hyperplane("y=1.5x")
    for bad in ["alpha=0,0;beta=1", "y=x+1", "alpha=1,2", ""]:
        with pytest.raises(GeometryError):
            parse_hyperplane(bad)


def test_demand_point_weight():
    with pytest.raises(ValueError):
        DemandPoint((1, 2), 0.0)


def test_project_examples():
    h = parse_hyperplane("y=x")
    y = project_lp(h, (4, 5), NormSpec.l1())
    np.testing.assert_allclose(y, [4.5, 4.5], atol=1e-12)
    assert distance_to_hyperplane(h, (4, 5), NormSpec.l1()) == pytest.approx(1.0)
    face = projection_face(h, (4, 5), NormSpec.l1())
    assert sorted(map(tuple, np.round(face, 12))) == [(4.0, 4.0), (5.0, 5.0)]
    y = project_lp(h, (12, 11), NormSpec.l1())
    assert y[0] == pytest.approx(y[1]) and 11 <= y[0] <= 12
    assert distance_to_hyperplane(h, (12, 11), NormSpec.l1()) == pytest.approx(1.0)
    h2 = Hyperplane(np.array([0.0, 1.0]), 0.0)
    np.testing.assert_allclose(project_lp(h2, (3, -2), NormSpec.lp(2)), [3, 0], atol=1e-15)


@pytest.mark.parametrize("spec", [NormSpec.lp(2), NormSpec.lp(3), NormSpec.lp(3, 2), NormSpec.l1(),
                                  NormSpec.linf(), NormSpec.polyhedral([[1, 0], [-1, 0], [0.5, 1], [-0.5, -1]])])
def test_projection_is_nearest(spec, rng):
    h = Hyperplane(np.array([1.3, -0.7]), 0.4)
    U = h.tangent_basis()
    for _ in range(5):
        a = rng.normal(size=2) * 4
        y = project_lp(h, a, spec)
        assert abs(h.signed(y)) <= 1e-10
        best = norm_eval(spec, a - y)
        # distance to a hyperplane is |alpha.a - beta| / dual(alpha)
        assert best == pytest.approx(abs(h.signed(a)) / dual_norm(spec, h.alpha), rel=1e-9)
        samples = y + np.outer(rng.normal(size=1000) * 5, U[:, 0])
        assert norm_eval(spec, a - samples).min() >= best - 1e-12


def test_l2_projection_closed_form(rng):
    h = Hyperplane(rng.normal(size=4), 0.3)
    for _ in range(10):
        x = rng.normal(size=4)
        expect = x - (h.alpha @ x - h.beta) / (h.alpha @ h.alpha) * h.alpha
        np.testing.assert_allclose(project_lp(h, x, NormSpec.lp(2)), expect, atol=1e-12)


def test_generalized_sine_examples():
    h = Hyperplane(np.array([0.0, 1.0]), 0.0)
    assert generalized_sine(h, (0, -4), (0, 0), NormSpec.lp(2))[0] == pytest.approx(1.0)
    total, comps = generalized_sine(h, (3, -4), (0, 0), NormSpec.lp(2))
    assert total == pytest.approx(0.8)
    assert total <= comps.sum() + 1e-15
    assert generalized_sine(parse_hyperplane("y=x"), (4, 5), (5, 5), NormSpec.l1())[0] == pytest.approx(1.0)
    with pytest.raises(GeometryError):
        generalized_sine(h, (0, 0), (0, 0), NormSpec.lp(2))
    with pytest.raises(GeometryError):
        generalized_sine(h, (0, -1), (0, 1), NormSpec.lp(2))


def test_generalized_sine_bounded_for_unit_normal(rng):
    a_ = rng.normal(size=3)
    h = Hyperplane(a_ / np.linalg.norm(a_), 0.2)
    U, y0 = h.tangent_basis(), h.anchor()
    for _ in range(50):
        a = rng.normal(size=3) * 3
        x = y0 + U @ rng.normal(size=2)
        total, _ = generalized_sine(h, a, x, NormSpec.lp(2))
        assert 0 < total <= 1 + 1e-12
