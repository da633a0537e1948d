import math

import numpy as np
import pytest

from refloc.geometry import DemandPoint, Hyperplane, parse_hyperplane, project_lp
from refloc.norms import NormSpec
from refloc.refraction import (GateBatch, PathQuery, RefractionError, gate_single, gate_transit, mu_schedule,
                               reduction_applies, refracted_distance, retm_check, snell_residual)

HX = Hyperplane(np.array([0.0, 1.0]), 0.0)
L2, L3 = NormSpec.lp(2), NormSpec.lp(3)


def q_(a, b, h=HX, na=L2, nb=L2, nh=None, wa=1.0, wb=1.0):
    return PathQuery(DemandPoint(a, wa), DemandPoint(b, wb), h, na, nb, nh)


def test_symmetric_normal_path():
    r = gate_single(q_((0, -4), (0, 4)))
    np.testing.assert_allclose(r.gates[0], [0, 0], atol=1e-12)
    assert r.total == pytest.approx(8.0, abs=1e-12)
    assert r.converged and r.snell_residual <= 1e-10
    assert r.total == pytest.approx(sum(r.leg_lengths), rel=1e-10)


def test_straight_segment():
    r = gate_single(q_((1, -1), (-1, 1)))
    np.testing.assert_allclose(r.gates[0], [0, 0], atol=1e-12)
    assert r.total == pytest.approx(2 * math.sqrt(2), abs=1e-12)


def test_weighted_mixed_norm_gate():
    # frozen from a 1-D scan at step 1e-5 refined by golden section (scipy)
    q = q_((7, -4), (-5, 3), na=L2, nb=L3, wb=2.0)
    r = gate_single(q)
    assert r.total == pytest.approx(17.28442314164709, rel=1e-6)
    assert r.gates[0][0] == pytest.approx(-2.6873471985068056, abs=1e-6)
    assert r.snell_residual <= 1e-6


def test_snell_residual_detects_perturbation():
    q = q_((0, -4), (0, 4))
    assert snell_residual(q, [np.array([0.0, 0.0])]) <= 1e-10
    assert snell_residual(q, [np.array([0.1, 0.0])]) > 1e-3
    with pytest.raises(RefractionError):
        snell_residual(q, [np.array([0.0, 1.0])])


def test_transit_worked_example():
    h = parse_hyperplane("y=x")
    q = q_((4, 5), (12, 11), h, NormSpec.l1(), NormSpec.l1(), NormSpec.linf())
    r = gate_transit(q)
    np.testing.assert_allclose(r.gates[0], [5, 5], atol=1e-6)
    np.testing.assert_allclose(r.gates[1], [11, 11], atol=1e-6)
    np.testing.assert_allclose(r.leg_lengths, [1, 6, 1], atol=1e-9)
    assert r.total == pytest.approx(8.0, abs=1e-9)


def test_transit_leg_decomposition_planar_example():
    h = parse_hyperplane("y=1.5x")
    q = q_((2, 8), (9.133220, 6.897760), h, L2, L3, NormSpec.linf(0.25))
    r = gate_transit(q)
    # legs listed from the demand point: l2 leg, hyperplane leg, l3 leg
    np.testing.assert_allclose(r.leg_lengths, [2.835578, 0.4812115, 3.447879], atol=1e-3)
    assert r.total == pytest.approx(6.7646685, abs=1e-3)
    np.testing.assert_allclose(r.gates[0], [4.635013, 6.952519], atol=1e-3)
    np.testing.assert_allclose(r.gates[1], [5.918243, 8.877364], atol=1e-3)


def test_transit_coincides_when_side_norm_dominates():
    q = q_((1, -3), (4, 2), na=L3, nb=L2, nh=NormSpec.lp(3, 2))
    r = gate_transit(q)
    assert np.linalg.norm(r.gates[0] - r.gates[1]) <= 1e-6 * (1 + 5 ** 0.5 * 3)
    assert r.total == pytest.approx(gate_single(q).total, rel=1e-9)


def test_vanishing_hyperplane_weight_uses_projections():
    q = q_((1, -2), (4, 3), na=L2, nb=L3, nh=NormSpec.lp(2, 1, 1e-12))
    r = gate_transit(q)
    np.testing.assert_allclose(r.gates[0], project_lp(HX, (1, -2), L2), atol=1e-5)
    np.testing.assert_allclose(r.gates[1], project_lp(HX, (4, 3), L3), atol=1e-5)


def test_validation_errors():
    with pytest.raises(RefractionError, match="same side"):
        gate_single(q_((0, 1), (1, 2)))
    with pytest.raises(RefractionError):
        gate_single(q_((0, 1), (1, -2)))       # swapped sides
    with pytest.raises(RefractionError):
        gate_transit(q_((0, -1), (1, 2)))      # no hyperplane norm
    with pytest.raises(RefractionError):
        PathQuery((0, -1), (1, 1), HX, L2, L2, weight_h=-1.0)


def test_points_on_the_hyperplane():
    r = gate_single(q_((2, 0), (5, 3)))
    np.testing.assert_allclose(r.gates[0], [2, 0], atol=1e-7)
    assert r.total == pytest.approx(math.hypot(3, 3), rel=1e-9)
    r = gate_single(q_((2, 0), (5, 0)))
    assert r.total == pytest.approx(3.0, rel=1e-9)


def test_classical_snell(rng):
    for _ in range(20):
        a = np.array([rng.uniform(-5, 5), -rng.uniform(0.5, 5)])
        b = np.array([rng.uniform(-5, 5), rng.uniform(0.5, 5)])
        wa, wb = rng.uniform(0.5, 3, 2)
        r = gate_single(q_(a, b, wa=wa, wb=wb))
        y = r.gates[0]
        sin_a = abs(y[0] - a[0]) / np.linalg.norm(y - a)
        sin_b = abs(y[0] - b[0]) / np.linalg.norm(y - b)
        assert abs(wa * sin_a - wb * sin_b) <= 1e-8


def test_transit_never_hurts(rng):
    norms = [L2, L3, NormSpec.lp(3, 2), NormSpec.l1(), NormSpec.linf()]
    for _ in range(25):
        h = Hyperplane(rng.normal(size=2), rng.normal())
        U = h.tangent_basis()[:, 0]
        a = h.anchor() + U * rng.normal() * 3 - h.alpha * rng.uniform(0.2, 3)
        b = h.anchor() + U * rng.normal() * 3 + h.alpha * rng.uniform(0.2, 3)
        na, nb, nh = (norms[i] for i in rng.integers(0, len(norms), 3))
        nh = nh.with_scale(rng.uniform(0.1, 1.5))
        q = q_(a, b, h, na, nb, nh)
        assert gate_transit(q).total <= gate_single(q).total + 1e-9
        assert refracted_distance(q) == pytest.approx(gate_transit(q).total)


def test_retm_examples():
    h = parse_hyperplane("y=x")
    rep = retm_check((4, 5), (12, 11), h, (NormSpec.l1(), NormSpec.l1(), NormSpec.linf()), samples=10_000)
    assert rep.holds and rep.samples == 10_000
    rep = retm_check((0, -1), (3, 2), HX, (L2, L2, L2))
    assert not rep.holds and rep.witness is not None and rep.violation > 0
    assert abs(HX.signed(rep.witness)) < 1e-12
    # a on H: condition 1 compares the hyperplane norm with the side norm along H
    fast = retm_check((0, 0), (1, 3), h, (L2, L2, NormSpec.linf()), samples=2000)
    assert fast.holds or fast.condition == 2
    slow = retm_check((0, 0), (1, 3), h, (L2, L2, NormSpec.l1()), samples=2000)
    assert not slow.holds and slow.condition == 1
    with pytest.raises(ValueError):
        retm_check((0, -1), (3, 2), HX, (L2, L2, L2), samples=0)


def test_reduction_rules():
    r = reduction_applies((L2, L3, NormSpec.lp(3, 2)))
    assert r.single_gate and not r.pt_equals_p
    r = reduction_applies((L3, L2, NormSpec.lp(3, 2)))
    assert r.pt_equals_p and r.single_gate
    r = reduction_applies((NormSpec.l1(), NormSpec.l1(), NormSpec.linf()))
    assert r.may_use_segment and not r.single_gate
    poly = NormSpec.polyhedral([[1, 0], [-1, 0], [0.5, 1], [-0.5, -1]])
    assert reduction_applies((L2, poly, L2)).classification == "unknown"
    # a heavier hyperplane norm only strengthens the ordering; a lighter one breaks it
    assert reduction_applies((L3, L2, NormSpec.lp(3, 2, scale=5.0))).pt_equals_p
    assert not reduction_applies((L3, L2, NormSpec.lp(3, 2, scale=0.2))).pt_equals_p


def test_mu_schedule():
    mus = mu_schedule(10.0)
    assert mus[0] == pytest.approx(0.1) and mus[-1] == pytest.approx(1e-11)
    assert all(x > y for x, y in zip(mus, mus[1:]))


def test_gate_batch_matches_single_queries(rng):
    h = Hyperplane(np.array([1.0, -2.0, 0.5]), 0.3)
    gb = GateBatch(h, L2, L3)
    X = rng.normal(size=(30, 3))
    X -= np.outer(np.maximum(h.signed(X), 0) + 0.5, h.alpha)
    Q = rng.normal(size=(30, 3))
    Q += np.outer(np.maximum(-h.signed(Q), 0) + 0.5, h.alpha)
    T, *_ = gb.solve(X, Q)
    lengths = gb.exact_legs(X, Q, T).sum(axis=1)
    for i in range(0, 30, 7):
        assert lengths[i] == pytest.approx(gate_single(q_(X[i], Q[i], h, L2, L3)).total, rel=1e-10)
    np.testing.assert_allclose(gb.from_tangent(gb.to_tangent(X, X), X), gb.anchors(X) * 0 + gb.anchors(X)
                               + (X - gb.anchors(X)) @ gb.U @ gb.U.T, atol=1e-12)
