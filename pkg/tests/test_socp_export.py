import math
import warnings

import numpy as np
import pytest

from conftest import split_instance
from refloc.geometry import Hyperplane, parse_hyperplane
from refloc.locate import LocationInstance, solve_side
from refloc.norms import NormError, NormSpec
from refloc.socp_export import (AuditError, ConicModel, ModelError, big_m_constants, build_minlp, build_PA,
                                build_PB, build_PTA, build_PTB, build_side_model, count_audit, dumps_model,
                                expand_powers, fill_tower, loads_model, power_tower, read_model, sdp_pattern,
                                write_model)

L2, L3 = NormSpec.lp(2), NormSpec.lp(3)


def tower_model(r, s):
    m = ConicModel("tower")
    t, xi, z = (m.add_var(n, "nonneg") for n in ("t", "xi", "z"))
    m.add_power(t, xi, z, r, s)
    return m


@pytest.mark.parametrize("r,s", [(3, 2), (3, 1), (5, 3), (7, 4), (2, 1)])
def test_tower_feasibility_matches_power_row(r, s):
    """fill_tower picks the largest feasible value of every auxiliary, so the
    tower is feasible for some auxiliaries iff it is feasible after filling."""
    m = expand_powers(tower_model(r, s))
    assert not m.powers
    assert len(m.rsoc) <= 2 * max(1, math.ceil(math.log2(r)))
    rng = np.random.default_rng(r * 10 + s)
    checked = 0
    for _ in range(10_000):
        xi, z = np.exp(rng.uniform(-3, 3, 2))
        bound = xi ** (s / r) * z ** ((r - s) / r)
        t = bound * np.exp(rng.uniform(-0.5, 0.5))
        gap = t - bound
        if abs(gap) <= 1e-9 * (1 + bound):
            continue
        vals = fill_tower(m, np.r_[t, xi, z, np.zeros(m.n_vars - 3)])
        feasible = m.max_violation(vals) <= 1e-9 * (1 + t * t)
        assert feasible == (gap < 0)
        checked += 1
    assert checked > 9_900


@pytest.mark.parametrize("r,s,rows", [(2, 1, 1), (3, 1, 2), (3, 2, 2), (5, 3, 4), (7, 4, 3)])
def test_tower_sizes(r, s, rows):
    assert len(power_tower(r, s)) == rows


def test_tower_size_bound():
    for r in range(2, 40):
        for s in range(1, r):
            if math.gcd(r, s) == 1:
                assert len(power_tower(r, s)) <= 2 * max(1, math.ceil(math.log2(r)))


def test_example_counts(example1):
    m = build_PA(example1)
    rep = count_audit(m)
    assert rep.linear_rows == 175 == 4 * 5 + 14 * 11 + 1 and rep.ok and rep.formula_applies
    e = expand_powers(m)
    rep = count_audit(e)
    assert rep.ok and rep.rsoc_rows <= rep.rsoc_bound and rep.power_rows == 0


def test_single_point_template():
    inst = LocationInstance(2, parse_hyperplane("y=3/2x"), L2, L3, [(1, 2)], [])
    m = build_PA(inst)
    assert len(m.linear) == 6            # 2 per coordinate, the length row, the halfspace row
    assert len(m.powers) == 2 and all(p[3:] == (2, 1) for p in m.powers)
    assert count_audit(m).ok


def test_random_instance_counts(rng):
    for i in range(10):
        d = int(rng.integers(2, 5))
        h = Hyperplane(rng.normal(size=d), 0.0)
        P = [tuple(p) for p in rng.uniform(-3, 3, (int(rng.integers(3, 9)), d))]
        r = [(2, 1), (3, 1), (3, 2), (5, 3)]
        na, nb = (NormSpec.lp(*r[k]) for k in rng.integers(0, 4, 2))
        inst = split_instance(P, h, na, nb)
        nA, nB = len(inst.points_A), len(inst.points_B)
        m = build_PA(inst)
        assert len(m.linear) == nA * (2 * d + 1) + nB * (4 * d + 3) + 1
        mb = build_PB(inst)
        assert len(mb.linear) == nB * (2 * d + 1) + nA * (4 * d + 3) + 1


def test_audit_fails_loudly(example1):
    m = build_PA(example1)
    m.linear.append(m.linear[0])
    with pytest.raises(AuditError):
        count_audit(m)
    assert not count_audit(m, strict=False).ok
    with pytest.raises(ModelError):
        count_audit(build_minlp(example1))


def test_transit_and_nonsmooth_models(example1):
    for b in (build_PTA, build_PTB):
        m = b(example1)
        assert count_audit(m).ok and count_audit(expand_powers(m)).ok
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        inst = LocationInstance(2, example1.hyperplane, NormSpec.l1(), NormSpec.linf(), example1.points_A,
                                example1.points_B, NormSpec.linf(0.25))
    m = build_PTA(inst)
    assert not m.powers and count_audit(m).ok


def test_l1_refused_in_high_dimension():
    d = 17
    h = Hyperplane(np.r_[np.zeros(d - 1), 1.0], 0.0)
    inst = LocationInstance(d, h, NormSpec.l1(), NormSpec.l1(), [np.r_[np.zeros(d - 1), -1.0]], [])
    with pytest.raises((ModelError, NormError)):
        build_PA(inst)


def test_minlp(example1):
    m = build_minlp(example1)
    assert [m.var_names[i] for i in m.binaries] == ["gamma"]
    g = m.var("gamma")
    bigm = [row for row, _, _ in m.linear if any(v == g for v, _ in row)]
    assert len(bigm) >= 2 * example1.n_points
    consts = big_m_constants(example1)
    assert consts["M"] > 0 and consts["M_point"] >= consts["M"]
    assert build_minlp(example1, transit=True).meta["kind"] == "MINLP-T"


def test_round_trip(example1, tmp_path):
    for m in (build_PA(example1), expand_powers(build_PTB(example1)), build_minlp(example1, transit=True)):
        text = dumps_model(m)
        back = loads_model(text)
        assert dumps_model(back) == text
        assert back.linear == m.linear and back.rsoc == m.rsoc and back.powers == m.powers
        assert back.objective == m.objective and back.var_names == m.var_names
        write_model(m, tmp_path / "m.txt")
        assert dumps_model(read_model(tmp_path / "m.txt")) == text
    with pytest.raises(ModelError):
        loads_model("NAME x\nVARS 1\nx free\nEND\n")


def test_sdp_pattern(example1):
    text = sdp_pattern(expand_powers(build_PA(example1)))
    assert text.count("[") >= 3


def test_side_model_dispatch(example1):
    assert build_side_model(example1, "B", transit=True).meta["kind"] == "PTB"
    with pytest.raises(ModelError):
        build_side_model(example1, "C")


def _solve_conic(m):
    cp = pytest.importorskip("cvxpy")
    v = cp.Variable(m.n_vars)
    cons = [v[i] >= 0 for i, b in enumerate(m.var_bounds) if b == "nonneg"]
    for row, sense, rhs in m.linear:
        e = sum(c * v[j] for j, c in row)
        cons.append(e <= rhs if sense == "<=" else (e >= rhs if sense == ">=" else e == rhs))
    for X, Y, Z in m.rsoc:
        cons.append(cp.SOC(v[Y] + v[Z], cp.hstack([2 * v[X], v[Y] - v[Z]])))
    prob = cp.Problem(cp.Minimize(sum(c * v[j] for j, c in m.objective.items())), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return prob.value, v.value


def test_exported_models_reach_the_side_optimum(rng):
    norms = [NormSpec.lp(2), NormSpec.lp(3), NormSpec.lp(3, 2)]
    for _ in range(10):
        h = Hyperplane(rng.normal(size=2), 0.0)
        P = [tuple(p) for p in rng.uniform(-4, 4, (4, 2))]
        na, nb = (norms[k] for k in rng.integers(0, 3, 2))
        inst = split_instance(P, h, na, nb, weights=list(rng.uniform(0.5, 2, 4)))
        for side in "AB":
            val, _ = _solve_conic(expand_powers(build_side_model(inst, side)))
            assert val == pytest.approx(solve_side(inst, side).f, rel=1e-5)


def test_exported_transit_model(example1):
    val, x = _solve_conic(expand_powers(build_PTB(example1)))
    assert val == pytest.approx(solve_side(example1, "B", transit=True).f, rel=1e-6)
