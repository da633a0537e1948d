import os
import subprocess
import sys

import numpy as np
import pytest

from refloc import kernels
from refloc.geometry import Hyperplane
from refloc.norms import norm_eval, parse_norm
from refloc.refraction import GateBatch

needs_compiled = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")

NORMS = ["lp:2", "lp:3", "lp:3/2", "lp:5/3", "l1", "linf:1/4"]
COMBOS = [("lp:2", "lp:3", None), ("l1", "linf", None), ("lp:3/2", "l1", "linf:1/4"),
          ("lp:2", "lp:2", "lp:2:1/2"), ("lp:5/3", "lp:3", "lp:2:1/4")]


def random_pairs(rng, d, n):
    alpha = rng.normal(size=d)
    h = Hyperplane(alpha, float(rng.normal()))
    a = alpha / (alpha @ alpha)
    X = rng.normal(size=(n, d)) * 3
    X -= np.outer(np.maximum(h.signed(X) + 0.1, 0), a)
    Q = rng.normal(size=(n, d)) * 3
    Q += np.outer(np.maximum(0.1 - h.signed(Q), 0), a)
    return h, X, Q


@pytest.mark.parametrize("token", NORMS)
@pytest.mark.parametrize("mu", [1e-2, 1e-6])
def test_smoothing_is_below_true_norm(token, mu, rng):
    spec = parse_norm(token)
    V = rng.normal(size=(200, 3))
    val = kernels.norm_smooth(spec.kernel_leg(3), V, mu, order=0, backend="numpy")[0]
    true = norm_eval(spec, V)
    assert np.all(val <= true + 1e-12)
    # the gap closes as mu goes to zero
    assert np.max(true - val) <= 20 * mu


@needs_compiled
@pytest.mark.parametrize("token", NORMS)
def test_norm_smooth_backends_agree(token, rng):
    leg = parse_norm(token).kernel_leg(4)
    V = rng.normal(size=(50, 4))
    V[0] = 0.0
    for order in (0, 1, 2):
        a = kernels.norm_smooth(leg, V, 1e-3, order, backend="numpy")
        b = kernels.norm_smooth(leg, V, 1e-3, order, backend="cython")
        for x, y in zip(a[: order + 1], b[: order + 1]):
            np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("combo", COMBOS)
@pytest.mark.parametrize("d", [2, 3])
def test_gate_batch_backends_agree(combo, d, rng):
    na, nb, nh = (parse_norm(t) if t else None for t in combo)
    h, X, Q = random_pairs(rng, d, 40)
    res = {}
    for name in ("numpy", "cython"):
        gb = GateBatch(h, na, nb, nh, 1.5, 0.7, 1.0, backend=name)
        T = gb.solve(X, Q)[0]
        res[name] = gb.exact_legs(X, Q, T).sum(axis=1)
    np.testing.assert_allclose(res["numpy"], res["cython"], rtol=1e-8)


@needs_compiled
def test_threaded_split_matches_serial(rng):
    h, X, Q = random_pairs(rng, 3, 600)
    gb = GateBatch(h, parse_norm("lp:2"), parse_norm("lp:3"))
    serial = gb.solve(X, Q)
    kernels.set_threads(4)
    try:
        threaded = gb.solve(X, Q)
    finally:
        kernels.set_threads(1)
    np.testing.assert_array_equal(serial[0], threaded[0])


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_pure_environment_forces_numpy():
    env = dict(os.environ, REFLOC_PURE="1")
    out = subprocess.run([sys.executable, "-c", "from refloc import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


@pytest.mark.parametrize("backend", ["numpy", pytest.param("cython", marks=needs_compiled)])
def test_transit_rows_with_coincident_gates_converge(backend, rng):
    # a slow hyperplane leg makes most optimal gate pairs coincide; the
    # hyperplane leg is then a kink of the smoothed problem
    h, X, Q = random_pairs(rng, 2, 400)
    gb = GateBatch(h, parse_norm("lp:2"), parse_norm("lp:3"), parse_norm("linf:1/4"), backend=backend)
    T, _, _, _, iters, conv = gb.solve(X, Q)
    assert conv.all() and iters.max() < 120
    single = GateBatch(h, parse_norm("lp:2"), parse_norm("lp:3"), backend=backend)
    ref = single.exact_legs(X, Q, single.solve(X, Q)[0]).sum(axis=1)
    assert np.all(gb.exact_legs(X, Q, T).sum(axis=1) <= ref + 1e-9)
