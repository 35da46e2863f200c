import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radsle import restriction as rs
from radsle.cft_params import sle_parameters
from radsle.driving import deterministic_path, sample_path
from radsle.loewner_flow import mobius_m

HULL = rs.SlitHull(1.0, 0.5)


def fd_weights(offsets, m):
    """Finite-difference weights for the m-th derivative on integer offsets."""
    x = np.asarray(offsets, dtype=float)
    V = np.vander(x, increasing=True).T
    rhs = np.zeros(x.size)
    rhs[m] = math.factorial(m)
    return np.linalg.solve(V, rhs)


def test_hull_validation():
    with pytest.raises(rs.HullError):
        rs.SlitHull(0.0, 1.0)
    with pytest.raises(rs.HullError):
        rs.SlitHull(1.0, 0.0)
    with pytest.raises(rs.HullError):
        rs.SlitHull(1.0, 1.0, frame="disc")
    with pytest.raises(ValueError):
        rs.RestrictionConfig(dt=0.0)


def test_raw_slit_map_closed_form():
    raw = rs.NormalizedHullMap(rs.SlitHull(1.0, 1.0), (1.0, 0.0, 0.0, 1.0))
    g0, g1, _, _ = raw.raw_jets(0.0)
    assert g0 == pytest.approx(1 - math.sqrt(2), abs=1e-14)
    assert abs(g1) == pytest.approx(1 / math.sqrt(2), abs=1e-14)
    gi = complex(raw.raw_jets(1j)[0])
    expected = 1 - cmath.sqrt(1 - 2j)
    assert gi.imag > 0
    assert gi == pytest.approx(expected if expected.imag > 0 else 2 - expected, abs=1e-14)
    assert gi == pytest.approx(-0.272 + 0.786j, abs=1e-3)
    # continuity along a ray from infinity: the image never jumps
    z = 1j * np.geomspace(1e3, 1.0, 2000)
    w = raw(z)
    assert np.all(w.imag > 0) and np.abs(np.diff(w)).max() < 5.0


def test_normalization_and_injectivity():
    phi = rs.slit_map(rs.SlitHull(1.0, 1.0))
    assert abs(phi(0.0)) < 1e-14
    assert abs(phi(1j) - 1j) < 1e-14
    r = np.random.default_rng(0)
    z = r.uniform(-5, 5, 400) + 1j * r.uniform(1e-3, 5, 400)
    w = phi(z)
    assert np.all(w.imag > 0)
    d = np.abs(w[:, None] - w[None, :]) + np.eye(z.size)
    assert d.min() > 1e-8


def test_empty_hull_limit():
    phi = rs.slit_map(rs.SlitHull(1.0, 1e-6))
    z = np.array([-2.0, 0.5j, 3 + 1j, 1j])
    assert np.abs(phi(z) - z).max() < 1e-6
    assert abs(phi.derivative(0.0) - 1) < 1e-6


def test_derivative_at_zero_decreases_with_height():
    d = [abs(rs.slit_map(rs.SlitHull(1.0, ell)).derivative(0.0)) for ell in (0.1, 0.3, 0.5, 1.0, 2.0)]
    assert all(x <= 1 for x in d)
    assert all(a > b for a, b in zip(d, d[1:]))


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 3), st.complex_numbers(max_magnitude=4))
@settings(max_examples=50, deadline=None)
def test_moebius_schwarzian_vanishes(A, B, C, z):
    D = 1.0 + abs(A) + abs(B) + abs(C)
    m = rs.MobiusMap((A, B, C, D))
    if abs(C * z + D) < 1e-2 or abs(A * D - B * C) < 1e-3:
        return
    assert abs(rs.schwarzian(m, z)) < 1e-8


def test_schwarzian_cocycle():
    f = rs.slit_map(rs.SlitHull(1.0, 1.0))
    g = rs.slit_map(rs.SlitHull(-2.0, 0.7))
    r = np.random.default_rng(3)
    z = r.uniform(-3, 3, 50) + 1j * r.uniform(0.1, 3, 50)
    g0, g1, g2, g3 = g.jets(z)
    f0, f1, f2, f3 = f.jets(g0)
    # jets of f o g by the chain rule
    c1 = f1 * g1
    c2 = f2 * g1 ** 2 + f1 * g2
    c3 = f3 * g1 ** 3 + 3 * f2 * g1 * g2 + f1 * g3
    lhs = rs.schwarzian_from_jets(c1, c2, c3)
    rhs = rs.schwarzian(f, g0) * g1 ** 2 + rs.schwarzian(g, z)
    assert np.abs(lhs - rhs).max() <= 1e-8


def test_schwarzian_zero_derivative_raises():
    with pytest.raises(ZeroDivisionError):
        rs.schwarzian_from_jets(np.array([0.0]), np.array([1.0]), np.array([1.0]))


def test_slit_map_jets_against_finite_differences():
    phi = rs.slit_map(rs.SlitHull(1.0, 1.0))
    z = -1.0 + 0j
    h = 1e-2
    k = np.arange(-4, 5)
    vals = phi(z + h * k)
    _, f1, f2, f3 = phi.jets(z)
    for m, exact in ((1, f1), (2, f2), (3, f3)):
        fd = np.dot(fd_weights(k, m), vals) / h ** m
        assert abs(fd - exact) <= 1e-6 * max(1.0, abs(exact))
    fd = np.dot(fd_weights(k, 1), vals) / h
    assert abs(fd - phi.derivative(z)) <= 1e-6


def test_zipper_reproduces_closed_form_at_time_zero():
    geo = rs.hull_geometry(HULL, 64)
    extra = mobius_m(np.array([-1.0 + 0.5j, 2.0 + 2.0j, 0.3j]))
    Y, d_i, arg_i, s_term, out, ok = rs.frame_quantities(geo.W0, geo.theta_b0, extra)
    phi = geo.phiA
    assert ok
    assert Y == pytest.approx(phi.derivative(0.0).real, abs=1e-9)
    assert d_i == pytest.approx(abs(phi.derivative(1j)), abs=1e-9)
    assert arg_i == pytest.approx(cmath.phase(phi.derivative(1j)), abs=1e-9)
    assert s_term == pytest.approx(rs.schwarzian(phi, 0.0).real, abs=1e-7)
    expect = mobius_m(phi(np.array([-1.0 + 0.5j, 2.0 + 2.0j, 0.3j])))
    assert np.abs(out - expect).max() < 1e-9


def test_initial_value_of_M():
    p = sle_parameters(8.0 / 3.0)
    phi = rs.slit_map(HULL)
    m0 = abs(phi.derivative(0.0)) ** p.h12
    path = deterministic_path("zero", 0.01, 1e-3)
    M, t_hat, hit, esc = rs.martingale_M(HULL, path, 8.0 / 3.0)
    assert M[0] == pytest.approx(m0, rel=1e-9)
    assert m0 == pytest.approx(0.967722, abs=1e-6)
    assert t_hat[0] == pytest.approx(0.0, abs=1e-9)
    assert hit is None and esc is None
    small = rs.martingale_M(rs.SlitHull(1.0, 1e-6), path, 8.0 / 3.0)[0]
    assert small[0] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("kappa", [2.0, 8.0 / 3.0, 6.0])
def test_diagram_residual_and_contraction(kappa):
    worst = 0.0
    for i in range(4):
        path = sample_path(kappa, 1.0, 1e-3, 40, i)
        tr = rs.evolve_transported(HULL, path)
        ok = np.isfinite(tr.residual)
        assert ok[0] and tr.t_hat[0] == pytest.approx(0.0, abs=1e-12)
        worst = max(worst, tr.max_residual)
        assert np.all(tr.t_hat[ok] <= tr.times[ok] + 1e-12)
        assert np.all(tr.Y[ok] <= 1.0 + 1e-9)
        assert np.abs(tr.t_hat[ok] - tr.t_hat_flow[ok]).max() < 1e-4
    assert worst <= 1e-3


def test_transported_flow_for_small_hull():
    path = sample_path(8.0 / 3.0, 0.5, 1e-3, 41, 0)
    tr = rs.evolve_transported(rs.SlitHull(-1.0, 1e-3), path)
    ok = np.isfinite(tr.residual)
    assert ok.all()
    assert np.abs(tr.t_hat - tr.times).max() < 1e-5
    assert np.abs(tr.Y - 1).max() < 1e-5


def test_vanishing_hull_escapes_with_limit_value():
    path = sample_path(8.0 / 3.0, 0.5, 1e-3, 41, 0)
    M, t_hat, hit, esc = rs.martingale_M(rs.SlitHull(-1.0, 1e-6), path)
    assert hit is None and esc is not None
    assert np.abs(M - 1).max() < 1e-9
    assert np.abs(t_hat - path.t_grid).max() < 1e-9


def test_hit_sets_M_to_zero_at_eight_thirds():
    for i in range(200):
        path = sample_path(8.0 / 3.0, 1.0, 1e-3, 11, i)
        M, _, hit, _ = rs.martingale_M(HULL, path, 8.0 / 3.0)
        if hit is not None:
            k = path.index_at(hit)
            assert np.all(M[k:] == 0.0) and np.all(M[:k] > 0)
            M6, _, hit6, _ = rs.martingale_M(HULL, path, 6.0)
            # other kappa: frozen at the last value before the hit
            k6 = path.index_at(hit6)
            assert np.all(M6[k6:] == M6[k6 - 1])
            return
    pytest.fail("no hitting path found")


def test_martingale_kernel_matches_single_path():
    t_list = [0.25, 0.5]
    res = rs.restriction_check(HULL, 8.0 / 3.0, t_list, 20, 11)
    Ms = []
    for i in range(20):
        path = sample_path(8.0 / 3.0, 0.5, 1e-3, 11, i)
        M = rs.martingale_M(HULL, path)[0]
        Ms.append([M[250], M[500]])
    assert [e.mean for e in res.estimates] == pytest.approx(np.mean(Ms, axis=0), rel=1e-12)
    assert res.M0 == pytest.approx(0.967722, abs=1e-6)


@pytest.mark.parametrize("kappa", [2.0, 6.0])
def test_flatness_other_kappa(kappa):
    res = rs.restriction_check(HULL, kappa, [0.25, 0.5, 1.0], 1000, 7)
    assert res.pairwise_ok(3.0)
    for e in res.estimates:
        assert abs(e.mean - res.M0) <= 3 * e.stderr + 1e-12


def test_far_hull_is_avoided():
    r = rs.avoidance_probability(rs.SlitHull(50.0, 0.5), t_max=8.0, N=300, seed=1)
    assert r["candidate"] >= 0.99
    assert r["freq"] >= 0.99


def test_avoidance_candidate_tends_to_one():
    assert rs.avoidance_candidate(rs.SlitHull(1.0, 1e-7)) == pytest.approx(1.0, abs=1e-6)
    assert rs.avoidance_candidate(HULL) < 1.0
