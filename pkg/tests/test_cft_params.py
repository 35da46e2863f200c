import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radsle import cft_params as cp

kappas = st.floats(min_value=0.05, max_value=16.0, allow_nan=False)
weights = st.floats(min_value=0.0, max_value=10.0, allow_nan=False)


@pytest.mark.parametrize("kappa,c", [(6.0, 0.0), (8.0 / 3.0, 0.0), (2.0, -2.0)])
def test_central_charge_values(kappa, c):
    assert cp.central_charge(kappa) == pytest.approx(c, abs=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
def test_kappa_domain(bad):
    with pytest.raises(cp.DomainError):
        cp.central_charge(bad)
    with pytest.raises(cp.DomainError):
        cp.sle_parameters(bad)


@pytest.mark.parametrize(
    "kappa,r,s,expected",
    [(6.0, 1, 2, 0.0), (8.0 / 3.0, 1, 2, 5.0 / 8.0), (8.0 / 3.0, 0, 0.5, 5.0 / 96.0)],
)
def test_weight_rs_examples(kappa, r, s, expected):
    assert cp.weight_rs(kappa, r, s) == pytest.approx(expected, abs=1e-12)


def test_parameter_set_at_eight_thirds():
    p = cp.sle_parameters(8.0 / 3.0)
    assert p.h12 == pytest.approx(5.0 / 8.0, abs=1e-12)
    assert p.h0half2 == pytest.approx(5.0 / 48.0, abs=1e-12)
    assert p.c == pytest.approx(0.0, abs=1e-12)


@given(kappas)
def test_parameter_set_cross_formulas(kappa):
    p = cp.sle_parameters(kappa)
    assert p.h12 == pytest.approx(cp.weight_rs(kappa, 1, 2), abs=1e-10)
    assert p.h0half2 == pytest.approx(2 * cp.weight_rs(kappa, 0, 0.5), abs=1e-10)
    # 2 h_{0;1/2} = (kappa - 2)/4 * h_{1;2}
    assert p.h0half2 == pytest.approx((kappa - 2.0) / 4.0 * p.h12, abs=1e-10)
    assert cp.coulomb_charges(kappa).central_charge == pytest.approx(p.c, abs=1e-10)


def test_coulomb_kappa_two():
    q = cp.coulomb_charges(2.0)
    assert (q.alpha_plus, q.alpha_minus, 2 * q.alpha0) == pytest.approx((1.0, -2.0, -1.0))
    assert q.central_charge == pytest.approx(cp.central_charge(2.0), abs=1e-12)
    assert q.weight_of_charge(0.0) == 0.0


@pytest.mark.parametrize("kappa", [2.0, 8.0 / 3.0, 6.0])
def test_weight_of_alpha12(kappa):
    q = cp.coulomb_charges(kappa)
    assert q.weight_of_charge(q.alpha_rs(1, 2)) == pytest.approx(cp.weight_rs(kappa, 1, 2), abs=1e-12)


@settings(max_examples=200)
@given(kappas, st.sampled_from([0, 0.5, 1, 1.5, 2, 3]), st.sampled_from([0, 0.5, 1, 2, 3, 4]))
def test_kac_equals_coulomb(kappa, r, s):
    q = cp.coulomb_charges(kappa)
    assert cp.weight_rs(kappa, r, s) == pytest.approx(q.weight_of_charge(q.alpha_rs(r, s)), abs=1e-10)


def test_charge_of_weight_branches():
    q = cp.coulomb_charges(6.0)
    up, lo = q.charge_of_weight(1.0, "both")
    assert up > q.alpha0 > lo
    assert up + lo == pytest.approx(2 * q.alpha0)
    for a in (up, lo):
        assert q.weight_of_charge(a) == pytest.approx(1.0)
    with pytest.raises(cp.DomainError):
        q.charge_of_weight(-0.5 * q.alpha0**2 - 1.0)


def test_exponent_bundle_kappa6():
    b0 = cp.exponent_bundle(6.0, 0.0)
    assert b0.delta_plus == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert b0.lam == pytest.approx(0.25, abs=1e-12)
    b1 = cp.exponent_bundle(6.0, 1.0)
    assert (b1.delta_plus, b1.delta_minus) == pytest.approx((1.0, -2.0 / 3.0), abs=1e-12)
    assert b1.lam == pytest.approx(1.25, abs=1e-12)
    assert b1.two_Delta == pytest.approx(1.25, abs=1e-12)
    # two closed forms of the eigenvalue
    eps = cp.sle_parameters(6.0).h0half2 - b1.two_Delta
    assert eps == pytest.approx(-(0.5 * 1.0 + 6.0 * b1.delta_plus / 8.0), abs=1e-12)
    with pytest.raises(cp.DomainError):
        cp.exponent_bundle(6.0, -0.1)


@settings(max_examples=300)
@given(kappas, weights)
def test_exponent_invariants(kappa, h):
    b = cp.exponent_bundle(kappa, h)
    for d in (b.delta_plus, b.delta_minus):
        assert kappa * d * d + (4 - kappa) * d - 4 * h == pytest.approx(0.0, abs=1e-10 * (1 + h + kappa))
    assert b.delta_plus * b.delta_minus == pytest.approx(-4 * h / kappa, abs=1e-10)
    assert b.delta_plus + b.delta_minus == pytest.approx((kappa - 4) / kappa, abs=1e-10)
    assert b.lam == pytest.approx(cp.decay_exponent(kappa, h), abs=1e-10)
    assert cp.eigenvalue_eps(kappa, b.two_Delta, 0.0) == pytest.approx(-b.lam, abs=1e-10)
    q = cp.coulomb_charges(kappa)
    assert b.delta_plus == pytest.approx(q.beta_kappa * b.beta, abs=1e-10)
    assert b.delta_minus == pytest.approx(q.beta_kappa * (2 * q.alpha0 - b.beta), abs=1e-10)


@given(kappas, st.floats(min_value=0.0, max_value=5.0), st.floats(min_value=0.0, max_value=5.0))
def test_lambda_monotone(kappa, h1, h2):
    lo, hi = sorted((h1, h2))
    assert cp.decay_exponent(kappa, lo) <= cp.decay_exponent(kappa, hi) + 1e-12


@given(kappas)
def test_lambda_at_zero(kappa):
    expected = (kappa - 4) / 8 if kappa > 4 else 0.0
    assert cp.decay_exponent(kappa, 0.0) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("kappa", [2.0, 6.0])
@pytest.mark.parametrize("s", [0.0, 1.0])
def test_eps_vanishes_on_fusion_rule(kappa, s):
    d = cp.fusion_dimension(kappa, s)
    assert cp.eigenvalue_eps(kappa, d, s) == pytest.approx(0.0, abs=1e-12)
    assert cp.SpinDimension(d, s).is_fusion_consistent(kappa)


def test_eps_examples():
    assert cp.eigenvalue_eps(6.0, 1.25, 0.0) == pytest.approx(-1.25, abs=1e-12)
    assert cp.eigenvalue_eps(6.0, 1.25, 0.0) == pytest.approx(-cp.exponent_bundle(6.0, 1.0).lam)
    assert cp.eigenvalue_eps(8.0 / 3.0, 0.0, 0.0) == pytest.approx(5.0 / 48.0, abs=1e-12)


@pytest.mark.parametrize("kappa,h", [(6.0, 0.0), (6.0, 1.0), (2.0, 0.7), (8.0, 2.0)])
def test_charge_balance_reproduces_two_Delta(kappa, h):
    q = cp.coulomb_charges(kappa)
    b = cp.exponent_bundle(kappa, h)
    alpha = 0.5 * cp.charge_balance(kappa, b.beta)
    assert alpha * (alpha - 2 * q.alpha0) == pytest.approx(b.two_Delta, abs=1e-10)


def test_charge_balance_at_zero_beta():
    q = cp.coulomb_charges(3.0)
    assert cp.charge_balance(3.0, 0.0) == pytest.approx(2 * q.alpha0 - q.beta_kappa)


def test_kappa_four_is_ordinary():
    b = cp.exponent_bundle(4.0, 0.0)
    assert b.delta_plus == 0.0 and b.lam == 0.0
    assert math.isfinite(cp.exponent_bundle(4.0, 1.0).lam)
