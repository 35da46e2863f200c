import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radsle.cft_params import DomainError
from radsle.driving import deterministic_path, make_grid, sample_path, spin_martingale_check
from radsle.stats import chunk_ranges, estimates_from_sums


def test_reproducible_and_immutable():
    a = sample_path(6.0, 1.0, 1e-2, 11, 4)
    b = sample_path(6.0, 1.0, 1e-2, 11, 4)
    np.testing.assert_array_equal(a.xi, b.xi)
    assert a.xi[0] == 0.0
    with pytest.raises(ValueError):
        a.xi[1] = 0.0


def test_distinct_sample_indices():
    a = sample_path(6.0, 1.0, 1e-2, 11, 4)
    b = sample_path(6.0, 1.0, 1e-2, 11, 5)
    assert not np.array_equal(a.xi, b.xi)


def test_increment_variance():
    dt = 1e-2
    inc = np.concatenate([sample_path(3.0, 1.0, dt, 2, i).increments() for i in range(400)])
    # the sample variance of 40000 Gaussians has relative sd about 0.7%
    assert inc.var() / (3.0 * dt) == pytest.approx(1.0, abs=0.03)
    assert abs(inc.mean()) < 4 * math.sqrt(3.0 * dt / inc.size)


def test_zero_kappa_is_zero_driver():
    assert np.all(sample_path(0.0, 1.0, 0.1, 1, 0).xi == 0.0)


@pytest.mark.parametrize("kappa,dt", [(-1.0, 0.1), (float("nan"), 0.1), (1.0, 0.0), (1.0, 2.0)])
def test_bad_arguments(kappa, dt):
    with pytest.raises(DomainError):
        sample_path(kappa, 1.0, dt, 1, 0)


@given(st.floats(0.05, 5.0), st.floats(1e-3, 0.05))
@settings(max_examples=40, deadline=None)
def test_grid_ends_at_t_max(t_max, dt):
    t = make_grid(t_max, dt)
    assert t[0] == 0 and t[-1] == t_max
    assert np.all(np.diff(t) > 0) and np.all(np.diff(t) <= dt * (1 + 1e-9))


def test_left_held_lookup():
    p = deterministic_path("linear", 1.0, 0.25, rate=2.0)
    assert p.xi_at(0.3) == pytest.approx(0.5)
    assert p.xi_at(0.5) == pytest.approx(1.0)
    assert p.index_at(1.0) == 4


@pytest.mark.parametrize("kappa,s,times", [(2.0, 1.0, [0.5, 1.0]), (6.0, 2.0, [0.25])])
def test_spin_martingale(kappa, s, times):
    for re, im in spin_martingale_check(kappa, s, times, 20000, seed=8):
        assert re.within(1.0, 4.0)
        assert im.within(0.0, 4.0)


def test_spin_martingale_independent_of_workers():
    a = spin_martingale_check(2.0, 1.0, [0.5], 5000, seed=3, workers=1)
    b = spin_martingale_check(2.0, 1.0, [0.5], 5000, seed=3, workers=2)
    assert a[0][0].mean == b[0][0].mean


def test_estimates_and_chunks():
    x = np.arange(10.0)
    (e,) = estimates_from_sums(np.array([x.sum()]), np.array([(x * x).sum()]), x.size)
    assert e.mean == pytest.approx(x.mean())
    assert e.stderr == pytest.approx(x.std(ddof=1) / math.sqrt(x.size))
    assert chunk_ranges(5000, 2048) == [(0, 2048), (2048, 2048), (4096, 904)]
