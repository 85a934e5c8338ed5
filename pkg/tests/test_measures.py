import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_measure
from seda.measures import (
    MpConvergenceError,
    SpectralMeasure,
    build_projected_measure,
    build_spectral_measure,
    closed_form_m1,
    closed_form_t1,
    closed_form_t2,
    compute_functionals,
    refine_mp,
    solve_mp,
)

# yλm² + (1 − y + λ)m − 1 = 0 for H = δ₁, positive root
GOLDEN = (-1 + np.sqrt(5)) / 2
HALF_Y = -1.5 + np.sqrt(4.25)


def quadratic_m(y, lam):
    a, b = y * lam, 1 - y + lam
    return (-b + np.sqrt(b * b + 4 * a)) / (2 * a)


def test_build_identical_values():
    H = build_spectral_measure([1, 1, 1])
    assert H.atoms == [(1.0, 1.0)]


def test_build_case1_atoms():
    d = np.ones(100)
    d[[0, 1, -1]] = 0.01, 0.05, 10.0
    H = build_spectral_measure(d)
    np.testing.assert_allclose(H.locations, [0.01, 0.05, 1.0, 10.0])
    np.testing.assert_allclose(H.masses, [0.01, 0.01, 0.97, 0.01], atol=1e-15)


def test_build_counting():
    H = build_spectral_measure([3, 1, 1, 2, 3])
    np.testing.assert_allclose(H.locations, [1, 2, 3])
    np.testing.assert_allclose(H.masses, [0.4, 0.2, 0.4])


@pytest.mark.parametrize("bad", [[], [1.0, -0.5], [1.0, np.nan], [np.inf]])
def test_build_rejects(bad):
    with pytest.raises(ValueError):
        build_spectral_measure(bad)


def test_near_duplicates_merge():
    H = build_spectral_measure([1.0, 1.0 + 1e-13, 2.0, 2.0])
    assert len(H) == 2
    np.testing.assert_allclose(H.masses, [0.5, 0.5])


def test_mass_sum_enforced():
    with pytest.raises(ValueError, match="sum"):
        SpectralMeasure.from_atoms([1, 2], [0.5, 0.6])


def test_projected_point_mass_on_eigvec():
    s = np.array([5.0, 2.0, 1.0])
    V = np.linalg.qr(np.random.default_rng(1).standard_normal((3, 3)))[0]
    G, mns = build_projected_measure(s, V, 3 * V[:, 1], np.zeros(3))
    np.testing.assert_allclose(G.masses[G.locations == 2.0], [1.0])
    assert mns == pytest.approx(9 / 2)


def test_projected_identity():
    G, mns = build_projected_measure(np.ones(3), np.eye(3), [1, 0, 0], [0, 0, 0])
    assert G.atoms == [(1.0, 1.0)]
    assert mns == 1.0


def test_projected_hand_example():
    G, mns = build_projected_measure(np.array([4.0, 1.0, 1.0]), np.eye(3), [2, 0, 1], [0, 0, 0])
    assert mns == pytest.approx(2.0)
    np.testing.assert_allclose(G.locations, [1.0, 4.0])
    np.testing.assert_allclose(G.masses, [0.5, 0.5])


def test_projected_rejects():
    with pytest.raises(ValueError, match="singular"):
        build_projected_measure([1.0, 0.0], np.eye(2), [1, 1], [0, 0])
    with pytest.raises(ValueError, match="mu1 == mu2"):
        build_projected_measure([1.0, 1.0], np.eye(2), [1, 1], [1, 1])


@pytest.mark.parametrize("y,lam,expected", [(1.0, 1.0, GOLDEN), (0.5, 1.0, HALF_Y)])
def test_mp_quadratic_examples(y, lam, expected):
    sol = solve_mp(build_spectral_measure([1.0]), y, lam)
    assert sol.m == pytest.approx(expected, abs=1e-12)
    assert abs(sol.residual) <= 1e-12


def test_mp_golden_value():
    assert solve_mp(build_spectral_measure([1.0]), 1.0, 1.0).m == pytest.approx(0.618034, abs=1e-6)


def test_mp_nonconvergence_carries_residual():
    with pytest.raises(MpConvergenceError) as info:
        solve_mp(build_spectral_measure([1.0, 3.0]), 0.7, 0.3, max_iter=1)
    assert abs(info.value.residual) > 1e-12


@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(1e-3, 10), y=st.floats(0.1, 5))
def test_mp_residual_and_constraints(seed, lam, y):
    H = random_measure(np.random.default_rng(seed))
    sol = solve_mp(H, y, lam)
    assert abs(sol.residual) <= 1e-12
    assert abs(sol.m - H.integrate(1 / (H.locations * sol.k + lam))) <= 1e-12
    assert sol.k >= 0
    assert sol.k == pytest.approx(1 - y + y * lam * sol.m, abs=1e-12)
    assert 0 < sol.m <= 1 / lam
    assert sol.m_prime >= 0


def _mp_reference(H, y, lam):
    # 50-digit bisection on the original equation in m
    with mpmath.workdps(50):
        y, lam = mpmath.mpf(y), mpmath.mpf(lam)
        atoms = [(mpmath.mpf(s), mpmath.mpf(w)) for s, w in H.atoms]

        def g(m):
            k = 1 - y + y * lam * m
            return sum(w / (s * k + lam) for s, w in atoms) - m

        lo, hi = max(mpmath.mpf(0), (y - 1) / (y * lam)), 1 / lam
        for _ in range(200):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if g(mid) > 0 else (lo, mid)
        return float((lo + hi) / 2)


@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(1e-3, 10), y=st.floats(0.1, 5))
@settings(max_examples=25)
def test_mp_matches_high_precision(seed, lam, y):
    H = random_measure(np.random.default_rng(seed), k=5)
    ref = _mp_reference(H, y, lam)
    assert solve_mp(H, y, lam).m == pytest.approx(ref, rel=1e-12, abs=1e-12)


@given(seed=st.integers(0, 2**32 - 1), y=st.floats(0.1, 5))
def test_mp_decreasing_in_lambda(seed, y):
    H = random_measure(np.random.default_rng(seed))
    ms = [solve_mp(H, y, lam).m for lam in np.logspace(-3, 1, 15)]
    assert np.all(np.diff(ms) < 0)


@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(0.01, 10), y=st.floats(0.1, 5))
def test_mp_derivative_matches_finite_difference(seed, lam, y):
    H = random_measure(np.random.default_rng(seed))
    h = 1e-6
    # m' is d/dz at z = -lam, i.e. -d/dlam
    fd = (solve_mp(H, y, lam - h).m - solve_mp(H, y, lam + h).m) / (2 * h)
    assert solve_mp(H, y, lam).m_prime == pytest.approx(fd, rel=1e-6)


@given(seed=st.integers(0, 2**32 - 1), lam=st.floats(1e-3, 10), y=st.floats(0.1, 5))
def test_closed_forms_agree(seed, lam, y):
    rng = np.random.default_rng(seed)
    H = random_measure(rng)
    f = compute_functionals(H, H, 1.0, y, lam, check=False)
    ref = refine_mp(H, f.mp)
    # T2 grows like 1/k^3 as lam -> 0 with y > 1, so the bound scales with it
    for val, closed in ((f.t1, closed_form_t1), (f.t2, closed_form_t2), (f.m1, closed_form_m1)):
        assert abs(val - float(closed(ref))) <= 1e-8 * max(1.0, abs(val))


@given(seed=st.integers(0, 2**32 - 1), lam=st.sampled_from([0.1, 1.0, 5.0]), y=st.sampled_from([0.5, 1.5]))
def test_closed_forms_plain_float(seed, lam, y):
    H = random_measure(np.random.default_rng(seed))
    f = compute_functionals(H, H, 1.0, y, lam, check=False)
    assert abs(f.t1 - closed_form_t1(f.mp)) <= 1e-8
    assert abs(f.t2 - closed_form_t2(f.mp)) <= 1e-8
    assert abs(f.m1 - closed_form_m1(f.mp)) <= 1e-8


def test_functionals_g_equals_h():
    H = random_measure(np.random.default_rng(3))
    f = compute_functionals(H, H, 1.0, 0.7, 0.4)
    assert f.u1 == f.t1
    assert f.u2 == f.t2
    assert f.t1 > 0 and f.t2 > 0


@pytest.mark.parametrize("y,lam", [(0.5, 0.1), (1.5, 1.0), (0.3, 5.0)])
def test_point_mass_t1_is_m(y, lam):
    f = compute_functionals(build_spectral_measure([1.0]), build_spectral_measure([1.0]), 1.0, y, lam)
    assert f.t1 == pytest.approx(f.mp.m, abs=1e-14)


def test_zero_point_mass_m1():
    H = build_spectral_measure([0.0])
    f = compute_functionals(H, build_spectral_measure([1.0]), 1.0, 0.5, 1.0, check=False)
    assert f.m1 == 0.0


def test_u1_bounded_by_norm():
    H = random_measure(np.random.default_rng(8))
    G = random_measure(np.random.default_rng(9))
    f = compute_functionals(H, G, 3.0, 0.5, 0.2)
    k = f.mp.scale
    assert 0 <= f.u1 <= 3.0 / k + 1e-12
    assert f.u2 >= 0
