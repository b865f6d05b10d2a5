import math

import numpy as np
import pytest

from orbitlab.enumeration import Norm
from orbitlab.geometry import embed_K, in_K_Pinfty, make_a, make_a_infty, make_k_theta, v_plus
from orbitlab.quadrature import (
    DensityProfile,
    QuadratureSpec,
    bT_interval,
    bT_limit_check,
    brute_force_profile,
    eval_w_infty,
    eval_w_P0,
    eval_w_theta0,
    h_cartan_quadrature,
    h_stack,
    haar_sample_SO,
    sample_K,
    normalized_volume_constant,
    omega_antiderivative,
    sample_K_Pinfty,
    u_quadrature,
    vol_ball_mc,
    volume_constant,
)

SPEC = QuadratureSpec(mc_samples=20000)
FRO = Norm()


def boundary_profile(reps, g0, n):
    """Closed form for a left-skewed norm: w(k) ∝ ‖g0^{-1} k v+‖^{-(n-1)}, grid mean 1."""
    g0inv = np.linalg.inv(g0)
    raw = np.array([np.linalg.norm(g0inv @ k @ v_plus(n)) ** -(n - 1) for k in reps])
    return raw / raw.mean()


def test_haar_samples_are_rotations(rng):
    R = haar_sample_SO(4, rng, 200)
    assert np.allclose(np.swapaxes(R, 1, 2) @ R, np.eye(4), atol=1e-12)
    assert np.allclose(np.linalg.det(R), 1.0)
    # first-column mean vanishes for Haar measure
    assert np.abs(R[:, :, 0].mean(axis=0)).max() < 0.2


@pytest.mark.parametrize("r,n", [(2, 3), (2, 4), (3, 4)])
def test_K_Pinfty_samples(rng, r, n):
    for k in sample_K_Pinfty(r, n, rng, 10):
        assert in_K_Pinfty(k, r)


def test_omega_antiderivative():
    for kind, i, j, n in (("exp", 0, 0, 2), ("exp", 0, 0, 3), ("sc", 1, 1, 3), ("sc", 0, 2, 3), ("sc", 1, 0, 2)):
        F = omega_antiderivative(kind, i, j, n)
        s = np.linspace(0.1, 3, 5)
        h = 1e-6
        num = (F(s + h) - F(s - h)) / (2 * h)
        exact = np.exp((n - 1) * s) if kind == "exp" else np.sinh(s) ** i * np.cosh(s) ** j
        assert np.allclose(num, exact, rtol=1e-6)


def test_generic_quadratures_converge():
    # ∫_{H_{0,1}} cosh(t)^{-2} dh over t ∈ R equals 2
    res = h_cartan_quadrature(0, 1, lambda h: h[:, -1, -1] ** -2.0, SPEC, alpha=2.0)
    assert res.value == pytest.approx(2.0, rel=1e-6)
    # ∫_R (1+x²)^{-1} dx = π
    res = u_quadrature(2, lambda x: 1.0 / (1.0 + np.sum(x * x, axis=-1)), SPEC, alpha=1.0)
    assert res.value == pytest.approx(math.pi, rel=1e-6)
    with pytest.raises(ValueError):
        u_quadrature(2, lambda x: x[:, 0], SPEC, alpha=0.4)


@pytest.mark.parametrize(
    "n,kind,closed",
    [(2, "frobenius", math.pi), (3, "frobenius", math.pi / 2), (2, "max", 2 * math.pi)],
)
def test_volume_constants(n, kind, closed):
    c = volume_constant(n, Norm(kind), SPEC)
    assert c.value == pytest.approx(closed, rel=1e-6)
    v = vol_ball_mc(n, Norm(kind), 1000.0, SPEC) / 1000.0 ** (n - 1)
    assert v == pytest.approx(closed, rel=0.05)


def test_H_constants():
    assert volume_constant(2, FRO, SPEC, "H", 0).value == pytest.approx(math.pi, rel=1e-4)
    assert volume_constant(3, FRO, SPEC, "H", 1).value == pytest.approx(0.25, rel=1e-4)
    assert volume_constant(3, FRO, SPEC, "H", 0).value == pytest.approx(0.25, rel=1e-4)


def test_common_normalization():
    u = volume_constant(3, FRO, SPEC).value
    for i in (0, 1):
        h = normalized_volume_constant(3, FRO, i, SPEC).value
        assert h == pytest.approx(u, rel=0.05)


@pytest.mark.parametrize("H,n", [(("H", 0, 1), 2), (("U", 2), 2), (("H", 1, 1), 3)])
def test_bT_ratio(rng, H, n):
    for k in (np.eye(n + 1), embed_K(haar_sample_SO(n, rng))):
        rep = bT_limit_check(k, H, FRO, [1000.0], SPEC)
        assert 0.9 <= rep["rows"][-1]["ratio"] <= 1.1


def test_bT_interval_contains_sublevel():
    h = np.eye(3)
    ivs = bT_interval(np.eye(3), h, FRO, 50.0)
    assert len(ivs) == 1
    lo, hi = ivs[0]
    assert FRO(make_a(0.5 * (lo + hi))) <= 50
    assert FRO(make_a(hi)) == pytest.approx(50, rel=1e-6)


@pytest.mark.parametrize("r,n", [(2, 2), (1, 2), (2, 3), (3, 3)])
def test_frobenius_profiles_constant(r, n):
    p = eval_w_P0(r, n, np.eye(n + 1), FRO, 32, SPEC)
    assert np.all(np.abs(p.values - 1) <= 3 * p.std_errors + 1e-12)
    assert p.total == pytest.approx(1.0, abs=1e-6)


def test_frobenius_degenerate_profiles_constant():
    p = eval_w_infty(2, 3, np.eye(4), FRO, 32, SPEC)
    assert np.all(np.abs(p.values - 1) <= 3 * p.std_errors + 1e-12)
    q = eval_w_theta0(0.7, FRO, 64, SPEC)
    assert np.allclose(q.values, 1.0)
    for prof in (p, q):
        assert prof.total == pytest.approx(1.0, abs=1e-6)


def test_max_norm_profile_constant():
    p = eval_w_P0(2, 2, np.eye(3), Norm("max"), 32, SPEC)
    assert np.all(np.abs(p.values - 1) <= 3 * p.std_errors + 1e-9)


def test_skewed_profile_against_oracle():
    g0 = make_k_theta(0.4) @ make_a(0.6)
    for kind in ("skewed", "left-skewed"):
        norm = Norm(kind, g0)
        p = eval_w_P0(2, 2, g0, norm, 64, SPEC)
        vals, errs = brute_force_profile(2, 2, g0, norm, 64, 10 * SPEC.mc_samples, seed=1)
        sigma = np.sqrt(p.std_errors**2 + errs**2)
        assert np.all(np.abs(p.values - vals) <= 3 * sigma + 1e-9)
        assert p.total == pytest.approx(1.0, abs=1e-6)


def test_left_skewed_profile_closed_form():
    g0 = make_k_theta(0.4) @ make_a(0.6)
    norm = Norm("left-skewed", g0)
    p = eval_w_P0(2, 2, g0, norm, 64, SPEC)
    assert np.ptp(p.values) > 0.5
    assert np.allclose(p.values, boundary_profile(p.reps, g0, 2), rtol=1e-8)
    q = eval_w_theta0(0.7, norm, 64, SPEC)
    assert np.allclose(q.values, boundary_profile(q.reps, g0, 2), rtol=1e-8)


def test_left_skewed_degenerate_n3(rng):
    g0 = embed_K(haar_sample_SO(3, rng)) @ make_a(0.5, 3)
    norm = Norm("left-skewed", g0)
    p = eval_w_infty(2, 3, np.eye(4), norm, 32, SPEC)
    assert np.allclose(p.values, boundary_profile(p.reps, g0, 3), rtol=1e-6)
    assert p.total == pytest.approx(1.0, abs=1e-6)


def test_profile_preconditions():
    with pytest.raises(ValueError):
        eval_w_P0(2, 2, _to_degenerate(), FRO, 8, SPEC)
    with pytest.raises(ValueError):
        eval_w_infty(2, 2, np.eye(3), FRO, 8, SPEC)


def _to_degenerate():
    # maps span{e1, e2} onto span{v+, e2}
    m = np.eye(3)
    m[2, 0] = 1.0
    return m


def test_profile_cdf_and_json():
    p = eval_w_theta0(0.3, Norm("left-skewed", make_a(0.8)), 64, SPEC)
    th = np.linspace(0, 2 * np.pi, 200)
    c = p.cdf(th)
    assert c[0] == pytest.approx(0.0, abs=1e-12) and c[-1] == pytest.approx(1.0)
    assert np.all(np.diff(c) >= -1e-15)
    q = DensityProfile.from_json(p.to_json())
    assert np.array_equal(q.values, p.values) and np.array_equal(q.cdf(th), c)


def test_spec_round_trip():
    s = QuadratureSpec(mc_samples=123, seed=9)
    assert QuadratureSpec.from_json(s.to_json()) == s


@pytest.mark.parametrize("n", [2, 3])
def test_doubling_law(n):
    ratio = vol_ball_mc(n, FRO, 2000.0, SPEC) / vol_ball_mc(n, FRO, 1000.0, SPEC)
    assert 0.95 * 2 ** (n - 1) <= ratio <= 1.05 * 2 ** (n - 1)


def _random_H(rng, i, j, N, tmax=6.0):
    def so(m):
        return haar_sample_SO(m, rng, N) if m > 1 else np.ones((N, m, m))

    t = rng.uniform(-tmax, tmax, N) if j > 0 else np.zeros(N)
    return h_stack(i, j, so(i + 1), so(j), t, so(j))


@pytest.mark.parametrize("i,j", [(0, 2), (1, 1), (2, 0), (0, 1)])
def test_norm_growth_bounds(rng, i, j):
    """e^{|s|}‖h‖ ≤ C‖k a(s) h‖ and ‖h‖ ≤ C‖a(∞)h‖ with one C over random (k, s, h)."""
    n = i + j + 1
    N = 10_000
    h = _random_H(rng, i, j, N)
    assert FRO(h).max() <= np.exp(6) * (1 + 1e-9) + n
    k = sample_K(n, rng, N)
    s = rng.uniform(-8, 8, N)
    A = np.stack([make_a(x, n) for x in s])
    r1 = np.exp(np.abs(s)) * FRO(h) / FRO(k @ A @ h)
    r5 = FRO(h) / FRO(make_a_infty(1, n)[None] @ h)
    assert r1.max() <= 2.01
    assert r5.max() <= 2.01


def test_grid_refinement_stability():
    g0 = make_k_theta(0.4) @ make_a(0.6)
    norm = Norm("skewed", g0)
    coarse = eval_w_P0(2, 2, g0, norm, 32, SPEC)
    fine = eval_w_P0(2, 2, g0, norm, 64, QuadratureSpec(mc_samples=2 * SPEC.mc_samples))
    assert np.allclose(fine.grid[::2], coarse.grid)
    sigma = np.sqrt(coarse.std_errors**2 + fine.std_errors[::2] ** 2)
    assert np.all(np.abs(coarse.values - fine.values[::2]) <= 3 * sigma + 1e-9)


def test_profiles_deterministic():
    g0 = make_k_theta(0.4) @ make_a(0.6)
    norm = Norm("skewed", g0)
    a = eval_w_P0(2, 2, g0, norm, 16, SPEC)
    b = eval_w_P0(2, 2, g0, norm, 16, SPEC)
    assert a.to_json() == b.to_json()
    assert np.all(a.values >= 0)


def test_bT_monotone_in_T(rng):
    k = embed_K(haar_sample_SO(2, rng))
    h = _random_H(rng, 0, 1, 1, tmax=2.0)[0]
    small = bT_interval(k, h, FRO, 50.0)
    big = bT_interval(k, h, FRO, 200.0)
    for lo, hi in small:
        assert any(a <= lo + 1e-9 and hi <= b + 1e-9 for a, b in big)
