import numpy as np
import pytest

from orbitlab.enumeration import (
    SS_CONJUGATOR,
    SS_FORM,
    BallEnumeration,
    GammaSpec,
    Norm,
    enumerate_ball,
    enumerate_ball_bfs,
    enumerate_ball_direct,
    enumerate_HZ,
    growth_report,
    sargent_shapira_gamma,
)
from orbitlab.geometry import gram, is_group_element, make_a, make_k_theta

PHI = GammaSpec()
FRO = Norm()

# #Γ_T for Φ(SL(2,Z)) from a plain quadruple loop over SL(2,Z) (independent of the enumerator)
FROZEN_FRO = {10: 26, 20: 66, 25: 66, 30: 90, 40: 130, 50: 154, 100: 290}
FROZEN_MAX = {10: 66, 20: 130}
# #Γ_T for SO(x1²+x2²+x3²−x4²)°(Z) from a column-wise brute force over Z^4
FROZEN_O31 = {3: 24, 4: 216, 5: 216}


@pytest.mark.parametrize("T", sorted(FROZEN_FRO))
def test_direct_counts_frobenius(T):
    assert enumerate_ball_direct(PHI, FRO, T).count == FROZEN_FRO[T]


@pytest.mark.parametrize("T", sorted(FROZEN_MAX))
def test_direct_counts_max(T):
    assert enumerate_ball_direct(PHI, Norm("max"), T).count == FROZEN_MAX[T]


@pytest.mark.parametrize("T", sorted(FROZEN_O31))
def test_integer_orthogonal_counts(T):
    spec = GammaSpec("int-orth", np.diag([1, 1, 1, -1]))
    ball = enumerate_ball(spec, FRO, T)
    assert ball.count == FROZEN_O31[T]
    J = gram(3)
    for g in ball.mats:
        assert np.array_equal(g.T @ J @ g, J)
        assert is_group_element(g)


def test_small_T():
    assert enumerate_ball_direct(PHI, FRO, 1.0).count == 0
    ball = enumerate_ball_direct(PHI, FRO, np.sqrt(3))
    # identity and k_π: both have Frobenius norm √3
    assert ball.count == 2
    assert any(np.allclose(g, np.eye(3)) for g in ball.mats)
    assert any(np.allclose(g, make_k_theta(np.pi)) for g in ball.mats)


def test_bfs_matches_direct():
    d = enumerate_ball_direct(PHI, FRO, 30)
    b = enumerate_ball_bfs(PHI, FRO, 30, margin=4)
    assert d.keys() == b.keys()


def test_bfs_trivial_generators():
    spec = GammaSpec("phi-sl2z", generators=((np.eye(3, dtype=np.int64), 1),))
    assert enumerate_ball_bfs(spec, FRO, 10).count == 1


def test_monotone_and_norm_bound():
    small, big = enumerate_ball(PHI, FRO, 20), enumerate_ball(PHI, FRO, 40)
    assert small.keys() <= big.keys()
    assert np.all(FRO(big.mats) <= 40 * (1 + 1e-12))
    assert big.restrict(20, FRO).keys() == small.keys()


def test_inverse_closed():
    ball = enumerate_ball(PHI, FRO, 50)
    keys = ball.keys()
    inv = BallEnumeration(50, ball.exact, ball.den, np.linalg.inv(ball.mats))
    assert np.allclose(FRO(inv.mats), FRO(ball.mats))
    assert len(keys) == ball.count


@pytest.mark.parametrize("T", [20, 40, 50, 100])
def test_ratio_growth(T):
    r = enumerate_ball(PHI, FRO, 2 * T).count / enumerate_ball(PHI, FRO, T).count
    assert 1.6 <= r <= 2.4


def test_sargent_shapira_group():
    g = sargent_shapira_gamma()
    # M^T Q M is a scalar multiple of the standard Gram matrix
    assert np.allclose(SS_CONJUGATOR.T @ SS_FORM @ SS_CONJUGATOR, -gram(2))
    ball = enumerate_ball(g, FRO, 50)
    M, Minv = SS_CONJUGATOR, np.linalg.inv(SS_CONJUGATOR)
    for m in ball.mats:
        z = M @ m @ Minv
        assert np.allclose(z, np.round(z), atol=1e-9)
        zi = np.round(z).astype(np.int64)
        assert np.array_equal(zi.T @ SS_FORM @ zi, SS_FORM)


def test_generator_list_requires_explicit():
    with pytest.raises(ValueError):
        GammaSpec("int-orth", np.diag([1, 1, 1, -1])).generator_list()
    with pytest.raises(ValueError):
        GammaSpec("conj-int-orth", SS_FORM, np.eye(3))


def test_HZ():
    pts = {tuple(v) for v in enumerate_HZ(30)}
    assert (1, 1, 1) in pts and (1, -1, 1) in pts
    for x, y, z in pts:
        assert 2 * x * z - y * y == 1
        assert (z, y, x) in pts and (x, -y, z) in pts
    assert (1, 1, 1) not in {tuple(v) for v in enumerate_HZ(1.5)}


def test_norm_properties(rng):
    g0 = make_k_theta(0.3) @ make_a(0.5)
    for norm in (FRO, Norm("max"), Norm("skewed", g0), Norm("left-skewed", g0)):
        A, B = rng.normal(size=(2, 3, 3))
        assert norm(A + B) <= norm(A) + norm(B) + 1e-12
        assert norm(2.5 * A) == pytest.approx(2.5 * norm(A))
        assert norm(A) > 0
        assert Norm.from_json(norm.to_json())(A) == norm(A)


def test_growth_report_synthetic():
    rep = growth_report({T: round(3.7 * T) for T in (25, 50, 100, 200)}, 2, lambda T: T)
    assert rep["top3_variation"] < 0.02
    assert rep["exponent"] == pytest.approx(1.0, abs=0.01)
    with pytest.raises(ValueError):
        growth_report({1: 1, 2: 2}, 2, lambda T: T)


def test_growth_exponent():
    counts = {T: enumerate_ball(PHI, FRO, T).count for T in (25, 50, 100, 200)}
    rep = growth_report(counts, 2, lambda T: T)
    assert 0.85 <= rep["exponent"] <= 1.15
