"""Predicted limit laws for orbit averages, specialness of degenerate planes, samplers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .enumeration import GammaSpec, Norm, enumerate_ball
from .geometry import (
    _complete_to_rotation,
    degenerate_subspaces,
    embed_K,
    gram,
    make_k_theta,
    phi_inverse,
    rep_rho_infty_theta,
    sl2_kappa,
)
from .lattices import (
    CLASS_TOL,
    HomothetyClass,
    OrthoPair,
    canonical_class,
    null_direction,
    shape_from_bases,
    span_signature,
    subspace_angle,
    x2_from_coords,
)
from .quadrature import DensityProfile, QuadratureSpec, eval_w_infty, eval_w_P0, eval_w_theta0

CUSP_Y = 50.0
N_MAX = 1000
MATCH_TOL = 1e-8

CASES = ("nondeg", "deg-high", "deg-generic-2d", "special")


@dataclass
class SpecialVerdict:
    special: bool
    packet: list[HomothetyClass]
    n_max: int

    @property
    def m(self) -> int:
        return len(self.packet) if self.special else 0

    def to_json(self) -> dict:
        if self.special:
            return {"outcome": "special", "m": self.m, "packet": [c.to_json() for c in self.packet]}
        return {"outcome": "not-special-up-to", "n_max": self.n_max}


@dataclass
class PredictedLaw:
    case: str
    profile: DensityProfile
    n: int
    r: int
    norm: Norm
    g0: np.ndarray | None = None
    theta0: float | None = None
    verdict: SpecialVerdict | None = None
    dual: bool = False
    notes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}")
        if self.case == "special" and (self.n != 2 or self.verdict is None or not self.verdict.special):
            raise ValueError("a special extension needs n = 2 and a nonempty packet")

    @property
    def packet(self) -> list[HomothetyClass]:
        return self.verdict.packet if self.case == "special" else []

    @property
    def m(self) -> int:
        return len(self.packet)

    def to_json(self) -> dict:
        return {
            "case": self.case,
            "n": self.n,
            "r": self.r,
            "norm": self.norm.to_json(),
            "theta0": self.theta0,
            "dual": self.dual,
            "verdict": None if self.verdict is None else self.verdict.to_json(),
            "profile": self.profile.to_json(),
            "notes": self.notes,
        }


class StartError(ValueError):
    """A starting pair outside the conventions the limit laws cover."""


# ---------------------------------------------------------------- base points


def _complete_frame(F: np.ndarray) -> np.ndarray:
    """Element of SO(m) whose first p columns span the same space as the orthonormal F."""
    m, p = F.shape
    if p == 0:
        return np.eye(m)
    Q, _ = np.linalg.qr(np.column_stack([F, np.eye(m)]))
    Q = Q[:, :m]
    Q[:, :p] = F
    if np.linalg.det(Q) < 0:
        Q[:, -1] = -Q[:, -1]
    return Q


def witt_base_point(B: np.ndarray) -> np.ndarray:
    """g0 ∈ SO(n,1)° with g0·span{e_1..e_r} = span(B), for positive definite span(B)."""
    B = np.asarray(B, dtype=float)
    n = B.shape[0] - 1
    r = B.shape[1]
    J = gram(n)
    cols = []
    for v in B.T:
        w = v.copy()
        for f in cols:
            w = w - (f @ J @ w) * f
        qw = w @ J @ w
        if qw <= 1e-12 * max(1.0, v @ v):
            raise StartError("span is not positive definite")
        cols.append(w / math.sqrt(qw))
    F = np.column_stack(cols)
    # q-orthogonal complement, diagonalized
    _, _, Vt = np.linalg.svd((J @ F).T)
    N = Vt[r:].T
    lam, V = np.linalg.eigh(N.T @ J @ N)
    N = N @ V / np.sqrt(np.abs(lam))
    order = np.argsort(-lam)
    g0 = np.column_stack([F, N[:, order]])
    if g0[-1, -1] < 0:
        g0[:, -1] = -g0[:, -1]
    if np.linalg.det(g0) < 0:
        g0[:, 0] = -g0[:, 0]
    return g0


def degenerate_base_point(B: np.ndarray) -> np.ndarray:
    """k ∈ K with k·span{v+, e_2..e_r} = span(B) for a degenerate span(B)."""
    B = np.asarray(B, dtype=float)
    n = B.shape[0] - 1
    r = B.shape[1]
    ell = null_direction(B)
    ell = ell / ell[-1]
    u = ell[:n] / np.linalg.norm(ell[:n])
    k = embed_K(_complete_to_rotation(u))
    Bp = k.T @ B
    W = Bp[1:n]
    U, s, _ = np.linalg.svd(W, full_matrices=False)
    F = U[:, : r - 1]
    c = _complete_frame(F)
    m = np.eye(n + 1)
    m[1:n, 1:n] = c
    return k @ m


# ---------------------------------------------------------------- specialness


def _pullback_generators(gamma: GammaSpec, theta0: float, ball_T: float = 8.0) -> list[np.ndarray]:
    """SL(2,R) lifts g with k_θ0 Φ(g) k_θ0^{-1} running over generators of Γ and inverses."""
    try:
        gens = [gamma.to_float(num, den) for num, den in gamma.generator_list()]
    except ValueError:
        # no presentation on record: a small ball of Γ generates what we need to witness
        ball = enumerate_ball(gamma, Norm("frobenius"), ball_T)
        gens = list(ball.mats)
    k = make_k_theta(theta0)
    out = []
    for G in gens:
        for H in (G, np.linalg.inv(G)):
            out.append(phi_inverse(k.T @ H @ k))
    return out


class _ClassSet:
    """Homothety classes with tolerance lookup."""

    def __init__(self):
        self.items: list[HomothetyClass] = []
        self._stack = None

    def find(self, c: HomothetyClass) -> int:
        if not self.items:
            return -1
        if self._stack is None or len(self._stack) != len(self.items):
            self._stack = np.stack([x.canon for x in self.items])
        d = np.abs(self._stack - c.canon[None]).max(axis=(1, 2))
        q = int(np.argmin(d))
        return q if d[q] < CLASS_TOL * 10 else -1

    def add(self, c: HomothetyClass) -> bool:
        if self.find(c) >= 0:
            return False
        self.items.append(c)
        return True


def _check_in_plane(B: np.ndarray, theta0: float, tol: float = 1e-9) -> None:
    P1, _ = degenerate_subspaces(2, 2)
    P = make_k_theta(theta0) @ P1
    Q, _ = np.linalg.qr(P)
    resid = B - Q @ (Q.T @ B)
    if np.abs(resid).max() > tol * max(1.0, np.abs(B).max()):
        raise ValueError("lattice is not contained in the degenerate plane at θ0")


def detect_special(L, theta0: float, gamma: GammaSpec, n_max: int = N_MAX) -> SpecialVerdict:
    """Close the class of L under ρ^∞_θ0 of the pulled-back generators, up to n_max classes."""
    B = L.canon if isinstance(L, HomothetyClass) else np.asarray(getattr(L, "basis", L), dtype=float)
    if B.shape != (3, 2):
        raise ValueError("specialness is defined for rank-2 lattices in R^3")
    _check_in_plane(B, theta0)
    gens = [rep_rho_infty_theta(theta0, g) for g in _pullback_generators(gamma, theta0)]
    seen = _ClassSet()
    start = canonical_class(B)
    seen.add(start)
    frontier = [start]
    while frontier:
        nxt = []
        for c in frontier:
            for R in gens:
                d = canonical_class(R @ c.canon)
                if seen.add(d):
                    if len(seen.items) > n_max:
                        return SpecialVerdict(False, [], n_max)
                    nxt.append(d)
        frontier = nxt
    return SpecialVerdict(True, seen.items, n_max)


def m_extension_curve(packet: list[HomothetyClass], theta0: float, theta: float) -> list[HomothetyClass]:
    """The m classes k_θ·[ρ^∞_θ0(κ_{-θ/2}) Λ_i] over the angle θ."""
    R = make_k_theta(theta) @ rep_rho_infty_theta(theta0, sl2_kappa(-theta / 2))
    return [canonical_class(R @ c.canon) for c in packet]


@dataclass
class MultiSectionResult:
    ok: bool
    theta: float
    index: int
    distance: float


def multi_section_check(gamma_el: np.ndarray, L, packet: list[HomothetyClass], theta0: float, tol: float = MATCH_TOL) -> MultiSectionResult:
    """Locate γ·[Λ] on the multi-section: θ from its plane, i by matching classes."""
    B = L.canon if isinstance(L, HomothetyClass) else np.asarray(getattr(L, "basis", L), dtype=float)
    img = np.asarray(gamma_el, dtype=float) @ B
    theta = (subspace_angle(img) - theta0) % (2 * np.pi)
    c = canonical_class(img)
    curve = m_extension_curve(packet, theta0, theta)
    dist = [float(np.abs(x.canon - c.canon).max()) for x in curve]
    i = int(np.argmin(dist))
    return MultiSectionResult(dist[i] <= tol, theta, i, dist[i])


# ---------------------------------------------------------------- classification


def classify_start(
    p: OrthoPair,
    gamma: GammaSpec,
    norm: Norm | None = None,
    spec: QuadratureSpec | None = None,
    grid: int | None = None,
    n_max: int = N_MAX,
) -> PredictedLaw:
    """Route a starting pair to the limit law that governs its norm-ball averages."""
    norm = norm or Norm("frobenius")
    spec = spec or QuadratureSpec()
    n, r = p.n, p.r
    if gamma.n != n:
        raise StartError(f"group acts on R^{gamma.n + 1}, pair lives in R^{n + 1}")
    sig1 = span_signature(p.first.canon)
    sig2 = span_signature(p.second.canon)
    notes = []
    if sig1 == "lorentzian":
        if sig2 != "positive":
            raise StartError(f"mixed signature pair ({sig1}, {sig2})")
        p = OrthoPair(p.second, p.first, not p.dual)
        n, r = p.n, p.r
        sig1 = "positive"
        notes.append("pair reordered so the first span is positive definite")
    if p.dual and not norm.sign_symmetric:
        raise StartError(
            "the first lattice is moved by g* = (g^T)^{-1}; the limit law then needs ‖g*‖ = ‖g‖, "
            f"which fails for the {norm.kind} norm"
        )
    if grid is None:
        grid = 64 if n == 2 else 16
    if sig1 == "positive":
        g0 = witt_base_point(p.first.canon)
        prof = eval_w_P0(r, n, g0, norm, grid, spec)
        return PredictedLaw("nondeg", prof, n, r, norm, g0=g0, dual=p.dual, notes=notes)
    # degenerate
    if n >= 3:
        g0 = degenerate_base_point(p.first.canon)
        prof = eval_w_infty(r, n, g0, norm, grid, spec)
        return PredictedLaw("deg-high", prof, n, r, norm, g0=g0, notes=notes)
    if r != 2:
        raise StartError("for n = 2 the degenerate member must be the plane (r = 2); a null line start is not covered")
    theta0 = subspace_angle(p.first.canon)
    prof = eval_w_theta0(theta0, norm, grid, spec)
    verdict = detect_special(p.first, theta0, gamma, n_max)
    case = "special" if verdict.special else "deg-generic-2d"
    return PredictedLaw(case, prof, n, r, norm, g0=make_k_theta(theta0), theta0=theta0, verdict=verdict, notes=notes)


# ---------------------------------------------------------------- samplers


def sample_x2(N: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Points of the standard SL(2,Z) domain with density (3/π) dx dy / y².

    Below y = CUSP_Y: uniform x, y by inverse CDF of y^{-2}, rejected outside
    the unit circle.  Above it the exact cusp mass 3/(π·CUSP_Y) is sampled
    directly as y = CUSP_Y / U.
    """
    p_cusp = 3.0 / (math.pi * CUSP_Y)
    cusp = rng.random(N) < p_cusp
    x = np.empty(N)
    y = np.empty(N)
    nc = int(cusp.sum())
    x[cusp] = rng.random(nc) - 0.5
    y[cusp] = CUSP_Y / (1.0 - rng.random(nc))
    need = np.flatnonzero(~cusp)
    y0 = math.sqrt(3) / 2
    a, b = 1 / y0, 1 / CUSP_Y
    while need.size:
        m = need.size
        xs = rng.random(m) - 0.5
        ys = 1.0 / (a - (a - b) * rng.random(m))
        ok = xs * xs + ys * ys >= 1.0
        x[need[ok]] = xs[ok]
        y[need[ok]] = ys[ok]
        need = need[~ok]
    return x, y


def _theta_from_profile(prof: DensityProfile, N: int, rng) -> np.ndarray:
    """Inverse CDF of the piecewise linear CDF used by DensityProfile.cdf."""
    m = len(prof.grid)
    step = 2 * np.pi / m
    edges = prof.grid[0] - step / 2 + step * np.arange(m + 1)
    cum = np.concatenate([[0.0], np.cumsum(prof.values * prof.weights)])
    cum /= cum[-1]
    return np.interp(rng.random(N), cum, edges) % (2 * np.pi)


def sample_predicted(law: PredictedLaw, N: int, seed: int) -> dict:
    """N draws from the predicted law.

    Returns arrays ``theta`` (n = 2) or ``rep`` (index into the profile's
    representatives, drawn with probability ∝ w), ``fiber_x``/``fiber_y`` for a
    rank-2 fiber component (None when there is none or it has rank >= 3), the
    Euclidean shape ``shape_x``/``shape_y`` of that component, and
    ``packet_index`` for special extensions.
    """
    rng = np.random.default_rng([seed, 7])
    prof = law.profile
    out: dict = {"theta": None, "rep": None, "fiber_x": None, "fiber_y": None, "shape_x": None, "shape_y": None, "packet_index": None}
    if law.n == 2:
        out["theta"] = _theta_from_profile(prof, N, rng)
    else:
        w = prof.values * prof.weights
        out["rep"] = rng.choice(len(w), size=N, p=w / w.sum())
    if law.case == "special":
        idx = rng.integers(0, law.m, N)
        out["packet_index"] = idx
        bases = np.empty((N, 3, 2))
        for i, c in enumerate(law.packet):
            sel = idx == i
            bases[sel] = curve_bases(c, law.theta0, out["theta"][sel] - law.theta0)
        frames = np.stack([degenerate_frame(t) for t in out["theta"]]) if N else np.empty((0, 3, 2))
        out["fiber_x"], out["fiber_y"] = x2_from_coords(np.swapaxes(frames, 1, 2) @ bases)
        out["shape_x"], out["shape_y"] = shape_from_bases(bases)
        return out
    ranks = (law.r, law.n + 1 - law.r)
    if 2 in ranks:
        fx, fy = sample_x2(N, rng)
        out["fiber_x"], out["fiber_y"] = fx, fy
        out["shape_x"], out["shape_y"] = np.abs(fx), fy
    return out


def curve_bases(c: HomothetyClass, theta0: float, thetas) -> np.ndarray:
    """Bases of k_θ ρ^∞_θ0(κ_{-θ/2}) Λ for a stack of angles (not canonicalized)."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    P1, P2 = degenerate_subspaces(2, 2)
    P = np.column_stack([P1, P2])
    Pinv = np.linalg.inv(P)
    k0 = make_k_theta(theta0)
    N = thetas.size
    D = np.zeros((N, 3, 3))
    D[:, :2, :2] = np.stack([sl2_kappa(-t / 2) for t in thetas]) if N else np.empty((0, 2, 2))
    D[:, 2, 2] = 1.0
    K = np.stack([make_k_theta(t) for t in thetas]) if N else np.empty((0, 3, 3))
    R = K @ k0[None] @ P[None] @ D @ Pinv[None] @ k0.T[None]
    return R @ c.canon[None]


def degenerate_frame(theta: float) -> np.ndarray:
    """Orthonormal frame (k_θ v+/√2, k_θ e_2) of the degenerate plane at θ."""
    P1, _ = degenerate_subspaces(2, 2)
    F = P1 / np.linalg.norm(P1, axis=0)
    return make_k_theta(theta) @ F


def class_plane_coords(c: HomothetyClass, theta: float) -> tuple[float, float]:
    """Oriented X2 coordinates of a class in the degenerate plane at absolute angle θ."""
    F = degenerate_frame(theta)
    Z = F.T @ c.canon
    x, y = x2_from_coords(Z)
    return float(x), float(y)
