"""Haar integration on K, K_{P∞}, H_{i,j} and U, limiting densities and ball volumes.

Conventions
-----------
* Compact factors carry Haar probability measures.
* On SO(j,1)° the Cartan measure is ``sinh(t)^{j-1} dt`` with ``t >= 0`` for
  ``j >= 2`` and ``dt`` on the whole line for ``j = 1``.
* U carries Lebesgue measure ``dx`` and G the KAU measure ``e^{(n-1)s} ds dx dk``.
* Density profiles are densities against the K-invariant probability on
  K/K_{P∞}, so a left-K-invariant norm gives the constant 1.

Infinite ranges for ``x`` are handled with the substitution ``|x| = tan φ``
so no truncation is needed unless a finite ``x_max`` is requested.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .enumeration import Norm
from .geometry import make_a_infty, make_k_theta, middle_block

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class QuadratureSpec:
    mc_samples: int = 200_000
    t_max: float = 12.0
    x_max: float = math.inf
    seed: int = 0
    t_nodes: int = 96
    x_nodes: int = 96
    angle_nodes: int = 32
    k_nodes: int = 64
    s_grid: int = 256
    batches: int = 16
    tail_tol: float = 1e-3

    def __post_init__(self):
        if self.t_max <= 0 or self.x_max <= 0:
            raise ValueError("truncations must be positive")
        if self.batches < 2 or self.mc_samples < self.batches:
            raise ValueError("need at least two Monte Carlo batches")

    def rng(self, stream: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])

    def to_json(self) -> dict:
        d = asdict(self)
        d["x_max"] = None if math.isinf(self.x_max) else self.x_max
        return d

    @classmethod
    def from_json(cls, d: dict) -> "QuadratureSpec":
        d = dict(d)
        if d.get("x_max") is None:
            d["x_max"] = math.inf
        return cls(**d)


@dataclass
class QuadResult:
    value: float
    std_error: float
    tail_bound: float

    def __float__(self) -> float:
        return self.value


@dataclass
class DensityProfile:
    """Tabulated density on K/K_{P∞}.

    ``reps`` holds one K-coset representative per grid point.  For n = 2 the
    coset is fixed by an angle and ``grid`` holds it; otherwise ``grid`` is None.
    """

    reps: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    std_errors: np.ndarray
    tail_bound: float
    grid: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(np.sum(self.values * self.weights))

    def cdf(self, theta) -> np.ndarray:
        """Piecewise linear CDF of the angle on [0, 2π), for n = 2 profiles on a uniform grid."""
        if self.grid is None:
            raise ValueError("profile has no angular grid")
        m = len(self.grid)
        cum = np.concatenate([[0.0], np.cumsum(self.values * self.weights)])
        cum /= cum[-1]
        # cell q is centred on grid[q]; edges sit half a step to either side
        step = 2 * np.pi / m
        edges = self.grid[0] - step / 2 + step * np.arange(m + 1)

        def G(x):
            # periodic extension with G(x + 2π) = G(x) + 1
            wraps = np.floor((x - edges[0]) / (2 * np.pi))
            return np.interp(x - 2 * np.pi * wraps, edges, cum) + wraps

        th = np.asarray(theta, dtype=float)
        th = np.where((th >= 0) & (th <= 2 * np.pi), th, np.mod(th, 2 * np.pi))
        return np.clip(G(th) - G(np.float64(0.0)), 0.0, 1.0)

    def to_json(self) -> dict:
        return {
            "grid": None if self.grid is None else self.grid.tolist(),
            "reps": self.reps.tolist() if self.grid is None else None,
            "values": self.values.tolist(),
            "weights": self.weights.tolist(),
            "std_errors": self.std_errors.tolist(),
            "tail_bound": self.tail_bound,
            "meta": self.meta,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DensityProfile":
        grid = None if d.get("grid") is None else np.array(d["grid"], dtype=float)
        if grid is not None:
            reps = np.stack([make_k_theta(t) for t in grid])
        else:
            reps = np.array(d["reps"], dtype=float)
        return cls(
            reps=reps,
            values=np.array(d["values"], dtype=float),
            weights=np.array(d["weights"], dtype=float),
            std_errors=np.array(d["std_errors"], dtype=float),
            tail_bound=float(d["tail_bound"]),
            grid=grid,
            meta=d.get("meta", {}),
        )


@dataclass
class VolumeConstant:
    n: int
    norm: Norm
    value: float
    std_error: float
    form: str = "U"

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("volume constant must be positive")


# ---------------------------------------------------------------- compact groups


def haar_sample_SO(m: int, seed=None, size: int | None = None) -> np.ndarray:
    """Haar-random rotations of R^m, via QR of a Gaussian matrix.

    ``seed`` may be an int or a Generator.  With ``size`` a stack of shape
    (size, m, m) is returned.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    count = 1 if size is None else size
    if m == 1:
        out = np.ones((count, 1, 1))
    else:
        Z = rng.standard_normal((count, m, m))
        Q, R = np.linalg.qr(Z)
        Q = Q * np.sign(np.diagonal(R, axis1=-2, axis2=-1))[:, None, :]
        flip = np.linalg.det(Q) < 0
        Q[flip, :, 0] *= -1
        out = Q
    return out[0] if size is None else out


def _haar_O(m: int, rng, size: int) -> np.ndarray:
    if m == 0:
        return np.ones((size, 0, 0))
    Q = haar_sample_SO(m, rng, size)
    flip = rng.random(size) < 0.5
    Q[flip, :, 0] *= -1
    return Q


def embed_K_stack(R: np.ndarray) -> np.ndarray:
    N, m, _ = R.shape
    out = np.zeros((N, m + 1, m + 1))
    out[:, :m, :m] = R
    out[:, m, m] = 1.0
    return out


def sample_K(n: int, rng, size: int) -> np.ndarray:
    return embed_K_stack(haar_sample_SO(n, rng, size))


def sample_K_Pinfty(r: int, n: int, rng, size: int) -> np.ndarray:
    """Haar samples of K_{P∞} = {diag(1, A, B, 1) : A ∈ O(r-1), B ∈ O(n-r), det A det B = 1}."""
    A = _haar_O(r - 1, rng, size)
    if n - r == 0:
        # B is empty, so A must have determinant one
        bad = np.linalg.det(A) < 0 if r > 1 else np.zeros(size, bool)
        A[bad, :, 0] *= -1
        B = np.ones((size, 0, 0))
    else:
        B = _haar_O(n - r, rng, size)
        dA = np.linalg.det(A) if r > 1 else np.ones(size)
        dB = np.linalg.det(B)
        bad = np.sign(dA) != np.sign(dB)
        B[bad, :, 0] *= -1
    out = np.zeros((size, n + 1, n + 1))
    out[:, 0, 0] = out[:, n, n] = 1.0
    out[:, 1:r, 1:r] = A
    out[:, r:n, r:n] = B
    return out


def _rot2(phi: np.ndarray) -> np.ndarray:
    c, s = np.cos(phi), np.sin(phi)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _so_factor(m: int, count: int, rng, mc: bool) -> np.ndarray:
    """Nodes for a probability-Haar integral over SO(m): grid for m = 2 unless ``mc``."""
    if m <= 1:
        return np.ones((count, max(m, 0), max(m, 0)))
    if m == 2 and not mc:
        return _rot2(2 * np.pi * (np.arange(count) + 0.5) / count)
    return haar_sample_SO(m, rng, count)


# ---------------------------------------------------------------- H and U rules


@dataclass
class Rule:
    """Weighted points with a batch label per point for Monte Carlo error bars."""

    mats: np.ndarray
    weights: np.ndarray
    batch: np.ndarray
    batches: int
    aux: dict = field(default_factory=dict)

    def integrate(self, f: np.ndarray) -> tuple[float, float]:
        """Estimate and standard error; each batch is an independent full estimate."""
        per = np.zeros(self.batches)
        np.add.at(per, self.batch, self.weights * f)
        per *= self.batches
        value = float(per.mean())
        err = float(per.std(ddof=1) / np.sqrt(self.batches))
        return value, max(err, STD_FLOOR * abs(value))


def _gauss(a: float, b: float, count: int) -> tuple[np.ndarray, np.ndarray]:
    z, w = np.polynomial.legendre.leggauss(count)
    return 0.5 * (b - a) * z + 0.5 * (b + a), 0.5 * (b - a) * w


def _a_block(t: np.ndarray, j: int) -> np.ndarray:
    """a_j(t) in SO(j,1)° as a stack of (j+1)×(j+1) matrices."""
    out = np.broadcast_to(np.eye(j + 1), t.shape + (j + 1, j + 1)).copy()
    out[..., 0, 0] = out[..., j, j] = np.cosh(t)
    out[..., 0, j] = out[..., j, 0] = np.sinh(t)
    return out


def h_stack(i: int, j: int, c: np.ndarray, c1: np.ndarray, t: np.ndarray, c2: np.ndarray) -> np.ndarray:
    """Vectorized diag(c, c1 a_j(t) c2) for stacks of factors."""
    n = i + j + 1
    N = t.shape[0]
    h = np.zeros((N, n + 1, n + 1))
    h[:, : i + 1, : i + 1] = c
    if j == 0:
        h[:, n, n] = 1.0
        return h
    e1 = np.broadcast_to(np.eye(j + 1), (N, j + 1, j + 1)).copy()
    e2 = e1.copy()
    e1[:, :j, :j] = c1
    e2[:, :j, :j] = c2
    h[:, i + 1 :, i + 1 :] = e1 @ _a_block(t, j) @ e2
    return h


def _t_nodes(j: int, spec: QuadratureSpec, t_range=None) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = (0.0, spec.t_max) if t_range is None else t_range
    if j == 1 and t_range is None:
        lo = -spec.t_max
    t, w = _gauss(lo, hi, spec.t_nodes)
    if j >= 2:
        w = w * np.sinh(t) ** (j - 1)
    return t, w


def h_rule(i: int, j: int, spec: QuadratureSpec, rng, mc_so2: bool = True, t_range=None, samples=None) -> Rule:
    """Cartan-coordinate rule for dh on H_{i,j}; compact factors drawn per sample."""
    if i < 0 or j < 0:
        raise ValueError("need i, j >= 0")
    B = spec.batches
    compact = (i + 1 >= 2) or (j >= 2)
    if j == 0:
        t, wt = np.zeros(1), np.ones(1)
    else:
        t, wt = _t_nodes(j, spec, t_range)
    if samples is None:
        samples = max(B, spec.mc_samples // len(t)) if compact else B
    samples = max(B, (samples // B) * B)
    c = _so_factor(i + 1, samples, rng, mc_so2)
    c1 = _so_factor(j, samples, rng, True) if j >= 1 else np.ones((samples, 0, 0))
    c2 = _so_factor(j, samples, rng, True) if j >= 1 else np.ones((samples, 0, 0))
    q = np.repeat(np.arange(samples), len(t))
    tt = np.tile(t, samples)
    mats = h_stack(i, j, c[q], c1[q], tt, c2[q]) if j > 0 else h_stack(i, 0, c[q], c1[q], tt, c2[q])
    weights = np.tile(wt, samples) / samples
    return Rule(mats, weights, q % B, B, {"sample": q, "samples": samples, "t": tt})


def _radial_nodes(count: int, R: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes for ∫_0^R g(r) dr through r = tan φ."""
    phi, w = _gauss(0.0, math.atan(R) if math.isfinite(R) else math.pi / 2, count)
    return np.tan(phi), w / np.cos(phi) ** 2


def _sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


def x_rule(n: int, spec: QuadratureSpec, rng, R: float | None = None, half: bool = False, radial: bool = False):
    """Points x in R^{n-1} with |x| <= R and weights for dx.

    ``radial`` keeps only the positive x_1 axis with the full spherical weight,
    which is exact for integrands depending on |x| alone.
    """
    R = spec.x_max if R is None else R
    d = n - 1
    r, wr = _radial_nodes(spec.x_nodes, R)
    if radial or d == 1:
        if d == 1 and not radial:
            sides = [1.0] if half else [1.0, -1.0]
            x = np.concatenate([s * r for s in sides])[:, None]
            w = np.concatenate([wr for _ in sides])
            return x, w
        x = np.zeros((len(r), d))
        x[:, 0] = r
        return x, wr * r ** (d - 1) * _sphere_area(d) * (0.5 if half else 1.0)
    if d == 2:
        A = spec.angle_nodes
        span = np.pi if half else 2 * np.pi
        alpha = -np.pi / 2 + span * (np.arange(A) + 0.5) / A if half else span * (np.arange(A) + 0.5) / A
        dirs = np.stack([np.cos(alpha), np.sin(alpha)], -1)
        wa = np.full(A, span / A)
    else:
        A = spec.angle_nodes * spec.angle_nodes
        dirs = rng.standard_normal((A, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        if half:
            dirs[:, 0] = np.abs(dirs[:, 0])
        wa = np.full(A, _sphere_area(d) * (0.5 if half else 1.0) / A)
    x = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    w = (wr[:, None] * r[:, None] ** (d - 1) * wa[None, :]).ravel()
    return x, w


def u_stack(x: np.ndarray) -> np.ndarray:
    """Vectorized u(x) for rows of x."""
    x = np.atleast_2d(x)
    N, d = x.shape
    n = d + 1
    h = 0.5 * np.sum(x * x, axis=1)
    g = np.broadcast_to(np.eye(n + 1), (N, n + 1, n + 1)).copy()
    g[:, 0, 0] = 1.0 - h
    g[:, 0, 1:-1] = x
    g[:, 0, -1] = h
    g[:, 1:-1, 0] = -x
    g[:, 1:-1, -1] = x
    g[:, -1, 0] = -h
    g[:, -1, 1:-1] = x
    g[:, -1, -1] = 1.0 + h
    return g


# ---------------------------------------------------------------- generic quadratures


def h_cartan_quadrature(i: int, j: int, integrand: Callable[[np.ndarray], np.ndarray], spec: QuadratureSpec | None = None, alpha: float | None = None, t_range=None) -> QuadResult:
    """∫_{H_{i,j}} f dh for f(h) = O(e^{-α t}).

    ``integrand`` maps a stack of h matrices to values.  The tail beyond
    ``t_max`` is bounded from the integrand's size at ``t_max``.
    """
    spec = spec or QuadratureSpec()
    n = i + j + 1
    if j >= 1 and t_range is None:
        if alpha is None:
            raise ValueError("declare the decay class alpha for noncompact H")
        if alpha <= n - 2:
            raise ValueError(f"decay class alpha={alpha} <= n-2={n - 2}: the integral diverges")
    rule = h_rule(i, j, spec, spec.rng(1), t_range=t_range)
    f = np.asarray(integrand(rule.mats), dtype=float)
    value, err = rule.integrate(f)
    tail = 0.0
    if j >= 1 and t_range is None:
        edge = np.abs(rule.aux["t"]) >= np.abs(rule.aux["t"]).max() - 1e-12
        C = float(np.abs(f[edge]).max()) * math.exp(alpha * spec.t_max)
        growth = j - 1
        sides = 2 if j == 1 else 1
        tail = sides * C * math.exp((growth - alpha) * spec.t_max) / (2**growth * (alpha - growth))
    return QuadResult(value, err, tail)


def u_quadrature(n: int, integrand: Callable[[np.ndarray], np.ndarray], spec: QuadratureSpec | None = None, alpha: float | None = None, half: bool = False) -> QuadResult:
    """∫_{|x| <= x_max} f(x) dx over R^{n-1} for f = O(‖u(x)‖^{-α}).

    ``integrand`` maps an (N, n-1) array of points to values.  With ``half``
    only x_1 >= 0 is integrated and the result doubled.
    """
    spec = spec or QuadratureSpec()
    if alpha is None:
        raise ValueError("declare the decay class alpha")
    if alpha <= (n - 1) / 2:
        raise ValueError(f"decay class alpha={alpha} <= (n-1)/2: the integral diverges")
    x, w = x_rule(n, spec, spec.rng(2), half=half)
    f = np.asarray(integrand(x), dtype=float)
    value = float(np.sum(w * f)) * (2.0 if half else 1.0)
    tail = 0.0
    if math.isfinite(spec.x_max):
        R = spec.x_max
        probe = spec.rng(3).standard_normal((64, n - 1))
        probe *= R / np.linalg.norm(probe, axis=1, keepdims=True)
        fb = float(np.abs(integrand(probe)).max())
        tail = fb * _sphere_area(n - 1) * R ** (n - 1) / (2 * alpha - (n - 1))
    # crude node error: compare with the half-resolution radial rule
    coarse = QuadratureSpec(**{**asdict(spec), "x_nodes": max(8, spec.x_nodes // 2)})
    xc, wc = x_rule(n, coarse, spec.rng(2), half=half)
    value_c = float(np.sum(wc * np.asarray(integrand(xc), dtype=float))) * (2.0 if half else 1.0)
    err = max(abs(value - value_c), STD_FLOOR * abs(value))
    return QuadResult(value, err, tail)


# ---------------------------------------------------------------- sublevel sets in s


def omega_antiderivative(kind: str, i: int = 0, j: int = 0, n: int = 2) -> Callable[[np.ndarray], np.ndarray]:
    """Antiderivative of ω(s): ``"exp"`` gives e^{(n-1)s}; ``"sc"`` gives sinh^i cosh^j."""
    if kind == "exp":
        return lambda s: np.exp((n - 1) * np.asarray(s)) / (n - 1)
    terms: dict[int, float] = {}
    for a in range(i + 1):
        for b in range(j + 1):
            lam = (2 * a - i) + (2 * b - j)
            coef = math.comb(i, a) * math.comb(j, b) * (-1) ** (i - a) / 2 ** (i + j)
            terms[lam] = terms.get(lam, 0.0) + coef

    def W(s):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for lam, coef in terms.items():
            out = out + (coef * s if lam == 0 else coef * np.exp(lam * s) / lam)
        return out

    return W


def sublevel_omega(norm: Norm, P: np.ndarray, M: np.ndarray, C: np.ndarray, T: float, s_lo: float, s_hi: float, W, grid: int = 256, iters: int = 60, chunk: int = 4096) -> np.ndarray:
    """∫ ω over {s ∈ [s_lo, s_hi] : ‖e^s P + e^{-s} M + C‖ <= T}, per stacked sample.

    The set is located on a uniform grid and each boundary is refined by
    bisection; components narrower than a grid cell are missed.
    """
    N = P.shape[0]
    out = np.zeros(N)
    s = np.linspace(s_lo, s_hi, grid)
    es, ems = np.exp(s), np.exp(-s)
    Ws = W(s)
    for a in range(0, N, chunk):
        b = min(N, a + chunk)
        p, m, c = P[a:b], M[a:b], C[a:b]
        vals = norm(es[None, :, None, None] * p[:, None] + ems[None, :, None, None] * m[:, None] + c[:, None])
        inside = vals <= T
        both = inside[:, :-1] & inside[:, 1:]
        acc = np.sum(both * (Ws[1:] - Ws[:-1])[None, :], axis=1)
        flip = inside[:, :-1] != inside[:, 1:]
        rows, cells = np.nonzero(flip)
        if rows.size:
            lo, hi = s[cells].copy(), s[cells + 1].copy()
            entering = ~inside[rows, cells]
            pr, mr, cr = p[rows], m[rows], c[rows]
            for _ in range(iters):
                mid = 0.5 * (lo + hi)
                ok = norm(np.exp(mid)[:, None, None] * pr + np.exp(-mid)[:, None, None] * mr + cr) <= T
                # move the endpoint that has the same membership as mid
                move_lo = ok != entering
                lo = np.where(move_lo, mid, lo)
                hi = np.where(move_lo, hi, mid)
            root = 0.5 * (lo + hi)
            part = np.where(entering, Ws[cells + 1] - W(root), W(root) - Ws[cells])
            np.add.at(acc, rows, part)
        out[a:b] = acc
    return out


def _s_bound(norm: Norm, T: float, n: int) -> float:
    """|s| with a nonempty slice satisfies cosh s <= (Frobenius bound of the ball)."""
    B = norm.frobenius_bound(T, n + 1)
    return math.acosh(max(B, 1.0))


def _x_bound(norm: Norm, T: float, n: int) -> float:
    B = norm.frobenius_bound(T, n + 1)
    return math.sqrt(max(B * B - 1.0, 0.0))


def _decompose(L: np.ndarray, R: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coefficients of L a(s) R = e^s P + e^{-s} M + C."""
    return L @ make_a_infty(1, n) @ R, L @ make_a_infty(-1, n) @ R, L @ middle_block(n) @ R


def _k_nodes(n: int, norm: Norm, spec: QuadratureSpec, rng, count: int | None = None) -> np.ndarray:
    """Nodes for the probability integral over K; one node when the norm is left-K-invariant."""
    if norm.kind in ("frobenius", "skewed"):
        return np.eye(n + 1)[None]
    count = count or spec.k_nodes
    if n == 2:
        th = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([make_k_theta(t) for t in th])
    return sample_K(n, rng, count)


def _left_k_invariant(norm: Norm) -> bool:
    return norm.kind in ("frobenius", "skewed")


def _right_k_invariant(norm: Norm) -> bool:
    return norm.kind in ("frobenius", "left-skewed")


# ---------------------------------------------------------------- volumes


def vol_ball_mc(n: int, norm: Norm, T: float, spec: QuadratureSpec | None = None) -> float:
    """Vol{g : ‖g‖ <= T} from the KAU formula, integrating s exactly on each slice."""
    spec = spec or QuadratureSpec()
    rng = spec.rng(10)
    S = _s_bound(norm, T, n)
    R = _x_bound(norm, T, n)
    W = omega_antiderivative("exp", n=n)
    ks = _k_nodes(n, norm, spec, rng)
    radial = _right_k_invariant(norm)
    xspec = QuadratureSpec(**{**asdict(spec), "x_max": R, "x_nodes": max(spec.x_nodes, 160)})
    x, wx = x_rule(n, xspec, rng, radial=radial)
    U = u_stack(x)
    total = 0.0
    for k in ks:
        P, M, C = _decompose(k[None], U, n)
        m = sublevel_omega(norm, P, M, C, T, -S, S, W, grid=spec.s_grid)
        total += float(np.sum(wx * m))
    return total / len(ks)


def _kah_volume(n: int, i: int, norm: Norm, T: float, spec: QuadratureSpec) -> float:
    """Vol{g : ‖g‖ <= T} from the KA^+H_{i,j} formula in Cartan normalization of dh."""
    j = n - 1 - i
    rng = spec.rng(11)
    S = _s_bound(norm, T, n)
    tB = S
    W = omega_antiderivative("sc", i, j)
    ks = _k_nodes(n, norm, spec, rng)
    t_range = (-tB, tB) if j == 1 else ((0.0, tB) if j >= 2 else None)
    hspec = QuadratureSpec(**{**asdict(spec), "t_nodes": max(spec.t_nodes, 160)})
    samples = spec.k_nodes if (i + 1 == 2 or j >= 2) else spec.batches
    rule = h_rule(i, j, hspec, rng, mc_so2=False, t_range=t_range, samples=samples)
    Hs = [rule.mats]
    if i == 0:
        refl = np.eye(n + 1)
        refl[0, 0] = refl[1, 1] = -1.0
        Hs.append(refl[None] @ rule.mats)
    total = 0.0
    for k in ks:
        for H in Hs:
            P, M, C = _decompose(k[None], H, n)
            m = sublevel_omega(norm, P, M, C, T, 0.0, S, W, grid=spec.s_grid)
            total += float(np.sum(rule.weights * m))
    return total / len(ks)


def volume_constant(n: int, norm: Norm, spec: QuadratureSpec | None = None, form: str = "U", i: int | None = None) -> VolumeConstant:
    """Closed-form limit of Vol(G_T)/T^{n-1}.

    ``form`` is ``"U"`` (Lebesgue dx), or ``"H"`` with ``i`` selecting H_{i,n-1-i}
    in Cartan normalization.  The two H variants differ by the a(-∞) term,
    present only for i = 0.
    """
    spec = spec or QuadratureSpec()
    rng = spec.rng(12)
    ks = _k_nodes(n, norm, spec, rng)
    a_pos, a_neg = make_a_infty(1, n), make_a_infty(-1, n)
    vals = []
    if form == "U":
        x, w = x_rule(n, spec, rng, radial=_right_k_invariant(norm))
        Y = a_pos[None] @ u_stack(x)
        for k in ks:
            vals.append(np.sum(w * norm(k[None] @ Y) ** (-(n - 1))) / (n - 1))
        err = 0.0
    elif form == "H":
        if i is None or not 0 <= i <= n - 1:
            raise ValueError("form 'H' needs 0 <= i <= n-1")
        j = n - 1 - i
        rule = h_rule(i, j, spec, rng, mc_so2=False, samples=spec.k_nodes if (i + 1 == 2 or j >= 2) else spec.batches)
        pre = 1.0 / ((n - 1) * 2 ** (n - 1))
        for k in ks:
            f = norm(k[None] @ a_pos[None] @ rule.mats) ** (-(n - 1))
            if i == 0:
                f = f + norm(k[None] @ a_neg[None] @ rule.mats) ** (-(n - 1))
            vals.append(pre * np.sum(rule.weights * f))
        err = 0.0
    else:
        raise ValueError(f"unknown form {form!r}")
    vals = np.array(vals, dtype=float)
    value = float(vals.mean())
    if len(vals) > 1 and n >= 3:
        err = float(vals.std(ddof=1) / np.sqrt(len(vals)))
    return VolumeConstant(n, norm, value, max(err, STD_FLOOR * value), form if form == "U" else f"H{i},{n - 1 - i}")


def normalized_volume_constant(n: int, norm: Norm, i: int, spec: QuadratureSpec | None = None, T0: float = 50.0) -> VolumeConstant:
    """H_{i,n-1-i} constant rescaled so its dh matches the KAU measure.

    The scale is Vol_KAU(G_{T0}) / Vol_KAH(G_{T0}); any fixed dh normalization
    cancels.
    """
    spec = spec or QuadratureSpec()
    vc = volume_constant(n, norm, spec, form="H", i=i)
    scale = vol_ball_mc(n, norm, T0, spec) / _kah_volume(n, i, norm, T0, spec)
    return VolumeConstant(n, norm, vc.value * scale, vc.std_error * scale, f"H{i},{n - 1 - i}*")


# ---------------------------------------------------------------- b_T asymptotics


def bT_limit_check(k: np.ndarray, H: tuple | str, norm: Norm, T_ladder, spec: QuadratureSpec | None = None) -> dict:
    """Compare T^{-(n-1)} ∫_H ∫_{b_T(k,h)} ω ds dh with its predicted limit.

    ``H`` is ``("H", i, j)`` or ``("U", n)``.
    """
    spec = spec or QuadratureSpec()
    Ts = [float(t) for t in T_ladder]
    if any(b <= a for a, b in zip(Ts, Ts[1:])):
        raise ValueError("T ladder must increase")
    k = np.asarray(k, dtype=float)
    n = k.shape[0] - 1
    rng = spec.rng(13)
    a_pos = make_a_infty(1, n)
    rows = []
    if H[0] == "U":
        W = omega_antiderivative("exp", n=n)
        pre = 1.0 / (n - 1)
        x, w = x_rule(n, spec, rng)
        rhs = pre * float(np.sum(w * norm(k[None] @ a_pos[None] @ u_stack(x)) ** (-(n - 1))))
        for T in Ts:
            R = _x_bound(norm, T, n)
            xspec = QuadratureSpec(**{**asdict(spec), "x_max": R, "x_nodes": max(spec.x_nodes, 160)})
            xt, wt = x_rule(n, xspec, rng)
            P, M, C = _decompose(k[None], u_stack(xt), n)
            m = sublevel_omega(norm, P, M, C, T, 0.0, _s_bound(norm, T, n), W, grid=spec.s_grid)
            lhs = float(np.sum(wt * m)) / T ** (n - 1)
            rows.append({"T": T, "lhs": lhs, "ratio": lhs / rhs})
        kind = "U"
    else:
        _, i, j = H
        if i + j + 1 != n:
            raise ValueError("H_{i,j} needs i + j = n - 1")
        W = omega_antiderivative("sc", i, j)
        pre = 1.0 / ((n - 1) * 2 ** (n - 1))
        samples = spec.k_nodes if (i + 1 >= 2 or j >= 2) else spec.batches
        rule = h_rule(i, j, spec, rng, mc_so2=False, samples=samples)
        rhs = pre * float(np.sum(rule.weights * norm(k[None] @ a_pos[None] @ rule.mats) ** (-(n - 1))))
        hspec = QuadratureSpec(**{**asdict(spec), "t_nodes": max(spec.t_nodes, 160)})
        for T in Ts:
            S = _s_bound(norm, T, n)
            t_range = (-S, S) if j == 1 else (0.0, S)
            rt = h_rule(i, j, hspec, rng, mc_so2=False, t_range=t_range, samples=samples) if j else rule
            P, M, C = _decompose(k[None], rt.mats, n)
            m = sublevel_omega(norm, P, M, C, T, 0.0, S, W, grid=spec.s_grid)
            lhs = float(np.sum(rt.weights * m)) / T ** (n - 1)
            rows.append({"T": T, "lhs": lhs, "ratio": lhs / rhs})
        kind = f"H{i},{j}"
    return {"H": kind, "n": n, "rhs": rhs, "prefactor": pre, "rows": rows}


def bT_interval(k: np.ndarray, h: np.ndarray, norm: Norm, T: float, grid: int = 512) -> list[tuple[float, float]]:
    """Components of b_T(k,h) = {s >= 0 : ‖k a(s) h‖ <= T} as (start, end) pairs."""
    n = k.shape[0] - 1
    P, M, C = _decompose(k[None], h[None], n)
    S = _s_bound(norm, T, n)
    s = np.linspace(0.0, S, grid)
    vals = norm(np.exp(s)[:, None, None] * P + np.exp(-s)[:, None, None] * M + C)
    inside = vals <= T

    def root(a, b, entering):
        for _ in range(80):
            m = 0.5 * (a + b)
            ok = norm(np.exp(m) * P[0] + np.exp(-m) * M[0] + C[0]) <= T
            if ok == entering:
                b = m
            else:
                a = m
        return 0.5 * (a + b)

    out, start = [], (0.0 if inside[0] else None)
    for q in range(grid - 1):
        if inside[q] != inside[q + 1]:
            r = root(s[q], s[q + 1], not inside[q])
            if inside[q + 1]:
                start = r
            else:
                out.append((start, r))
                start = None
    if start is not None:
        out.append((start, float(s[-1])))
    return out


# ---------------------------------------------------------------- densities


def _grid_reps(n: int, grid, rng) -> tuple[np.ndarray, np.ndarray | None]:
    if n == 2:
        if np.isscalar(grid):
            m = int(grid)
            theta = 2 * np.pi * np.arange(m) / m
        else:
            theta = np.asarray(grid, dtype=float)
        return np.stack([make_k_theta(t) for t in theta]), theta
    if np.isscalar(grid):
        return sample_K(n, rng, int(grid)), None
    return np.asarray(grid, dtype=float), None


def _profile(reps, theta, nums, errs, tail, meta) -> DensityProfile:
    m = len(nums)
    weights = np.full(m, 1.0 / m)
    den = float(np.sum(weights * nums))
    if not den > 0:
        raise ValueError("denominator vanished")
    return DensityProfile(reps, nums / den, weights, errs / den, tail / den, theta, meta)


def _check_positive_definite(g0: np.ndarray, r: int) -> None:
    n = g0.shape[0] - 1
    from .geometry import gram

    G = (g0[:, :r]).T @ gram(n) @ g0[:, :r]
    if np.linalg.eigvalsh(G).min() <= 1e-10:
        raise ValueError("P0 is not positive definite")


def eval_w_P0(r: int, n: int, g0: np.ndarray, norm: Norm, grid=64, spec: QuadratureSpec | None = None) -> DensityProfile:
    """Density w_{P0} for the positive definite P0 = g0·span{e_1..e_r}."""
    spec = spec or QuadratureSpec()
    g0 = np.asarray(g0, dtype=float)
    if not 1 <= r <= n:
        raise ValueError("need 1 <= r <= n")
    _check_positive_definite(g0, r)
    rng = spec.rng(20)
    i, j = r - 1, n - r
    rule = h_rule(i, j, spec, rng)
    kap = sample_K_Pinfty(r, n, rng, rule.aux["samples"])[rule.aux["sample"]]
    g0inv = np.linalg.inv(g0)
    terms = [kap @ make_a_infty(1, n)[None] @ rule.mats @ g0inv[None]]
    if r == 1:
        terms.append(kap @ make_a_infty(-1, n)[None] @ rule.mats @ g0inv[None])
    reps, theta = _grid_reps(n, grid, rng)
    nums, errs = np.zeros(len(reps)), np.zeros(len(reps))
    for q, k0 in enumerate(reps):
        f = sum(norm(k0[None] @ Z) ** (-(n - 1)) for Z in terms)
        nums[q], errs[q] = rule.integrate(f)
    tail = 0.0
    if j >= 1:
        # integrand decays like e^{-(n-1)t} against the weight sinh^{j-1}
        tail = float(nums.max()) * math.exp((j - 1 - (n - 1)) * spec.t_max) * (n - 1)
    return _profile(reps, theta, nums, errs, tail, {"case": "nondeg", "r": r, "n": n, "spec": spec.to_json()})


def _check_degenerate(g0: np.ndarray, r: int) -> None:
    from .geometry import degenerate_subspaces, gram

    n = g0.shape[0] - 1
    P1, _ = degenerate_subspaces(r, n)
    B = g0 @ P1
    G = B.T @ gram(n) @ B
    if abs(np.linalg.det(G)) > 1e-9 * max(1.0, np.abs(G).max()) ** r:
        raise ValueError("P0 is not degenerate")


def _u_density(n: int, left_terms: list[np.ndarray], reps: np.ndarray, norm: Norm, weights_x: np.ndarray, rule_batch: np.ndarray, B: int) -> tuple[np.ndarray, np.ndarray]:
    nums, errs = np.zeros(len(reps)), np.zeros(len(reps))
    for q, k0 in enumerate(reps):
        f = sum(norm(k0[None] @ Z) ** (-(n - 1)) for Z in left_terms)
        per = np.zeros(B)
        np.add.at(per, rule_batch, weights_x * f)
        per *= B
        nums[q] = per.mean()
        errs[q] = max(per.std(ddof=1) / np.sqrt(B), STD_FLOOR * nums[q])
    return nums, errs


def eval_w_infty(r: int, n: int, g0: np.ndarray, norm: Norm, grid=32, spec: QuadratureSpec | None = None) -> DensityProfile:
    """Density w^∞_{P0} for the degenerate P0 = g0·span{v+, e_2..e_r}, n >= 3."""
    spec = spec or QuadratureSpec()
    if n < 3:
        raise ValueError("n = 2 degenerate starts use eval_w_theta0")
    g0 = np.asarray(g0, dtype=float)
    _check_degenerate(g0, r)
    rng = spec.rng(21)
    x, wx = x_rule(n, spec, rng)
    B = spec.batches
    per = max(1, spec.mc_samples // len(x) // B) * B
    kap = sample_K_Pinfty(r, n, rng, per)
    Y = make_a_infty(1, n)[None] @ u_stack(x) @ np.linalg.inv(g0)[None]
    Z = (kap[:, None] @ Y[None]).reshape(-1, n + 1, n + 1)
    w = np.tile(wx, per) / per
    batch = np.repeat(np.arange(per) % B, len(x))
    reps, theta = _grid_reps(n, grid, rng)
    nums, errs = _u_density(n, [Z], reps, norm, w, batch, B)
    return _profile(reps, theta, nums, errs, 0.0, {"case": "deg-high", "r": r, "n": n, "spec": spec.to_json()})


def eval_w_theta0(theta0: float, norm: Norm, grid=64, spec: QuadratureSpec | None = None) -> DensityProfile:
    """Density w_{θ0} on the circle of degenerate planes (n = 2), indexed by absolute angle."""
    spec = spec or QuadratureSpec()
    x, wx = x_rule(2, spec, spec.rng(22))
    Y = make_a_infty(1, 2)[None] @ u_stack(x) @ make_k_theta(-theta0)[None]
    reps, theta = _grid_reps(2, grid, None)
    nums = np.array([np.sum(wx * norm(k0[None] @ Y) ** -1.0) for k0 in reps])
    coarse = QuadratureSpec(**{**asdict(spec), "x_nodes": max(8, spec.x_nodes // 2)})
    xc, wc = x_rule(2, coarse, spec.rng(22))
    Yc = make_a_infty(1, 2)[None] @ u_stack(xc) @ make_k_theta(-theta0)[None]
    numc = np.array([np.sum(wc * norm(k0[None] @ Yc) ** -1.0) for k0 in reps])
    errs = np.maximum(np.abs(nums - numc), STD_FLOOR * nums)
    tail = 0.0
    if math.isfinite(spec.x_max):
        tail = float(nums.max()) * 2.0 / spec.x_max
    return _profile(reps, theta, nums, errs, tail, {"case": "deg-low", "theta0": theta0, "n": 2, "spec": spec.to_json()})


def brute_force_profile(r: int, n: int, g0: np.ndarray, norm: Norm, grid, samples: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Plain Monte Carlo estimate of w_{P0} on the same grid, for cross-checking.

    Every factor, t included, is sampled: t from a density proportional to
    e^{-|t|} on the Cartan line, corrected by importance weights.
    """
    rng = np.random.default_rng([seed, 99])
    i, j = r - 1, n - r
    reps, _ = _grid_reps(n, grid, rng)
    g0inv = np.linalg.inv(np.asarray(g0, dtype=float))
    c = haar_sample_SO(i + 1, rng, samples) if i + 1 >= 2 else np.ones((samples, 1, 1))
    if j >= 1:
        t = rng.exponential(1.0, samples)
        dens = np.exp(-t)
        if j == 1:
            t = t * rng.choice([-1.0, 1.0], samples)
            dens = dens / 2
        jac = np.sinh(np.abs(t)) ** (j - 1) / dens
        c1 = haar_sample_SO(j, rng, samples) if j >= 2 else np.ones((samples, j, j))
        c2 = haar_sample_SO(j, rng, samples) if j >= 2 else np.ones((samples, j, j))
    else:
        t, jac = np.zeros(samples), np.ones(samples)
        c1 = c2 = np.ones((samples, 0, 0))
    h = h_stack(i, j, c, c1, t, c2)
    kap = sample_K_Pinfty(r, n, rng, samples)
    Z = kap @ make_a_infty(1, n)[None] @ h @ g0inv[None]
    Zm = kap @ make_a_infty(-1, n)[None] @ h @ g0inv[None] if r == 1 else None
    nums, errs = [], []
    for k0 in reps:
        f = norm(k0[None] @ Z) ** (-(n - 1))
        if Zm is not None:
            f = f + norm(k0[None] @ Zm) ** (-(n - 1))
        f = f * jac
        nums.append(f.mean())
        errs.append(f.std(ddof=1) / np.sqrt(samples))
    nums, errs = np.array(nums), np.array(errs)
    den = nums.mean()
    return nums / den, errs / den
