"""Norm balls Γ_T in arithmetic subgroups of SO(n,1)°, enumerated exactly."""

from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import GroupElement, gram, phi_exact


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("LAB_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------- norms


@dataclass(frozen=True, eq=False)
class Norm:
    """Frobenius, max-entry, skewed Frobenius ‖g g0^{-1}‖_F or left-skewed ‖g0^{-1} g‖_F.

    The first three are constant along K-orbits of rank-one boundary limits
    k a(±∞) X, so only the left-skewed norm produces non-uniform densities.
    """

    kind: str = "frobenius"
    g0: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("frobenius", "max", "skewed", "left-skewed"):
            raise ValueError(f"unknown norm {self.kind!r}")
        if self.kind in ("skewed", "left-skewed"):
            if self.g0 is None:
                raise ValueError("skewed norm needs g0")
            g0 = np.asarray(self.g0, dtype=float)
            object.__setattr__(self, "g0", g0)
            object.__setattr__(self, "_g0inv", np.linalg.inv(g0))

    def __call__(self, g: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if self.kind == "frobenius":
            return np.sqrt(np.sum(g * g, axis=(-1, -2)))
        if self.kind == "max":
            return np.abs(g).max(axis=(-1, -2))
        h = g @ self._g0inv if self.kind == "skewed" else self._g0inv @ g
        return np.sqrt(np.sum(h * h, axis=(-1, -2)))

    def frobenius_bound(self, T: float, dim: int) -> float:
        """B with ‖g‖ ≤ T ⇒ ‖g‖_F ≤ B."""
        if self.kind == "frobenius":
            return T
        if self.kind == "max":
            return dim * T
        return T * float(np.linalg.norm(self.g0, 2))

    def corner_constant(self) -> float:
        """c > 0 with ‖g‖ ≥ c·|g_{n+1,n+1}| for every g."""
        if self.kind in ("skewed", "left-skewed"):
            return 1.0 / float(np.linalg.norm(self.g0, 2))
        return 1.0

    @property
    def sign_symmetric(self) -> bool:
        """True when ‖g*‖ = ‖g‖ on the group (g* = gram·g·gram only flips signs)."""
        return self.kind in ("frobenius", "max")

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.g0 is not None:
            d["g0"] = self.g0.tolist()
        return d

    @classmethod
    def from_json(cls, d) -> "Norm":
        if isinstance(d, str):
            return cls(d)
        return cls(d["kind"], None if d.get("g0") is None else np.array(d["g0"], dtype=float))


# ---------------------------------------------------------------- groups

SS_FORM = np.array([[0, 0, 1], [0, -1, 0], [1, 0, 0]], dtype=np.int64)
SS_CONJUGATOR = np.array(
    [
        [1 / np.sqrt(2), 0.0, 1 / np.sqrt(2)],
        [0.0, 1.0, 0.0],
        [-1 / np.sqrt(2), 0.0, 1 / np.sqrt(2)],
    ]
)


@dataclass(frozen=True, eq=False)
class GammaSpec:
    """Which arithmetic group to enumerate.

    kind is ``"phi-sl2z"`` (n = 2), ``"int-orth"`` (integer points of SO(Q)°,
    used directly) or ``"conj-int-orth"`` (integer points of SO(Q)°, moved to
    the standard form by x ↦ M^{-1} x M).
    """

    kind: str = "phi-sl2z"
    Q: np.ndarray | None = None
    M: np.ndarray | None = None
    generators: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in ("phi-sl2z", "int-orth", "conj-int-orth"):
            raise ValueError(f"unknown group kind {self.kind!r}")
        if self.kind == "phi-sl2z":
            return
        Q = np.asarray(self.Q, dtype=np.int64)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or np.any(Q != Q.T):
            raise ValueError("Q must be a symmetric integer matrix")
        object.__setattr__(self, "Q", Q)
        if self.kind == "int-orth":
            if np.any(Q != np.diag(np.diag(gram(Q.shape[0] - 1))).astype(np.int64)):
                raise ValueError("int-orth expects the standard form diag(1,...,1,-1); use conj-int-orth otherwise")
        else:
            M = np.asarray(self.M, dtype=float)
            S = M.T @ Q @ M
            J = gram(Q.shape[0] - 1)
            lam = S[-1, -1] / J[-1, -1]
            if abs(lam) < 1e-12 or np.abs(S - lam * J).max() > 1e-9 * max(1.0, abs(lam)):
                raise ValueError("conjugator must satisfy M^T Q M = λ·gram")
            object.__setattr__(self, "M", M)
            object.__setattr__(self, "_Minv", np.linalg.inv(M))

    @property
    def n(self) -> int:
        return 2 if self.kind == "phi-sl2z" else self.Q.shape[0] - 1

    def to_float(self, num: np.ndarray, den: int = 1) -> np.ndarray:
        """Standard-form float matrices for exact numerators (stacked ok)."""
        g = np.asarray(num, dtype=float) / den
        if self.kind == "conj-int-orth":
            return self._Minv @ g @ self.M
        return g

    def generator_list(self) -> list[tuple[np.ndarray, int]]:
        if self.generators:
            return [(np.asarray(g, dtype=np.int64), int(d)) for g, d in self.generators]
        if self.kind == "phi-sl2z":
            S = np.array([[0, -1], [1, 0]])
            Tm = np.array([[1, 1], [0, 1]])
            Ti = np.array([[1, -1], [0, 1]])
            return [_normalize(phi_exact(g), 2) for g in (S, Tm, Ti)]
        raise ValueError("no generators known for this group; pass them explicitly")

    def to_json(self) -> dict:
        d = {"kind": self.kind}
        if self.Q is not None:
            d["Q"] = self.Q.tolist()
        if self.M is not None:
            d["M"] = self.M.tolist()
        return d

    @classmethod
    def from_json(cls, d) -> "GammaSpec":
        if isinstance(d, str):
            d = {"kind": d}
        kind = d["kind"]
        if kind == "sargent-shapira":
            return sargent_shapira_gamma()
        Q = d.get("Q")
        if kind == "int-orth" and Q is None:
            n = int(d.get("n", 3))
            Q = np.diag([1] * n + [-1])
        return cls(kind, None if Q is None else np.array(Q), None if d.get("M") is None else np.array(d["M"], dtype=float))


def sargent_shapira_gamma() -> GammaSpec:
    """Integer points of SO(2xz - y²)°, conjugated into SO(2,1)°."""
    return GammaSpec("conj-int-orth", SS_FORM, SS_CONJUGATOR)


def _normalize(num: np.ndarray, den: int) -> tuple[np.ndarray, int]:
    num = np.asarray(num, dtype=np.int64)
    g = int(np.gcd.reduce(np.append(np.abs(num).ravel(), den)))
    return num // g, den // g


def _normalize_stack(num: np.ndarray, den: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-element reduction of a stack of numerators over a common denominator."""
    num = np.asarray(num, dtype=np.int64)
    flat = np.abs(num.reshape(num.shape[0], -1))
    g = np.gcd.reduce(np.concatenate([flat, np.full((num.shape[0], 1), den)], axis=1), axis=1)
    return num // g[:, None, None], den // g


# ---------------------------------------------------------------- results


@dataclass(eq=False)
class BallEnumeration:
    """Γ_T as stacked arrays: exact numerators ``exact``, denominators ``den``, float ``mats``."""

    T: float
    exact: np.ndarray
    den: np.ndarray
    mats: np.ndarray

    @property
    def count(self) -> int:
        return int(self.exact.shape[0])

    @property
    def elements(self) -> list[GroupElement]:
        return [GroupElement(m, e, int(d)) for m, e, d in zip(self.mats, self.exact, self.den)]

    def keys(self) -> set[bytes]:
        return {GroupElement(m, e, int(d)).key() for m, e, d in zip(self.mats, self.exact, self.den)}

    def restrict(self, T: float, norm: "Norm") -> "BallEnumeration":
        keep = norm(self.mats) <= T * (1 + 1e-12)
        return BallEnumeration(T, self.exact[keep], self.den[keep], self.mats[keep])

    def to_json(self) -> dict:
        els = []
        for e, d in zip(self.exact, self.den):
            rec = {"num": e.ravel().tolist()}
            if d != 1:
                rec["den"] = int(d)
            els.append(rec)
        return {"T": self.T, "count": self.count, "elements": els}


def _sorted(T: float, exact: np.ndarray, den: np.ndarray, mats: np.ndarray) -> BallEnumeration:
    if exact.shape[0] == 0:
        return BallEnumeration(T, exact, den, mats)
    m = exact.shape[1]
    cols = [den] + [exact[:, i, j] for i in range(m) for j in range(m)]
    order = np.lexsort(cols[::-1])
    return BallEnumeration(T, exact[order], den[order], mats[order])


# ---------------------------------------------------------------- Φ(SL(2,Z))


def _sl2z_stripe(a_values: np.ndarray, B: int) -> np.ndarray:
    r = np.arange(-B, B + 1)
    out = []
    for a in a_values:
        if a == 0:
            for b, c in ((1, -1), (-1, 1)):
                d = r
                out.append(np.stack([np.zeros_like(d), np.full_like(d, b), np.full_like(d, c), d], axis=1))
            continue
        b, c = np.meshgrid(r, r, indexing="ij")
        b, c = b.ravel(), c.ravel()
        num = 1 + b * c
        ok = num % a == 0
        d = num[ok] // a
        keep = np.abs(d) <= B
        out.append(np.stack([np.full(keep.sum(), a), b[ok][keep], c[ok][keep], d[keep]], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 4), dtype=np.int64)


def enumerate_ball_direct(spec: GammaSpec, norm: Norm, T: float) -> BallEnumeration:
    """Γ_T for Γ = Φ(SL(2,Z)) from integer quadruples.

    Uses ‖Φ(g)‖_F² = ‖g‖_F⁴ − 1, so ‖Φ(g)‖_F ≤ F forces every entry of g to
    be at most (F² + 1)^{1/4} in absolute value.
    """
    if spec.kind != "phi-sl2z":
        raise ValueError("direct enumeration is for phi-sl2z; use enumerate_orthogonal")
    F = norm.frobenius_bound(T, 3)
    B = int(np.floor((F * F + 1) ** 0.25 + 1e-9))
    if B > 600:
        raise OverflowError(f"entry bound {B} too large")
    a_all = np.arange(-B, B + 1)
    w = worker_count()
    stripes = [a_all[i::w] for i in range(w)]
    if w > 1:
        with ThreadPoolExecutor(w) as ex:
            parts = list(ex.map(lambda s: _sl2z_stripe(s, B), stripes))
    else:
        parts = [_sl2z_stripe(a_all, B)]
    q = np.concatenate(parts).astype(np.int64)
    # quotient by ±I: first nonzero entry positive
    first = np.where(q[:, 0] != 0, q[:, 0], q[:, 1])
    q = q[first > 0]
    g = q.reshape(-1, 2, 2)
    num, den = _normalize_stack(phi_exact(g), 2)
    mats = num / den[:, None, None]
    keep = norm(mats) <= T * (1 + 1e-12)
    return _sorted(T, num[keep], den[keep], mats[keep])


# ---------------------------------------------------------------- BFS


def enumerate_ball_bfs(spec: GammaSpec, norm: Norm, T: float, margin: float = 4.0, cap: int = 2_000_000) -> BallEnumeration:
    """Breadth-first closure of the generators inside the ball of radius margin·T."""
    if margin < 1:
        raise ValueError("margin must be ≥ 1")
    gens = spec.generator_list()
    if not gens:
        raise ValueError("empty generator list")
    m = spec.n + 1
    ident = (np.eye(m, dtype=np.int64), 1)
    seen = {_key(*ident): ident}
    frontier = [ident]
    limit = margin * T
    while frontier:
        nxt = []
        for num, den in frontier:
            for gnum, gden in gens:
                p = _normalize(num @ gnum, den * gden)
                k = _key(*p)
                if k in seen:
                    continue
                if norm(spec.to_float(*p)) > limit * (1 + 1e-12):
                    continue
                seen[k] = p
                nxt.append(p)
                if len(seen) > cap:
                    raise OverflowError("BFS element cap exceeded")
        frontier = nxt
    items = list(seen.values())
    exact = np.stack([p[0] for p in items])
    den = np.array([p[1] for p in items], dtype=np.int64)
    mats = spec.to_float(exact, 1) / den[:, None, None]
    keep = norm(mats) <= T * (1 + 1e-12)
    return _sorted(T, exact[keep], den[keep], mats[keep])


def _key(num: np.ndarray, den: int) -> bytes:
    return np.int64(den).tobytes() + np.ascontiguousarray(num, dtype=np.int64).tobytes()


# ---------------------------------------------------------------- integer orthogonal groups


def vectors_with_value(Q: np.ndarray, c: int, R: float) -> np.ndarray:
    """All integer v with vᵀQv = c and ‖v‖ ≤ R (rows, lexicographically sorted)."""
    Q = np.asarray(Q, dtype=np.int64)
    m = Q.shape[0]
    diag = np.diag(Q)
    nz = np.flatnonzero(diag)
    if nz.size == 0:
        raise ValueError("form needs a nonzero diagonal entry")
    p = int(nz[np.argmax(np.abs(diag[nz]))])
    others = [i for i in range(m) if i != p]
    B = int(np.floor(R + 1e-9))
    rng = np.arange(-B, B + 1)
    grids = np.meshgrid(*([rng] * (m - 1)), indexing="ij")
    W = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    W = W[(W * W).sum(1) <= B * B]
    Qo = Q[np.ix_(others, others)]
    rest = np.einsum("ij,jk,ik->i", W, Qo, W)
    beta = W @ Q[others, p]
    a = int(Q[p, p])
    # a z² + 2 beta z + rest - c = 0
    disc = beta * beta - a * (rest - c)
    ok = disc >= 0
    W, beta, disc = W[ok], beta[ok], disc[ok]
    s = np.rint(np.sqrt(disc.astype(float))).astype(np.int64)
    ok = s * s == disc
    W, beta, s = W[ok], beta[ok], s[ok]
    out = []
    for sgn in (1, -1):
        numz = -beta + sgn * s
        good = numz % a == 0
        z = numz[good] // a
        V = np.empty((good.sum(), m), dtype=np.int64)
        V[:, others] = W[good]
        V[:, p] = z
        out.append(V)
    V = np.unique(np.concatenate(out), axis=0)
    return V[(V * V).sum(1) <= R * R * (1 + 1e-12)]


def _time_vector(Q: np.ndarray) -> tuple[np.ndarray, int]:
    """A small integer vector inside the light cone of Q and the sign σ of its value."""
    ev = np.linalg.eigvalsh(Q.astype(float))
    sigma = 1 if (ev > 0).sum() == 1 else -1
    best = None
    for v in itertools.product(range(-2, 3), repeat=Q.shape[0]):
        v = np.array(v, dtype=np.int64)
        val = sigma * int(v @ Q @ v)
        if val > 0 and (best is None or val < best[1]):
            best = (v, val)
    return best[0], sigma


def enumerate_orthogonal(spec: GammaSpec, norm: Norm, T: float) -> BallEnumeration:
    """Γ_T for integer points of SO(Q)° by column backtracking."""
    if spec.kind == "phi-sl2z":
        raise ValueError("use enumerate_ball_direct for phi-sl2z")
    Q = spec.Q
    m = Q.shape[0]
    F = norm.frobenius_bound(T, m)
    if spec.kind == "conj-int-orth":
        F *= float(np.linalg.norm(spec.M, 2) * np.linalg.norm(spec._Minv, 2))
    F2 = F * F * (1 + 1e-12)
    # Fill columns in an order whose last column has a nonzero value, so it is
    # pinned down by the others up to two choices.
    d = np.abs(np.diag(Q))
    last = int(max(range(m), key=lambda j: (d[j], j)))
    perm = [j for j in range(m) if j != last] + [last]
    inv = np.argsort(perm)
    P = Q[np.ix_(perm, perm)]
    cand = [vectors_with_value(Q, int(P[j, j]), F) for j in range(m - 1)]
    sq = [(c * c).sum(1) for c in cand]
    Qf = Q.astype(float)
    vt, sigma = _time_vector(Q)
    found = []

    def last_column(cols: list[np.ndarray], used: int):
        # The m-1 linear conditions c_iᵀQx = P[i, m-1] leave a line x_p + t·k;
        # the value Q(x) = P[m-1, m-1] then picks at most two points on it.
        A = (np.column_stack(cols).T @ Q).astype(float)
        k = np.array([(-1) ** i * np.linalg.det(np.delete(A, i, axis=1)) for i in range(m)])
        if not np.any(np.abs(k) > 0.5):
            return
        xp = np.linalg.lstsq(A, P[: m - 1, m - 1].astype(float), rcond=None)[0]
        qa, qb, qc = k @ Qf @ k, xp @ Qf @ k, xp @ Qf @ xp - P[m - 1, m - 1]
        if abs(qa) < 1e-9:
            ts = [-qc / (2 * qb)] if abs(qb) > 1e-12 else []
        else:
            disc = qb * qb - qa * qc
            if disc < -1e-9:
                return
            r = np.sqrt(max(disc, 0.0))
            ts = [(-qb + r) / qa, (-qb - r) / qa]
        for t in ts:
            x = xp + t * k
            xr = np.rint(x).astype(np.int64)
            if np.abs(x - xr).max() > 1e-6 or used + int(xr @ xr) > F2:
                continue
            g = np.column_stack(cols + [xr])[:, inv]
            if np.any(g.T @ Q @ g != Q) or sigma * int(vt @ Q @ g @ vt) <= 0:
                continue
            if round(np.linalg.det(g.astype(float))) != 1:
                continue
            found.append(g)

    def rec(cols: list[np.ndarray], used: int):
        j = len(cols)
        if j == m - 1:
            last_column(cols, used)
            return
        C = cand[j]
        mask = sq[j] + used + (m - j - 1) <= F2
        for i, c in enumerate(cols):
            mask &= (C @ (Q @ c)) == P[i, j]
        for idx in np.flatnonzero(mask):
            rec(cols + [C[idx]], used + int(sq[j][idx]))

    rec([], 0)
    if not found:
        z = np.zeros((0, m, m), dtype=np.int64)
        return BallEnumeration(T, z, np.zeros(0, dtype=np.int64), z.astype(float))
    exact = np.stack(found)
    den = np.ones(len(found), dtype=np.int64)
    mats = spec.to_float(exact)
    keep = norm(mats) <= T * (1 + 1e-12)
    return _sorted(T, exact[keep], den[keep], mats[keep])


def enumerate_ball(spec: GammaSpec, norm: Norm, T: float) -> BallEnumeration:
    if spec.kind == "phi-sl2z":
        return enumerate_ball_direct(spec, norm, T)
    return enumerate_orthogonal(spec, norm, T)


def enumerate_HZ(T: float) -> np.ndarray:
    """Integer (x, y, z) with 2xz − y² = 1 and Euclidean norm ≤ T."""
    if T < 1:
        raise ValueError("T must be ≥ 1")
    return vectors_with_value(SS_FORM, 1, T)


# ---------------------------------------------------------------- growth


def growth_report(counts: dict[float, int], n: int, volume) -> dict:
    """Rows (T, #Γ_T, #Γ_T/T^{n-1}, #Γ_T/Vol(G_T)) plus summary statistics.

    ``volume`` maps T to Vol(G_T); it may be a callable or a dict.
    """
    Ts = sorted(counts)
    if len(Ts) < 3:
        raise ValueError("need at least three ladder rungs")
    vol = volume if callable(volume) else volume.__getitem__
    rows = []
    for T in Ts:
        V = float(vol(T))
        rows.append({"T": T, "count": counts[T], "per_T": counts[T] / T ** (n - 1), "per_volume": counts[T] / V})
    top = [r["per_volume"] for r in rows[-3:]]
    slope = float(np.polyfit(np.log(Ts), np.log([max(counts[T], 1) for T in Ts]), 1)[0])
    return {
        "rows": rows,
        "top3_variation": (max(top) - min(top)) / float(np.mean(top)),
        "exponent": slope,
    }
