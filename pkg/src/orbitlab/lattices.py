"""Lattices in subspaces of R^{n+1}, their homothety classes and shapes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import gram, star

CLASS_TOL = 1e-9
_TIE = 1e-9


# ---------------------------------------------------------------- integer helpers


def _unimodular_to_e1(z) -> tuple[list[list[int]], list[list[int]], int]:
    """Return (V, V^{-1}, d) with V·z = d·e_1, V unimodular, d = gcd(z) ≥ 0."""
    z = [int(t) for t in z]
    m = len(z)
    V = [[int(i == j) for j in range(m)] for i in range(m)]
    Vi = [[int(i == j) for j in range(m)] for i in range(m)]
    for k in range(m - 1, 0, -1):
        a, b = z[k - 1], z[k]
        if b == 0:
            continue
        # extended gcd on the pair of rows (k-1, k)
        g, x, y = _egcd(a, b)
        p, q = -b // g, a // g
        # rows: r_{k-1} <- x r_{k-1} + y r_k ; r_k <- p r_{k-1} + q r_k   (det = xq - yp = 1)
        for M in (V,):
            r0, r1 = M[k - 1], M[k]
            M[k - 1] = [x * u + y * v for u, v in zip(r0, r1)]
            M[k] = [p * u + q * v for u, v in zip(r0, r1)]
        # inverse of [[x, y], [p, q]] is [[q, -y], [-p, x]] acting on columns
        for row in Vi:
            c0, c1 = row[k - 1], row[k]
            row[k - 1] = c0 * q - c1 * p
            row[k] = -c0 * y + c1 * x
        z[k - 1], z[k] = g, 0
    if z[0] < 0:
        V[0] = [-u for u in V[0]]
        for row in Vi:
            row[0] = -row[0]
        z[0] = -z[0]
    return V, Vi, z[0]


def _egcd(a: int, b: int) -> tuple[int, int, int]:
    x0, y0, x1, y1 = 1, 0, 0, 1
    while b:
        q, a, b = a // b, b, a % b
        x0, x1 = x1, x0 - q * x1
        y0, y1 = y1, y0 - q * y1
    if a < 0:
        a, x0, y0 = -a, -x0, -y0
    return a, x0, y0


def complete_unimodular(z) -> np.ndarray:
    """Integer unimodular matrix whose first column is the primitive vector z."""
    _, Vi, d = _unimodular_to_e1(z)
    if d != 1:
        raise ValueError("vector is not primitive")
    return np.array(Vi, dtype=np.int64)


def integer_kernel(v) -> np.ndarray:
    """Integer basis (columns) of {x in Z^m : v·x = 0}."""
    V, _, d = _unimodular_to_e1(v)
    if d == 0:
        raise ValueError("zero vector")
    # V v = d e1, so v^T V^T = d e1^T and the later columns of V^T span the kernel.
    W = np.array(V, dtype=np.int64).T
    return W[:, 1:]


# ---------------------------------------------------------------- LLL and enumeration


def lll(B: np.ndarray, delta: float = 0.99) -> tuple[np.ndarray, np.ndarray]:
    """LLL-reduce the columns of B.  Returns (reduced basis, integer transform U)."""
    B = np.array(B, dtype=float)
    r = B.shape[1]
    U = np.eye(r, dtype=np.int64)
    k = 1
    while k < r:
        Q, R = np.linalg.qr(B)
        for j in range(k - 1, -1, -1):
            mu = R[j, k] / R[j, j]
            c = round(mu)
            if c:
                B[:, k] -= c * B[:, j]
                U[:, k] -= c * U[:, j]
                R[:, k] -= c * R[:, j]
        if R[k, k] ** 2 + R[k - 1, k] ** 2 >= delta * R[k - 1, k - 1] ** 2:
            k += 1
        else:
            B[:, [k - 1, k]] = B[:, [k, k - 1]]
            U[:, [k - 1, k]] = U[:, [k, k - 1]]
            k = max(k - 1, 1)
    return B, U


def short_vectors(B: np.ndarray, radius2: float) -> list[np.ndarray]:
    """All nonzero integer z with ‖Bz‖² ≤ radius2 (Fincke–Pohst)."""
    G = B.T @ B
    d = G.shape[0]
    R = np.linalg.cholesky(G).T  # G = R^T R, R upper triangular
    out: list[np.ndarray] = []
    z = np.zeros(d)

    def rec(i: int, partial: float):
        # coordinate i given z[i+1:]
        c = -float(R[i, i + 1 :] @ z[i + 1 :]) / R[i, i]
        rem = radius2 - partial
        if rem < -1e-15:
            return
        w = math.sqrt(max(rem, 0.0)) / R[i, i]
        for zi in range(math.ceil(c - w - 1e-12), math.floor(c + w + 1e-12) + 1):
            z[i] = zi
            val = partial + (R[i, i] * (zi - c)) ** 2
            if val > radius2 + 1e-15:
                continue
            if i == 0:
                if np.any(z):
                    out.append(z.astype(np.int64).copy())
            else:
                rec(i - 1, val)
        z[i] = 0

    rec(d - 1, 0.0)
    return out


def _lex_greater(a: np.ndarray, b: np.ndarray, tol: float = _TIE) -> bool:
    for x, y in zip(a, b):
        if x > y + tol:
            return True
        if x < y - tol:
            return False
    return False


def _size_reduce_candidates(v: np.ndarray, chosen: list[np.ndarray], Qs: np.ndarray, Rd: np.ndarray) -> list[np.ndarray]:
    """Size-reduce v against the chosen vectors, branching on half-integer ties."""
    cands = [v]
    for j in range(len(chosen) - 1, -1, -1):
        nxt = []
        for w in cands:
            mu = float(Qs[:, j] @ w) / Rd[j]
            f = math.floor(mu)
            if abs(mu - f - 0.5) < 1e-7:
                opts = [f, f + 1]
            else:
                opts = [round(mu)]
            for c in opts:
                nxt.append(w - c * chosen[j])
        cands = nxt
    return cands


def canonical_basis(B: np.ndarray) -> np.ndarray:
    """Canonical representative of the homothety class of the lattice spanned by B's columns.

    The first vector is a shortest vector; each later vector projects to a
    shortest vector of the lattice projected away from the earlier ones and
    is size-reduced.  Remaining ties (signs, symmetric lattices, half-integer
    size-reduction coefficients) are broken by taking the lexicographically
    largest coordinates.  The result has unit covolume.
    """
    B = np.array(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    m, r = B.shape
    G = B.T @ B
    det = np.linalg.det(G)
    if not det > 1e-12 * np.prod(np.diag(G)):
        raise ValueError("rank-deficient lattice basis")
    B = B / det ** (1.0 / (2 * r))
    C, _ = lll(B)
    chosen: list[np.ndarray] = []
    for k in range(r):
        if k:
            Qs, Rs = np.linalg.qr(np.column_stack(chosen))
            P = C[:, k:] - Qs @ (Qs.T @ C[:, k:])
            Rd = np.diag(Rs) ** 2
            Qs = Qs * np.diag(Rs)  # columns q_j * |b_j*| so that mu_j = q_j·v / |b_j*|^2
        else:
            P = C.copy()
            Qs = np.zeros((m, 0))
            Rd = np.zeros(0)
        P, U = lll(P)
        C[:, k:] = C[:, k:] @ U
        lam2 = min(float(P[:, t] @ P[:, t]) for t in range(P.shape[1]))
        zs = short_vectors(P, lam2 * (1 + 1e-8))
        lam2 = min(float(np.sum((P @ z) ** 2)) for z in zs)
        zs = [z for z in zs if float(np.sum((P @ z) ** 2)) <= lam2 * (1 + 1e-8)]
        best = None
        best_z = None
        for z in zs:
            for v in _size_reduce_candidates(C[:, k:] @ z, chosen, Qs, Rd):
                if best is None or _lex_greater(v, best):
                    best, best_z = v, z
        U = complete_unimodular(best_z)
        C[:, k:] = C[:, k:] @ U
        C[:, k] = best
        chosen.append(best)
    out = np.column_stack(chosen)
    # Recompute from integer coordinates in the input basis to shed rounding drift.
    T = np.round(np.linalg.lstsq(B, out, rcond=None)[0])
    out = B @ T
    return out / np.linalg.det(out.T @ out) ** (1.0 / (2 * r))


# ---------------------------------------------------------------- types


@dataclass(frozen=True, eq=False)
class LatticeBasis:
    basis: np.ndarray
    exact_basis: np.ndarray | None = None

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        object.__setattr__(self, "basis", b)
        G = b.T @ b
        if not np.linalg.det(G) > 1e-12 * np.prod(np.diag(G)):
            raise ValueError("basis is not of full column rank")

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def rank(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True, eq=False)
class HomothetyClass:
    canon: np.ndarray

    @property
    def rank(self) -> int:
        return self.canon.shape[1]

    @property
    def ambient_dim(self) -> int:
        return self.canon.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, HomothetyClass):
            return NotImplemented
        return self.canon.shape == other.canon.shape and bool(np.abs(self.canon - other.canon).max() < CLASS_TOL)

    def to_json(self) -> dict:
        return {
            "ambient_dim": self.ambient_dim,
            "rank": self.rank,
            "basis": self.canon.ravel().tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "HomothetyClass":
        b = np.array(d["basis"], dtype=float).reshape(d["ambient_dim"], d["rank"])
        return cls(b)


def canonical_class(L) -> HomothetyClass:
    B = L.basis if isinstance(L, LatticeBasis) else np.asarray(L, dtype=float)
    return HomothetyClass(canonical_basis(B))


def same_class(A: np.ndarray, B: np.ndarray, tol: float = 1e-8) -> bool:
    """Exact-style test: B = c·A·U for an integer unimodular U and scalar c > 0."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        return False
    r = A.shape[1]
    A = A / np.linalg.det(A.T @ A) ** (1 / (2 * r))
    B = B / np.linalg.det(B.T @ B) ** (1 / (2 * r))
    U, res, *_ = np.linalg.lstsq(A, B, rcond=None)
    if np.abs(A @ U - B).max() > tol * max(1.0, np.abs(B).max()):
        return False
    Ur = np.round(U)
    return bool(np.abs(U - Ur).max() < tol * max(1.0, np.abs(U).max()) and abs(abs(np.linalg.det(Ur)) - 1) < 0.5)


@dataclass(frozen=True, eq=False)
class OrthoPair:
    """A pair of homothety classes of mutually orthogonal lattices.

    ``dual`` marks a pair whose lattices were swapped so that the first has a
    positive-definite span; the group then acts through g ↦ g*.
    """

    first: HomothetyClass
    second: HomothetyClass
    dual: bool = False

    def __post_init__(self):
        if self.first.ambient_dim != self.second.ambient_dim:
            raise ValueError("ambient dimensions differ")
        if self.first.rank + self.second.rank != self.first.ambient_dim:
            raise ValueError("ranks must add up to the ambient dimension")
        if np.abs(self.first.canon.T @ self.second.canon).max() > CLASS_TOL:
            raise ValueError("lattices are not orthogonal")

    @property
    def n(self) -> int:
        return self.first.ambient_dim - 1

    @property
    def r(self) -> int:
        return self.first.rank

    def __eq__(self, other) -> bool:
        if not isinstance(other, OrthoPair):
            return NotImplemented
        return self.first == other.first and self.second == other.second and self.dual == other.dual

    def to_json(self) -> dict:
        return {"first": self.first.to_json(), "second": self.second.to_json(), "dual": self.dual}


def _orthonormal_span(B: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(np.asarray(B, dtype=float))
    return Q


def q_gram_det(B: np.ndarray) -> float:
    """Determinant of the form restricted to span(B), in an orthonormal basis."""
    Q = _orthonormal_span(B)
    n = Q.shape[0] - 1
    return float(np.linalg.det(Q.T @ gram(n) @ Q))


def span_signature(B: np.ndarray, exact: np.ndarray | None = None, tol: float = 1e-9) -> str:
    """'positive', 'degenerate' or 'lorentzian' for the form restricted to span(B)."""
    if exact is not None:
        E = np.asarray(exact, dtype=object)
        n = E.shape[0] - 1
        J = np.diag([1] * n + [-1]).astype(object)
        G = E.T @ J @ E
        d = _int_det(G)
        if d == 0:
            return "degenerate"
        ev = np.linalg.eigvalsh(np.array(G, dtype=float))
        return "positive" if ev.min() > 0 else "lorentzian"
    Q = _orthonormal_span(B)
    n = Q.shape[0] - 1
    ev = np.linalg.eigvalsh(Q.T @ gram(n) @ Q)
    if abs(np.prod(ev)) < tol:
        return "degenerate"
    return "positive" if ev.min() > 0 else "lorentzian"


def _int_det(M) -> int:
    """Exact determinant of a small integer matrix via fraction-free elimination."""
    M = [[int(x) for x in row] for row in np.asarray(M, dtype=object)]
    m = len(M)
    sign, prev = 1, 1
    for k in range(m - 1):
        if M[k][k] == 0:
            for i in range(k + 1, m):
                if M[i][k] != 0:
                    M[k], M[i] = M[i], M[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, m):
            for j in range(k + 1, m):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[-1][-1]


def make_pair(L1, L2=None) -> OrthoPair:
    """Build an OrthoPair from a lattice and (optionally) its orthogonal partner.

    When ``L2`` is omitted the partner is the lattice Z·w spanned by the normal
    of a hyperplane, or, in general, an integer kernel basis for integer input
    and an orthonormal complement otherwise.  If span(L1) is Lorentzian and
    span(L2) positive definite, the lattices are swapped and ``dual`` is set.
    """
    B1 = L1.basis if isinstance(L1, LatticeBasis) else np.asarray(L1, dtype=float)
    if B1.ndim == 1:
        B1 = B1[:, None]
    if L2 is None:
        Q, _ = np.linalg.qr(B1, mode="complete")
        B2 = Q[:, B1.shape[1] :]
    else:
        B2 = L2.basis if isinstance(L2, LatticeBasis) else np.asarray(L2, dtype=float)
        if B2.ndim == 1:
            B2 = B2[:, None]
    sig = span_signature(B1)
    if sig == "lorentzian" and span_signature(B2) == "positive":
        return OrthoPair(canonical_class(B2), canonical_class(B1), dual=True)
    return OrthoPair(canonical_class(B1), canonical_class(B2))


def act(g: np.ndarray, p: OrthoPair) -> OrthoPair:
    g = np.asarray(g, dtype=float)
    gs = star(g)
    if p.dual:
        g, gs = gs, g
    return OrthoPair(canonical_class(g @ p.first.canon), canonical_class(gs @ p.second.canon), p.dual)


# ---------------------------------------------------------------- subspaces


@dataclass(frozen=True, eq=False)
class SubspacePair:
    p1: np.ndarray
    p2: np.ndarray
    degenerate: bool


def project_pi(p: OrthoPair) -> SubspacePair:
    Q1 = _orthonormal_span(p.first.canon)
    Q2 = _orthonormal_span(p.second.canon)
    return SubspacePair(Q1, Q2, abs(q_gram_det(Q1)) < 1e-9)


def ortho_lattice(v) -> LatticeBasis:
    v = [int(t) for t in v]
    if not any(v):
        raise ValueError("v must be nonzero")
    K = integer_kernel(v)
    _, U = lll(K.astype(float))
    K = K @ U
    return LatticeBasis(K.astype(float), exact_basis=K)


def null_direction(P: np.ndarray) -> np.ndarray:
    """Unit vector in span(P) closest to the light cone, oriented with last coordinate ≥ 0.

    For a degenerate subspace this is its radical.  For nearby nondegenerate
    subspaces it varies continuously, which is what the angle statistics use.
    """
    Q = _orthonormal_span(P)
    n = Q.shape[0] - 1
    w, V = np.linalg.eigh(Q.T @ gram(n) @ Q)
    v = Q @ V[:, np.argmin(np.abs(w))]
    if v[-1] < 0:
        v = -v
    return v


def subspace_angle(P: np.ndarray) -> float:
    """θ in [0, 2π) with the null direction of span(P) proportional to k_θ v+ (n = 2)."""
    v = null_direction(P)
    return float(np.arctan2(v[1], v[0]) % (2 * np.pi))


# ---------------------------------------------------------------- shapes


@dataclass(frozen=True)
class ShapePoint:
    x: float
    y: float

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y}


@dataclass(frozen=True)
class X2Point:
    x: float
    y: float

    def to_json(self) -> dict:
        return {"x": self.x, "y": self.y}

    def shape(self) -> ShapePoint:
        return ShapePoint(abs(self.x), self.y)


def reduce_tau(x, y):
    """Move τ = x + iy into the standard SL(2,Z) fundamental domain (vectorized).

    Boundary points are sent to the side with x ≥ 0.
    """
    x = np.array(x, dtype=float, copy=True)
    y = np.array(y, dtype=float, copy=True)
    for _ in range(200):
        x -= np.floor(x + 0.5)
        r2 = x * x + y * y
        inv = r2 < 1 - 1e-13
        if not inv.any():
            break
        x[inv], y[inv] = -x[inv] / r2[inv], y[inv] / r2[inv]
    x = np.where(np.abs(x + 0.5) < 1e-12, 0.5, x)
    on_circle = (np.abs(x * x + y * y - 1) < 1e-12) & (x < 0)
    x = np.where(on_circle, -x, x)
    return x, y


def tau_from_gram(G) -> tuple[np.ndarray, np.ndarray]:
    """τ for bases with Gram matrices G (…, 2, 2); orientation-free."""
    G = np.asarray(G, dtype=float)
    g11, g12, g22 = G[..., 0, 0], G[..., 0, 1], G[..., 1, 1]
    return g12 / g11, np.sqrt(np.maximum(g11 * g22 - g12 * g12, 0.0)) / g11


def shape_from_bases(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shapes (x, y) for a stack of rank-2 bases (…, m, 2)."""
    B = np.asarray(B, dtype=float)
    G = np.swapaxes(B, -1, -2) @ B
    x, y = tau_from_gram(G)
    x, y = reduce_tau(x, y)
    return np.abs(x), y


def shape(c: HomothetyClass) -> ShapePoint:
    if c.rank != 2:
        raise ValueError("shape is defined for rank-2 classes")
    G = c.canon.T @ c.canon
    if np.linalg.det(G) <= 1e-12:
        raise ValueError("degenerate Gram matrix")
    x, y = shape_from_bases(c.canon)
    return ShapePoint(float(x), float(y))


def x2_from_coords(Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Oriented X2 coordinates of lattices given by 2×2 coordinate bases (…, 2, 2)."""
    Z = np.asarray(Z, dtype=float)
    z1 = Z[..., 0, 0] + 1j * Z[..., 1, 0]
    z2 = Z[..., 0, 1] + 1j * Z[..., 1, 1]
    tau = z2 / z1
    tau = np.where(tau.imag < 0, z1 / z2, tau)
    x, y = reduce_tau(tau.real, tau.imag)
    return x, y


def x2_point(c: HomothetyClass, frame: np.ndarray) -> X2Point:
    """Oriented point of X2 for a rank-2 class, using the orientation of ``frame``.

    ``frame`` is an orthonormal (n+1)×2 basis of the span; only its
    orientation affects the result.
    """
    if c.rank != 2:
        raise ValueError("x2_point is defined for rank-2 classes")
    frame = np.asarray(frame, dtype=float)
    Z = frame.T @ c.canon
    if np.abs(frame @ Z - c.canon).max() > 1e-8:
        raise ValueError("frame does not span the lattice")
    x, y = x2_from_coords(Z)
    return X2Point(float(x), float(y))


def fiber_coordinates(p: OrthoPair, P: SubspacePair):
    out = []
    for c, F in ((p.first, P.p1), (p.second, P.p2)):
        Z = F.T @ c.canon
        if np.abs(F @ Z - c.canon).max() > 1e-8:
            raise ValueError("subspace pair does not match the lattices")
        if c.rank == 2:
            x, y = x2_from_coords(Z)
            out.append(X2Point(float(x), float(y)))
        else:
            out.append(canonical_class(Z))
    return tuple(out)
