"""Matrix models for SO(n,1)° and the pieces of it used elsewhere.

Everything here works on plain ``numpy`` arrays of shape ``(n+1, n+1)``.
The quadratic form is ``x_1^2 + ... + x_n^2 - x_{n+1}^2`` and vectors are
columns.  Index conventions in docstrings are 1-based to match the usual
matrix notation; the code itself is 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONSTRUCTOR_TOL = 1e-10
DECOMP_TOL = 1e-9


def gram(n: int) -> np.ndarray:
    """Diagonal Gram matrix of the form in dimension ``n+1``."""
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    d = np.ones(n + 1)
    d[-1] = -1.0
    return np.diag(d)


def qform(v: np.ndarray) -> np.ndarray:
    """Value of the form on the last axis of ``v``."""
    v = np.asarray(v, dtype=float)
    return np.sum(v[..., :-1] ** 2, axis=-1) - v[..., -1] ** 2


def qbilinear(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    return np.sum(v[..., :-1] * w[..., :-1], axis=-1) - v[..., -1] * w[..., -1]


def is_group_element(g: np.ndarray, tol: float = CONSTRUCTOR_TOL) -> bool:
    """Check form preservation, determinant one and the identity-component sign."""
    g = np.asarray(g, dtype=float)
    n = g.shape[0] - 1
    J = gram(n)
    scale = max(1.0, float(np.abs(g).max()) ** 2)
    if np.abs(g.T @ J @ g - J).max() > tol * scale:
        return False
    if abs(np.linalg.det(g) - 1.0) > tol * scale ** ((n + 1) / 2):
        return False
    return bool(g[-1, -1] >= 1.0 - tol)


@dataclass(frozen=True, eq=False)
class GroupElement:
    """A matrix in SO(n,1)°, optionally with an exact rational form.

    ``exact`` holds an integer numerator and ``den`` its common denominator,
    so the exact matrix is ``exact / den``.  Elements of Φ(SL(2,Z)) need
    ``den = 2``; integer orthogonal groups use ``den = 1``.
    """

    mat: np.ndarray
    exact: np.ndarray | None = None
    den: int = 1
    tag: object = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.mat.shape[0] - 1

    def key(self) -> bytes:
        if self.exact is None:
            raise ValueError("element has no exact form")
        return np.int64(self.den).tobytes() + np.ascontiguousarray(self.exact, dtype=np.int64).tobytes()


def exact_product(a: tuple[np.ndarray, int], b: tuple[np.ndarray, int]) -> tuple[np.ndarray, int]:
    """Multiply two rational matrices given as (integer numerator, denominator)."""
    num = a[0].astype(object) @ b[0].astype(object)
    den = a[1] * b[1]
    g = int(np.gcd.reduce(np.append(num.ravel(), den).astype(object)))
    num = num // g
    return np.array(num, dtype=np.int64), den // g


def make_a(s: float, n: int = 2) -> np.ndarray:
    g = np.eye(n + 1)
    c, sh = np.cosh(s), np.sinh(s)
    g[0, 0] = g[-1, -1] = c
    g[0, -1] = g[-1, 0] = sh
    return g


def make_u(x, n: int | None = None) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if n is None:
        n = x.size + 1
    if x.size != n - 1:
        raise ValueError(f"u(x) needs x of length {n - 1}, got {x.size}")
    h = 0.5 * float(x @ x)
    g = np.eye(n + 1)
    g[0, 0] = 1.0 - h
    g[0, 1:-1] = x
    g[0, -1] = h
    g[1:-1, 0] = -x
    g[1:-1, -1] = x
    g[-1, 0] = -h
    g[-1, 1:-1] = x
    g[-1, -1] = 1.0 + h
    return g


def make_a_infty(sign: int = 1, n: int = 2) -> np.ndarray:
    """Boundary matrix a(+∞) or a(−∞) = J a(∞) J with J = diag(−1, 1, ..., 1)."""
    m = np.zeros((n + 1, n + 1))
    m[0, 0] = m[0, -1] = m[-1, 0] = m[-1, -1] = 0.5
    if sign < 0:
        J = np.eye(n + 1)
        J[0, 0] = -1.0
        m = J @ m @ J
    return m


def middle_block(n: int) -> np.ndarray:
    """The part of a(s) that does not depend on s: a(s) = e^s a(∞) + e^{-s} a(-∞) + middle."""
    m = np.eye(n + 1)
    m[0, 0] = m[-1, -1] = 0.0
    return m


def v_plus(n: int) -> np.ndarray:
    v = np.zeros(n + 1)
    v[0] = v[-1] = 1.0
    return v


def v_minus(n: int) -> np.ndarray:
    v = np.zeros(n + 1)
    v[0], v[-1] = 1.0, -1.0
    return v


def basis_vector(i: int, n: int) -> np.ndarray:
    """e_i with 1-based index."""
    e = np.zeros(n + 1)
    e[i - 1] = 1.0
    return e


def embed_K(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    m = R.shape[0]
    if R.shape != (m, m) or np.abs(R.T @ R - np.eye(m)).max() > CONSTRUCTOR_TOL:
        raise ValueError("R must be orthogonal")
    if abs(np.linalg.det(R) - 1.0) > CONSTRUCTOR_TOL:
        raise ValueError("R must have determinant 1")
    g = np.eye(m + 1)
    g[:m, :m] = R
    return g


def rotation2(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def make_k_theta(theta: float, n: int = 2) -> np.ndarray:
    """Rotation by θ in the (e_1, e_2) plane."""
    g = np.eye(n + 1)
    g[:2, :2] = rotation2(theta)
    return g


def star(g: np.ndarray) -> np.ndarray:
    """Transpose-inverse.  For group elements this equals gram·g·gram."""
    g = np.asarray(g, dtype=float)
    if abs(np.linalg.det(g)) < 1e-300:
        raise ValueError("singular matrix")
    return np.linalg.inv(g).T


def _complete_to_rotation(v: np.ndarray) -> np.ndarray:
    """An element of SO(m) whose first column is the unit vector v."""
    m = v.size
    A = np.eye(m)
    A[:, 0] = v
    Q, R = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(R))
    if np.dot(Q[:, 0], v) < 0:
        Q[:, 0] = -Q[:, 0]
    if np.linalg.det(Q) < 0:
        Q[:, -1] = -Q[:, -1]
    return Q


def cartan_decompose(g: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
    """Write g = k1 · a(t) · k2 with k1, k2 in K and t ≥ 0."""
    g = np.asarray(g, dtype=float)
    n = g.shape[0] - 1
    t = float(np.arccosh(max(g[-1, -1], 1.0)))
    col = g[:n, -1]
    norm = np.linalg.norm(col)
    if norm < 1e-14:
        return g.copy(), 0.0, np.eye(n + 1)
    k1 = embed_K(_complete_to_rotation(col / norm))
    k2 = make_a(-t, n) @ k1.T @ g
    # k2 is orthogonal up to rounding; project back onto SO(n).
    U, _, Vt = np.linalg.svd(k2[:n, :n])
    R = U @ Vt
    k2 = np.eye(n + 1)
    k2[:n, :n] = R
    return k1, t, k2


# ---------------------------------------------------------------- n = 2 isogeny


def sl2_delta(s: float) -> np.ndarray:
    return np.diag([np.exp(s / 2), np.exp(-s / 2)])


def sl2_upsilon(t: float) -> np.ndarray:
    return np.array([[1.0, t], [0.0, 1.0]])


def sl2_kappa(phi: float) -> np.ndarray:
    return rotation2(phi)


# Twice the basis of sl(2) that Φ uses: B1 = (E+F)/2, B2 = -H/2, B3 = (E-F)/2.
# In this basis the adjoint action sends δ(s) to a(s) and υ(t) to u(t).
_SL2_BASIS_X2 = np.array(
    [
        [[0, 1], [1, 0]],
        [[-1, 0], [0, 1]],
        [[0, 1], [-1, 0]],
    ]
)


def _phi_columns(g: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    cols = []
    for B in _SL2_BASIS_X2:
        Y = g @ B @ ginv
        p, q, r = Y[..., 0, 0], Y[..., 0, 1], Y[..., 1, 0]
        cols.append(np.stack([q + r, -2 * p, q - r], axis=-1))
    return np.stack(cols, axis=-1)


def build_isogeny_phi(g: np.ndarray) -> np.ndarray:
    """Φ : SL(2,R) → SO(2,1)°.  Accepts a single 2×2 matrix or a stack."""
    g = np.asarray(g, dtype=float)
    if g.shape[-2:] != (2, 2):
        raise ValueError("Φ is defined on 2×2 matrices (n = 2 only)")
    ginv = np.empty_like(g)
    ginv[..., 0, 0] = g[..., 1, 1]
    ginv[..., 1, 1] = g[..., 0, 0]
    ginv[..., 0, 1] = -g[..., 0, 1]
    ginv[..., 1, 0] = -g[..., 1, 0]
    return _phi_columns(g, ginv) / 2.0


def phi_exact(g: np.ndarray) -> np.ndarray:
    """Integer matrix 2Φ(g) for integer g in SL(2,Z) (single or stacked)."""
    g = np.asarray(g, dtype=np.int64)
    ginv = np.empty_like(g)
    ginv[..., 0, 0] = g[..., 1, 1]
    ginv[..., 1, 1] = g[..., 0, 0]
    ginv[..., 0, 1] = -g[..., 0, 1]
    ginv[..., 1, 0] = -g[..., 1, 0]
    return _phi_columns(g, ginv)


def phi_inverse(G: np.ndarray) -> np.ndarray:
    """One of the two lifts ±g with Φ(g) = G."""
    k1, t, k2 = cartan_decompose(G)
    a1 = np.arctan2(k1[1, 0], k1[0, 0])
    a2 = np.arctan2(k2[1, 0], k2[0, 0])
    return sl2_kappa(a1 / 2) @ sl2_delta(t) @ sl2_kappa(a2 / 2)


# ---------------------------------------------------------------- representations


def _block_map(basis: np.ndarray, blocks: list[np.ndarray]) -> np.ndarray:
    """Ambient matrix acting by ``blocks`` in the coordinates of ``basis`` columns."""
    sizes = [b.shape[0] for b in blocks]
    D = np.zeros((sum(sizes), sum(sizes)))
    o = 0
    for b in blocks:
        if abs(np.linalg.det(b)) < 1e-300:
            raise ValueError("singular block")
        D[o : o + b.shape[0], o : o + b.shape[0]] = b
        o += b.shape[0]
    return basis @ D @ np.linalg.inv(basis)


def bases_zero(i: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Ordered bases (e_1..e_{i+1}) and (e_{i+2}..e_{n+1}) as column matrices."""
    E = np.eye(n + 1)
    return E[:, : i + 1], E[:, i + 1 :]


def bases_infty(i: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Ordered bases (v+, e_2..e_{i+1}) and (v-, e_{i+2}..e_n)."""
    E = np.eye(n + 1)
    B1 = np.column_stack([v_plus(n)] + [E[:, q] for q in range(1, i + 1)])
    B2 = np.column_stack([v_minus(n)] + [E[:, q] for q in range(i + 1, n)])
    return B1, B2


def _pair_sizes(y1, y2) -> tuple[np.ndarray, np.ndarray, int, int]:
    y1 = np.atleast_2d(np.asarray(y1, dtype=float))
    y2 = np.atleast_2d(np.asarray(y2, dtype=float))
    i = y1.shape[0] - 1
    n = y1.shape[0] + y2.shape[0] - 1
    return y1, y2, i, n


def rep_rho0(y1, y2) -> np.ndarray:
    y1, y2, i, n = _pair_sizes(y1, y2)
    B1, B2 = bases_zero(i, n)
    return _block_map(np.column_stack([B1, B2]), [y1, y2])


def rep_rho_infty(y1, y2=None) -> np.ndarray:
    """Ambient map acting by y1 on P1^∞ and y2 on P2^∞ in the ordered bases.

    With ``y2`` omitted and ``y1`` of size 2 this is the n = 2 representation of
    SL(2,R) on P^∞ = span{v+, e_2}, extended by the identity on v-.
    """
    if y2 is None:
        y2 = np.eye(1)
    y1, y2, i, n = _pair_sizes(y1, y2)
    B1, B2 = bases_infty(i, n)
    return _block_map(np.column_stack([B1, B2]), [y1, y2])


def rep_rho_infty_theta(theta: float, g: np.ndarray) -> np.ndarray:
    k = make_k_theta(theta)
    return k @ rep_rho_infty(g) @ k.T


def make_g1_g2(s: float, n: int = 2) -> tuple[np.ndarray, np.ndarray]:
    E = np.eye(n + 1)
    vp, vm = v_plus(n), v_minus(n)
    src1 = np.column_stack([E[:, 0]] + [E[:, q] for q in range(1, n)] + [vm])
    img1 = np.column_stack([np.exp(s) / 2 * vp] + [E[:, q] for q in range(1, n)] + [np.exp(-s) * vm])
    src2 = np.column_stack([vp] + [E[:, q] for q in range(1, n)] + [E[:, -1]])
    img2 = np.column_stack([np.exp(-s) * vp] + [E[:, q] for q in range(1, n)] + [-np.exp(s) / 2 * vm])
    return img1 @ np.linalg.inv(src1), img2 @ np.linalg.inv(src2)


def make_R1_R2(n: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Fixed completions with R1 e_{n+1} = -v- and R2 e_1 = v+ (determinant one)."""
    E = np.eye(n + 1)
    R1 = E.copy()
    R1[:, 0] = v_plus(n) / 2
    R1[:, -1] = -v_minus(n)
    R2 = E.copy()
    R2[:, 0] = v_plus(n)
    R2[:, -1] = -v_minus(n) / 2
    return R1, R2


def make_d1_d2(s: float, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    d1 = np.diag([np.exp(i * s / (i + 1))] + [np.exp(-s / (i + 1))] * i)
    d2 = np.diag([np.exp(-s / (j + 1))] * j + [np.exp(j * s / (j + 1))])
    return d1, d2


def make_delta_upsilon(s: float, x, i: int, j: int):
    """Return ((δ1, δ2), (υ1, υ2)) for the unipotent coordinates x = (a, b)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != i + j:
        raise ValueError(f"x must have length {i + j}")
    d1 = np.diag([np.exp(i * s / (i + 1))] + [np.exp(-s / (i + 1))] * i)
    d2 = np.diag([np.exp(j * s / (j + 1))] + [np.exp(-s / (j + 1))] * j)
    u1 = np.eye(i + 1)
    u1[0, 1:] = x[:i]
    u2 = np.eye(j + 1)
    u2[0, 1:] = x[i:]
    return (d1, d2), (u1, u2)


# ---------------------------------------------------------------- subgroups


def _same_span(A: np.ndarray, B: np.ndarray, tol: float = DECOMP_TOL) -> bool:
    r = np.linalg.matrix_rank(A, tol)
    return r == np.linalg.matrix_rank(B, tol) == np.linalg.matrix_rank(np.column_stack([A, B]), tol)


def degenerate_subspaces(r: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Column bases of P1^∞ = span{v+, e_2..e_r} and P2^∞ = span{v-, e_{r+1}..e_n}."""
    return bases_infty(r - 1, n)


def in_K_Pinfty(k: np.ndarray, r: int) -> bool:
    k = np.asarray(k, dtype=float)
    n = k.shape[0] - 1
    P1, P2 = degenerate_subspaces(r, n)
    return _same_span(k @ P1, P1) and _same_span(k @ P2, P2)


@dataclass(frozen=True)
class HSubgroup:
    """H_{i,j} = diag(SO(i+1), SO(j,1)°) with i + j = n - 1."""

    i: int
    j: int

    @property
    def n(self) -> int:
        return self.i + self.j + 1

    def element(self, c: np.ndarray, c1: np.ndarray, t: float, c2: np.ndarray) -> np.ndarray:
        """diag(c, c1 a_j(t) c2) with c in SO(i+1) and c1, c2 in SO(j)."""
        i, j = self.i, self.j
        h = np.eye(self.n + 1)
        h[: i + 1, : i + 1] = c
        if j > 0:
            low = make_a(t, j) if j >= 2 else np.array([[np.cosh(t), np.sinh(t)], [np.sinh(t), np.cosh(t)]])
            e1 = np.eye(j + 1)
            e1[:j, :j] = c1
            e2 = np.eye(j + 1)
            e2[:j, :j] = c2
            h[i + 1 :, i + 1 :] = e1 @ low @ e2
        return h
