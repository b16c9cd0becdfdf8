"""Q-matrix algebra over the stacked vector z = [x; u; v].

Two half-vectorizations connect quadratic forms to regression rows:

    vecs(H) stacks the upper triangle of H row-major,
    vech(Z) does the same but doubles the off-diagonal entries,

so that vech(Z) . vecs(H) = Tr(Z H) exactly, and in particular
z'Hz = vech(zz') . vecs(H).  H1/H2 are built from value matrices by
h_from_values, and gains/values are read back out of H by gains_from_q
and values_from_q.
"""

import math

import numpy as np

from .model import (
    GainPair,
    GainExtractionError,
    QPair,
    ValuePair,
    require_symmetric,
    symmetrize,
)


def block_slices(n, m1, m2):
    """Index ranges of the x, u, v blocks inside a p x p Q-matrix."""
    return slice(0, n), slice(n, n + m1), slice(n + m1, n + m1 + m2)


def stack_input(sys, x, u, v):
    """Concatenate [x; u; v] after checking the partition against sys."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if (x.size, u.size, v.size) != (sys.n, sys.m1, sys.m2):
        raise ValueError(
            f"partition ({x.size},{u.size},{v.size}) does not match "
            f"system dims {sys.dims}"
        )
    return np.concatenate([x, u, v])


def vecs(H, tol=1e-9):
    """Upper-triangular row-major stack [H11, H12, ..., H1p, H22, ..., Hpp]."""
    H = np.asarray(H, dtype=float)
    require_symmetric(H, "H", tol=tol * max(1.0, float(np.abs(H).max() or 1.0)))
    return H[np.triu_indices(H.shape[0])].copy()


def vech(Z, tol=1e-9):
    """Like vecs but off-diagonal entries doubled, so vech(Z).vecs(H) = Tr(ZH)."""
    Z = np.asarray(Z, dtype=float)
    require_symmetric(Z, "Z", tol=tol * max(1.0, float(np.abs(Z).max() or 1.0)))
    W = np.full(Z.shape, 2.0)
    np.fill_diagonal(W, 1.0)
    return (Z * W)[np.triu_indices(Z.shape[0])]


def mat_from_vecs(s):
    """Inverse of vecs: rebuild the symmetric matrix from its triangle stack."""
    s = np.asarray(s, dtype=float)
    p = (math.isqrt(8 * s.size + 1) - 1) // 2
    if p * (p + 1) // 2 != s.size:
        raise ValueError(f"length {s.size} is not a triangular number")
    H = np.zeros((p, p))
    H[np.triu_indices(p)] = s
    return H + np.triu(H, 1).T


def q_value(H, z):
    """Quadratic form z'Hz."""
    z = np.asarray(z, dtype=float)
    H = np.asarray(H, dtype=float)
    if H.shape != (z.size, z.size):
        raise ValueError(f"H {H.shape} incompatible with z of length {z.size}")
    return float(z @ H @ z)


def h_from_values(sys, cost, vals):
    """Assemble (H1, H2) from (P1, P2).

    With L = [A1 B1 C1] and G = [A2 0 C2],

        H1 = blkdiag(-Q, -I, g^2 I) + L'P1 L + G'P1 G,
        H2 = blkdiag( Q,  I,   0  ) + L'P2 L + G'P2 G.
    """
    n, m1, m2 = sys.dims
    L = np.hstack([sys.A1, sys.B1, sys.C1])
    G = np.hstack([sys.A2, np.zeros((n, m1)), sys.C2])
    g2 = cost.gamma**2
    base1 = np.zeros((sys.p, sys.p))
    base2 = np.zeros((sys.p, sys.p))
    sx, su, sv = block_slices(n, m1, m2)
    base1[sx, sx] = -cost.Q
    base1[su, su] = -np.eye(m1)
    base1[sv, sv] = g2 * np.eye(m2)
    base2[sx, sx] = cost.Q
    base2[su, su] = np.eye(m1)
    H1 = base1 + L.T @ vals.P1 @ L + G.T @ vals.P1 @ G
    H2 = base2 + L.T @ vals.P2 @ L + G.T @ vals.P2 @ G
    return QPair(symmetrize(H1), symmetrize(H2), n, m1, m2)


def gains_from_q(q):
    """Extract (K1, K2) from (H1, H2) by the coupled block solve.

    Stationarity of z'H1z in v and of z'H2z in u gives

        [[H1vv, H1uv'], [H2uv, H2uu]] [K1; K2] = -[H1xv'; H2xu'].
    """
    n, m1, m2 = q.dims
    sx, su, sv = block_slices(n, m1, m2)
    blk = np.block(
        [
            [q.H1[sv, sv], q.H1[su, sv].T],
            [q.H2[su, sv], q.H2[su, su]],
        ]
    )
    rhs = np.vstack([q.H1[sx, sv].T, q.H2[sx, su].T])
    try:
        KK = -np.linalg.solve(blk, rhs)
    except np.linalg.LinAlgError as exc:
        raise GainExtractionError(f"gain block is singular: {exc}") from exc
    if not np.isfinite(KK).all():
        raise GainExtractionError("gain block solve produced non-finite entries")
    return GainPair(KK[:m2], KK[m2:])


def values_from_q(q, gains):
    """Collapse H back to P via the sandwich P = [I; K2; K1]' H [I; K2; K1]."""
    n = q.n
    T = np.vstack([np.eye(n), gains.K2, gains.K1])
    if T.shape[0] != q.p:
        raise ValueError(f"gains {gains.K1.shape}/{gains.K2.shape} do not match q")
    P1 = symmetrize(T.T @ q.H1 @ T)
    P2 = symmetrize(T.T @ q.H2 @ T)
    return ValuePair(P1, P2)
