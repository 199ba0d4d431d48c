"""Regularization operators, GSVD/TGSVD and the minimum-gradient-support reweighting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ArgumentError, NumericalRankError, SingularComponentError

REG_KINDS = ("i", "d1", "d2")


def reg_matrix(kind: str, n: int) -> np.ndarray:
    """Identity, first-difference (rows [-1, 1]) or second-difference (rows [1, -2, 1]) matrix."""
    kind = kind.lower()
    if kind in ("i", "identity"):
        if n < 1:
            raise ArgumentError("identity needs n >= 1")
        return np.eye(n)
    if kind == "d1":
        if n < 2:
            raise ArgumentError("D1 needs n >= 2")
        L = np.zeros((n - 1, n))
        idx = np.arange(n - 1)
        L[idx, idx] = -1.0
        L[idx, idx + 1] = 1.0
        return L
    if kind == "d2":
        if n < 3:
            raise ArgumentError("D2 needs n >= 3")
        L = np.zeros((n - 2, n))
        idx = np.arange(n - 2)
        L[idx, idx] = 1.0
        L[idx, idx + 1] = -2.0
        L[idx, idx + 2] = 1.0
        return L
    raise ArgumentError(f"unknown regularization matrix {kind!r}")


@dataclass(frozen=True, eq=False)
class Gsvd:
    """Generalized SVD of a pair (A, L), A of size M x n and L of size p x n.

    ``A = U @ diag(c) @ Zinv`` and ``L = V @ [diag(xi), 0] @ Zinv`` where ``c``
    is ``gamma`` extended by ones for the n - p directions in the null space of
    L.  ``gamma`` is ascending and ``gamma**2 + xi**2 == 1``.  When M < n some
    ``gamma`` are zero and the corresponding columns of U are zero.
    """

    U: np.ndarray
    V: np.ndarray
    Z: np.ndarray
    Zinv: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray
    A: np.ndarray
    L: np.ndarray

    @property
    def p(self) -> int:
        return self.gamma.size

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def c(self) -> np.ndarray:
        return np.concatenate([self.gamma, np.ones(self.n - self.p)])

    @property
    def ell_max(self) -> int:
        """Largest admissible truncation parameter (number of nonzero gamma)."""
        return int(np.count_nonzero(self.gamma))


def gsvd(A, L, rank_tol: float | None = None) -> Gsvd:
    """GSVD of the pair (A, L) for p <= n and trivial common null space.

    The pair is stacked (with L rescaled to the norm of A, which leaves every
    generalized direction unchanged), reduced by a thin QR factorization, and
    the orthonormal factor is split by an SVD of its top block.

    Raises
    ------
    NumericalRankError
        If the stacked matrix [A; L] is numerically rank deficient.
    """
    A = np.asarray(A, dtype=float)
    L = np.asarray(L, dtype=float)
    M, n = A.shape
    p = L.shape[0]
    if L.shape[1] != n:
        raise ArgumentError(f"A has {n} columns but L has {L.shape[1]}")
    if p > n:
        raise ArgumentError("L must have at most as many rows as columns")
    if M + p < n:
        raise NumericalRankError("[A; L] has fewer rows than columns",
                                 {"rows": M + p, "columns": n})
    eps = np.finfo(float).eps
    normA = np.linalg.norm(A)
    normL = np.linalg.norm(L)
    kappa = normA / normL if normA > 0 and normL > 0 else 1.0

    Q, R = np.linalg.qr(np.vstack([A, kappa * L]))
    diag = np.abs(np.diag(R))
    tol = rank_tol if rank_tol is not None else max(M + p, n) * eps * diag.max()
    if diag.min() <= tol:
        raise NumericalRankError(
            "A and L share a nontrivial null space (numerically)",
            {"min_diag": float(diag.min()), "max_diag": float(diag.max()), "tol": float(tol)})
    Q1, Q2 = Q[:M], Q[M:]

    Uc, c, Wt = np.linalg.svd(Q1, full_matrices=True)
    W = Wt.T
    c = np.concatenate([c, np.zeros(n - c.size)])
    order = np.argsort(c, kind="stable")
    c = np.minimum(c[order], 1.0)
    W = W[:, order]
    U = np.zeros((M, n))
    src = order < Uc.shape[1]
    U[:, src] = Uc[:, order[src]]
    s = np.linalg.norm(Q2 @ W, axis=0)

    # c ~ 1 cannot be resolved by the SVD of Q1; split that cluster with an
    # SVD of Q2 restricted to it so null(L) directions come out exactly
    cluster = np.flatnonzero(s < 1e-3)
    if cluster.size:
        _, _, vt = np.linalg.svd(Q2 @ W[:, cluster], full_matrices=True)
        Wc = W[:, cluster] @ vt.T
        W[:, cluster] = Wc
        Q1W = Q1 @ Wc
        cc = np.linalg.norm(Q1W, axis=0)
        U[:, cluster] = Q1W / cc
        c[cluster] = cc
        s[cluster] = np.linalg.norm(Q2 @ Wc, axis=0)

    zero = c <= max(M, n) * eps
    c = np.where(zero, 0.0, c)
    U[:, zero] = 0.0
    Q2W = Q2 @ W
    hyp = np.hypot(c, s)
    c, s = c / hyp, s / hyp

    # undo the rescaling of L and renormalize each direction
    Z = scipy.linalg.solve_triangular(R, W)
    xi_true = s / kappa
    t = 1.0 / np.hypot(c, xi_true)
    Z = Z * t
    gamma_all = c * t
    xi_all = xi_true * t

    gamma = gamma_all[:p].copy()
    xi = xi_all[:p].copy()
    gamma_all[p:] = 1.0
    V = np.zeros((p, p))
    nz = s[:p] > 0
    V[:, nz] = Q2W[:, :p][:, nz] / s[:p][nz]
    Zinv = np.linalg.solve(Z, np.eye(n)) if n else Z
    return Gsvd(U=U, V=V, Z=Z, Zinv=Zinv, gamma=gamma, xi=xi, A=A, L=L)


def _coefficients(F: Gsvd, rhs):
    rhs = np.asarray(rhs, dtype=float)
    c = F.c
    proj = F.U.T @ rhs
    coef = np.zeros_like(c)
    nz = c > 0
    coef[nz] = proj[nz] / c[nz]
    return coef


def tgsvd_solve(F: Gsvd, rhs, ell: int) -> np.ndarray:
    """Truncated GSVD solution of ``min ||A q - rhs||`` keeping the ``ell`` largest gamma.

    The n - p directions in the null space of L are always kept.  Pass
    ``rhs = -r`` to solve ``min ||r + A q||``.
    """
    p = F.p
    if not 0 <= ell <= p:
        raise ArgumentError(f"ell={ell} outside [0, {p}]")
    if np.any(F.gamma[p - ell:] == 0):
        raise SingularComponentError(
            f"ell={ell} retains zero generalized singular values (max admissible {F.ell_max})")
    coef = _coefficients(F, rhs)
    keep = np.zeros(F.n, dtype=bool)
    keep[p - ell:] = True
    return F.Z[:, keep] @ coef[keep]


def tgsvd_path(F: Gsvd, rhs) -> np.ndarray:
    """All TGSVD solutions for ell = 0..ell_max, one per row."""
    p = F.p
    coef = _coefficients(F, rhs)
    terms = F.Z * coef                       # column i is coef_i z_i
    base = terms[:, p:].sum(axis=1)
    band = terms[:, :p][:, ::-1][:, :F.ell_max]   # largest gamma first
    steps = np.cumsum(band, axis=1)
    return np.vstack([base, (base[:, None] + steps).T])


def _floor(q):
    return 1e-8 * max(1.0, float(np.max(np.abs(q)))) if np.size(q) else 1e-8


def _clamped(q, L):
    q = np.asarray(q, dtype=float)
    p = L.shape[0]
    mag = np.maximum(np.abs(q[:p]), _floor(q))
    return mag, L @ q


def mgs_functional(q, L, tau: float) -> float:
    """Minimum-gradient-support stabilizer ``sum x_r^2 / (x_r^2 + 1)``, ``x_r = (Lq)_r / (tau q_r)``.

    ``|q_r|`` is floored at ``1e-8 * max(1, max|q|)``.
    """
    if not tau > 0:
        raise ArgumentError("tau must be positive")
    mag, Lq = _clamped(q, L)
    x2 = (Lq / (tau * mag)) ** 2
    return float(np.sum(x2 / (x2 + 1.0)))


def mgs_weights(q_prev, L, tau: float) -> np.ndarray:
    """Diagonal reweighting D such that ``||D L q_prev||**2 == mgs_functional(q_prev, L, tau)``."""
    if not tau > 0:
        raise ArgumentError("tau must be positive")
    mag, Lq = _clamped(q_prev, L)
    x2 = (Lq / (tau * mag)) ** 2
    return np.diag(1.0 / (tau * mag * np.sqrt(x2 + 1.0)))
