"""Dense numerical kernels.

Matrix exponentials and their integrals, the minimal nonnegative solution of
the fluid-queue Riccati equations, the solvent pair of the MMBM matrix
quadratic and stationary vectors of small generators.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.csgraph import connected_components

from .errors import (
    NoConvergence,
    NonFinite,
    NotBalanced,
    NotIrreducible,
    SubspaceIllConditioned,
    ZeroMeanDrift,
)

log = logging.getLogger(__name__)

RICCATI_TOL = 1e-13
RICCATI_MAXITER = 200
ZERO_ROOT_RTOL = 1e-8


def _check_finite(A, what="matrix"):
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise NonFinite(f"{what} has non-finite entries")
    return A


def matrix_exponential(A):
    """Return ``e^A`` (scaling and squaring with a degree-13 Padé approximant)."""
    A = _check_finite(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    E = sla.expm(A)
    if not np.all(np.isfinite(E)):
        raise NonFinite("matrix exponential overflowed")
    return E


def expm_batch(K, ts):
    """Stack of ``e^{K t}`` for every ``t`` in ``ts``, shape ``(len(ts), n, n)``."""
    K = _check_finite(np.atleast_2d(K))
    ts = np.asarray(ts, dtype=float).reshape(-1)
    E = sla.expm(ts[:, None, None] * K[None, :, :])
    if not np.all(np.isfinite(E)):
        raise NonFinite("matrix exponential overflowed")
    return E


def expm_integral(K, b):
    r"""Return :math:`\int_0^b e^{Kx}\,dx`.

    Read off the upper right block of ``exp([[K, I], [0, 0]] b)``, which
    stays valid when ``K`` is singular.
    """
    K = _check_finite(np.atleast_2d(K))
    if not b > 0:
        raise ValueError("b must be positive")
    n = K.shape[0]
    big = np.zeros((2 * n, 2 * n))
    big[:n, :n] = K
    big[:n, n:] = np.eye(n)
    return matrix_exponential(big * b)[:n, n:]


def expm_and_integral(K, b):
    """Both ``e^{Kb}`` and its integral over ``[0, b]`` from one exponential."""
    K = _check_finite(np.atleast_2d(K))
    n = K.shape[0]
    big = np.zeros((2 * n, 2 * n))
    big[:n, :n] = K
    big[:n, n:] = np.eye(n)
    E = matrix_exponential(big * b)
    return E[:n, :n], E[:n, n:]


# ---------------------------------------------------------------------------
# graphs and stationary vectors


def is_irreducible(A):
    """Strong connectivity of the directed graph of positive off-diagonals."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        return True
    adj = (A > 0) & ~np.eye(n, dtype=bool)
    ncomp, _ = connected_components(adj.astype(np.int8), directed=True, connection="strong")
    return ncomp == 1


def stationary_vector(G, tol=1e-8):
    """Stationary probability row vector of a generator or a stochastic matrix.

    Parameters
    ----------
    G : (n, n) array_like
        Irreducible generator (zero row sums) or irreducible stochastic
        matrix (unit row sums).  Which one is decided from the row sums.
    tol : float
        Relative tolerance used to classify the row sums.

    Returns
    -------
    nu : (n,) ndarray
        ``nu @ G = 0`` (generator) or ``nu @ G = nu`` (stochastic), ``nu.sum() == 1``.
    """
    G = _check_finite(G)
    n = G.shape[0]
    scale = max(np.abs(G).max(), 1.0)
    rows = G.sum(axis=1)
    if np.all(np.abs(rows) <= tol * scale):
        A = G.copy()
    elif np.all(np.abs(rows - 1.0) <= tol * scale):
        A = G - np.eye(n)
    else:
        raise NotBalanced("row sums are neither all 0 nor all 1")
    if not is_irreducible(A):
        raise NotIrreducible("matrix is reducible")
    if n == 1:
        return np.ones(1)
    # replace one balance equation by the normalisation
    M = A.copy()
    M[:, -1] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    nu = sla.solve(M.T, rhs)
    nu = np.where(np.abs(nu) < 1e-15, 0.0, nu)
    if nu.min() < -1e-10:
        log.warning("stationary vector has negative entries (min %.3e)", nu.min())
    nu = np.clip(nu, 0.0, None)
    return nu / nu.sum()


# ---------------------------------------------------------------------------
# Riccati equation of the fluid queue


def _riccati_coefficients(fluid, direction):
    Cp_inv = 1.0 / fluid.c_plus
    Cm_inv = 1.0 / np.abs(fluid.c_minus)
    Tpp, Tpm, Tmp, Tmm = fluid.Tpp, fluid.Tpm, fluid.Tmp, fluid.Tmm
    if direction == "down":
        return (Cp_inv[:, None] * Tpm, Cp_inv[:, None] * Tpp,
                Cm_inv[:, None] * Tmm, Cm_inv[:, None] * Tmp)
    if direction == "up":
        return (Cm_inv[:, None] * Tmp, Cm_inv[:, None] * Tmm,
                Cp_inv[:, None] * Tpp, Cp_inv[:, None] * Tpm)
    raise ValueError("direction must be 'up' or 'down'")


def riccati_residual(X, A0, A1, A2, A3):
    return A0 + A1 @ X + X @ A2 + X @ A3 @ X


def _newton(A0, A1, A2, A3, tol, maxiter):
    X = np.zeros_like(A0)
    scale = max(np.abs(A0).max(), np.abs(A1).max(), np.abs(A2).max(), np.abs(A3).max())
    res = np.inf
    for it in range(1, maxiter + 1):
        R = riccati_residual(X, A0, A1, A2, A3)
        res = np.abs(R).max()
        if res <= tol * scale:
            break
        # Frechet derivative: H -> (A1 + X A3) H + H (A2 + A3 X)
        H = sla.solve_sylvester(A1 + X @ A3, A2 + A3 @ X, -R)
        if not np.all(np.isfinite(H)):
            raise NoConvergence(it, res)
        X = X + H
    else:
        raise NoConvergence(maxiter, res)
    # Near a double root (zero mean drift of the fluid) the residual is the
    # square of the error, so keep stepping while the steps shrink.
    for _ in range(maxiter - it):
        Xn = _polish(X, R, A0, A1, A2, A3)
        step = np.abs(Xn - X).max()
        X = Xn
        if step <= 1e-15 * max(1.0, np.abs(X).max()):
            break
        R = riccati_residual(X, A0, A1, A2, A3)
    return X, it, np.abs(riccati_residual(X, A0, A1, A2, A3)).max()


def _polish(X, R, A0, A1, A2, A3):
    # one more Newton step, kept only if it lowers the residual
    try:
        H = sla.solve_sylvester(A1 + X @ A3, A2 + A3 @ X, -R)
    except (np.linalg.LinAlgError, ValueError):
        return X
    Xn = X + H
    if np.all(np.isfinite(Xn)) and \
            np.abs(riccati_residual(Xn, A0, A1, A2, A3)).max() <= np.abs(R).max():
        return Xn
    return X


def riccati_fixed_point(A0, A1, A2, A3, tol=RICCATI_TOL, maxiter=200_000):
    """Monotone fixed-point iteration ``A1 X + X A2 = -A0 - X A3 X`` from 0.

    Slow but monotonically increasing towards the minimal nonnegative
    solution; used as a fallback and as an independent minimality check.
    """
    X = np.zeros_like(A0)
    scale = max(np.abs(A0).max(), np.abs(A1).max(), np.abs(A2).max(), np.abs(A3).max())
    res = np.inf
    for it in range(1, maxiter + 1):
        Xn = sla.solve_sylvester(A1, A2, -A0 - X @ A3 @ X)
        step = np.abs(Xn - X).max()
        X = Xn
        if step <= 1e-16 * max(1.0, np.abs(X).max()):
            res = np.abs(riccati_residual(X, A0, A1, A2, A3)).max()
            if res <= 1e3 * tol * scale:
                return X, it, res
        if it % 50 == 0:
            res = np.abs(riccati_residual(X, A0, A1, A2, A3)).max()
            if res <= tol * scale:
                return X, it, res
    raise NoConvergence(maxiter, res)


def solve_riccati_min_nonneg(fluid, direction="down", method="newton",
                             tol=RICCATI_TOL, maxiter=RICCATI_MAXITER):
    """Minimal nonnegative solution of a fluid-queue Riccati equation.

    ``direction="down"`` gives the first-return matrix from above, solving
    ``C+^-1 T+- + C+^-1 T++ X + X |C-|^-1 T-- + X |C-|^-1 T-+ X = 0``;
    ``direction="up"`` the return matrix from below (roles of + and - swapped).

    Newton's method started at zero is used; the fixed-point iteration is a
    fallback when Newton stalls.
    """
    coeffs = _riccati_coefficients(fluid, direction)
    if method == "fixed_point":
        X, _, _ = riccati_fixed_point(*coeffs, tol=tol)
    else:
        try:
            X, _, _ = _newton(*coeffs, tol, maxiter)
        except NoConvergence as exc:
            log.warning("Newton failed (%s); falling back to fixed-point iteration", exc)
            X, _, _ = riccati_fixed_point(*coeffs, tol=tol)
    # rounding can leave entries of order 1e-17 below zero
    return np.clip(X, 0.0, None)


# ---------------------------------------------------------------------------
# matrix quadratic 1/2 V X^2 + D X + Q = 0


@dataclass(frozen=True)
class SolventPair:
    """Downward and upward first-passage generators of the free MMBM.

    ``lam_minus`` and ``-lam_plus`` both solve ``V X^2 / 2 + D X + Q = 0``.
    """

    lam_minus: np.ndarray
    lam_plus: np.ndarray
    theta: np.ndarray  # sqrt of the variances, as a vector

    @property
    def psi1(self):
        return self.theta[:, None] * self.lam_minus

    @property
    def psi1_star(self):
        return self.theta[:, None] * self.lam_plus


def quadratic_residual(X, model):
    V = np.diag(model.sigma2)
    D = np.diag(model.mu)
    return 0.5 * V @ X @ X + D @ X + model.Q


def _solvent_from_schur(L, select, m):
    T, Z, sdim = sla.schur(L, output="real", sort=select)
    if sdim != m:
        raise SubspaceIllConditioned(
            f"selected {sdim} latent roots, expected {m}")
    W1, W2 = Z[:m, :m], Z[m:, :m]
    if np.linalg.cond(W1) > 1e12:
        raise SubspaceIllConditioned("leading block of the invariant subspace is singular")
    return sla.solve(W1.T, W2.T).T


def _newton_polish(X, model, steps=2):
    # Newton on the quadratic: (V X / 2 + D) H + V H X / 2 = -R  (after left V^-1 scaling)
    V = np.diag(model.sigma2)
    D = np.diag(model.mu)
    for _ in range(steps):
        R = quadratic_residual(X, model)
        if np.abs(R).max() == 0.0:
            break
        A = np.linalg.solve(0.5 * V, 0.5 * V @ X + D)
        try:
            H = sla.solve_sylvester(A, X, -np.linalg.solve(0.5 * V, R))
        except (np.linalg.LinAlgError, ValueError):
            break
        if not np.all(np.isfinite(H)):
            break
        Xn = X + H
        if np.abs(quadratic_residual(Xn, model)).max() < np.abs(R).max():
            X = Xn
        else:
            break
    return X


def solvent_pair(model):
    """Solvent pair of ``V X^2 / 2 + D X + Q = 0`` via an ordered real Schur form.

    The latent roots are the eigenvalues of the companion linearisation
    ``[[0, I], [-2 V^-1 Q, -2 V^-1 D]]``; one of them is zero.  The zero root
    goes with the downward generator when the mean drift is negative and
    with the upward one otherwise.
    """
    m = model.m
    drift = model.mean_drift
    if drift == 0.0:
        raise ZeroMeanDrift("mean drift is zero")
    Vinv2 = 2.0 / model.sigma2
    L = np.zeros((2 * m, 2 * m))
    L[:m, m:] = np.eye(m)
    L[m:, :m] = -Vinv2[:, None] * model.Q
    L[m:, m:] = -np.diag(Vinv2 * model.mu)
    tol = ZERO_ROOT_RTOL * np.linalg.norm(L, 2)
    zero_down = drift < 0

    def lower(re, im):
        return (re < -tol) or (zero_down and abs(re) <= tol and abs(im) <= tol)

    def upper(re, im):
        return (re > tol) or (not zero_down and abs(re) <= tol and abs(im) <= tol)

    lam_minus = _newton_polish(_solvent_from_schur(L, lower, m), model)
    lam_plus = -_newton_polish(_solvent_from_schur(L, upper, m), model)
    return SolventPair(lam_minus, lam_plus, np.sqrt(model.sigma2))
