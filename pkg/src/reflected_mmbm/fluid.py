"""Stationary law of the finite-buffer fluid queue on ``[0, b]``.

Two routes are provided.  :func:`finite_buffer_solution` works through the
stationary vector ``nu`` of the censored matrix ``H`` and is the primary
one; :func:`alt_solution_nullspace` solves for the boundary masses first
and is kept as an independent cross-check.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import NotIrreducible, OutOfRange, SingularN, SingularSystem
from .kernels import expm_and_integral, expm_integral, matrix_exponential, \
    solve_riccati_min_nonneg, stationary_vector

log = logging.getLogger(__name__)

COND_WARN = 1e12


def _solve_right(A, B, err=SingularSystem, what="system"):
    """Solve ``X A = B`` by LU with partial pivoting."""
    try:
        lu = sla.lu_factor(A.T, check_finite=True)
    except (ValueError, sla.LinAlgError) as exc:
        raise err(f"{what}: {exc}") from None
    if np.any(np.abs(np.diag(lu[0])) == 0.0):
        raise err(f"{what} is singular")
    cond = np.linalg.cond(A)
    if cond > COND_WARN:
        log.warning("%s is ill-conditioned (cond %.2e)", what, cond)
    return sla.lu_solve(lu, np.atleast_2d(B).T).T


@dataclass(frozen=True, eq=False)
class FirstPassageSet:
    psi: np.ndarray
    psi_star: np.ndarray
    U: np.ndarray
    Ustar: np.ndarray
    K: np.ndarray
    Kstar: np.ndarray


def first_passage_set(fluid) -> FirstPassageSet:
    """Return-probability matrices and the associated generators ``U, U*, K, K*``."""
    psi = solve_riccati_min_nonneg(fluid, "down")
    psi_star = solve_riccati_min_nonneg(fluid, "up")
    cp = 1.0 / fluid.c_plus
    cm = 1.0 / np.abs(fluid.c_minus)
    Tpp, Tpm, Tmp, Tmm = fluid.Tpp, fluid.Tpm, fluid.Tmp, fluid.Tmm
    U = cm[:, None] * Tmm + cm[:, None] * Tmp @ psi
    Ustar = cp[:, None] * Tpp + cp[:, None] * Tpm @ psi_star
    K = cp[:, None] * Tpp + psi @ (cm[:, None] * Tmp)
    Kstar = cm[:, None] * Tmm + psi_star @ (cp[:, None] * Tpm)
    return FirstPassageSet(psi, psi_star, U, Ustar, K, Kstar)


@dataclass(frozen=True, eq=False)
class GbMatrix:
    """Two-sided exit probabilities of the fluid between levels 0 and b.

    ``Lpp``: up from 0 to b in a + phase; ``Ppm``: from 0 back to 0;
    ``Pmp``: from b back to b; ``Lmm``: down from b to 0.
    """

    Lpp: np.ndarray
    Ppm: np.ndarray
    Pmp: np.ndarray
    Lmm: np.ndarray

    @property
    def full(self):
        return np.block([[self.Lpp, self.Ppm], [self.Pmp, self.Lmm]])


def solve_Gb(fp: FirstPassageSet, b) -> GbMatrix:
    """Solve ``G [[I, Psi e^{Ub}], [Psi* e^{U*b}, I]] = [[e^{U*b}, Psi], [Psi*, e^{Ub}]]``."""
    m = fp.psi.shape[0]
    eU = matrix_exponential(fp.U * b)
    eUs = matrix_exponential(fp.Ustar * b)
    I = np.eye(m)
    M = np.block([[I, fp.psi @ eU], [fp.psi_star @ eUs, I]])
    R = np.block([[eUs, fp.psi], [fp.psi_star, eU]])
    G = _solve_right(M, R, SingularSystem, "G^(b) system")
    return GbMatrix(G[:m, :m], G[:m, m:], G[m:, :m], G[m:, m:])


def _boundary_factor(fluid):
    # diag(-T++^-1, -T--^-1)
    m = fluid.m
    out = np.zeros((2 * m, 2 * m))
    out[:m, :m] = -np.linalg.inv(fluid.Tpp)
    out[m:, m:] = -np.linalg.inv(fluid.Tmm)
    return out


def _cross_rates(fluid):
    m = fluid.m
    out = np.zeros((2 * m, 2 * m))
    out[:m, m:] = fluid.Tpm
    out[m:, :m] = fluid.Tmp
    return out


def censored_H(Gb: GbMatrix, fluid):
    return Gb.full @ _boundary_factor(fluid) @ _cross_rates(fluid)


def censored_nu(Gb: GbMatrix, fluid):
    """Stationary vector of the stochastic matrix ``H`` censored on the boundary visits."""
    H = censored_H(Gb, fluid)
    try:
        return stationary_vector(H)
    except NotIrreducible:
        raise
    except Exception as exc:  # NotBalanced from a badly conditioned H
        raise NotIrreducible(f"censored matrix H is not a valid stochastic matrix: {exc}") from None


@dataclass(frozen=True, eq=False)
class FiniteBufferSolution:
    """Stationary distribution of the finite-buffer fluid queue.

    The density on ``(0, b)`` is ``coeff @ diag(e^{Kx}, e^{K*(b-x)}) @ F``
    where ``F`` is the rate factor; evaluation is lazy, see :func:`density_at`.
    """

    fluid: object
    b: float
    fp: FirstPassageSet
    Gb: GbMatrix
    nu: np.ndarray
    y: np.ndarray
    Ninv: np.ndarray
    c: float
    p0_minus: np.ndarray
    pb_plus: np.ndarray
    route: str = "censored"
    cond: dict = field(default_factory=dict)

    @property
    def coeff(self):
        return self.y

    @property
    def m(self):
        return self.fluid.m

    @property
    def total_mass(self):
        return float(self.p0_minus.sum() + self.pb_plus.sum() + self.integral().sum())

    def rate_factor(self):
        return _rate_factor(self.fluid, self.fp)

    def density_at(self, x):
        return density_at(self, x)

    def integral(self, x=None):
        """``int_0^x pi(s) ds`` (doubled phases); ``x=None`` means up to ``b``."""
        return _density_integral(self, self.b if x is None else x)

    def cdf(self, x):
        """Joint CDF over the original phases, boundary atoms included."""
        x = float(x)
        m = self.m
        if x < 0:
            return np.zeros(m)
        x = min(x, self.b)
        F = self.p0_minus.copy()
        if x > 0:
            F = F + collapse(self.integral(x))
        if x >= self.b:
            F = F + self.pb_plus
        return F

    @property
    def mass0(self):
        return self.p0_minus

    @property
    def massb(self):
        return self.pb_plus


def collapse(v):
    """Sum the two copies of each original phase: ``v (1_2 kron I_m)``."""
    v = np.asarray(v)
    m = v.shape[-1] // 2
    return v[..., :m] + v[..., m:]


def _rate_factor(fluid, fp):
    cp = 1.0 / fluid.c_plus
    cm = 1.0 / np.abs(fluid.c_minus)
    return np.block([[np.diag(cp), fp.psi * cm[None, :]],
                     [fp.psi_star * cp[None, :], np.diag(cm)]])


def _N_matrix(fp, b):
    m = fp.psi.shape[0]
    I = np.eye(m)
    return np.block([[I, matrix_exponential(fp.K * b) @ fp.psi],
                     [matrix_exponential(fp.Kstar * b) @ fp.psi_star, I]])


def _density_integral(sol, x):
    m = sol.m
    b = sol.b
    if not 0 <= x <= b:
        raise OutOfRange(f"x={x} outside [0, {b}]")
    if x == 0:
        return np.zeros(2 * m)
    IK = expm_integral(sol.fp.K, x)
    # int_0^x e^{K*(b-s)} ds = int_{b-x}^b e^{K* u} du
    IKs = expm_integral(sol.fp.Kstar, b)
    if x < b:
        IKs = IKs - expm_integral(sol.fp.Kstar, b - x)
    y = sol.y
    inner = np.concatenate([y[:m] @ IK, y[m:] @ IKs])
    return inner @ sol.rate_factor()


def density_at(sol: FiniteBufferSolution, x):
    """Density of the doubled-phase fluid at ``x`` and its collapse onto the MMBM phases.

    Returns
    -------
    full : (2m,) ndarray
    collapsed : (m,) ndarray
    """
    x = float(x)
    if not 0 < x < sol.b:
        raise OutOfRange(f"x={x} not in the open interval (0, {sol.b})")
    m = sol.m
    y = sol.y
    inner = np.concatenate([y[:m] @ matrix_exponential(sol.fp.K * x),
                            y[m:] @ matrix_exponential(sol.fp.Kstar * (sol.b - x))])
    full = inner @ sol.rate_factor()
    return full, collapse(full)


def _normalise(fluid, fp, b, raw_masses, raw_y):
    """Scale constant making masses plus density integral equal one."""
    m = fluid.m
    _, IK = expm_and_integral(fp.K, b)
    _, IKs = expm_and_integral(fp.Kstar, b)
    inner = np.concatenate([raw_y[:m] @ IK, raw_y[m:] @ IKs])
    total = raw_masses.sum() + (inner @ _rate_factor(fluid, fp)).sum()
    return 1.0 / total


def finite_buffer_solution(fluid, b) -> FiniteBufferSolution:
    """Stationary density and boundary masses through the censored vector ``nu``."""
    b = float(b)
    fp = first_passage_set(fluid)
    Gb = solve_Gb(fp, b)
    nu = censored_nu(Gb, fluid)
    N = _N_matrix(fp, b)
    Ninv = _solve_right(N, np.eye(2 * fluid.m), SingularN, "N")
    raw_y = nu @ Ninv
    raw_masses = nu @ Gb.full @ _boundary_factor(fluid)
    c = _normalise(fluid, fp, b, raw_masses, raw_y)
    m = fluid.m
    masses = np.clip(c * raw_masses, 0.0, None)
    return FiniteBufferSolution(
        fluid=fluid, b=b, fp=fp, Gb=Gb, nu=nu, y=c * raw_y, Ninv=Ninv, c=c,
        p0_minus=masses[m:], pb_plus=masses[:m], route="censored",
        cond={"N": float(np.linalg.cond(N))},
    )


def W_matrix(fluid, Gb):
    m = fluid.m
    W = _cross_rates(fluid) @ Gb.full
    W[:m, :m] += fluid.Tpp
    W[m:, m:] += fluid.Tmm
    return W


def alt_solution_nullspace(fluid, b) -> FiniteBufferSolution:
    """Boundary masses from the null space of ``W``, density from ``y``.

    Independent of ``nu``; agrees with :func:`finite_buffer_solution` up to
    rounding.
    """
    b = float(b)
    m = fluid.m
    fp = first_passage_set(fluid)
    Gb = solve_Gb(fp, b)
    W = W_matrix(fluid, Gb)
    # left null vector of W
    _, s, vh = np.linalg.svd(W.T)
    smax = s[0] if s[0] > 0 else 1.0
    if s[-1] > 1e-8 * smax or (len(s) > 1 and s[-2] <= 1e-8 * smax):
        raise SingularSystem(
            f"null space of W is not one-dimensional (singular values {s[-2:]})")
    p = vh[-1]
    p = p / p.sum()
    N = _N_matrix(fp, b)
    Ninv = _solve_right(N, np.eye(2 * m), SingularN, "N")
    raw_y = p @ _cross_rates(fluid) @ Ninv
    c = _normalise(fluid, fp, b, p, raw_y)
    masses = np.clip(c * p, 0.0, None)
    return FiniteBufferSolution(
        fluid=fluid, b=b, fp=fp, Gb=Gb, nu=p, y=c * raw_y, Ninv=Ninv, c=c,
        p0_minus=masses[m:], pb_plus=masses[:m], route="nullspace",
        cond={"N": float(np.linalg.cond(N)), "W_sv_ratio": float(s[-2] / smax) if len(s) > 1 else 1.0},
    )
