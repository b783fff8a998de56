"""Closed-form stationary law of the two-sided reflected MMBM.

The density on ``(0, b)`` is

    pi(x) = c* nu0 N0^-1 [e^{K0 x} Theta^-1 ; e^{K0* (b - x)} Theta^-1]

with ``N0 = [[I, e^{K0 b}], [e^{K0* b}, I]]``; there are no atoms at the
boundaries.  :func:`time_reversed_density` gives the same law through the
first-passage generators of the time-reversed process.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NotIrreducible, OutOfRange, SingularBlock, SingularN
from .kernels import SolventPair, expm_batch, expm_integral, is_irreducible, matrix_exponential, \
    solvent_pair, stationary_vector


@dataclass(frozen=True, eq=False)
class LimitMatrices:
    """Building blocks of the limit density, for a fixed buffer height ``b``.

    ``G1`` is the first-order term of the two-sided exit matrix of the
    approximating fluids, ``G^(b) = J + eps G1 + O(eps^2)``.
    """

    K0: np.ndarray
    K0star: np.ndarray
    solvents: SolventPair
    L1: np.ndarray
    L1t: np.ndarray
    P1: np.ndarray
    P1t: np.ndarray
    N0: np.ndarray
    b: float

    @property
    def m(self):
        return self.K0.shape[0]

    @property
    def G1(self):
        return np.block([[self.L1, self.P1], [self.P1t, self.L1t]])

    @property
    def J(self):
        m = self.m
        Z, I = np.zeros((m, m)), np.eye(m)
        return np.block([[Z, I], [I, Z]])

    @property
    def JG1(self):
        return np.block([[self.P1t, self.L1t], [self.L1, self.P1]])


def limit_matrices(model) -> LimitMatrices:
    sp = solvent_pair(model)
    theta = model.theta
    b = model.b
    m = model.m
    I = np.eye(m)
    psi1, psi1s = sp.psi1, sp.psi1_star
    drift_term = np.diag(2.0 * model.mu / model.sigma2)
    K0 = psi1 / theta[None, :] + drift_term
    K0s = psi1s / theta[None, :] - drift_term

    Em = matrix_exponential(sp.lam_minus * b)
    Ep = matrix_exponential(sp.lam_plus * b)
    A = I - Ep @ Em
    At = I - Em @ Ep
    try:
        P1 = sla.solve(A.T, (psi1s @ Ep @ Em + psi1).T).T
        P1t = sla.solve(At.T, (psi1 @ Em @ Ep + psi1s).T).T
    except sla.LinAlgError as exc:
        raise SingularBlock(f"I - e^(L+ b) e^(L- b) is singular: {exc}") from None
    L1 = (psi1 - P1) @ matrix_exponential(-sp.lam_minus * b)
    L1t = (psi1s - P1t) @ matrix_exponential(-sp.lam_plus * b)
    N0 = np.block([[I, matrix_exponential(K0 * b)], [matrix_exponential(K0s * b), I]])
    return LimitMatrices(K0, K0s, sp, L1, L1t, P1, P1t, N0, b)


def nu0(lm: LimitMatrices):
    """Probability vector with ``nu0 G1 = 0``.

    ``J G1`` is a generator, so ``nu0 J`` is its stationary vector.
    """
    JG1 = lm.JG1
    # exact cancellations can leave off-diagonals at -1e-17; they carry no edge
    if not is_irreducible(JG1):
        raise NotIrreducible("J G1 is reducible")
    x = stationary_vector(JG1)
    m = lm.m
    return np.concatenate([x[m:], x[:m]])


@dataclass(frozen=True, eq=False)
class MmbmSolution:
    model: object
    lm: LimitMatrices
    nu0: np.ndarray
    cstar: float
    coeff: np.ndarray  # c* nu0 N0^-1

    @property
    def b(self):
        return self.model.b

    @property
    def m(self):
        return self.model.m

    mass0 = property(lambda self: np.zeros(self.m))
    massb = property(lambda self: np.zeros(self.m))

    def density(self, x):
        """Joint density over the phases at ``x`` in ``(0, b)``."""
        x = float(x)
        if not 0 < x < self.b:
            raise OutOfRange(f"x={x} not in (0, {self.b})")
        return self._formula(x)

    def edge_densities(self):
        """Limits of the density at ``0+`` and ``b-``."""
        return self._formula(0.0), self._formula(self.b)

    def _formula(self, x):
        m = self.m
        v = (self.coeff[:m] @ matrix_exponential(self.lm.K0 * x)
             + self.coeff[m:] @ matrix_exponential(self.lm.K0star * (self.b - x)))
        return v / self.model.theta

    def density_grid(self, xs):
        """Joint density at every point of ``xs``, shape ``(len(xs), m)``."""
        xs = np.asarray(xs, dtype=float)
        if xs.size and (xs.min() <= 0 or xs.max() >= self.b):
            raise OutOfRange("grid must lie inside (0, b)")
        m = self.m
        v = (np.einsum("i,kij->kj", self.coeff[:m], expm_batch(self.lm.K0, xs))
             + np.einsum("i,kij->kj", self.coeff[m:], expm_batch(self.lm.K0star, self.b - xs)))
        return v / self.model.theta

    def cdf(self, x):
        """Joint CDF ``P[Y <= x, phase = i]``; continuous, no boundary atoms."""
        x = float(x)
        m, b = self.m, self.b
        if x <= 0:
            return np.zeros(m)
        if x >= b:
            x = b
        IKs = expm_integral(self.lm.K0star, b)
        if x < b:
            IKs = IKs - expm_integral(self.lm.K0star, b - x)
        v = self.coeff[:m] @ expm_integral(self.lm.K0, x) + self.coeff[m:] @ IKs
        return v / self.model.theta

    def level_cdf(self, x):
        return float(self.cdf(x).sum())

    def phase_marginal(self):
        return self.cdf(self.b)


def stationary_density(model) -> MmbmSolution:
    lm = limit_matrices(model)
    v0 = nu0(lm)
    m = model.m
    try:
        raw = sla.solve(lm.N0.T, v0)
    except sla.LinAlgError as exc:
        raise SingularN(f"N0 is singular: {exc}") from None
    total = (raw[:m] @ expm_integral(lm.K0, model.b)
             + raw[m:] @ expm_integral(lm.K0star, model.b)) @ (1.0 / model.theta)
    cstar = 1.0 / total
    return MmbmSolution(model, lm, v0, cstar, cstar * raw)


@dataclass(frozen=True, eq=False)
class TimeReversedForm:
    """Density through the first-passage generators of the time-reversed MMBM."""

    model: object
    omega_plus: np.ndarray
    omega_minus: np.ndarray

    def conditional_density(self, x):
        """Density of the level given the phase, one entry per phase."""
        b = self.model.b
        x = float(x)
        if not 0 < x < b:
            raise OutOfRange(f"x={x} not in (0, {b})")
        Op, Om = self.omega_plus, self.omega_minus
        ebp = matrix_exponential(b * Op)
        ebm = matrix_exponential(b * Om)
        ones = np.ones(self.model.m)
        inner = sla.solve(np.eye(self.model.m) - ebm @ ebp, ones)
        return -(matrix_exponential(x * Op) @ Op
                 + matrix_exponential((b - x) * Om) @ Om @ ebp) @ inner

    def joint_density(self, x):
        return self.conditional_density(x) * self.model.alpha

    def joint_density_grid(self, xs):
        xs = np.asarray(xs, dtype=float)
        b = self.model.b
        Op, Om = self.omega_plus, self.omega_minus
        ebp = matrix_exponential(b * Op)
        ebm = matrix_exponential(b * Om)
        inner = sla.solve(np.eye(self.model.m) - ebm @ ebp, np.ones(self.model.m))
        left = expm_batch(Op, xs) @ (Op @ inner)
        right = expm_batch(Om, b - xs) @ (Om @ ebp @ inner)
        return -(left + right) * self.model.alpha


def time_reversed_density(model, lm: LimitMatrices | None = None) -> TimeReversedForm:
    if lm is None:
        lm = limit_matrices(model)
    alpha = model.alpha
    theta = model.theta
    # Omega^T = Delta_alpha Theta K Theta^-1 Delta_{1/alpha}
    scale_l = alpha * theta
    scale_r = 1.0 / (theta * alpha)
    op_T = scale_l[:, None] * lm.K0 * scale_r[None, :]
    om_T = scale_l[:, None] * lm.K0star * scale_r[None, :]
    return TimeReversedForm(model, op_T.T.copy(), om_T.T.copy())


def interior_grid(b, n=1000):
    """``n`` uniform points on ``[b/2000, b - b/2000]``."""
    pad = b / 2000.0
    return np.linspace(pad, b - pad, n)


def cross_check(model, n=1000):
    """Sup-norm gap between the closed form and the time-reversed joint density."""
    sol = stationary_density(model)
    tr = time_reversed_density(model, sol.lm)
    xs = interior_grid(model.b, n)
    return float(np.abs(sol.density_grid(xs) - tr.joint_density_grid(xs)).max())
