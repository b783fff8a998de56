"""Independent oracles and convergence studies.

* :func:`discretization_oracle` replaces the MMBM by a birth-death chain on
  a uniform grid, a route that shares no code with the closed form.
* :func:`lambda_sweep` measures how fast the finite-buffer fluid laws
  approach the MMBM law as ``eps -> 0``.
* :func:`expansion_check` tracks the residuals of the small-``eps``
  expansions of the fluid first-passage matrices.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .errors import NegativeRate
from .fluid import finite_buffer_solution, first_passage_set, solve_Gb
from .limit import interior_grid, limit_matrices, stationary_density
from .model import build_fluid_approximation

log = logging.getLogger(__name__)


class UnsortedEpsList(UserWarning):
    pass


def discretization_oracle(model, n=2000):
    """Stationary law of a finite-difference birth-death approximation.

    Each phase gets ``n`` cells of width ``h = b / n``; within phase ``i``
    the chain moves up at rate ``sigma_i^2 / (2 h^2) + mu_i / (2 h)`` and down
    at ``sigma_i^2 / (2 h^2) - mu_i / (2 h)``, with no moves out of the end
    cells.  Phase changes follow ``Q`` within a cell.

    Returns
    -------
    centres : (n,) ndarray
    density : (n, m) ndarray
        Probability of each cell divided by ``h``.
    """
    if n < 50:
        raise ValueError("need at least 50 cells")
    m, b = model.m, model.b
    h = b / n
    diff = model.sigma2 / (2 * h * h)
    adv = model.mu / (2 * h)
    up, down = diff + adv, diff - adv
    if np.any(up < 0) or np.any(down < 0):
        raise NegativeRate(f"n={n} too small: |mu| h / sigma^2 >= 1")
    N = n * m
    rows, cols, vals = [], [], []
    cells = np.arange(n)
    for i in range(m):
        base = i * n
        rows += [base + cells[:-1], base + cells[1:]]
        cols += [base + cells[1:], base + cells[:-1]]
        vals += [np.full(n - 1, up[i]), np.full(n - 1, down[i])]
        for j in range(m):
            if i != j and model.Q[i, j] > 0:
                rows.append(base + cells)
                cols.append(j * n + cells)
                vals.append(np.full(n, model.Q[i, j]))
    A = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(N, N))
    A = A - sps.diags(np.asarray(A.sum(axis=1)).ravel())
    # pi A = 0 with the last balance equation replaced by sum(pi) = 1
    At = A.T.tolil()
    At[N - 1, :] = np.ones(N)
    rhs = np.zeros(N)
    rhs[-1] = 1.0
    pi = spla.spsolve(At.tocsc(), rhs)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    centres = (cells + 0.5) * h
    return centres, pi.reshape(m, n).T / h


def cdf_grid(b, n=1000):
    """Interior grid plus both end points; fluid atoms show up at 0 and b."""
    return np.concatenate([[0.0], interior_grid(b, n), [b]])


def cdf_distance(sol_a, sol_b, xs):
    """Largest gap between two joint CDFs over phases and grid points."""
    return float(max(np.abs(sol_a.cdf(x) - sol_b.cdf(x)).max() for x in xs))


def loglog_slope(eps, dist, last=3):
    eps = np.asarray(eps)[-last:]
    dist = np.asarray(dist)[-last:]
    if len(eps) < 2 or np.any(dist <= 0):
        return None
    slope, _ = np.polyfit(np.log(eps), np.log(dist), 1)
    return float(slope)


@dataclass
class SweepPoint:
    eps: float
    distance: float
    mass0: float
    massb: float
    cond_N: float
    k_drift: float


@dataclass
class SweepReport:
    points: list = field(default_factory=list)
    slope: float | None = None

    @property
    def eps(self):
        return [p.eps for p in self.points]

    @property
    def distances(self):
        return [p.distance for p in self.points]

    def monotone(self, wiggle=0.1):
        d = self.distances
        return all(d[k + 1] <= (1 + wiggle) * d[k] for k in range(len(d) - 1))

    def to_dict(self):
        return {"slope": self.slope,
                "points": [p.__dict__ for p in self.points]}


def _sorted_eps(eps_list):
    eps = [float(e) for e in eps_list]
    srt = sorted(eps, reverse=True)
    if srt != eps:
        warnings.warn("eps list was not in decreasing order; sorted it", UnsortedEpsList)
    return srt


def lambda_sweep(model, eps_list, n_grid=1000) -> SweepReport:
    """Distance between fluid and MMBM stationary CDFs for each ``eps``."""
    eps_list = _sorted_eps(eps_list)
    limit = stationary_density(model)
    xs = cdf_grid(model.b, n_grid)
    report = SweepReport()
    for eps in eps_list:
        sol = finite_buffer_solution(build_fluid_approximation(model, eps), model.b)
        report.points.append(SweepPoint(
            eps=eps,
            distance=cdf_distance(sol, limit, xs),
            mass0=float(sol.p0_minus.sum()),
            massb=float(sol.pb_plus.sum()),
            cond_N=sol.cond["N"],
            k_drift=float(np.abs(sol.fp.K - limit.lm.K0).max()),
        ))
    if len(eps_list) >= 2:
        report.slope = loglog_slope(report.eps, report.distances)
    return report


# quantity -> (power of eps the residual should scale with)
EXPANSION_ORDERS = {
    "Psi": 2, "PsiStar": 2, "K": 1, "KStar": 1, "U": 1, "UStar": 1, "G": 2,
}


ROUNDING_FLOOR = 1e-12


def expansion_residuals(model, eps, lm=None):
    """Residuals of the small-``eps`` expansions, each divided by its order.

    ``Psi_eps = I + eps Psi1``, ``K_eps = K0``, ``U_eps = Lambda-`` (and the
    starred versions), ``G^(b) = J + eps G1``.
    """
    if lm is None:
        lm = limit_matrices(model)
    sp = lm.solvents
    I = np.eye(model.m)
    fp = first_passage_set(build_fluid_approximation(model, eps))
    G = solve_Gb(fp, model.b).full

    def nrm(A):
        return float(np.abs(A).sum(axis=1).max())

    raw = {
        "Psi": nrm(fp.psi - I - eps * sp.psi1),
        "PsiStar": nrm(fp.psi_star - I - eps * sp.psi1_star),
        "K": nrm(fp.K - lm.K0),
        "KStar": nrm(fp.Kstar - lm.K0star),
        "U": nrm(fp.U - sp.lam_minus),
        "UStar": nrm(fp.Ustar - sp.lam_plus),
        "G": nrm(G - lm.J - eps * lm.G1),
    }
    return {k: v / eps ** EXPANSION_ORDERS[k] for k, v in raw.items()}


def expansion_check(model, eps_list, band=(0.2, 5.0)):
    """Scaled residuals per ``eps`` and their ratios across successive halvings.

    Returns
    -------
    dict
        ``{"eps": [...], "scaled": {name: [...]}, "ratios": {name: [...]},
        "ok": {name: bool}}``.
    """
    eps_list = _sorted_eps(eps_list)
    if len(eps_list) < 3:
        raise ValueError("need at least three eps values")
    lm = limit_matrices(model)
    rows = [expansion_residuals(model, e, lm) for e in eps_list]
    scaled = {k: [r[k] for r in rows] for k in EXPANSION_ORDERS}
    ratios, ok = {}, {}
    lo, hi = band
    eps = np.asarray(eps_list)
    for k, vals in scaled.items():
        v = np.asarray(vals)
        # residuals at rounding level (the fluid matrices are O(1/eps)) carry
        # no scaling information: such pairs count as exact
        exact = v * eps ** EXPANSION_ORDERS[k] <= ROUNDING_FLOOR / eps
        r = np.where(exact[1:] & exact[:-1], 1.0, v[1:] / np.where(v[:-1] == 0, 1.0, v[:-1]))
        ratios[k] = r.tolist()
        ok[k] = bool(np.all((r >= lo) & (r <= hi)))
    return {"eps": eps_list, "scaled": scaled, "ratios": ratios, "ok": ok}
