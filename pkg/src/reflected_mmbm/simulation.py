"""Monte Carlo oracles.

Random numbers come from ``numpy.random.Philox`` (counter based).  The
seed is expanded with :class:`numpy.random.SeedSequence` into independent
streams: stream 0 drives the phase process and stream 1 the Gaussian level
increments (MMBM) or nothing (fluid, where the level is deterministic given
the phase path).  Paths are reproducible bit for bit on every platform
numpy supports.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, asdict

import numba
import numpy as np

from .errors import BadConfig, EmptySample
from .kernels import stationary_vector

log = logging.getLogger(__name__)

CHUNK = 1 << 20
N_BATCHES = 100


class StepTooCoarse(UserWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 2e5
    burn_in: float = 1e3
    step: float = 1e-3
    sample_dt: float = 1e-2
    seed: int = 0
    grid: int = 200
    boundary: str = "reflect"

    def __post_init__(self):
        if not (self.horizon > self.burn_in >= 0):
            raise BadConfig("need horizon > burn_in >= 0")
        if not self.step > 0:
            raise BadConfig("step must be positive")
        if not self.sample_dt > 0:
            raise BadConfig("sample_dt must be positive")
        if self.grid < 10:
            raise BadConfig("need at least 10 histogram bins")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise BadConfig("seed must fit in 64 bits")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class EmpiricalLaw:
    """Occupation measure of a simulated path after burn-in.

    ``hist[i, k]`` is the fraction of observations with the level strictly
    inside ``(0, b)``, in bin ``k`` and phase ``i``; ``frac0`` and ``fracb``
    are the fractions sitting exactly on a boundary.  All weights add to 1.
    """

    b: float
    hist: np.ndarray
    frac0: np.ndarray
    fracb: np.ndarray
    n_samples: int
    local_time_rate0: float
    local_time_rateb: float
    batch_means: np.ndarray = field(repr=False)
    config: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.hist.shape[0]

    @property
    def edges(self):
        return np.linspace(0.0, self.b, self.hist.shape[1] + 1)

    @property
    def total_weight(self):
        return float(self.hist.sum() + self.frac0.sum() + self.fracb.sum())

    @property
    def phase_occupancy(self):
        return self.hist.sum(axis=1) + self.frac0 + self.fracb

    def cdf_at_edges(self):
        """Joint empirical CDF at every bin edge, shape ``(bins + 1, m)``."""
        cum = np.cumsum(self.hist, axis=1).T
        F = np.vstack([np.zeros(self.m), cum]) + self.frac0
        F[-1] += self.fracb
        return F

    def effective_sample_size(self):
        """Batch-means estimate of the number of independent observations."""
        bm = self.batch_means
        n = self.n_samples
        if len(bm) < 2 or n == 0:
            return float(n)
        mean = self.mean_level()
        centres = 0.5 * (self.edges[1:] + self.edges[:-1])
        w = self.hist.sum(axis=0)
        second = (w * centres ** 2).sum() + self.fracb.sum() * self.b ** 2
        var = max(second - mean ** 2, 1e-300)
        k = n / len(bm)
        tau = k * bm.var(ddof=1) / var
        return float(n / max(tau, 1.0))

    def mean_level(self):
        centres = 0.5 * (self.edges[1:] + self.edges[:-1])
        return float((self.hist.sum(axis=0) * centres).sum() + self.fracb.sum() * self.b)

    def mean_level_se(self):
        bm = self.batch_means
        return float(bm.std(ddof=1) / np.sqrt(len(bm)))

    def merge(self, other):
        """Weighted combination of two independent runs on the same grid."""
        if self.hist.shape != other.hist.shape or self.b != other.b:
            raise BadConfig("cannot merge laws on different grids")
        n = self.n_samples + other.n_samples
        wa, wb = self.n_samples / n, other.n_samples / n
        return EmpiricalLaw(
            self.b, wa * self.hist + wb * other.hist, wa * self.frac0 + wb * other.frac0,
            wa * self.fracb + wb * other.fracb, n,
            wa * self.local_time_rate0 + wb * other.local_time_rate0,
            wa * self.local_time_rateb + wb * other.local_time_rateb,
            np.concatenate([self.batch_means, other.batch_means]), {})


def _streams(seed):
    ss = np.random.SeedSequence(int(seed))
    return [np.random.Generator(np.random.Philox(s)) for s in ss.spawn(2)]


def _phase_path(Q, alpha, t_end, rng):
    """Jump times and states of the phase chain on ``[0, t_end]``.

    The initial phase is drawn from ``alpha``.
    """
    m = Q.shape[0]
    rates = -np.diag(Q)
    jump = np.zeros((m, m))
    for i in range(m):
        if rates[i] > 0:
            jump[i] = np.where(np.arange(m) == i, 0.0, Q[i]) / rates[i]
    cum = np.cumsum(jump, axis=1)
    state = int(np.searchsorted(np.cumsum(alpha), rng.random(), side="right"))
    state = min(state, m - 1)
    times, states = [0.0], [state]
    t = 0.0
    while True:
        if rates[state] == 0:
            break
        t += rng.exponential(1.0 / rates[state])
        if t >= t_end:
            break
        state = min(int(np.searchsorted(cum[state], rng.random(), side="right")), m - 1)
        times.append(t)
        states.append(state)
    return np.asarray(times), np.asarray(states, dtype=np.int64)


@numba.njit(cache=True)
def _mmbm_chunk(y, k0, n, h, xi, jt, js, jpos, mu, sig, b, burn, every, nb, hist, at0, atb,
                pushes, bsum, bcount, nbatch, per_batch, nsamp, mirror):
    sq = np.sqrt(h)
    nj = jt.shape[0]
    for j in range(n):
        k = k0 + j
        t = k * h
        while jpos + 1 < nj and jt[jpos + 1] <= t:
            jpos += 1
        ph = js[jpos]
        z = y + mu[ph] * h + sig[ph] * sq * xi[j]
        if mirror:
            # at most a few folds: z can overshoot by several sigma sqrt(h) only
            while z < 0.0 or z > b:
                if z < 0.0:
                    if k >= burn:
                        pushes[0] -= 2.0 * z
                    z = -z
                else:
                    if k >= burn:
                        pushes[1] += 2.0 * (z - b)
                    z = 2.0 * b - z
        elif z < 0.0:
            if k >= burn:
                pushes[0] -= z
            z = 0.0
        elif z > b:
            if k >= burn:
                pushes[1] += z - b
            z = b
        y = z
        if k + 1 >= burn and (k + 1 - burn) % every == 0:
            # observe the state at time (k + 1) h; phase at that instant
            tt = (k + 1) * h
            p2 = jpos
            while p2 + 1 < nj and jt[p2 + 1] <= tt:
                p2 += 1
            ph2 = js[p2]
            if y <= 0.0:
                at0[ph2] += 1
            elif y >= b:
                atb[ph2] += 1
            else:
                bin_ = int(y / b * nb)
                if bin_ >= nb:
                    bin_ = nb - 1
                hist[ph2, bin_] += 1
            bi = nsamp[0] // per_batch
            if bi < nbatch:
                bsum[bi] += y
                bcount[bi] += 1
            nsamp[0] += 1
    return y, jpos


def simulate_mmbm(model, cfg: SimConfig) -> EmpiricalLaw:
    """Euler scheme for the two-sided reflected MMBM with projection at 0 and b.

    Each step adds ``mu_i h + sigma_i sqrt(h) xi``; the excess beyond a
    boundary is removed and booked as local time.
    """
    b = model.b
    rec = (b / 20.0) ** 2 / model.sigma2.max()
    if cfg.step > rec:
        warnings.warn(f"step {cfg.step} exceeds the recommended {rec:.3g}", StepTooCoarse)
    rng_phase, rng_level = _streams(cfg.seed)
    jt, js = _phase_path(model.Q, model.alpha, cfg.horizon, rng_phase)
    n_steps = int(round(cfg.horizon / cfg.step))
    burn = int(round(cfg.burn_in / cfg.step))
    every = max(1, int(round(cfg.sample_dt / cfg.step)))
    n_obs = (n_steps - burn) // every
    if n_obs <= 0:
        raise EmptySample("no observations after burn-in")
    m, nb = model.m, cfg.grid
    hist = np.zeros((m, nb))
    at0 = np.zeros(m)
    atb = np.zeros(m)
    pushes = np.zeros(2)
    per_batch = max(1, n_obs // N_BATCHES)
    bsum = np.zeros(N_BATCHES)
    bcount = np.zeros(N_BATCHES)
    nsamp = np.zeros(1, dtype=np.int64)
    mu = np.ascontiguousarray(model.mu, dtype=float)
    sig = np.ascontiguousarray(model.theta, dtype=float)
    y, jpos, k = 0.0, 0, 0
    while k < n_steps:
        n = min(CHUNK, n_steps - k)
        xi = rng_level.standard_normal(n)
        y, jpos = _mmbm_chunk(y, k, n, cfg.step, xi, jt, js, jpos, mu, sig, b, burn, every,
                              nb, hist, at0, atb, pushes, bsum, bcount, N_BATCHES,
                              per_batch, nsamp, cfg.boundary == "reflect")
        k += n
    return _finish(b, hist, at0, atb, pushes, bsum, bcount, nsamp[0],
                   cfg.horizon - cfg.burn_in, cfg)


def _finish(b, hist, at0, atb, pushes, bsum, bcount, n, duration, cfg):
    if n == 0:
        raise EmptySample("no observations recorded")
    full = bcount > 0
    return EmpiricalLaw(
        b=b, hist=hist / n, frac0=at0 / n, fracb=atb / n, n_samples=int(n),
        local_time_rate0=float(pushes[0] / duration),
        local_time_rateb=float(pushes[1] / duration),
        batch_means=bsum[full] / bcount[full], config=cfg.to_dict(),
    )


@numba.njit(cache=True)
def _fluid_path(jt, js, rates, b, t_end, burn, dt, nb, hist, at0, atb, pushes,
                bsum, bcount, nbatch, per_batch, nsamp):
    nj = jt.shape[0]
    y = 0.0
    t_obs = burn
    for j in range(nj):
        t0 = jt[j]
        t1 = jt[j + 1] if j + 1 < nj else t_end
        c = rates[js[j]]
        # observations inside [t0, t1)
        while t_obs < t1 and t_obs <= t_end:
            z = y + c * (t_obs - t0)
            if z <= 0.0:
                z = 0.0
                at0[js[j]] += 1
            elif z >= b:
                z = b
                atb[js[j]] += 1
            else:
                bin_ = int(z / b * nb)
                if bin_ >= nb:
                    bin_ = nb - 1
                hist[js[j], bin_] += 1
            bi = nsamp[0] // per_batch
            if bi < nbatch:
                bsum[bi] += z
                bcount[bi] += 1
            nsamp[0] += 1
            t_obs += dt
        z = y + c * (t1 - t0)
        if z < 0.0:
            if t1 > burn:
                pushes[0] -= z
            z = 0.0
        elif z > b:
            if t1 > burn:
                pushes[1] += z - b
            z = b
        # a linear segment leaves [0, b] at most once, so clipping the end
        # point reproduces the sticky boundary dynamics
        y = z


def simulate_fluid(fluid, b, cfg: SimConfig) -> EmpiricalLaw:
    """Exact event-driven simulation of the finite-buffer fluid queue.

    The returned histogram is indexed by the doubled phases ``(k, i)``.
    """
    b = float(b)
    rng_phase, _ = _streams(cfg.seed)
    T = np.asarray(fluid.T)
    n = T.shape[0]
    # stationary law of T is gamma x alpha
    start = stationary_vector(T)
    jt, js = _phase_path(T, start, cfg.horizon, rng_phase)
    n_obs = int((cfg.horizon - cfg.burn_in) / cfg.sample_dt)
    if n_obs <= 0:
        raise EmptySample("no observations after burn-in")
    hist = np.zeros((n, cfg.grid))
    at0 = np.zeros(n)
    atb = np.zeros(n)
    pushes = np.zeros(2)
    per_batch = max(1, n_obs // N_BATCHES)
    bsum = np.zeros(N_BATCHES)
    bcount = np.zeros(N_BATCHES)
    nsamp = np.zeros(1, dtype=np.int64)
    _fluid_path(jt, js, np.ascontiguousarray(fluid.C, dtype=float), b, cfg.horizon,
                cfg.burn_in, cfg.sample_dt, cfg.grid, hist, at0, atb, pushes, bsum, bcount,
                N_BATCHES, per_batch, nsamp)
    return _finish(b, hist, at0, atb, pushes, bsum, bcount, nsamp[0],
                   cfg.horizon - cfg.burn_in, cfg)


def collapse_law(emp: EmpiricalLaw) -> EmpiricalLaw:
    """Sum the two copies of each phase of a doubled-phase fluid law."""
    m = emp.m // 2
    return EmpiricalLaw(emp.b, emp.hist[:m] + emp.hist[m:], emp.frac0[:m] + emp.frac0[m:],
                        emp.fracb[:m] + emp.fracb[m:], emp.n_samples, emp.local_time_rate0,
                        emp.local_time_rateb, emp.batch_means, emp.config)


def ks_distance(emp: EmpiricalLaw, cdf, per_phase=False):
    """Sup distance between the empirical and an analytic CDF.

    Parameters
    ----------
    emp : EmpiricalLaw
    cdf : callable
        ``cdf(x)`` returns the joint CDF vector over phases at level ``x``.
    per_phase : bool
        Compare each phase's joint CDF instead of the level marginal.

    Notes
    -----
    The empirical CDF is piecewise constant between bin edges only up to
    the within-bin spread, so the distance is evaluated at the edges and
    at the left limit in ``b``.
    """
    if emp.n_samples == 0:
        raise EmptySample("empty sample")
    edges = emp.edges
    Femp = emp.cdf_at_edges()
    Fan = np.array([np.asarray(cdf(x), dtype=float) for x in edges])
    if Fan.ndim == 1:
        Fan = Fan[:, None]
    # left limit at b
    Femp_bm = Femp[-1] - emp.fracb
    Fan_bm = np.asarray(cdf(np.nextafter(emp.b, 0.0)), dtype=float)
    if per_phase:
        d = np.abs(Femp - Fan).max()
        d = max(d, np.abs(Femp_bm - Fan_bm).max())
    else:
        d = np.abs(Femp.sum(axis=1) - Fan.sum(axis=1)).max()
        d = max(d, abs(Femp_bm.sum() - Fan_bm.sum()))
    return float(d)


def dkw_bound(n, z=3.0):
    """Half-width of the DKW band at a ``z``-sigma confidence level."""
    from scipy.stats import norm
    alpha = 2 * norm.sf(z)
    return float(np.sqrt(np.log(2.0 / alpha) / (2.0 * n)))
