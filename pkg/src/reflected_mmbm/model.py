"""MMBM model definition, validation and the fluid approximation family."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    BadBuffer,
    EpsTooLarge,
    NotAGenerator,
    NotIrreducible,
    ValidationError,
    ZeroMeanDrift,
    ZeroVariance,
)
from .kernels import is_irreducible, stationary_vector

DRIFT_TOL = 1e-9
GENERATOR_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class MmbmModel:
    """Markov-modulated Brownian motion reflected on ``[0, b]``.

    Attributes
    ----------
    Q : (m, m) ndarray
        Generator of the phase process.
    mu : (m,) ndarray
        Drift in each phase.
    sigma2 : (m,) ndarray
        Variance in each phase (all strictly positive).
    b : float
        Height of the upper reflecting boundary.
    """

    Q: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    b: float

    @property
    def m(self):
        return len(self.mu)

    @property
    def theta(self):
        return np.sqrt(self.sigma2)

    @cached_property
    def alpha(self):
        return stationary_phase_distribution(self.Q)

    @property
    def mean_drift(self):
        return float(self.alpha @ self.mu)

    def with_buffer(self, b):
        return validate_model(self.Q, self.mu, self.sigma2, b)

    def to_dict(self):
        return {"Q": self.Q.tolist(), "mu": self.mu.tolist(),
                "sigma2": self.sigma2.tolist(), "b": self.b}


def _check_generator(Q, tol=GENERATOR_TOL):
    scale = max(1.0, np.abs(Q).max())
    off = Q - np.diag(np.diag(Q))
    if off.min() < 0:
        raise NotAGenerator("Q has negative off-diagonal entries")
    if np.abs(Q.sum(axis=1)).max() > tol * scale:
        raise NotAGenerator("rows of Q do not sum to zero")


def validate_model(Q, mu, sigma2, b) -> MmbmModel:
    """Check the model assumptions and return an immutable :class:`MmbmModel`."""
    try:
        Q = np.array(Q, dtype=float, ndmin=2)
        mu = np.array(mu, dtype=float, ndmin=1)
        sigma2 = np.array(sigma2, dtype=float, ndmin=1)
        b = float(b)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"malformed model: {exc}") from None
    m = len(mu)
    if Q.shape != (m, m) or sigma2.shape != (m,) or mu.ndim != 1:
        raise ValidationError(
            f"inconsistent shapes: Q {Q.shape}, mu {mu.shape}, sigma2 {sigma2.shape}")
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma2))):
        raise ValidationError("model has non-finite entries")
    _check_generator(Q)
    if not is_irreducible(Q):
        raise NotIrreducible("Q is reducible")
    if np.any(sigma2 <= 0):
        raise ZeroVariance("all variances must be strictly positive")
    if not (np.isfinite(b) and b > 0):
        raise BadBuffer(f"buffer height must be positive and finite, got {b}")
    for arr in (Q, mu, sigma2):
        arr.flags.writeable = False
    model = MmbmModel(Q, mu, sigma2, b)
    drift = model.mean_drift
    if abs(drift) <= DRIFT_TOL * max(np.abs(mu).max(), 1e-300):
        raise ZeroMeanDrift(f"mean drift alpha D 1 = {drift:.3e} is numerically zero")
    return model


def stationary_phase_distribution(Q):
    """Stationary distribution ``alpha`` of an irreducible generator."""
    Q = np.array(Q, dtype=float, ndmin=2)
    _check_generator(Q)
    if not is_irreducible(Q):
        raise NotIrreducible("Q is reducible")
    return stationary_vector(Q)


def load_model(path) -> MmbmModel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc}") from None
    return model_from_dict(doc)


def model_from_dict(doc) -> MmbmModel:
    missing = {"Q", "mu", "sigma2", "b"} - set(doc)
    if missing:
        raise ValidationError(f"model document lacks {sorted(missing)}")
    return validate_model(doc["Q"], doc["mu"], doc["sigma2"], doc["b"])


@dataclass(frozen=True, eq=False)
class FluidModel:
    """One member of the fluid family approximating an MMBM.

    Phases are ordered ``(1, i)`` then ``(2, i)``; the first copy has the
    positive rates ``mu + theta / eps`` and the second the negative rates
    ``mu - theta / eps``.
    """

    eps: float
    T: np.ndarray
    C: np.ndarray  # diagonal of the rate matrix

    @property
    def lam(self):
        return 1.0 / self.eps ** 2

    @property
    def m(self):
        return len(self.C) // 2

    @property
    def plus_index(self):
        return np.arange(self.m)

    @property
    def minus_index(self):
        return np.arange(self.m, 2 * self.m)

    @property
    def Tpp(self):
        return self.T[:self.m, :self.m]

    @property
    def Tpm(self):
        return self.T[:self.m, self.m:]

    @property
    def Tmp(self):
        return self.T[self.m:, :self.m]

    @property
    def Tmm(self):
        return self.T[self.m:, self.m:]

    @property
    def c_plus(self):
        return self.C[:self.m]

    @property
    def c_minus(self):
        return self.C[self.m:]


def eps_threshold(model):
    """Largest admissible ``eps``: ``min sigma_i / |mu_i|`` over nonzero drifts."""
    mu = np.abs(model.mu)
    nz = mu > 0
    if not nz.any():
        return np.inf
    return float(np.min(model.theta[nz] / mu[nz]))


def build_fluid_approximation(model, eps) -> FluidModel:
    """Doubled-phase fluid queue with ``lambda = 1 / eps**2``."""
    eps = float(eps)
    if not eps > 0:
        raise EpsTooLarge(f"eps must be positive, got {eps}")
    thr = eps_threshold(model)
    if eps >= thr:
        raise EpsTooLarge(f"eps={eps} must be below {thr:.6g}")
    m = model.m
    lam = 1.0 / eps ** 2
    Ilam = lam * np.eye(m)
    T = np.block([[model.Q - Ilam, Ilam], [Ilam, model.Q - Ilam]])
    shift = model.theta / eps
    C = np.concatenate([model.mu + shift, model.mu - shift])
    if not (np.all(C[:m] > 0) and np.all(C[m:] < 0)):
        raise EpsTooLarge("rate sign pattern broken")
    T.flags.writeable = False
    C.flags.writeable = False
    return FluidModel(eps, T, C)
