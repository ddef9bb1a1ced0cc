"""Squared-exponential Gaussian processes, conditioning and slice samplers."""

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .geometry import as_locations

__all__ = [
    "GpSpec",
    "GpValues",
    "GpFactorizationError",
    "SliceSamplingError",
    "Conditional",
    "sigmoid",
    "log_sigmoid",
    "se_covariance",
    "factorize",
    "gp_condition",
    "sample_prior",
    "sample_conditional",
    "gp_log_marginal",
    "elliptical_slice",
    "slice_sample",
]


class GpFactorizationError(np.linalg.LinAlgError):
    """Cholesky failed even after doubling the jitter."""


class SliceSamplingError(RuntimeError):
    """The slice shrinkage loop did not terminate."""


def sigmoid(x):
    """Logistic function ``1 / (1 + exp(-x))``, overflow-safe."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)


def log_sigmoid(x):
    """``log(sigmoid(x))``; note ``log(1 - sigmoid(x)) == log_sigmoid(-x)``."""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=float))


@dataclass(frozen=True)
class GpSpec:
    """Zero-mean squared-exponential GP with log-normal hyperpriors.

    ``lengthscale`` is a scalar (isotropic) or one value per dimension.
    ``jitter`` is relative to ``variance`` and is added to every matrix
    before factorization. ``mean_shift`` offsets the prior mean; it is zero
    in the model and exists to push the link into saturation in tests.
    """

    variance: float = 1.0
    lengthscale: object = 1.0
    jitter: float = 1e-8
    mean_shift: float = 0.0
    hyper_log_mean: float = 0.0
    hyper_log_sd: float = 1.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if not (self.variance > 0 and np.all(ls > 0) and self.jitter > 0 and self.hyper_log_sd > 0):
            raise ValueError("variance, length-scales, jitter and hyperprior sd must be positive")
        object.__setattr__(self, "lengthscale", float(ls[0]) if ls.size == 1 else tuple(ls.tolist()))

    @property
    def lengthscales(self):
        return np.atleast_1d(np.asarray(self.lengthscale, dtype=float))

    @property
    def jitter_abs(self):
        return self.jitter * self.variance

    def covariance(self, x, y=None):
        return se_covariance(x, x if y is None else y, self.variance, self.lengthscales)

    def with_hypers(self, variance=None, lengthscale=None):
        return replace(
            self,
            variance=self.variance if variance is None else variance,
            lengthscale=self.lengthscale if lengthscale is None else lengthscale,
        )


def se_covariance(x, y, variance, lengthscale):
    x = np.asarray(x, float) / lengthscale
    y = np.asarray(y, float) / lengthscale
    sq = np.sum(x**2, 1)[:, None] + np.sum(y**2, 1)[None, :] - 2.0 * x @ y.T
    return variance * np.exp(-0.5 * np.maximum(sq, 0.0))


def factorize(K, jitter):
    """Lower Cholesky factor of ``K + jitter * I``; the jitter is doubled once on failure."""
    n = K.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    for scale in (1.0, 2.0):
        try:
            return linalg.cholesky(K + scale * jitter * np.eye(n), lower=True)
        except linalg.LinAlgError:
            continue
    raise GpFactorizationError(f"covariance of size {n} not positive definite with jitter {2 * jitter:g}")


class GpValues:
    """Latent GP values at a set of locations, with a cached factorization."""

    def __init__(self, locs, values, spec):
        self.locs = as_locations(locs)
        self.values = np.asarray(values, dtype=float)
        if len(self.locs) != len(self.values):
            raise ValueError("one value per location required")
        self.spec = spec
        self._chol = None

    def __len__(self):
        return len(self.values)

    @property
    def chol(self):
        if self._chol is None:
            self._chol = factorize(self.spec.covariance(self.locs), self.spec.jitter_abs)
        return self._chol

    def set_spec(self, spec):
        if spec != self.spec:
            self.spec = spec
            self._chol = None


class Conditional(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray

    @property
    def variance(self):
        return np.diag(self.cov)


def gp_condition(known, new_locs, marginal_only=False):
    """Distribution of the GP at ``new_locs`` given ``known`` values.

    Returns mean, covariance and the Cholesky factor used for sampling
    (covariance plus jitter). With ``marginal_only`` only the diagonal of
    the covariance is formed and ``chol`` holds marginal standard deviations.
    """
    spec = known.spec
    new_locs = as_locations(new_locs, known.locs.shape[1] if len(known) else None)
    m = len(new_locs)
    prior_var = np.full(m, spec.variance)
    if len(known) == 0:
        mean = np.full(m, spec.mean_shift)
        if marginal_only:
            return Conditional(mean, prior_var, np.sqrt(prior_var + spec.jitter_abs))
        cov = spec.covariance(new_locs)
        return Conditional(mean, cov, factorize(cov, spec.jitter_abs))
    cross = spec.covariance(known.locs, new_locs)
    v = linalg.solve_triangular(known.chol, cross, lower=True)
    alpha = linalg.solve_triangular(known.chol, known.values - spec.mean_shift, lower=True)
    mean = spec.mean_shift + v.T @ alpha
    if marginal_only:
        var = np.maximum(prior_var - np.sum(v**2, axis=0), 0.0)
        return Conditional(mean, var, np.sqrt(var + spec.jitter_abs))
    cov = spec.covariance(new_locs) - v.T @ v
    cov = 0.5 * (cov + cov.T)
    return Conditional(mean, cov, factorize(cov, spec.jitter_abs))


def sample_prior(spec, locs, rng):
    locs = as_locations(locs)
    if len(locs) == 0:
        return np.zeros(0)
    L = factorize(spec.covariance(locs), spec.jitter_abs)
    return spec.mean_shift + L @ rng.standard_normal(len(locs))


def sample_conditional(known, new_locs, rng):
    cond = gp_condition(known, new_locs)
    if len(cond.mean) == 0:
        return np.zeros(0)
    return cond.mean + cond.chol @ rng.standard_normal(len(cond.mean))


def gp_log_marginal(values, locs, spec):
    """``log N(values; mean_shift, K + jitter I)``."""
    n = len(values)
    if n == 0:
        return 0.0
    L = factorize(spec.covariance(locs), spec.jitter_abs)
    z = linalg.solve_triangular(L, np.asarray(values) - spec.mean_shift, lower=True)
    return float(-0.5 * z @ z - np.sum(np.log(np.diag(L))) - 0.5 * n * np.log(2 * np.pi))


def elliptical_slice(values, chol, log_lik, rng, mean=0.0, current_ll=None, max_shrink=10_000):
    """One elliptical slice sampling update.

    Targets ``N(values; mean, chol chol^T) * exp(log_lik(values))``.
    Returns ``(new_values, new_log_lik)``.
    """
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return values, float(log_lik(values))
    f = values - mean
    nu = chol @ rng.standard_normal(len(values))
    ll0 = log_lik(values) if current_ll is None else current_ll
    threshold = ll0 + np.log(rng.random())
    angle = rng.uniform(0.0, 2.0 * np.pi)
    lo, hi = angle - 2.0 * np.pi, angle
    for _ in range(max_shrink):
        proposal = f * np.cos(angle) + nu * np.sin(angle) + mean
        ll = log_lik(proposal)
        if ll > threshold:
            return proposal, float(ll)
        if angle < 0:
            lo = angle
        else:
            hi = angle
        angle = rng.uniform(lo, hi)
    raise SliceSamplingError(f"elliptical slice sampler exceeded {max_shrink} shrinkages")


def slice_sample(x0, log_density, rng, width=1.0, max_steps=50, max_shrink=10_000):
    """Univariate slice sampling with stepping out and shrinkage."""
    f0 = log_density(x0)
    threshold = f0 + np.log(rng.random())
    lo = x0 - width * rng.random()
    hi = lo + width
    j = int(np.floor(max_steps * rng.random()))
    k = max_steps - 1 - j
    while j > 0 and log_density(lo) > threshold:
        lo -= width
        j -= 1
    while k > 0 and log_density(hi) > threshold:
        hi += width
        k -= 1
    for _ in range(max_shrink):
        x = rng.uniform(lo, hi)
        if log_density(x) > threshold:
            return float(x)
        if x < x0:
            lo = x
        else:
            hi = x
    raise SliceSamplingError(f"slice sampler exceeded {max_shrink} shrinkages")
