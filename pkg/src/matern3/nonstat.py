"""Matérn type-III thinning of a sigmoid-GP modulated Poisson process.

The primary process is a rate-``lambda_hat`` Poisson process ``E`` whose
events are kept with probability ``sigmoid(l(e))`` for a latent GP ``l``.
Kept events are then thinned in birth order as in the homogeneous model.
The GP is only ever instantiated at event locations.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import linalg

from . import gp as gplib
from .geometry import as_locations, pairwise_distances
from .gibbs import (
    ChainState,
    InconsistentStateError,
    SamplerAbort,
    initial_state,
    resample_birth_times,
    resample_kernel,
    trace_row,
)
from .gp import GpSpec, GpValues, gp_condition, log_sigmoid, sigmoid
from .matern import AugmentedPattern, thin_primary
from .poisson import make_rng, sample_homogeneous
from .priors import PriorSpec
from .trace import Trace

__all__ = [
    "NonstatSample",
    "NonstatState",
    "IntensityGrid",
    "simulate_nonstat_matern",
    "initial_nonstat_state",
    "resample_matern_thinned_nonstat",
    "resample_poisson_thinned",
    "resample_gp_values",
    "resample_gp_hyperparameters",
    "resample_intensity_nonstat",
    "nonstat_sweep",
    "run_chain_nonstat",
]

log = logging.getLogger(__name__)


class NonstatSample(NamedTuple):
    matern: AugmentedPattern
    matern_thinned: AugmentedPattern
    poisson_thinned: AugmentedPattern
    gp_values: GpValues  # on matern, matern_thinned, poisson_thinned, in that order


def simulate_nonstat_matern(window, lambda_hat, gp, kernel, rng):
    """Two-stage forward simulation: sigmoid-GP thinning, then Matérn thinning."""
    if not lambda_hat > 0:
        raise ValueError("lambda_hat must be positive")
    primary = sample_homogeneous(window, lambda_hat, rng)
    values = gplib.sample_prior(gp, primary.locs, rng)
    kept = rng.random(len(primary)) < sigmoid(values)
    locs, times, lv = primary.locs[kept], primary.times[kept], values[kept]
    alive, radii = thin_primary(locs, kernel, rng)
    matern = AugmentedPattern(locs[alive], times[alive], None if radii is None else radii[alive])
    matern_thinned = AugmentedPattern(locs[~alive], times[~alive])
    poisson_thinned = AugmentedPattern(primary.locs[~kept], primary.times[~kept])
    # patterns are already in birth order, so the GP values line up
    all_locs = np.concatenate([matern.locs, matern_thinned.locs, poisson_thinned.locs])
    all_vals = np.concatenate([lv[alive], lv[~alive], values[~kept]])
    return NonstatSample(matern, matern_thinned, poisson_thinned, GpValues(all_locs, all_vals, gp))


@dataclass
class NonstatState(ChainState):
    """Homogeneous chain state plus the GP and the Poisson-thinned events.

    ``intensity`` holds ``lambda_hat``. GP values are stored per event set;
    ``E`` is the concatenation survivors, Matérn-thinned, Poisson-thinned.
    """

    gp: GpSpec = None
    matern_gp: np.ndarray = None
    thinned_gp: np.ndarray = None
    poisson_locs: np.ndarray = None
    poisson_gp: np.ndarray = None
    _gp_cache: object = field(default=None, repr=False)

    def __post_init__(self):
        super().__post_init__()
        dim = self.window.dim
        if self.gp is None:
            self.gp = GpSpec()
        if self.matern_gp is None:
            self.matern_gp = np.full(self.n_matern, self.gp.mean_shift)
        if self.thinned_gp is None:
            self.thinned_gp = np.full(self.n_thinned, self.gp.mean_shift)
        if self.poisson_locs is None:
            self.poisson_locs = np.zeros((0, dim))
            self.poisson_gp = np.zeros(0)
        self.poisson_locs = as_locations(self.poisson_locs, dim)
        self.matern_gp = np.asarray(self.matern_gp, float).copy()
        self.thinned_gp = np.asarray(self.thinned_gp, float).copy()
        self.poisson_gp = np.asarray(self.poisson_gp, float).copy()
        if (len(self.matern_gp), len(self.thinned_gp), len(self.poisson_gp)) != (
            self.n_matern, self.n_thinned, len(self.poisson_locs)
        ):
            raise ValueError("every event needs exactly one GP value")

    @property
    def n_poisson(self):
        return len(self.poisson_locs)

    @property
    def n_primary(self):
        """``|E|``, every event of the rate-``lambda_hat`` process."""
        return self.n_matern + self.n_thinned + self.n_poisson

    def all_locs(self):
        return np.concatenate([self.locs, self.thinned_locs, self.poisson_locs])

    def all_gp(self):
        return np.concatenate([self.matern_gp, self.thinned_gp, self.poisson_gp])

    def gp_values(self):
        """GP values on ``E`` with a factorization cached until the state changes."""
        if self._gp_cache is None:
            self._gp_cache = GpValues(self.all_locs(), self.all_gp(), self.gp)
        return self._gp_cache

    def invalidate(self):
        self._gp_cache = None

    def set_all_gp(self, values):
        n, m = self.n_matern, self.n_thinned
        self.matern_gp = values[:n].copy()
        self.thinned_gp = values[n:n + m].copy()
        self.poisson_gp = values[n + m:].copy()
        if self._gp_cache is not None:
            self._gp_cache.values = np.asarray(values, float).copy()

    def link_log_lik(self, values=None):
        """``sum log sigmoid`` over stage-1 keeps plus ``sum log(1 - sigmoid)`` over removals."""
        values = self.all_gp() if values is None else values
        kept = self.n_matern + self.n_thinned
        return float(np.sum(log_sigmoid(values[:kept])) + np.sum(log_sigmoid(-values[kept:])))

    def log_joint(self):
        matern_part = super().log_joint()
        # the base class counts n + m primary events; add the Poisson-thinned ones
        extra = self.n_poisson * np.log(self.intensity)
        prior = 0.0
        if self.n_primary:
            values = self.gp_values()
            z = linalg.solve_triangular(values.chol, values.values - self.gp.mean_shift, lower=True)
            prior = -0.5 * z @ z - np.sum(np.log(np.diag(values.chol))) - 0.5 * len(z) * np.log(2 * np.pi)
        return float(matern_part + extra + self.link_log_lik() + prior)

    def copy(self):
        base = super().copy()
        base.matern_gp = self.matern_gp.copy()
        base.thinned_gp = self.thinned_gp.copy()
        base.poisson_locs = self.poisson_locs.copy()
        base.poisson_gp = self.poisson_gp.copy()
        base._gp_cache = None
        return base

    def describe(self):
        return "\n".join([
            super().describe(),
            f"gp={self.gp} n_poisson_thinned={self.n_poisson}",
            f"non-finite GP values: {int(np.sum(~np.isfinite(self.all_gp())))}",
        ])


def _earlier_cover(state, locs, times):
    radii = state.event_radii()
    d = pairwise_distances(locs, state.locs)
    return ((d < radii[None, :]) & (state.times[None, :] < times[:, None])).sum(axis=1)


def resample_matern_thinned_nonstat(state, rng):
    """Redraw the Matérn-thinned events and their GP values.

    A rate-``lambda_hat`` proposal is kept with probability
    ``sigmoid(l) * H``; ``l`` at proposal points is drawn conditionally on
    the current ``E`` and the old thinned events are discarded.
    """
    proposal = sample_homogeneous(state.window, state.intensity, rng)
    u = rng.random(len(proposal))
    if state.n_matern == 0 or len(proposal) == 0:
        shadow = np.zeros(len(proposal))
    else:
        shadow = 1.0 - (1.0 - state.thin_prob) ** _earlier_cover(state, proposal.locs, proposal.times)
    # GP values are only needed where the shadow is positive
    live = np.flatnonzero(shadow > 0)
    values = gplib.sample_conditional(state.gp_values(), proposal.locs[live], rng)
    keep = u[live] < sigmoid(values) * shadow[live]
    idx = live[keep]
    state.thinned_locs = proposal.locs[idx]
    state.thinned_times = proposal.times[idx]
    state.thinned_gp = values[keep]
    state.invalidate()
    return state


def resample_poisson_thinned(state, rng):
    """Redraw the Poisson-thinned events: rate-``lambda_hat`` proposals kept w.p. ``1 - sigmoid(l)``."""
    proposal = sample_homogeneous(state.window, state.intensity, rng)
    u = rng.random(len(proposal))
    values = gplib.sample_conditional(state.gp_values(), proposal.locs, rng)
    keep = u < sigmoid(-values)
    state.poisson_locs = proposal.locs[keep]
    state.poisson_gp = values[keep]
    state.invalidate()
    return state


def resample_gp_values(state, rng, max_shrink=10_000):
    """Elliptical slice update of ``l`` on ``E`` under the sigmoid labels."""
    values = state.gp_values()
    new, _ = gplib.elliptical_slice(
        values.values, values.chol, state.link_log_lik, rng,
        mean=state.gp.mean_shift, max_shrink=max_shrink,
    )
    state.set_all_gp(new)
    return state


def _hyper_log_target(state, locs, values, log_var, log_ls):
    spec = state.gp.with_hypers(np.exp(log_var), tuple(np.exp(log_ls)))
    mu, sd = spec.hyper_log_mean, spec.hyper_log_sd
    log_prior = -0.5 * np.sum(((np.append(log_ls, log_var) - mu) / sd) ** 2)
    try:
        return log_prior + gplib.gp_log_marginal(values, locs, spec)
    except gplib.GpFactorizationError:
        return -np.inf


def resample_gp_hyperparameters(state, rng, width=1.0):
    """Slice-sample log variance, then each log length-scale, under log-normal priors."""
    locs, values = state.all_locs(), state.all_gp()
    log_var = np.log(state.gp.variance)
    log_ls = np.log(state.gp.lengthscales)
    log_var = gplib.slice_sample(
        log_var, lambda v: _hyper_log_target(state, locs, values, v, log_ls), rng, width=width
    )
    for k in range(len(log_ls)):
        def target(x, k=k):
            trial = log_ls.copy()
            trial[k] = x
            return _hyper_log_target(state, locs, values, log_var, trial)
        log_ls[k] = gplib.slice_sample(log_ls[k], target, rng, width=width)
    state.gp = state.gp.with_hypers(float(np.exp(log_var)), tuple(np.exp(log_ls)))
    state.invalidate()
    return state


def resample_intensity_nonstat(state, prior, rng):
    """``lambda_hat`` from its Gamma conditional given ``|E|``."""
    shape, rate = prior.intensity_posterior(state.n_primary, state.window.measure)
    state.intensity = float(rng.gamma(shape, 1.0 / rate))
    return state


NONSTAT_BLOCKS = (
    "matern_thinned", "poisson_thinned", "birth_times", "gp_values",
    "gp_hyperparameters", "intensity", "kernel",
)


def nonstat_sweep(state, prior, rng, check=True, update_hypers=True):
    """One sweep over the nonstationary blocks, in fixed order."""
    steps = {
        "matern_thinned": lambda: resample_matern_thinned_nonstat(state, rng),
        "poisson_thinned": lambda: resample_poisson_thinned(state, rng),
        "birth_times": lambda: resample_birth_times(state, rng),
        "gp_values": lambda: resample_gp_values(state, rng),
        "gp_hyperparameters": lambda: resample_gp_hyperparameters(state, rng),
        "intensity": lambda: resample_intensity_nonstat(state, prior, rng),
        "kernel": lambda: resample_kernel(state, prior, rng),
    }
    for name in NONSTAT_BLOCKS:
        if name == "gp_hyperparameters" and not update_hypers:
            continue
        try:
            steps[name]()
        except (InconsistentStateError, gplib.GpFactorizationError, gplib.SliceSamplingError) as err:
            raise SamplerAbort(f"block {name!r} failed: {err}", state.describe()) from err
        if check and not np.isfinite(state.log_joint()):
            raise SamplerAbort(f"non-finite log joint after block {name!r}", state.describe())
    state.iteration += 1
    return state


class IntensityGrid:
    """Running posterior mean and sd of ``lambda_hat * sigmoid(l)`` on a grid.

    Each recorded state contributes the exact conditional moments of the
    intensity at every grid point given ``l`` on ``E`` (Gauss-Hermite over
    the Gaussian conditional marginal), so no GP draws are stored.
    """

    def __init__(self, window, resolution=40, n_nodes=32):
        self.window = window
        self.resolution = int(resolution)
        half = window.sides / self.resolution / 2.0
        axes = [np.linspace(window.lo[k] + half[k], window.hi[k] - half[k], self.resolution)
                for k in range(window.dim)]
        self.points = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, window.dim)
        nodes, weights = hermegauss(n_nodes)
        self._nodes, self._weights = nodes, weights / weights.sum()
        self.count = 0
        self._sum1 = np.zeros(len(self.points))
        self._sum2 = np.zeros(len(self.points))

    def update(self, state):
        cond = gp_condition(state.gp_values(), self.points, marginal_only=True)
        sd = np.sqrt(cond.cov)
        s = sigmoid(cond.mean[:, None] + sd[:, None] * self._nodes[None, :])
        lam = state.intensity
        self._sum1 += lam * (s @ self._weights)
        self._sum2 += lam**2 * ((s**2) @ self._weights)
        self.count += 1

    @property
    def mean(self):
        return self._sum1 / max(self.count, 1)

    @property
    def sd(self):
        return np.sqrt(np.maximum(self._sum2 / max(self.count, 1) - self.mean**2, 0.0))

    def to_csv(self, path):
        coords = ["x", "y"][: self.window.dim]
        table = np.column_stack([self.points, self.mean, self.sd])
        np.savetxt(path, table, delimiter=",", header=",".join(coords + ["mean", "sd"]),
                   comments="", fmt="%.10g")


def initial_nonstat_state(locs, window, family, prior, gp, rng):
    """Homogeneous start with ``l = mean_shift`` on the survivors and no removals."""
    base = initial_state(locs, window, family, prior, rng)
    keep = float(sigmoid(gp.mean_shift))
    state = NonstatState(
        window, base.kernel, base.intensity / keep, base.locs, base.times,
        radii=base.radii, gp=gp,
    )
    if not np.isfinite(state.log_joint()):
        raise SamplerAbort("initial state is inconsistent", state.describe())
    return state


def nonstat_trace_row(state):
    row = trace_row(state)
    row["lambda_hat"] = row.pop("lambda")
    row["n_poisson_thinned"] = state.n_poisson
    row["gp_variance"] = state.gp.variance
    ls = state.gp.lengthscales
    if len(ls) == 1:
        row["gp_lengthscale"] = float(ls[0])
    else:
        row.update({f"gp_lengthscale_{k}": float(v) for k, v in enumerate(ls)})
    return row


def run_chain_nonstat(observed, window, family, prior=None, gp=None, iters=1000, burn_in=0,
                      seed=0, grid_resolution=None, check=True, update_hypers=True):
    """Run the nonstationary sampler.

    Returns ``(trace, grid)`` where ``grid`` is an :class:`IntensityGrid`
    accumulated over recorded sweeps, or ``None`` without a resolution.
    """
    if not 0 <= burn_in <= iters:
        raise ValueError("need 0 <= burn_in <= iters")
    prior = prior or PriorSpec()
    gp = gp or GpSpec()
    observed = as_locations(observed, window.dim)
    if len(observed) < 1:
        raise ValueError("need at least one observed event")
    rng = make_rng(seed)
    state = initial_nonstat_state(observed, window, family, prior, gp, rng)
    grid = IntensityGrid(window, grid_resolution) if grid_resolution else None
    trace = Trace()
    for it in range(iters):
        nonstat_sweep(state, prior, rng, check=check, update_hypers=update_hypers)
        if it >= burn_in:
            trace.append(iter=it, **nonstat_trace_row(state))
            if grid is not None:
                grid.update(state)
    trace.final_state = state
    log.debug("finished %d nonstationary sweeps, %d recorded", iters, len(trace))
    return trace, grid
