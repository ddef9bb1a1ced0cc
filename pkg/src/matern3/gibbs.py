"""Gibbs sampler for homogeneous generalized Matérn type-III models.

One sweep updates, in this order: the thinned events (a fresh Poisson draw
restricted to the shadow), the survivors' birth times, the primary
intensity, and the thinning-kernel parameters.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import as_locations, pairwise_distances
from .kernels import Hardcore, Probabilistic, Softcore
from .matern import AugmentedPattern
from .poisson import make_rng, sample_homogeneous
from .priors import PriorSpec, log_interval_mass, sample_truncated, sample_truncated_pareto
from .trace import Trace

__all__ = [
    "InconsistentStateError",
    "SamplerAbort",
    "ChainState",
    "initial_state",
    "resample_thinned_events",
    "resample_birth_times",
    "resample_intensity",
    "resample_kernel",
    "resample_kernel_hardcore",
    "resample_kernel_softcore",
    "resample_softcore_bounds",
    "resample_kernel_probabilistic",
    "radius_segments",
    "hardcore_radius_bounds",
    "gibbs_sweep",
    "run_chain",
]

log = logging.getLogger(__name__)


class InconsistentStateError(RuntimeError):
    """The chain state has zero probability under the model."""


class SamplerAbort(RuntimeError):
    """A sweep produced a non-finite log joint; ``dump`` describes the state."""

    def __init__(self, message, dump):
        super().__init__(f"{message}\n{dump}")
        self.dump = dump


@dataclass
class ChainState:
    """Latent and parameter state of one chain.

    ``locs`` are the observed survivors and never change. ``radii`` holds
    per-survivor radii for softcore models and is ``None`` otherwise.
    """

    window: object
    kernel: object
    intensity: float
    locs: np.ndarray
    times: np.ndarray
    thinned_locs: np.ndarray = None
    thinned_times: np.ndarray = None
    radii: np.ndarray = None
    iteration: int = 0
    _dist: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.locs = as_locations(self.locs, self.window.dim)
        self.times = np.asarray(self.times, dtype=float).copy()
        if self.thinned_locs is None:
            self.thinned_locs = np.zeros((0, self.window.dim))
            self.thinned_times = np.zeros(0)
        self.thinned_locs = as_locations(self.thinned_locs, self.window.dim)
        self.thinned_times = np.asarray(self.thinned_times, dtype=float)
        if self.radii is not None:
            self.radii = np.asarray(self.radii, dtype=float).copy()
        if isinstance(self.kernel, Softcore) and self.radii is None:
            raise ValueError("softcore state needs per-event radii")

    @property
    def n_matern(self):
        return len(self.times)

    @property
    def n_thinned(self):
        return len(self.thinned_times)

    @property
    def thin_prob(self):
        return self.kernel.thin_prob

    @property
    def matern_distances(self):
        # survivors never move, so their distance matrix is computed once
        if self._dist is None:
            self._dist = pairwise_distances(self.locs, self.locs)
        return self._dist

    def event_radii(self):
        if isinstance(self.kernel, Softcore):
            return self.radii
        return np.full(self.n_matern, float(self.kernel.R))

    def matern_pattern(self):
        return AugmentedPattern(self.locs, self.times, self.radii)

    def thinned_pattern(self):
        return AugmentedPattern(self.thinned_locs, self.thinned_times)

    def cover_counts(self):
        """Number of earlier covering survivors at each survivor and thinned event."""
        radii = self.event_radii()
        t = self.times
        cover = (self.matern_distances < radii[None, :]) & (t[None, :] < t[:, None])
        d_tg = pairwise_distances(self.thinned_locs, self.locs)
        cover_t = (d_tg < radii[None, :]) & (t[None, :] < self.thinned_times[:, None])
        return cover.sum(axis=1), cover_t.sum(axis=1)

    def log_joint(self):
        """Log joint density of survivors, thinned events and radii."""
        n, m = self.n_matern, self.n_thinned
        lam = self.intensity
        k_g, k_t = self.cover_counts()
        q = 1.0 - self.thin_prob
        total = -lam * self.window.measure + (n + m) * np.log(lam)
        total += _log_pow(k_g, q).sum() + _log1m_pow(k_t, q).sum()
        if isinstance(self.kernel, Softcore):
            total += self.kernel.log_radius_density(self.radii).sum()
        return float(total)

    def copy(self):
        return replace(
            self,
            times=self.times.copy(),
            thinned_locs=self.thinned_locs.copy(),
            thinned_times=self.thinned_times.copy(),
            radii=None if self.radii is None else self.radii.copy(),
        )

    def describe(self):
        lines = [
            f"iteration={self.iteration} kernel={self.kernel} intensity={self.intensity}",
            f"n_matern={self.n_matern} n_thinned={self.n_thinned}",
        ]
        k_g, k_t = self.cover_counts()
        q = 1.0 - self.thin_prob
        bad_g = np.flatnonzero(~np.isfinite(_log_pow(k_g, q)))
        bad_t = np.flatnonzero(~np.isfinite(_log1m_pow(k_t, q)))
        lines.append(f"survivors inside a deterministic shadow: {bad_g.tolist()}")
        lines.append(f"thinned events outside every shadow: {bad_t.tolist()}")
        return "\n".join(lines)


def _log_pow(k, q):
    """``log(q ** k)`` with ``0 ** 0 == 1``."""
    k = np.asarray(k)
    if q == 0.0:
        return np.where(k > 0, -np.inf, 0.0)
    return k * np.log(q)


def _log1m_pow(k, q):
    """``log(1 - q ** k)``."""
    with np.errstate(divide="ignore"):
        return np.log1p(-np.power(q, k))


def _pick(logw, rng):
    top = np.max(logw)
    if not np.isfinite(top):
        raise InconsistentStateError("every candidate has zero probability")
    w = np.exp(logw - top)
    c = np.cumsum(w)
    return int(np.searchsorted(c, rng.random() * c[-1], side="right"))


def resample_thinned_events(state, rng):
    """Replace the thinned events by a fresh draw given the survivors.

    Given the survivors the thinned events form a Poisson process with
    intensity ``lambda * H``; it is drawn by keeping each event of a
    rate-``lambda`` proposal with probability ``H``.
    """
    proposal = sample_homogeneous(state.window, state.intensity, rng)
    u = rng.random(len(proposal))
    if state.n_matern == 0 or len(proposal) == 0:
        keep = np.zeros(len(proposal), dtype=bool)
    else:
        radii = state.event_radii()
        d = pairwise_distances(proposal.locs, state.locs)
        k = ((d < radii[None, :]) & (state.times[None, :] < proposal.times[:, None])).sum(axis=1)
        keep = u < 1.0 - (1.0 - state.thin_prob) ** k
    state.thinned_locs = proposal.locs[keep]
    state.thinned_times = proposal.times[keep]
    return state


def resample_birth_times(state, rng):
    """Single-site Gibbs update of every survivor's birth time, in index order.

    The birth times of events interacting with survivor ``g`` cut ``[0, 1]``
    into segments on which every affected label probability is constant.
    A segment is chosen with probability proportional to its length times
    those probabilities and the new time is uniform within it.
    """
    n = state.n_matern
    if n == 0:
        return state
    q = 1.0 - state.thin_prob
    radii = state.event_radii()
    t = state.times
    tt = state.thinned_times
    cover_gg = state.matern_distances < radii[None, :]  # [e, j]: j's disc holds e
    np.fill_diagonal(cover_gg, False)
    cover_tg = pairwise_distances(state.thinned_locs, state.locs) < radii[None, :]
    for g in range(n):
        aff_m = np.flatnonzero(cover_gg[:, g])
        aff_t = np.flatnonzero(cover_tg[:, g])
        own = np.flatnonzero(cover_gg[g, :])
        tg = t[g]
        # earlier coverers of each affected event other than g itself
        c_m = (cover_gg[aff_m] & (t[None, :] < t[aff_m, None])).sum(axis=1) - (tg < t[aff_m])
        c_t = (cover_tg[aff_t] & (t[None, :] < tt[aff_t, None])).sum(axis=1) - (tg < tt[aff_t])
        cuts = np.unique(np.concatenate(([0.0, 1.0], t[aff_m], tt[aff_t], t[own])))
        mids = 0.5 * (cuts[:-1] + cuts[1:])
        ll = np.log(np.diff(cuts))
        ll += _log_pow((t[own][None, :] < mids[:, None]).sum(axis=1), q)
        if len(aff_m):
            ll += _log_pow(c_m[None, :] + (mids[:, None] < t[aff_m][None, :]), q).sum(axis=1)
        if len(aff_t):
            ll += _log1m_pow(c_t[None, :] + (mids[:, None] < tt[aff_t][None, :]), q).sum(axis=1)
        seg = _pick(ll, rng)
        t[g] = cuts[seg] + rng.random() * (cuts[seg + 1] - cuts[seg])
    return state


def resample_intensity(state, prior, rng):
    """Conjugate Gamma update from the primary count and window x time volume."""
    shape, rate = prior.intensity_posterior(state.n_matern + state.n_thinned, state.window.measure)
    state.intensity = float(rng.gamma(shape, 1.0 / rate))
    return state


def hardcore_radius_bounds(state):
    """``(lo, hi)`` such that every radius in ``(lo, hi]`` keeps the labels valid.

    ``lo`` is the largest distance from a thinned event to its nearest
    earlier survivor, ``hi`` the smallest distance between two survivors.
    """
    t = state.times
    lo = 0.0
    if state.n_thinned:
        d = pairwise_distances(state.thinned_locs, state.locs)
        d = np.where(t[None, :] < state.thinned_times[:, None], d, np.inf)
        lo = float(d.min(axis=1).max()) if state.n_matern else np.inf
    hi = np.inf
    if state.n_matern > 1:
        d = state.matern_distances + np.diag(np.full(state.n_matern, np.inf))
        hi = float(d.min())
    return lo, hi


def resample_kernel_hardcore(state, prior, rng):
    """Radius from the prior truncated to :func:`hardcore_radius_bounds`."""
    lo, hi = hardcore_radius_bounds(state)
    if not lo < hi:
        raise InconsistentStateError(f"no radius separates the labels: lo={lo}, hi={hi}")
    R = sample_truncated(prior.radius_dist(state.window), lo, hi, rng)
    state.kernel = Hardcore(R)
    return state


def resample_kernel_softcore(state, prior, rng):
    """Update each survivor's radius, then the bounds of the radius law.

    A radius must exceed the distance to every thinned event that only this
    survivor covers and may not reach any later survivor. The bounds are
    then drawn one at a time from their bilateral-Pareto conditionals.
    """
    kernel = state.kernel
    n = state.n_matern
    t = state.times
    tt = state.thinned_times
    radii = state.radii
    d_gg = state.matern_distances
    d_tg = pairwise_distances(state.thinned_locs, state.locs)
    earlier_t = t[None, :] < tt[:, None]
    for g in range(n):
        cover_t = (d_tg < radii[None, :]) & earlier_t
        only_g = cover_t[:, g] & (cover_t.sum(axis=1) == 1)
        lo = max(kernel.r_lower, float(d_tg[only_g, g].max()) if only_g.any() else 0.0)
        later = t > t[g]
        hi = min(kernel.r_upper, float(d_gg[g, later].min()) if later.any() else np.inf)
        if not lo < hi:
            raise InconsistentStateError(f"empty radius interval for survivor {g}: ({lo}, {hi}]")
        radii[g] = lo + rng.random() * (hi - lo)
    if n:
        state.kernel = resample_softcore_bounds(radii, kernel, prior, state.window, rng)
    return state


def resample_softcore_bounds(radii, kernel, prior, window, rng):
    """Draw ``r_L`` then ``r_U`` from their bilateral-Pareto conditionals.

    With ``n`` radii uniform on ``[r_L, r_U]`` and prior density
    ``(r_U - r_L) ** -(alpha + 2)``, the width ``w = r_U - r_L`` has density
    ``w ** -(alpha + n + 2)`` on the range allowed by the other bound.
    """
    shape = prior.softcore_alpha + len(radii) + 2
    r_top = prior.softcore_upper_max or window.diameter
    lower_cap = min(radii.min(), prior.softcore_lower_ref or np.inf)
    upper_floor = max(radii.max(), prior.softcore_upper_ref or 0.0)
    r_upper = kernel.r_upper
    w = sample_truncated_pareto(shape, r_upper - lower_cap, r_upper, rng)
    r_lower = r_upper - w
    if r_top > upper_floor:
        w = sample_truncated_pareto(shape, upper_floor - r_lower, r_top - r_lower, rng)
        r_upper = r_lower + w
    return Softcore(float(r_lower), float(max(r_upper, r_lower)))


def _impute_attempts(k_thinned, p, rng):
    """Successes and failures among Bernoulli(p) attempts given at least one success."""
    k = np.asarray(k_thinned)
    if len(k) == 0:
        return 0, 0
    if np.any(k == 0) or p <= 0:
        raise InconsistentStateError("thinned event without a thinning opportunity")
    q = 1.0 - p
    u = rng.random(len(k))
    if q == 0.0:
        first = np.ones(len(k), dtype=int)
    else:
        # first success J has P(J <= j) = (1 - q**j) / (1 - q**k)
        first = np.ceil(np.log1p(-u * (1.0 - q**k)) / np.log(q)).astype(int)
        first = np.clip(first, 1, k)
    extra = rng.binomial(k - first, p)
    successes = int(np.sum(1 + extra))
    return successes, int(k.sum()) - successes


def radius_segments(state, p):
    """Piecewise-constant radius likelihood for the probabilistic kernel.

    Returns ``(cuts, loglik)``: segment ``i`` is ``(cuts[i], cuts[i + 1]]``
    (the last one unbounded) and ``loglik[i]`` the log probability of every
    label when the radius lies in it. Breakpoints are the distances from
    each primary event to each earlier survivor.
    """
    t = state.times
    q = 1.0 - p
    d_gg = state.matern_distances
    pairs_g = np.nonzero(t[None, :] < t[:, None])
    dist_g = d_gg[pairs_g]
    d_tg = pairwise_distances(state.thinned_locs, state.locs)
    pairs_t = np.nonzero(t[None, :] < state.thinned_times[:, None])
    dist_t = d_tg[pairs_t]
    # owner ids: survivors first, then thinned events offset by n
    owner = np.concatenate((pairs_g[0], state.n_matern + pairs_t[0]))
    dist = np.concatenate((dist_g, dist_t))
    is_thinned = np.concatenate((np.zeros(len(dist_g), bool), np.ones(len(dist_t), bool)))
    order = np.lexsort((dist, owner))
    owner_sorted = owner[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = owner_sorted[1:] != owner_sorted[:-1]
    idx = np.arange(len(order))
    starts = np.maximum.accumulate(np.where(first, idx, 0))
    rank = np.empty(len(order), dtype=int)
    rank[order] = idx - starts
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(
            is_thinned,
            _log1m_pow(rank + 1, q) - np.where(rank > 0, _log1m_pow(rank, q), 0.0),
            np.log(q) if q > 0 else -np.inf,
        )
    opens = is_thinned & (rank == 0)
    by_dist = np.argsort(dist, kind="stable")
    cuts = np.concatenate(([0.0], dist[by_dist], [np.inf]))
    loglik = np.concatenate(([0.0], np.cumsum(delta[by_dist])))
    n_open = np.concatenate(([0], np.cumsum(opens[by_dist])))
    loglik = np.where(n_open == state.n_thinned, loglik, -np.inf)
    return cuts, loglik


def resample_kernel_probabilistic(state, prior, rng):
    """Impute thinning attempts, update ``p`` from a Beta, then the radius.

    Survivors failed every attempt by an earlier in-range survivor; a
    thinned event's attempts are Bernoulli(p) conditioned on at least one
    success. The radius is drawn by choosing a segment of constant
    likelihood in proportion to its prior mass, then sampling the prior
    truncated to that segment.
    """
    p = state.kernel.p
    if prior.fixed_p is None:
        k_g, k_t = state.cover_counts()
        succ, fail = _impute_attempts(k_t, p, rng)
        fail += int(k_g.sum())
        p = float(rng.beta(prior.p_alpha + succ, prior.p_beta + fail))
    else:
        p = float(prior.fixed_p)
    cuts, loglik = radius_segments(state, p)
    dist = prior.radius_dist(state.window)
    logw = log_interval_mass(dist, cuts[:-1], cuts[1:]) + loglik
    seg = _pick(logw, rng)
    R = sample_truncated(dist, cuts[seg], cuts[seg + 1], rng)
    state.kernel = Probabilistic(p, R)
    return state


def resample_kernel(state, prior, rng):
    kernel = state.kernel
    if isinstance(kernel, Hardcore):
        return resample_kernel_hardcore(state, prior, rng)
    if isinstance(kernel, Softcore):
        return resample_kernel_softcore(state, prior, rng)
    return resample_kernel_probabilistic(state, prior, rng)


BLOCKS = ("thinned", "birth_times", "intensity", "kernel")


def gibbs_sweep(state, prior, rng, check=True):
    """One full sweep over the four blocks, in fixed order."""
    steps = (
        lambda: resample_thinned_events(state, rng),
        lambda: resample_birth_times(state, rng),
        lambda: resample_intensity(state, prior, rng),
        lambda: resample_kernel(state, prior, rng),
    )
    for name, step in zip(BLOCKS, steps):
        try:
            step()
        except InconsistentStateError as err:
            raise SamplerAbort(f"block {name!r} failed: {err}", state.describe()) from err
        if check and not np.isfinite(state.log_joint()):
            raise SamplerAbort(f"non-finite log joint after block {name!r}", state.describe())
    state.iteration += 1
    return state


def initial_state(locs, window, family, prior, rng):
    """Valid starting point for a chain on the observed survivors.

    Intensity ``n / |window|``; radius half the smallest survivor spacing;
    ``p = 0.5`` (or the fixed value); no thinned events; birth times i.i.d.
    uniform.
    """
    locs = as_locations(locs, window.dim)
    n = len(locs)
    d = pairwise_distances(locs, locs) + np.diag(np.full(n, np.inf))
    nearest = d.min(axis=1) if n > 1 else np.full(n, window.diameter)
    min_sep = float(nearest.min()) if n else window.diameter
    R = 0.5 * min_sep if np.isfinite(min_sep) and min_sep > 0 else 0.5 * window.diameter
    radii = None
    if family == "hardcore":
        kernel = Hardcore(R)
    elif family == "probabilistic":
        kernel = Probabilistic(prior.fixed_p if prior.fixed_p is not None else 0.5, R)
    elif family == "softcore":
        radii = 0.5 * nearest
        kernel = Softcore(float(0.5 * radii.min()), float(radii.max() * 1.5))
    else:
        raise ValueError(f"unknown model family {family!r}")
    times = rng.random(n)
    while n > 1 and len(np.unique(times)) < n:
        times = rng.random(n)
    state = ChainState(window, kernel, max(n, 1) / window.measure, locs, times, radii=radii)
    if not np.isfinite(state.log_joint()):
        raise SamplerAbort("initial state is inconsistent", state.describe())
    return state


def trace_row(state):
    row = {"lambda": state.intensity}
    kernel = state.kernel
    if isinstance(kernel, Softcore):
        row["R"] = float(np.mean(state.radii)) if state.n_matern else np.nan
        row["r_L"] = kernel.r_lower
        row["r_U"] = kernel.r_upper
    else:
        row["R"] = kernel.R
        if isinstance(kernel, Probabilistic):
            row["p"] = kernel.p
    row["n_thinned"] = state.n_thinned
    row["log_joint"] = state.log_joint()
    return row


def run_chain(observed, window, family, prior=None, iters=1000, burn_in=0, seed=0,
              record_times=False, check=True, state=None):
    """Run the Gibbs sampler and return the post-burn-in :class:`Trace`.

    ``iters`` counts every sweep including burn-in, so ``iters - burn_in``
    rows are recorded.
    """
    if not 0 <= burn_in <= iters:
        raise ValueError("need 0 <= burn_in <= iters")
    prior = prior or PriorSpec()
    observed = as_locations(observed, window.dim)
    if len(observed) < 1:
        raise ValueError("need at least one observed event")
    rng = make_rng(seed)
    if state is None:
        state = initial_state(observed, window, family, prior, rng)
    trace = Trace()
    for it in range(iters):
        gibbs_sweep(state, prior, rng, check=check)
        if it >= burn_in:
            trace.append(iter=it, **trace_row(state))
            if record_times:
                trace.birth_times.append(state.times.copy())
    trace.final_state = state
    log.debug("finished %d sweeps, %d recorded", iters, len(trace))
    return trace
