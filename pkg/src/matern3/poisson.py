"""Homogeneous Poisson processes on window x [0, 1] and their thinnings."""

from dataclasses import dataclass

import numpy as np

from .geometry import as_locations, sort_by_birth

__all__ = [
    "MAX_EVENTS",
    "RunawayIntensityError",
    "PoissonSample",
    "make_rng",
    "sample_homogeneous",
    "thin_by_probability",
    "log_density_poisson",
    "resample_removed",
]

MAX_EVENTS = 10_000_000


class RunawayIntensityError(RuntimeError):
    """A Poisson draw exceeded :data:`MAX_EVENTS`."""


def make_rng(seed, *stream):
    """Reproducible generator for ``seed`` and an optional substream path.

    ``make_rng(seed, chain_id, replicate_id)`` gives statistically
    independent streams for distinct paths.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


@dataclass
class PoissonSample:
    """Events of a Poisson process on ``window x [0, 1]``, ordered by birth time."""

    window: object
    rate: float
    locs: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        self.locs = as_locations(self.locs, self.window.dim)
        self.times = np.asarray(self.times, dtype=float)
        if len(self.locs) != len(self.times):
            raise ValueError("locs and times differ in length")
        if len(self.times) and np.any(np.diff(self.times) < 0):
            self.locs, self.times = sort_by_birth(self.locs, self.times)

    def __len__(self):
        return len(self.times)

    def subset(self, mask):
        return PoissonSample(self.window, self.rate, self.locs[mask], self.times[mask])


def _draw_count(mean, rng):
    if not np.isfinite(mean) or mean > MAX_EVENTS:
        raise RunawayIntensityError(f"expected event count {mean:.3g} exceeds guard")
    n = int(rng.poisson(mean))
    if n > MAX_EVENTS:
        raise RunawayIntensityError(f"drew {n} events, guard is {MAX_EVENTS}")
    return n


def sample_homogeneous(window, rate, rng):
    """Rate-``rate`` Poisson process on ``window x [0, 1]``."""
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    n = _draw_count(rate * window.measure, rng)
    locs = window.sample_uniform(n, rng)
    times = rng.random(n)
    order = np.argsort(times)
    return PoissonSample(window, float(rate), locs[order], times[order])


def _probabilities(keep_prob, sample):
    probs = np.broadcast_to(
        np.asarray(keep_prob(sample.locs, sample.times) if callable(keep_prob) else keep_prob, float),
        (len(sample),),
    )
    if np.any(~((probs >= 0) & (probs <= 1))):
        raise ValueError("keep probabilities must lie in [0, 1]")
    return probs


def thin_by_probability(sample, keep_prob, rng):
    """Split ``sample`` by independent coin flips.

    ``keep_prob`` is a constant or a callable ``(locs, times) -> probs``.
    Returns ``(kept, removed)``; kept is Poisson with intensity
    ``rate * keep_prob`` and removed with ``rate * (1 - keep_prob)``.
    """
    probs = _probabilities(keep_prob, sample)
    keep = rng.random(len(sample)) < probs
    return sample.subset(keep), sample.subset(~keep)


def log_density_poisson(locs, intensity, total_mass, times=None):
    """Log Janossy density ``-Lambda + sum(log lambda(s_j))``.

    ``intensity`` is a positive constant or a callable evaluated at the
    events (``intensity(locs)`` or ``intensity(locs, times)`` when times are
    given). ``total_mass`` is the integrated intensity.
    """
    locs = np.asarray(locs, dtype=float)
    n = len(locs)
    if n == 0:
        return -float(total_mass)
    if callable(intensity):
        vals = intensity(locs) if times is None else intensity(locs, times)
    else:
        vals = intensity
    vals = np.broadcast_to(np.asarray(vals, float), (n,))
    if np.any(~(vals > 0)):
        raise ValueError("intensity must be positive at every event")
    return float(-total_mass + np.sum(np.log(vals)))


def resample_removed(kept, rate_bound, keep_prob, rng):
    """Fresh draw of the events removed by thinning, given the kept ones.

    The removed set is Poisson with intensity ``rate_bound * (1 - keep_prob)``
    and independent of ``kept``, which is therefore only used for its window.
    """
    proposal = sample_homogeneous(kept.window, rate_bound, rng)
    probs = _probabilities(keep_prob, proposal)
    removed = rng.random(len(proposal)) >= probs
    return proposal.subset(removed)
