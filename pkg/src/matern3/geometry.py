"""Observation windows, distances and birth-time ordering."""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Window",
    "SiteWindow",
    "BirthTimeTieError",
    "as_locations",
    "distance",
    "pairwise_distances",
    "sort_by_birth",
]


class BirthTimeTieError(ValueError):
    """Two events of one augmented sequence share a birth time."""


def as_locations(locs, dim=None):
    """Coerce ``locs`` to a float array of shape ``(n, dim)``."""
    arr = np.asarray(locs, dtype=float)
    if arr.ndim == 1:
        # a flat vector is a sequence of 1-d points unless dim says otherwise
        arr = arr.reshape(-1, dim or 1)
    if arr.ndim != 2:
        raise ValueError(f"locations must be 2-d, got shape {arr.shape}")
    if arr.shape[0] == 0 and dim is not None:
        arr = arr.reshape(0, dim)
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"expected {dim}-d locations, got {arr.shape[1]}-d")
    return arr


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle (an interval when ``dim == 1``).

    ``measure`` is the length or area of the window; the birth-time axis
    is always ``[0, 1]`` so ``measure`` is also the volume of window x time.
    """

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size not in (1, 2):
            raise ValueError("window corners must be matching vectors of length 1 or 2")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("window corners must be finite")
        if not np.all(hi > lo):
            raise ValueError(f"upper corner {hi} must exceed lower corner {lo}")
        object.__setattr__(self, "lower", tuple(lo.tolist()))
        object.__setattr__(self, "upper", tuple(hi.tolist()))

    @classmethod
    def square(cls, side, dim=2):
        return cls((0.0,) * dim, (float(side),) * dim)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def lo(self):
        return np.array(self.lower)

    @property
    def hi(self):
        return np.array(self.upper)

    @property
    def sides(self):
        return self.hi - self.lo

    @property
    def measure(self):
        return float(np.prod(self.sides))

    @property
    def diameter(self):
        return float(np.sqrt(np.sum(self.sides**2)))

    def contains(self, locs):
        """Boolean mask of locations inside the closed window."""
        locs = as_locations(locs, self.dim)
        return np.all((locs >= self.lo) & (locs <= self.hi), axis=1)

    def sample_uniform(self, n, rng):
        return self.lo + rng.random((n, self.dim)) * self.sides

    def shifted(self, offset):
        offset = np.asarray(offset, dtype=float)
        return Window(tuple(self.lo + offset), tuple(self.hi + offset))


@dataclass(frozen=True)
class SiteWindow:
    """A finite set of sites carrying positive masses.

    Stands in for a window whose measure is concentrated on a few points.
    Used to check densities by exhaustive enumeration: every event sits on
    one of the sites, so configurations are countable.
    """

    sites: np.ndarray
    masses: np.ndarray = field(default=None)

    def __post_init__(self):
        sites = as_locations(self.sites)
        masses = np.ones(len(sites)) if self.masses is None else np.asarray(self.masses, float)
        if len(sites) == 0 or masses.shape != (len(sites),):
            raise ValueError("need at least one site and one mass per site")
        if np.any(masses <= 0) or not np.all(np.isfinite(masses)):
            raise ValueError("site masses must be positive and finite")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "masses", masses)

    @property
    def dim(self):
        return self.sites.shape[1]

    @property
    def measure(self):
        return float(self.masses.sum())

    @property
    def diameter(self):
        return float(np.ptp(self.sites, axis=0).max()) if len(self.sites) > 1 else 0.0

    def contains(self, locs):
        locs = as_locations(locs, self.dim)
        d = pairwise_distances(locs, self.sites)
        return np.any(d == 0.0, axis=1)

    def sample_uniform(self, n, rng):
        idx = rng.choice(len(self.sites), size=n, p=self.masses / self.masses.sum())
        return self.sites[idx].copy()

    def site_index(self, locs):
        """Index of the site each location coincides with."""
        d = pairwise_distances(as_locations(locs, self.dim), self.sites)
        idx = np.argmin(d, axis=1)
        if len(idx) and np.any(d[np.arange(len(idx)), idx] != 0.0):
            raise ValueError("location does not coincide with a site")
        return idx


def distance(a, b):
    """Euclidean distance between two locations."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    # hypot rescales, so tiny differences do not underflow to zero
    return math.hypot(*(a - b))


def pairwise_distances(x, y):
    """Distance matrix between the rows of ``x`` and ``y``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] == 0 or y.shape[0] == 0:
        return np.zeros((x.shape[0], y.shape[0]))
    diff = x[:, None, :] - y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def check_distinct_times(times):
    t = np.sort(np.asarray(times, dtype=float))
    if t.size > 1 and np.any(np.diff(t) == 0.0):
        raise BirthTimeTieError("birth times must be distinct")


def sort_by_birth(locs, times, *extra):
    """Order events by increasing birth time.

    Returns the reordered ``locs``, ``times`` and any extra per-event arrays
    (``None`` entries pass through). Raises :class:`BirthTimeTieError` on
    duplicate times.
    """
    times = np.asarray(times, dtype=float)
    if np.any((times < 0) | (times > 1)):
        raise ValueError("birth times must lie in [0, 1]")
    check_distinct_times(times)
    order = np.argsort(times, kind="stable")
    out = [np.asarray(locs)[order], times[order]]
    out.extend(None if e is None else np.asarray(e)[order] for e in extra)
    return tuple(out)
