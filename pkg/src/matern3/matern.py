"""Shadows, forward simulation and densities of Matérn type-III processes."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import SiteWindow, as_locations, pairwise_distances, sort_by_birth
from .kernels import Softcore, event_radii
from .poisson import sample_homogeneous

__all__ = [
    "AugmentedPattern",
    "shadow_at",
    "shadow_volume",
    "simulate_matern",
    "log_density_matern",
    "log_joint",
]


@dataclass
class AugmentedPattern:
    """Events with birth times (and radii for softcore), ordered by time."""

    locs: np.ndarray
    times: np.ndarray
    radii: np.ndarray = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        locs = as_locations(self.locs)
        if len(locs) != len(times):
            raise ValueError("locs and times differ in length")
        radii = None if self.radii is None else np.asarray(self.radii, float).reshape(-1)
        if radii is not None and len(radii) != len(times):
            raise ValueError("one radius per event required")
        self.locs, self.times, self.radii = sort_by_birth(locs, times, radii)

    @classmethod
    def empty(cls, dim, with_radii=False):
        return cls(np.zeros((0, dim)), np.zeros(0), np.zeros(0) if with_radii else None)

    def __len__(self):
        return len(self.times)

    @property
    def dim(self):
        return self.locs.shape[1]


def _covering(query_locs, query_times, pattern, radii):
    """Mask[i, j]: pattern event j is earlier than query i and within its radius."""
    d = pairwise_distances(query_locs, pattern.locs)
    return (d < radii[None, :]) & (pattern.times[None, :] < query_times[:, None])


def _shadow_from_counts(counts, p):
    # survival probability (1 - p) ** k; numpy gives 0.0 ** 0 == 1.0
    return 1.0 - (1.0 - p) ** counts


def shadow_at(locs, times, pattern, kernel):
    """Thinning probability of space-time queries under ``pattern``.

    ``H = 1 - prod(1 - p)`` over pattern events born strictly earlier than
    the query and within their interaction radius of it. Scalar time with a
    single location returns a float.
    """
    scalar = np.ndim(times) == 0
    times = np.atleast_1d(np.asarray(times, dtype=float))
    locs = as_locations(locs, pattern.dim)
    if len(pattern) == 0:
        out = np.zeros(len(times))
    else:
        radii = event_radii(kernel, len(pattern), pattern.radii)
        counts = _covering(locs, times, pattern, radii).sum(axis=1)
        out = _shadow_from_counts(counts, kernel.thin_prob)
    return float(out[0]) if scalar else out


def _time_integrated_shadow(within, times, p):
    """Integral over t in [0, 1] of H(s, t) for each query row.

    ``within[i, j]`` says whether query ``i`` lies inside the radius of
    pattern event ``j``; ``times`` must be sorted. Between consecutive birth
    times the shadow is constant, so the integral is an exact finite sum.
    """
    survive = np.cumprod(1.0 - p * within, axis=1)
    widths = np.diff(np.append(times, 1.0))
    return (1.0 - survive) @ widths


def _disjoint_inside(pattern, radii, window):
    lo, hi = window.lo, window.hi
    if np.any(pattern.locs - radii[:, None] < lo) or np.any(pattern.locs + radii[:, None] > hi):
        return False
    d = pairwise_distances(pattern.locs, pattern.locs)
    np.fill_diagonal(d, np.inf)
    return bool(np.all(d >= radii[:, None] + radii[None, :]))


def _line_integral(centres, half_widths, times, p, lo, hi):
    """Integral over [lo, hi] x [0, 1] of H along a line; exact.

    Events cover ``|x - centre| < half_width`` on the line, so the
    time-integrated shadow is piecewise constant between interval ends.
    """
    cuts = np.unique(np.clip(np.concatenate([[lo, hi], centres - half_widths, centres + half_widths]), lo, hi))
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    within = np.abs(mids[:, None] - centres[None, :]) < half_widths[None, :]
    return float(_time_integrated_shadow(within, times, p) @ np.diff(cuts))


def _volume_1d(pattern, radii, p, window):
    return _line_integral(pattern.locs[:, 0], radii, pattern.times, p, window.lower[0], window.upper[0])


def _volume_planar(pattern, radii, p, window, tol, max_nodes=256):
    # Each horizontal line is integrated exactly. In y the integrand is
    # smooth between disc tops and bottoms apart from kinks where circles
    # cross; a sine substitution removes the square-root end behaviour and
    # the Gauss-Legendre order is doubled until the total settles.
    (x_lo, y_lo), (x_hi, y_hi) = window.lower, window.upper
    x, y = pattern.locs[:, 0], pattern.locs[:, 1]
    breaks = np.unique(np.clip(np.concatenate([[y_lo, y_hi], y - radii, y + radii]), y_lo, y_hi))

    def row(level):
        dy = level - y
        hit = np.abs(dy) < radii
        if not hit.any():
            return 0.0
        half = np.sqrt(radii[hit] ** 2 - dy[hit] ** 2)
        return _line_integral(x[hit], half, pattern.times[hit], p, x_lo, x_hi)

    def total(n_nodes):
        u, w = np.polynomial.legendre.leggauss(n_nodes)
        theta = 0.5 * np.pi * u
        out = 0.0
        for a, b in zip(breaks[:-1], breaks[1:]):
            mid, half_len = 0.5 * (a + b), 0.5 * (b - a)
            levels = mid + half_len * np.sin(theta)
            weights = w * half_len * 0.5 * np.pi * np.cos(theta)
            out += sum(wk * row(yk) for yk, wk in zip(levels, weights))
        return out

    n_nodes = 4
    previous = total(n_nodes)
    while n_nodes < max_nodes:
        n_nodes *= 2
        estimate = total(n_nodes)
        if abs(estimate - previous) < tol:
            return float(estimate)
        previous = estimate
    return float(previous)


def shadow_volume(pattern, kernel, window, tol=None):
    """Volume of the shadow, the integral of H over window x [0, 1].

    Exact for site windows, for intervals, and for planar patterns whose
    interaction discs are disjoint and inside the window. Other planar
    patterns are integrated exactly along horizontal lines and by quadrature
    across them, refined until successive estimates differ by less than
    ``tol`` (default ``1e-6`` times the window measure).
    """
    if tol is None:
        tol = 1e-6 * window.measure
    if not tol > 0:
        raise ValueError("tol must be positive")
    if len(pattern) == 0:
        return 0.0
    radii = event_radii(kernel, len(pattern), pattern.radii)
    p = kernel.thin_prob
    if isinstance(window, SiteWindow):
        within = pairwise_distances(window.sites, pattern.locs) < radii[None, :]
        return float(window.masses @ _time_integrated_shadow(within, pattern.times, p))
    if window.dim == 1:
        return _volume_1d(pattern, radii, p, window)
    if _disjoint_inside(pattern, radii, window):
        return float(np.sum((1.0 - pattern.times) * p * np.pi * radii**2))
    return _volume_planar(pattern, radii, p, window, tol)


def _earlier_neighbours(locs, reach):
    """Pairs (i, j), i < j, with ``|s_i - s_j| < reach[i]``, grouped by j."""
    n = len(locs)
    if n < 2:
        return np.zeros(n + 1, dtype=int), np.zeros(0, dtype=int)
    tree = cKDTree(locs)
    pairs = tree.query_pairs(float(reach.max()), output_type="ndarray")
    if len(pairs):
        i, j = pairs.min(axis=1), pairs.max(axis=1)
        d = np.sqrt(np.sum((locs[i] - locs[j]) ** 2, axis=1))
        ok = d < reach[i]
        i, j = i[ok], j[ok]
        order = np.lexsort((i, j))
        i, j = i[order], j[order]
    else:
        i = j = np.zeros(0, dtype=int)
    starts = np.searchsorted(j, np.arange(n + 1))
    return starts, i


def _thin_in_birth_order(locs, reach, p, u):
    """Survivor mask of a time-ordered primary sample.

    Event j survives when ``u[j] < (1 - p) ** k`` with ``k`` the number of
    earlier survivors whose reach covers it.
    """
    starts, nbrs = _earlier_neighbours(locs, reach)
    starts, nbrs, u = starts.tolist(), nbrs.tolist(), u.tolist()
    alive = [False] * len(u)
    q = 1.0 - p
    for j in range(len(u)):
        k = 0
        for i in nbrs[starts[j]:starts[j + 1]]:
            k += alive[i]
        alive[j] = u[j] < q**k
    return np.array(alive, dtype=bool)


def thin_primary(locs, kernel, rng):
    """Type-III thinning of a primary sample already sorted by birth time.

    Returns the survivor mask and, for softcore kernels, the radius drawn
    for every primary event (``None`` otherwise).
    """
    n = len(locs)
    radii = None
    if isinstance(kernel, Softcore):
        radii = rng.uniform(kernel.r_lower, kernel.r_upper, n)
        reach = radii
    else:
        reach = np.full(n, float(kernel.R))
    u = rng.random(n)
    return _thin_in_birth_order(locs, reach, kernel.thin_prob, u), radii


def simulate_matern(window, rate, kernel, rng):
    """Forward simulation of a generalized Matérn type-III process.

    Returns ``(matern, thinned)`` augmented patterns whose union is the
    primary Poisson sample. Softcore radii are drawn for every primary event
    and kept only on survivors.
    """
    primary = sample_homogeneous(window, rate, rng)
    alive, radii = thin_primary(primary.locs, kernel, rng)
    matern = AugmentedPattern(
        primary.locs[alive], primary.times[alive], None if radii is None else radii[alive]
    )
    thinned = AugmentedPattern(primary.locs[~alive], primary.times[~alive])
    return matern, thinned


def _self_shadow(pattern, kernel):
    """H at each pattern event due to the earlier events of the same pattern."""
    if len(pattern) == 0:
        return np.zeros(0)
    return shadow_at(pattern.locs, pattern.times, pattern, kernel)


def _radius_term(pattern, kernel):
    if isinstance(kernel, Softcore):
        return float(np.sum(kernel.log_radius_density(pattern.radii)))
    return 0.0


def log_density_matern(pattern, rate, kernel, window, tol=None):
    """Log density of an augmented Matérn pattern.

    ``-rate * (|window| - shadow_volume) + n log(rate) + sum log(1 - H(g))``,
    plus the radius density of each event for softcore patterns. Returns
    ``-inf`` as soon as an event sits in a deterministic shadow.
    """
    if tol is not None and not tol > 0:
        raise ValueError("tol must be positive")
    with np.errstate(divide="ignore"):
        own = np.sum(np.log1p(-_self_shadow(pattern, kernel)))
    own += _radius_term(pattern, kernel)
    if own == -np.inf:
        return -np.inf
    free = window.measure - shadow_volume(pattern, kernel, window, tol)
    return float(-rate * free + len(pattern) * np.log(rate) + own)


def log_joint(matern, thinned, rate, kernel, window):
    """Log joint density of survivors and thinned events.

    Poisson density of the union times the label probabilities: ``H`` at
    each thinned event, ``1 - H`` at each survivor.
    """
    n = len(matern) + len(thinned)
    base = -rate * window.measure + n * np.log(rate)
    with np.errstate(divide="ignore"):
        keep = np.sum(np.log1p(-_self_shadow(matern, kernel)))
        if len(thinned):
            hit = np.sum(np.log(shadow_at(thinned.locs, thinned.times, matern, kernel)))
        else:
            hit = 0.0
    return float(base + keep + hit + _radius_term(matern, kernel))
