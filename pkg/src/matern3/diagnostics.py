"""Summary statistics, MCMC effective sample size and predictive envelopes."""

from dataclasses import dataclass

import numpy as np

from .geometry import as_locations
from .gp import GpSpec
from .kernels import Hardcore, Probabilistic, Softcore
from .matern import simulate_matern
from .nonstat import simulate_nonstat_matern
from .poisson import make_rng

__all__ = [
    "LFunctionEstimate",
    "PredictiveEnvelope",
    "default_radii",
    "l_function",
    "l_function_inhom",
    "fano_factor",
    "effective_sample_size",
    "kernel_from_row",
    "homogeneous_simulator",
    "nonstat_simulator",
    "posterior_predictive_envelope",
    "LStatistic",
    "InhomLStatistic",
    "FanoStatistic",
    "make_statistic",
]


@dataclass
class LFunctionEstimate:
    """``L(r) - r`` on an increasing radius grid."""

    radii: np.ndarray
    values: np.ndarray
    correction: str = "translation"

    def __post_init__(self):
        self.radii = np.asarray(self.radii, float)
        self.values = np.asarray(self.values, float)
        if not (self.radii[0] > 0 and np.all(np.diff(self.radii) > 0)):
            raise ValueError("radius grid must be strictly increasing and start above 0")


@dataclass
class PredictiveEnvelope:
    """Pointwise mean and 50% / 95% bands of a statistic over replicates."""

    radii: np.ndarray
    mean: np.ndarray
    q025: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    q975: np.ndarray
    n_replicates: int

    def contains(self, values, outer=True):
        lo, hi = (self.q025, self.q975) if outer else (self.q25, self.q75)
        return (np.asarray(values) >= lo) & (np.asarray(values) <= hi)

    def to_csv(self, path, empirical=None):
        empirical = np.full(len(self.radii), np.nan) if empirical is None else empirical
        table = np.column_stack([self.radii, empirical, self.mean, self.q025, self.q25, self.q75, self.q975])
        np.savetxt(path, table, delimiter=",", header="r,empirical,mean,q025,q25,q75,q975",
                   comments="", fmt="%.10g")


def default_radii(window, n=50):
    """``n`` radii up to a quarter of the shortest window side, excluding 0."""
    return np.linspace(0.0, 0.25 * float(np.min(window.sides)), n + 1)[1:]


def _pattern_locs(pattern, window):
    return as_locations(getattr(pattern, "locs", pattern), window.dim)


def _translation_pairs(locs, window):
    """Distances and translation edge weights ``|W| / |W cap (W + x_i - x_j)|`` for ordered pairs."""
    diff = locs[:, None, :] - locs[None, :, :]
    off = ~np.eye(len(locs), dtype=bool)
    diff = diff[off]
    overlap = np.prod(window.sides[None, :] - np.abs(diff), axis=1)
    dist = np.sqrt(np.sum(diff**2, axis=1))
    with np.errstate(divide="ignore"):
        weight = np.where(overlap > 0, window.measure / overlap, 0.0)
    return dist, weight, off


def _k_to_l(k, radii, dim):
    ell = np.sqrt(k / np.pi) if dim == 2 else k / 2.0
    return ell - radii


def _cumulative(dist, weight, radii):
    order = np.argsort(dist)
    csum = np.concatenate(([0.0], np.cumsum(weight[order])))
    return csum[np.searchsorted(dist[order], radii, side="right")]


def l_function(pattern, window, radii=None):
    """Translation-corrected estimate of ``L(r) - r``.

    ``K(r) = |W| / (n (n - 1)) * sum_{i != j} 1{d_ij <= r} e_ij``, then
    ``L = sqrt(K / pi)`` in the plane and ``L = K / 2`` on a line.
    """
    locs = _pattern_locs(pattern, window)
    n = len(locs)
    if n < 2:
        raise ValueError("L-function needs at least 2 points")
    radii = default_radii(window) if radii is None else np.asarray(radii, float)
    dist, weight, _ = _translation_pairs(locs, window)
    k = window.measure / (n * (n - 1)) * _cumulative(dist, weight, radii)
    return LFunctionEstimate(radii, _k_to_l(k, radii, window.dim))


def l_function_inhom(pattern, window, radii, intensity_at, renormalise=True):
    """Inhomogeneous ``L(r) - r`` with pair weights ``e_ij / (lambda_i lambda_j)``.

    ``K(r) = (1 / |W|) * sum_{i != j} 1{d_ij <= r} e_ij / (lambda_i lambda_j)``.
    With ``renormalise`` the intensities are rescaled by a common factor so
    that ``sum_{i != j} 1 / (lambda_i lambda_j) = |W|^2``, which makes any
    constant intensity reproduce :func:`l_function` exactly.
    """
    locs = _pattern_locs(pattern, window)
    n = len(locs)
    if n < 2:
        raise ValueError("L-function needs at least 2 points")
    radii = default_radii(window) if radii is None else np.asarray(radii, float)
    lam = np.asarray(intensity_at(locs), float).reshape(-1)
    if len(lam) != n or not np.all(lam > 0):
        raise ValueError("intensity must be positive at every event")
    dist, weight, off = _translation_pairs(locs, window)
    inv = 1.0 / np.outer(lam, lam)[off]
    if renormalise:
        inv *= window.measure**2 / inv.sum()
    k = _cumulative(dist, weight * inv, radii) / window.measure
    return LFunctionEstimate(radii, _k_to_l(k, radii, window.dim))


def quadrat_counts(pattern, window, grid=5):
    locs = _pattern_locs(pattern, window)
    cells = np.floor((locs - window.lo) / window.sides * grid).astype(int)
    cells = np.clip(cells, 0, grid - 1)
    flat = np.ravel_multi_index(tuple(cells.T), (grid,) * window.dim)
    return np.bincount(flat, minlength=grid**window.dim)


def fano_factor(pattern, window, grid=5, ratio="sd"):
    """Dispersion of counts in a ``grid``-per-axis quadrat partition.

    ``ratio="sd"`` gives the sample standard deviation over the mean;
    ``ratio="variance"`` gives the sample variance over the mean, which is
    1 in expectation for a Poisson process.
    """
    locs = _pattern_locs(pattern, window)
    if len(locs) == 0:
        raise ValueError("Fano factor of an empty pattern is undefined")
    counts = quadrat_counts(locs, window, grid)
    if ratio == "sd":
        return float(np.std(counts, ddof=1) / np.mean(counts))
    if ratio == "variance":
        return float(np.var(counts, ddof=1) / np.mean(counts))
    raise ValueError(f"ratio must be 'sd' or 'variance', got {ratio!r}")


def _autocorrelation(x):
    n = len(x)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x - x.mean(), size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov / acov[0]


def effective_sample_size(samples):
    """ESS with Geyer's initial monotone sequence estimator, capped at ``n``."""
    x = np.asarray(samples, float).reshape(-1)
    n = len(x)
    if n < 100:
        raise ValueError("effective sample size needs at least 100 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    if np.ptp(x) == 0:
        return float(n)
    rho = _autocorrelation(x)
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    positive = np.flatnonzero(pairs <= 0)
    m = positive[0] if len(positive) else len(pairs)
    pairs = np.minimum.accumulate(pairs[:m])
    tau = -1.0 + 2.0 * pairs.sum()
    return float(min(n, n / tau)) if tau > 0 else float(n)


def kernel_from_row(row, family):
    if family == "hardcore":
        return Hardcore(row["R"])
    if family == "softcore":
        return Softcore(row["r_L"], row["r_U"])
    if family in ("probabilistic", "nonstat-probabilistic"):
        return Probabilistic(row["p"], row["R"])
    raise ValueError(f"unknown model family {family!r}")


def homogeneous_simulator(window, family):
    """Replicate simulator drawing a Matérn pattern at a trace row's parameters."""
    def simulate(row, rng):
        matern, _ = simulate_matern(window, row["lambda"], kernel_from_row(row, family), rng)
        return matern.locs
    return simulate


def nonstat_simulator(window, family="nonstat-probabilistic", gp=None):
    """Replicate simulator for nonstationary rows; the GP is redrawn from its prior."""
    base = gp or GpSpec()

    def simulate(row, rng):
        names = sorted(k for k in row if k.startswith("gp_lengthscale"))
        spec = base.with_hypers(row["gp_variance"], tuple(row[k] for k in names))
        sample = simulate_nonstat_matern(window, row["lambda_hat"], spec, kernel_from_row(row, family), rng)
        return sample.matern.locs
    return simulate


def posterior_predictive_envelope(trace, simulator, statistic, replicates=1, seed=0):
    """Pointwise envelope of ``statistic(locs)`` over posterior-predictive replicates.

    Replicate ``j`` of row ``i`` uses the random stream ``(*seed, i, j)``,
    so results do not depend on evaluation order; ``seed`` is an integer or
    a tuple of integers. ``statistic`` returns a
    vector (or scalar); replicates where it is undefined are skipped.
    """
    rows = list(trace.rows()) if hasattr(trace, "rows") else list(trace)
    if not rows:
        raise ValueError("empty trace")
    seed = tuple(np.atleast_1d(seed).tolist())
    values = []
    for i, row in enumerate(rows):
        for j in range(replicates):
            locs = simulator(row, make_rng(*seed, i, j))
            try:
                values.append(np.atleast_1d(statistic(locs)))
            except ValueError:
                continue
    if not values:
        raise ValueError("statistic undefined for every replicate")
    values = np.vstack(values)
    q = np.quantile(values, [0.025, 0.25, 0.75, 0.975], axis=0)
    radii = getattr(statistic, "radii", np.arange(values.shape[1], dtype=float))
    return PredictiveEnvelope(np.asarray(radii, float), values.mean(axis=0), q[0], q[1], q[2], q[3], len(values))


class LStatistic:
    """``L(r) - r`` values as a callable for envelopes."""

    def __init__(self, window, radii=None):
        self.window = window
        self.radii = default_radii(window) if radii is None else np.asarray(radii, float)

    def __call__(self, locs):
        return l_function(locs, self.window, self.radii).values


class InhomLStatistic(LStatistic):
    def __init__(self, window, intensity_at, radii=None):
        super().__init__(window, radii)
        self.intensity_at = intensity_at

    def __call__(self, locs):
        return l_function_inhom(locs, self.window, self.radii, self.intensity_at).values


class FanoStatistic:
    radii = np.zeros(1)

    def __init__(self, window, grid=5):
        self.window = window
        self.grid = grid

    def __call__(self, locs):
        return fano_factor(locs, self.window, self.grid)


def make_statistic(name, window, radii=None, grid=5, intensity_at=None):
    if name == "L":
        return LStatistic(window, radii)
    if name == "L_inhom":
        if intensity_at is None:
            raise ValueError("L_inhom needs an intensity function")
        return InhomLStatistic(window, intensity_at, radii)
    if name == "Fano":
        return FanoStatistic(window, grid)
    raise ValueError(f"unknown statistic {name!r}; expected L, L_inhom or Fano")

