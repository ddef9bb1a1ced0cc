"""End-to-end acceptance criteria, one test each.

Every test prints a ``criterion N: PASS|FAIL`` line (collected again in the
terminal summary). Criteria that need external data look for it in an
environment variable or under ``tests/data``; without it they report FAIL
and are marked as expected failures, since the data cannot be shipped.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from matern3.diagnostics import (
    LStatistic,
    effective_sample_size,
    homogeneous_simulator,
    l_function,
    posterior_predictive_envelope,
)
from matern3.geometry import SiteWindow, Window
from matern3.gibbs import ChainState, gibbs_sweep, resample_intensity, resample_thinned_events, run_chain
from matern3.gp import GpSpec, elliptical_slice, factorize
from matern3.io import load_pattern
from matern3.kernels import Hardcore, Probabilistic
from matern3.matern import shadow_volume, simulate_matern
from matern3.nonstat import nonstat_sweep, run_chain_nonstat, simulate_nonstat_matern
from matern3.poisson import make_rng
from matern3.priors import PriorSpec
from oracles import (
    configuration_probabilities,
    forward_frequencies,
    geweke_z,
    nonstat_state_from_simulation,
    state_from_simulation,
)

pytestmark = pytest.mark.acceptance

DATA_DIR = Path(__file__).parent / "data"
PINES_ENV, PINES_FILE = "MATERN3_SWEDISH_PINES", "swedishpines.csv"
GREYHOUND_ENV, GREYHOUND_FILE = "MATERN3_GREYHOUND", "greyhound.csv"


def _optional_data(env, filename):
    path = os.environ.get(env) or DATA_DIR / filename
    return Path(path) if Path(path).exists() else None


def _swedish_pines():
    """The 71-tree pattern on a 10 x 10 window (rescaled when given in decimetres)."""
    path = _optional_data(PINES_ENV, PINES_FILE)
    if path is None:
        return None
    locs, window = load_pattern(path)
    scale = 10.0 / max(window.sides)
    lower = np.asarray(window.lower)
    return (locs - lower) * scale, Window((0.0, 0.0), tuple(window.sides * scale))


def test_criterion_1_conjugate_intensity(report):
    start = time.perf_counter()
    rng = make_rng(101)
    window = Window.square(10)
    n, m = 71, 9
    state = ChainState(window, Hardcore(0.01), 1.0, window.sample_uniform(n, rng), rng.random(n),
                       window.sample_uniform(m, rng), rng.random(m))
    prior = PriorSpec(intensity_shape=2.0, intensity_rate=0.5)
    shape, rate = prior.intensity_posterior(n + m, window.measure)
    exact = (shape, rate) == (2.0 + 80, 0.5 + 100.0)
    draws = np.array([resample_intensity(state, prior, rng).intensity for _ in range(10_000)])
    mean, var = shape / rate, shape / rate**2
    mean_z = (draws.mean() - mean) / np.sqrt(var / len(draws))
    # the sample variance of Gamma draws has sd about var * sqrt((2 + 6 / shape) / N)
    var_z = (draws.var(ddof=1) - var) / (var * np.sqrt((2 + 6 / shape) / len(draws)))
    elapsed = time.perf_counter() - start
    ok = exact and abs(mean_z) < 3 and abs(var_z) < 3 and elapsed < 1.0
    assert report(1, ok, f"posterior Gamma({shape:g}, {rate:g}); mean z={mean_z:.2f}, "
                         f"variance z={var_z:.2f}; {elapsed:.2f}s (limit 1s)")


def test_criterion_2_density_matches_simulation(report):
    start = time.perf_counter()
    window = SiteWindow([[0.5], [1.5], [2.5], [3.5]], np.ones(4))
    rate = 0.6
    lines, ok = [], True
    for kernel in (Hardcore(1.2), Probabilistic(0.6, 1.2)):
        probs = configuration_probabilities(window, rate, kernel, max_events=3)
        n = 100_000
        freq = forward_frequencies(window, rate, kernel, n, make_rng(102))
        worst = 0.0
        for config, p in probs.items():
            se = np.sqrt(max(p * (1 - p), 1e-12) / n)
            worst = max(worst, abs(freq.get(config, 0) / n - p) / se)
        tail = 1.0 - sum(probs.values())
        tail_freq = sum(c for k, c in freq.items() if len(k) > 3) / n
        tail_z = abs(tail_freq - tail) / np.sqrt(max(tail * (1 - tail), 1e-12) / n)
        ok &= worst < 3 and tail_z < 3
        lines.append(f"{type(kernel).__name__}: max |z|={worst:.2f} over {len(probs)} configs, tail z={tail_z:.2f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 60
    assert report(2, ok, "; ".join(lines) + f"; {elapsed:.1f}s (limit 60s)")


def test_criterion_3_thinned_count_is_poisson(report):
    start = time.perf_counter()
    window = Window.square(5)
    kernel = Probabilistic(0.6, 1.0)
    state = ChainState(window, kernel, 2.0, np.array([[1.0, 1.0], [1.6, 1.4], [4.6, 2.0]]),
                       np.array([0.15, 0.4, 0.6]))
    volume = shadow_volume(state.matern_pattern(), kernel, window, tol=1e-9)
    mean = state.intensity * volume
    rng = make_rng(103)
    counts = np.array([resample_thinned_events(state, rng).n_thinned for _ in range(10_000)])
    edges = np.arange(0, counts.max() + 2)
    pmf = stats.poisson.pmf(edges[:-1], mean)
    observed = np.bincount(counts, minlength=len(pmf))
    # pool the tails so every expected count is at least 5
    expected = pmf * len(counts)
    keep = expected >= 5
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], len(counts) - expected[keep].sum())
    pvalue = stats.chisquare(obs, exp).pvalue
    elapsed = time.perf_counter() - start
    ok = pvalue > 0.01 and elapsed < 30
    assert report(3, ok, f"Poisson mean {mean:.4f}, chi-square p={pvalue:.3f} (need > 0.01); "
                         f"{elapsed:.1f}s (limit 30s)")


def test_criterion_4_geweke(report):
    start = time.perf_counter()
    window = Window.square(5)
    prior = PriorSpec(intensity_shape=1.0, intensity_rate=1.0, radius_prior="gamma",
                      radius_shape=1.0, radius_rate=1.0, p_alpha=1.0, p_beta=1.0)
    rng = make_rng(104)
    sweeps = 5000

    def draw_parameters():
        lam = rng.gamma(1.0, 1.0)
        return lam, Probabilistic(rng.beta(1.0, 1.0), rng.gamma(1.0, 1.0))

    forward = []
    for _ in range(sweeps):
        lam, kernel = draw_parameters()
        _, thinned = simulate_matern(window, lam, kernel, rng)
        forward.append((lam, kernel.R, kernel.p, len(thinned)))
    lam, kernel = draw_parameters()
    chain = []
    for _ in range(sweeps):
        matern, thinned = simulate_matern(window, lam, kernel, rng)
        state = state_from_simulation(window, lam, kernel, matern, thinned)
        gibbs_sweep(state, prior, rng)
        lam, kernel = state.intensity, state.kernel
        chain.append((lam, kernel.R, kernel.p, state.n_thinned))
    forward, chain = np.array(forward), np.array(chain)
    names = ("lambda", "R", "p", "n_thinned")
    pvalues = [2 * stats.norm.sf(abs(geweke_z(forward[:, k], chain[:, k]))) for k in range(4)]
    elapsed = time.perf_counter() - start
    ok = min(pvalues) > 0.01 and elapsed < 600
    detail = ", ".join(f"{n} p={p:.3f}" for n, p in zip(names, pvalues))
    assert report(4, ok, f"{detail} (each > 0.01); {sweeps} sweeps, {elapsed:.0f}s (limit 600s)")


@pytest.fixture(scope="module")
def pines_fits():
    data = _swedish_pines()
    if data is None:
        return None
    locs, window = data
    fits = {}
    for family in ("hardcore", "probabilistic"):
        start = time.perf_counter()
        trace = run_chain(locs, window, family, PriorSpec(), iters=11_000, burn_in=1000, seed=105)
        fits[family] = (trace, time.perf_counter() - start)
    return locs, window, fits


def _missing_data(report, number, env, filename):
    report(number, False, f"dataset not available: set {env} or place {filename} in tests/data "
                          "(x,y rows with a '# window x0 y0 x1 y1' header)")
    pytest.xfail("acceptance dataset is not redistributable and was not supplied")


def test_criterion_5_swedish_pines(report, pines_fits):
    if pines_fits is None:
        _missing_data(report, 5, PINES_ENV, PINES_FILE)
    locs, window, fits = pines_fits
    hard, hard_time = fits["hardcore"]
    prob, prob_time = fits["probabilistic"]
    lam_mean = hard["lambda"].mean()
    few_thinned = np.mean(hard["n_thinned"] < 10)
    r_max = hard["R"].max()
    p_mean = prob["p"].mean()
    radii = np.linspace(0.5, 1.5, 11)
    envelope = posterior_predictive_envelope(prob, homogeneous_simulator(window, "probabilistic"),
                                             LStatistic(window, radii), seed=(105, 2))
    inside = envelope.contains(l_function(locs, window, radii).values)
    checks = {
        f"lambda mean {lam_mean:.3f} in [0.72, 0.88]": 0.72 <= lam_mean <= 0.88,
        f"P(thinned < 10) {few_thinned:.3f} > 0.9": few_thinned > 0.9,
        f"hardcore R max {r_max:.3f} < 0.25": r_max < 0.25,
        f"p mean {p_mean:.3f} in [0.45, 0.75]": 0.45 <= p_mean <= 0.75,
        f"L inside 95% band at {inside.sum()}/{len(radii)} radii": inside.all(),
        f"runtimes {hard_time:.0f}s and {prob_time:.0f}s per 1.1e4 sweeps (limit 330s)":
            max(hard_time, prob_time) < 330,
    }
    failed = [k for k, v in checks.items() if not v]
    assert report(5, not failed, "; ".join(checks) + (f"; failing: {failed}" if failed else ""))


def test_criterion_6_monotone_survivor_counts(report):
    start = time.perf_counter()
    window = Window.square(10)
    rng = make_rng(106)
    rates = (0.5, 1.0, 2.0, 4.0, 8.0)
    counts = np.array([[len(simulate_matern(window, lam, Hardcore(0.5), rng)[0]) for _ in range(200)]
                       for lam in rates])
    means = counts.mean(axis=1)
    nondecreasing = bool(np.all(np.diff(means) >= 0))
    rho, pvalue = stats.spearmanr(np.repeat(rates, 200), counts.ravel())
    elapsed = time.perf_counter() - start
    ok = nondecreasing and rho > 0 and pvalue < 0.01 and elapsed < 120
    assert report(6, ok, f"means {np.round(means, 2).tolist()}; Spearman rho={rho:.3f}, "
                         f"p={pvalue:.1e}; {elapsed:.1f}s (limit 120s)")


def test_criterion_7_swedish_pines_ess(report, pines_fits):
    if pines_fits is None:
        _missing_data(report, 7, PINES_ENV, PINES_FILE)
    hard, _ = pines_fits[2]["hardcore"]
    per_1000 = {name: 1000 * effective_sample_size(hard[name]) / len(hard) for name in ("R", "lambda")}
    ok = per_1000["R"] > 100 and per_1000["lambda"] > 500
    assert report(7, ok, f"ESS per 1000: R {per_1000['R']:.1f} (need > 100), "
                         f"lambda {per_1000['lambda']:.1f} (need > 500)")


def _greyhound_check():
    path = _optional_data(GREYHOUND_ENV, GREYHOUND_FILE)
    if path is None:
        return None
    locs, window = load_pattern(path)
    prior = PriorSpec(fixed_p=0.75, radius_prior="gamma", radius_shape=1.0, radius_rate=1.0)
    trace, _ = run_chain_nonstat(locs, window, "probabilistic", prior, GpSpec(), iters=3000, burn_in=500, seed=108)
    hist, edges = np.histogram(trace["R"], bins=40)
    peak = 0.5 * (edges[hist.argmax()] + edges[hist.argmax() + 1])
    return peak, 0.15 <= peak <= 0.2


def test_criterion_8_nonstationary_invariants(report):
    start = time.perf_counter()
    rng = make_rng(108)
    window = Window.square(10)
    gp = GpSpec(lengthscale=2.0)
    kernel = Probabilistic(0.7, 0.6)
    sample = simulate_nonstat_matern(window, 2.0, gp, kernel, rng)
    state = nonstat_state_from_simulation(window, 2.0, kernel, gp, sample)
    sweeps, broken = 300, 0
    for _ in range(sweeps):
        nonstat_sweep(state, PriorSpec(), rng)
        sizes = (state.n_matern, state.n_thinned, state.n_poisson)
        broken += not (len(state.all_gp()) == len(state.all_locs()) == sum(sizes) == state.n_primary)

    locs = window.sample_uniform(8, rng)
    chol = factorize(gp.covariance(locs), gp.jitter_abs)
    values, draws = np.zeros(len(locs)), []
    for _ in range(10_000):
        values, _ = elliptical_slice(values, chol, lambda v: 0.0, rng)
        draws.append(values)
    draws = np.array(draws)
    ks = [stats.kstest(draws[:, k], stats.norm(0, np.sqrt(gp.variance)).cdf).pvalue for k in range(len(locs))]
    elapsed = time.perf_counter() - start
    ok = broken == 0 and min(ks) > 0.01 and elapsed < 300
    detail = (f"bookkeeping held after {sweeps - broken}/{sweeps} sweeps; slice-sampler prior KS "
              f"min p={min(ks):.3f} over {len(locs)} marginals (need > 0.01); {elapsed:.0f}s (limit 300s)")
    greyhound = _greyhound_check()
    if greyhound is None:
        detail += "; optional Greyhound check not run (dataset not supplied)"
    else:
        peak, in_range = greyhound
        detail += f"; optional Greyhound R peak {peak:.3f} in [0.15, 0.2]: {in_range}"
    assert report(8, ok, detail)


def test_criterion_9_simulation_based_calibration(report):
    start = time.perf_counter()
    window = Window.square(10)
    truth = {"lambda": 1.0, "R": 0.5}
    covered = {name: 0 for name in truth}
    cycles = 50
    for seed in range(cycles):
        matern, _ = simulate_matern(window, truth["lambda"], Hardcore(truth["R"]), make_rng(109, seed))
        trace = run_chain(matern.locs, window, "hardcore", PriorSpec(), iters=2000, burn_in=500, seed=seed)
        for name, value in truth.items():
            lo, hi = np.quantile(trace[name], [0.025, 0.975])
            covered[name] += lo <= value <= hi
    elapsed = time.perf_counter() - start
    rates = {name: c / cycles for name, c in covered.items()}
    ok = all(r >= 0.9 for r in rates.values()) and elapsed < 900
    assert report(9, ok, f"95% interval coverage lambda {rates['lambda']:.2f}, R {rates['R']:.2f} "
                         f"(need >= 0.90) over {cycles} cycles; {elapsed:.0f}s (limit 900s)")
