import numpy as np
import pytest
from numpy.polynomial.hermite_e import hermegauss
from scipy import stats

from matern3.diagnostics import effective_sample_size
from matern3.geometry import Window
from matern3.gibbs import run_chain
from matern3.gp import GpSpec, GpValues, gp_condition, sample_prior, sigmoid
from matern3.kernels import Hardcore, Probabilistic
from matern3.matern import shadow_at, simulate_matern
from matern3.nonstat import (
    IntensityGrid,
    NonstatState,
    nonstat_sweep,
    resample_matern_thinned_nonstat,
    resample_poisson_thinned,
    run_chain_nonstat,
    simulate_nonstat_matern,
)
from matern3.poisson import make_rng
from matern3.priors import PriorSpec
from oracles import geweke_z, nonstat_state_from_simulation

W10 = Window.square(10)
W5 = Window.square(5)


def _expected_sigmoid(mean, var):
    nodes, weights = hermegauss(32)
    return sigmoid(mean[:, None] + np.sqrt(var)[:, None] * nodes[None, :]) @ (weights / weights.sum())


def test_large_shift_reduces_to_homogeneous_matern():
    gp = GpSpec(variance=1e-6, mean_shift=50.0)
    kernel = Hardcore(0.8)
    rng = make_rng(1)
    nonstat, plain = [], []
    for _ in range(300):
        sample = simulate_nonstat_matern(W10, 1.5, gp, kernel, rng)
        assert len(sample.poisson_thinned) == 0
        nonstat.append(len(sample.matern))
        plain.append(len(simulate_matern(W10, 1.5, kernel, rng)[0]))
    assert stats.ttest_ind(nonstat, plain).pvalue > 0.01


def test_small_radius_gives_a_sigmoid_cox_process():
    gp = GpSpec(variance=4.0, lengthscale=2.0)
    rng = make_rng(2)
    probs, kept = [], []
    for _ in range(100):
        s = simulate_nonstat_matern(W5, 4.0, gp, Hardcore(1e-9), rng)
        assert len(s.matern_thinned) == 0
        n = len(s.matern)
        vals = s.gp_values.values
        probs.append(sigmoid(vals))
        kept.append(np.arange(len(vals)) < n)
    probs, kept = np.concatenate(probs), np.concatenate(kept)
    # each primary event is kept with probability sigmoid(l) at its location
    edges = np.linspace(0, 1, 6)
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (probs >= a) & (probs < b)
        se = np.sqrt(0.25 / sel.sum())
        assert abs(kept[sel].mean() - probs[sel].mean()) < 4 * se


def test_stage_counts_add_up():
    rng = make_rng(3)
    for _ in range(20):
        s = simulate_nonstat_matern(W10, 1.0, GpSpec(lengthscale=2.0), Probabilistic(0.6, 0.7), rng)
        assert len(s.gp_values) == len(s.matern) + len(s.matern_thinned) + len(s.poisson_thinned)
        assert np.all(shadow_at(s.matern_thinned.locs, s.matern_thinned.times, s.matern, Probabilistic(0.6, 0.7)) > 0)
    with pytest.raises(ValueError):
        simulate_nonstat_matern(W10, 0.0, GpSpec(), Hardcore(1.0), rng)


def _state(locs, times, gp, kernel=Hardcore(1.0), lambda_hat=2.0, **extra):
    return NonstatState(W10, kernel, lambda_hat, np.asarray(locs, float), np.asarray(times, float), gp=gp, **extra)


def test_certain_keep_leaves_no_poisson_thinned_events():
    rng = make_rng(4)
    state = _state([[5.0, 5.0]], [0.5], GpSpec(variance=1e-6, mean_shift=1e3))
    for _ in range(50):
        assert resample_poisson_thinned(state, rng).n_poisson == 0


def test_poisson_thinned_count_matches_quadrature():
    # a dense set of known GP values pins l down; the oracle integrates the
    # conditional mean of 1 - sigmoid(l) over a fine grid
    gp = GpSpec(variance=2.0, lengthscale=2.5, jitter=1e-6)
    rng = make_rng(5)
    axis = np.linspace(0.25, 9.75, 12)
    grid_locs = np.stack(np.meshgrid(axis, axis), axis=-1).reshape(-1, 2)
    values = sample_prior(gp, grid_locs, rng)
    base = _state(grid_locs[:1], [0.5], gp, poisson_locs=grid_locs[1:], poisson_gp=values[1:],
                  matern_gp=values[:1])
    fine = (np.arange(60) + 0.5) / 60 * 10
    pts = np.stack(np.meshgrid(fine, fine), axis=-1).reshape(-1, 2)
    cond = gp_condition(GpValues(grid_locs, values, gp), pts, marginal_only=True)
    expected = 2.0 * np.mean(1.0 - _expected_sigmoid(cond.mean, cond.cov)) * 100
    counts = [resample_poisson_thinned(base.copy(), rng).n_poisson for _ in range(1500)]
    assert abs(np.mean(counts) - expected) < 3.5 * np.sqrt(expected / len(counts)) + 0.01 * expected


def test_poisson_thinned_count_is_poisson():
    rng = make_rng(6)
    state = _state([[5.0, 5.0]], [0.5], GpSpec(variance=1e-8, mean_shift=0.0), lambda_hat=0.2)
    counts = np.array([resample_poisson_thinned(state, rng).n_poisson for _ in range(5000)])
    mean = 0.2 * 100 * 0.5
    k = np.arange(4, 17)
    observed = np.array([np.sum(counts <= 3)] + [np.sum(counts == j) for j in k] + [np.sum(counts >= 17)])
    pmf = np.concatenate([[stats.poisson.cdf(3, mean)], stats.poisson.pmf(k, mean), [stats.poisson.sf(16, mean)]])
    assert stats.chisquare(observed, pmf * len(counts)).pvalue > 0.01


def test_no_survivors_means_no_matern_thinned_events():
    rng = make_rng(7)
    state = _state(np.zeros((0, 2)), np.zeros(0), GpSpec())
    for _ in range(20):
        assert resample_matern_thinned_nonstat(state, rng).n_thinned == 0


def test_acceptance_in_a_fully_shadowed_region():
    rng = make_rng(8)
    shift = 0.8
    state = _state([[5.0, 5.0]], [1e-6], GpSpec(variance=1e-8, mean_shift=shift), kernel=Hardcore(20.0))
    counts = [resample_matern_thinned_nonstat(state, rng).n_thinned for _ in range(3000)]
    expected = 2.0 * 100 * sigmoid(shift)
    assert abs(np.mean(counts) - expected) < 3 * np.sqrt(expected / len(counts))


def test_unshadowed_region_stays_empty():
    rng = make_rng(9)
    state = _state([[2.0, 2.0]], [0.3], GpSpec(mean_shift=3.0), kernel=Hardcore(1.0), lambda_hat=5.0)
    total = 0
    for _ in range(300):
        resample_matern_thinned_nonstat(state, rng)
        d = np.hypot(*(state.thinned_locs - [2.0, 2.0]).T)
        assert np.all(d < 1.0) and np.all(state.thinned_times > 0.3)
        total += state.n_thinned
    assert total > 0


def test_bookkeeping_after_every_sweep():
    rng = make_rng(10)
    gp = GpSpec(lengthscale=2.0)
    sample = simulate_nonstat_matern(W10, 2.0, gp, Probabilistic(0.7, 0.6), rng)
    state = nonstat_state_from_simulation(W10, 2.0, Probabilistic(0.7, 0.6), gp, sample)
    for _ in range(30):
        nonstat_sweep(state, PriorSpec(), rng)
        assert state.n_primary == state.n_matern + state.n_thinned + state.n_poisson
        assert len(state.all_gp()) == len(state.all_locs()) == state.n_primary
        cached = state.gp_values()
        K = state.gp.covariance(state.all_locs()) + state.gp.jitter_abs * np.eye(state.n_primary)
        rebuilt = cached.chol @ cached.chol.T
        assert np.linalg.norm(rebuilt - K) / np.linalg.norm(K) < 1e-8
        assert np.array_equal(cached.values, state.all_gp())


def test_flat_gp_recovers_the_homogeneous_posterior():
    rng = make_rng(11)
    matern, _ = simulate_matern(W10, 1.0, Probabilistic(0.8, 0.7), rng)
    gp = GpSpec(variance=1e-8)
    prior = PriorSpec(radius_prior="gamma", radius_shape=2.0, radius_rate=2.0)
    ns, _ = run_chain_nonstat(matern.locs, W10, "probabilistic", prior, gp, iters=1500, burn_in=300,
                              seed=1, update_hypers=False)
    # lambda = lambda_hat / 2 turns the Gamma(a, b) prior into Gamma(a, 2b)
    homog_prior = PriorSpec(radius_prior="gamma", radius_shape=2.0, radius_rate=2.0,
                            intensity_rate=2.0 * prior.intensity_rate)
    hom = run_chain(matern.locs, W10, "probabilistic", homog_prior, iters=1500, burn_in=300, seed=2)
    for a, b in ((ns["R"], hom["R"]), (ns["n_thinned"], hom["n_thinned"]), (ns["lambda_hat"] / 2, hom["lambda"])):
        se = np.sqrt(a.var() / effective_sample_size(a) + b.var() / effective_sample_size(b))
        assert abs(a.mean() - b.mean()) < 4 * se


def test_intensity_grid_for_a_flat_gp():
    rng = make_rng(12)
    matern, _ = simulate_matern(W5, 2.0, Hardcore(0.3), rng)
    trace, grid = run_chain_nonstat(matern.locs, W5, "hardcore", gp=GpSpec(variance=1e-8), iters=200,
                                    seed=3, grid_resolution=7, update_hypers=False)
    assert grid.count == 200 and grid.points.shape == (49, 2)
    assert np.allclose(grid.mean, 0.5 * trace["lambda_hat"].mean(), rtol=1e-4)
    assert np.allclose(grid.sd, 0.5 * trace["lambda_hat"].std(), rtol=1e-3)


def test_intensity_grid_csv(tmp_path):
    grid = IntensityGrid(W5, resolution=3)
    state = _state([[2.0, 2.0]], [0.3], GpSpec(), lambda_hat=2.0)
    grid.update(state)
    grid.to_csv(tmp_path / "grid.csv")
    lines = (tmp_path / "grid.csv").read_text().splitlines()
    assert lines[0] == "x,y,mean,sd" and len(lines) == 10


def test_trace_columns_and_replay():
    matern, _ = simulate_matern(W5, 2.0, Hardcore(0.3), make_rng(13))
    a, _ = run_chain_nonstat(matern.locs, W5, "probabilistic", iters=20, seed=5)
    b, _ = run_chain_nonstat(matern.locs, W5, "probabilistic", iters=20, seed=5)
    for name in ("lambda_hat", "R", "p", "n_thinned", "n_poisson_thinned", "gp_variance", "gp_lengthscale"):
        assert np.array_equal(a[name], b[name])
    with pytest.raises(ValueError):
        run_chain_nonstat(np.zeros((0, 2)), W5, "hardcore", iters=1)


@pytest.mark.slow
def test_geweke_forward_backward_agreement():
    window = Window.square(3)
    prior = PriorSpec(intensity_shape=3.0, intensity_rate=1.0, radius_prior="gamma",
                      radius_shape=2.0, radius_rate=4.0)
    gp = GpSpec(variance=1.0, lengthscale=1.0)
    rng = make_rng(14)

    def draw_parameters():
        lam = rng.gamma(prior.intensity_shape, 1 / prior.intensity_rate)
        kernel = Probabilistic(rng.beta(1, 1), rng.gamma(prior.radius_shape, 1 / prior.radius_rate))
        return lam, kernel

    def record(lam, kernel, n_thinned, n_poisson):
        return (lam, kernel.R, kernel.p, n_thinned, n_poisson)

    forward = []
    for _ in range(3000):
        lam, kernel = draw_parameters()
        s = simulate_nonstat_matern(window, lam, gp, kernel, rng)
        forward.append(record(lam, kernel, len(s.matern_thinned), len(s.poisson_thinned)))

    lam, kernel = draw_parameters()
    chain = []
    for _ in range(3000):
        s = simulate_nonstat_matern(window, lam, gp, kernel, rng)
        state = nonstat_state_from_simulation(window, lam, kernel, gp, s)
        nonstat_sweep(state, prior, rng, update_hypers=False)
        lam, kernel = state.intensity, state.kernel
        chain.append(record(lam, kernel, state.n_thinned, state.n_poisson))
    forward, chain = np.array(forward), np.array(chain)
    z = [geweke_z(forward[:, k], chain[:, k]) for k in range(forward.shape[1])]
    # five tests at the 1% level, Bonferroni corrected
    assert max(abs(v) for v in z) < stats.norm.isf(0.005 / 5), z
