"""Independent reference computations used by the tests."""

import itertools
from collections import Counter
from math import factorial

import numpy as np

from matern3.diagnostics import effective_sample_size
from matern3.geometry import pairwise_distances
from matern3.gibbs import ChainState
from matern3.matern import AugmentedPattern, log_density_matern, simulate_matern
from matern3.nonstat import NonstatState


def _simplex_rule(n, nodes):
    """Nodes and weights integrating over ``0 < s_1 < ... < s_n < 1``.

    Uses ``s_n = u_n``, ``s_k = s_{k+1} u_k`` with Gauss-Legendre in each
    ``u``; the Jacobian is ``prod_k u_k ** (k - 1)``.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    x, w = 0.5 * (x + 1.0), 0.5 * w
    grids = np.array(list(itertools.product(range(nodes), repeat=n)))
    u = x[grids]
    weight = np.prod(w[grids], axis=1) * np.prod(u ** np.arange(n)[None, :], axis=1)
    s = np.empty_like(u)
    s[:, n - 1] = u[:, n - 1]
    for k in range(n - 2, -1, -1):
        s[:, k] = s[:, k + 1] * u[:, k]
    return s, weight


def configuration_probabilities(window, rate, kernel, max_events=3, nodes=6):
    """Probability of each survivor configuration on a site window.

    A configuration is the sorted tuple of occupied site indices. The
    density is integrated over all birth-time orderings by quadrature.
    """
    n_sites = len(window.sites)
    probs = {}
    for n in range(max_events + 1):
        if n == 0:
            probs[()] = float(np.exp(log_density_matern(AugmentedPattern.empty(window.dim), rate, kernel, window)))
            continue
        s, weight = _simplex_rule(n, nodes)
        for config in itertools.combinations_with_replacement(range(n_sites), n):
            locs = window.sites[list(config)]
            # integrate over [0, 1]^n one birth-order region at a time
            total = 0.0
            for perm in itertools.permutations(range(n)):
                for times, wt in zip(s, weight):
                    t = np.empty(n)
                    t[list(perm)] = times
                    total += wt * np.exp(log_density_matern(AugmentedPattern(locs, t), rate, kernel, window))
            # ordered site tuples giving this multiset, over n! for exchangeability
            repeats = np.prod([factorial(c) for c in Counter(config).values()])
            probs[config] = float(total * np.prod(window.masses[list(config)]) / repeats)
    return probs


def forward_frequencies(window, rate, kernel, n_draws, rng):
    counts = Counter()
    for _ in range(n_draws):
        matern, _ = simulate_matern(window, rate, kernel, rng)
        counts[tuple(sorted(window.site_index(matern.locs).tolist()))] += 1
    return counts


def monte_carlo_shadow_volume(pattern, kernel, window, n, rng):
    """Hit-count estimate of the shadow volume and its standard error."""
    locs = window.sample_uniform(n, rng)
    times = rng.random(n)
    radii = np.full(len(pattern), float(kernel.R)) if pattern.radii is None else pattern.radii
    d = pairwise_distances(locs, pattern.locs)
    k = ((d < radii[None, :]) & (pattern.times[None, :] < times[:, None])).sum(axis=1)
    h = 1.0 - (1.0 - kernel.thin_prob) ** k
    return window.measure * h.mean(), window.measure * h.std(ddof=1) / np.sqrt(n)


def total_variation(p, q):
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    return 0.5 * np.abs(p / p.sum() - q / q.sum()).sum()


def geweke_z(forward, chain):
    """Difference in means between independent prior-predictive draws and a
    successive-conditional chain, in standard errors. The chain's standard
    error uses its effective sample size."""
    forward, chain = np.asarray(forward, float), np.asarray(chain, float)
    ess = effective_sample_size(chain) if np.ptp(chain) > 0 else len(chain)
    se = np.sqrt(forward.var(ddof=1) / len(forward) + chain.var(ddof=1) / ess)
    if se == 0:
        return 0.0
    return float((forward.mean() - chain.mean()) / se)


def state_from_simulation(window, intensity, kernel, matern, thinned):
    """Chain state holding a forward simulation's full latent labelling."""
    return ChainState(window, kernel, intensity, matern.locs, matern.times,
                      thinned.locs, thinned.times, radii=matern.radii)


def nonstat_state_from_simulation(window, lambda_hat, kernel, gp, sample):
    n, m = len(sample.matern), len(sample.matern_thinned)
    values = sample.gp_values.values
    return NonstatState(
        window, kernel, lambda_hat, sample.matern.locs, sample.matern.times,
        sample.matern_thinned.locs, sample.matern_thinned.times, radii=sample.matern.radii,
        gp=gp, matern_gp=values[:n], thinned_gp=values[n:n + m],
        poisson_locs=sample.poisson_thinned.locs, poisson_gp=values[n + m:],
    )
