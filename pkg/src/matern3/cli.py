"""``matern3`` command line: simulate, fit, diagnose and predict."""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .config import ConfigError, load_config
from .diagnostics import (
    effective_sample_size,
    homogeneous_simulator,
    fano_factor,
    l_function,
    l_function_inhom,
    make_statistic,
    nonstat_simulator,
    posterior_predictive_envelope,
)
from .gibbs import SamplerAbort, run_chain
from .io import PatternFormatError, load_pattern, write_pattern
from .kernels import Hardcore, Probabilistic, Softcore
from .matern import simulate_matern
from .nonstat import run_chain_nonstat, simulate_nonstat_matern
from .poisson import RunawayIntensityError, make_rng
from .trace import Trace, repulsion_statistic

__all__ = ["main", "cmd_simulate", "cmd_fit", "cmd_diagnose", "cmd_predict", "summarize"]

log = logging.getLogger("matern3")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3
LOG_ENV = "MATERN3_LOG_LEVEL"

# substream tags so each command draws from its own stream of the seed
STREAM_SIMULATE, STREAM_DIAGNOSE = 1, 2


def _simulation_kernel(cfg):
    s = cfg.simulate
    family = cfg.kernel_family
    if family == "hardcore":
        return Hardcore(s.R)
    if family == "softcore":
        if s.r_lower is None or s.r_upper is None:
            raise ConfigError("simulate.r_lower: softcore simulation needs r_lower and r_upper")
        try:
            return Softcore(s.r_lower, s.r_upper)
        except ValueError as err:
            raise ConfigError(f"simulate.r_upper: {err}") from None
    return Probabilistic(s.p, s.R)


def cmd_simulate(cfg, rng=None):
    """Write ``pattern.csv`` (survivors) and ``truth.csv`` (every latent event)."""
    rng = rng or make_rng(cfg.mcmc.seed, STREAM_SIMULATE)
    window = cfg.simulation_window()
    kernel = _simulation_kernel(cfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    if cfg.nonstat:
        sample = simulate_nonstat_matern(window, cfg.simulate.intensity, cfg.gp_spec(), kernel, rng)
        groups = [("matern", sample.matern), ("thinned", sample.matern_thinned),
                  ("poisson_thinned", sample.poisson_thinned)]
        gp_values = sample.gp_values.values
        matern = sample.matern
    else:
        matern, thinned = simulate_matern(window, cfg.simulate.intensity, kernel, rng)
        groups = [("matern", matern), ("thinned", thinned)]
        gp_values = None
    write_pattern(out / "pattern.csv", matern.locs, window)
    locs = np.concatenate([g.locs for _, g in groups])
    extra = {
        "time": np.concatenate([g.times for _, g in groups]),
        "label": np.concatenate([np.full(len(g), k) for k, (_, g) in enumerate(groups)]),
    }
    if isinstance(kernel, Softcore):
        extra["radius"] = np.concatenate([matern.radii, np.full(len(locs) - len(matern), np.nan)])
    if gp_values is not None:
        extra["gp"] = gp_values
    write_pattern(out / "truth.csv", locs, window, extra=extra)
    log.info("simulated %d survivors out of %d latent events", len(matern), len(locs))
    return out / "pattern.csv"


def _observed(cfg):
    if cfg.model.data is None:
        raise ConfigError("model.data: no data file given")
    try:
        return load_pattern(cfg.resolve(cfg.model.data), cfg.window())
    except OSError as err:
        raise ConfigError(f"model.data: {err.strerror}: {cfg.model.data}") from None
    except PatternFormatError as err:
        raise ConfigError(f"model.data: {err}") from None


def summarize(trace, family):
    """Posterior summaries of every parameter column of a trace."""
    skip = {"iter", "log_joint"}
    params = {}
    for name in trace.names:
        if name in skip:
            continue
        params[name] = _column_summary(trace[name])
    stat = repulsion_statistic(trace) if len(trace) and "R" in trace else np.zeros(0)
    return {
        "family": family,
        "n_samples": len(trace),
        "parameters": params,
        "repulsion_statistic": _column_summary(stat),
    }


def _column_summary(x):
    if len(x) == 0:
        return {"mean": None, "sd": None, "q025": None, "q50": None, "q975": None, "ess": None}
    q = np.quantile(x, [0.025, 0.5, 0.975])
    return {
        "mean": float(np.mean(x)),
        "sd": float(np.std(x, ddof=1)) if len(x) > 1 else 0.0,
        "q025": float(q[0]),
        "q50": float(q[1]),
        "q975": float(q[2]),
        "ess": effective_sample_size(x) if len(x) >= 100 else None,
    }


def _run(cfg, grid_resolution=None):
    locs, window = _observed(cfg)
    if len(locs) == 0:
        raise ConfigError(f"model.data: {cfg.model.data} holds no points")
    m = cfg.mcmc
    if cfg.nonstat:
        return run_chain_nonstat(
            locs, window, "probabilistic", cfg.prior, cfg.gp_spec(), m.iters, m.burn_in, m.seed,
            grid_resolution=grid_resolution, check=m.check,
            update_hypers=cfg.gp.update_hyperparameters,
        )
    trace = run_chain(locs, window, cfg.family, cfg.prior, m.iters, m.burn_in, m.seed, check=m.check)
    return trace, None


def cmd_fit(cfg):
    """Write ``trace.csv`` and ``summary.json``."""
    trace, _ = _run(cfg)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    # summaries come from the file so they are reproducible from it alone
    summary = summarize(Trace.from_csv(out / "trace.csv"), cfg.family)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    log.info("recorded %d sweeps", len(trace))
    return out / "summary.json"


def _grid_intensity(path):
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    points, values = table[:, :-2], table[:, -2]

    def intensity_at(locs):
        d = ((locs[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        return values[np.argmin(d, axis=1)]
    return intensity_at


def cmd_diagnose(cfg):
    """Posterior-predictive envelope of the configured statistic, with the empirical curve."""
    locs, window = _observed(cfg)
    d = cfg.diagnostics
    trace_path = cfg.resolve(d.trace) if d.trace else cfg.out_dir / "trace.csv"
    try:
        trace = Trace.from_csv(trace_path)
    except (OSError, StopIteration):
        raise ConfigError(f"diagnostics.trace: cannot read {trace_path}") from None
    if len(trace) == 0:
        raise ConfigError(f"diagnostics.trace: {trace_path} has no samples")
    rows = list(trace.rows())
    if d.max_draws is not None and len(rows) > d.max_draws:
        rows = [rows[i] for i in np.linspace(0, len(rows) - 1, d.max_draws).round().astype(int)]
    r_max = d.r_max if d.r_max is not None else 0.25 * float(np.min(window.sides))
    radii = np.linspace(0.0, r_max, d.n_radii + 1)[1:]
    intensity_at = None
    if d.statistic == "L_inhom":
        grid_path = cfg.resolve(d.intensity_grid) if d.intensity_grid else cfg.out_dir / "intensity_grid.csv"
        if not grid_path.exists():
            raise ConfigError(f"diagnostics.intensity_grid: {grid_path} not found (run predict first)")
        intensity_at = _grid_intensity(grid_path)
    statistic = make_statistic(d.statistic, window, radii, d.quadrat_grid, intensity_at)
    if cfg.nonstat:
        simulator = nonstat_simulator(window, gp=cfg.gp_spec())
    else:
        simulator = homogeneous_simulator(window, cfg.family)
    envelope = posterior_predictive_envelope(rows, simulator, statistic, d.replicates,
                                             seed=(cfg.mcmc.seed, STREAM_DIAGNOSE))
    if d.statistic == "L":
        empirical = l_function(locs, window, radii).values
    elif d.statistic == "L_inhom":
        empirical = l_function_inhom(locs, window, radii, intensity_at).values
    else:
        empirical = np.atleast_1d(fano_factor(locs, window, d.quadrat_grid))
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"envelope_{d.statistic}.csv"
    envelope.to_csv(path, empirical)
    return path


def cmd_predict(cfg):
    """Posterior mean and sd of the nonstationary intensity on a grid."""
    if not cfg.nonstat:
        raise ConfigError("model.family: predict needs the nonstat-probabilistic family")
    trace, grid = _run(cfg, grid_resolution=cfg.predict.grid_resolution)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    path = out / "intensity_grid.csv"
    grid.to_csv(path)
    return path


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "diagnose": cmd_diagnose, "predict": cmd_predict}


def build_parser():
    parser = argparse.ArgumentParser(prog="matern3", description=__doc__)
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--seed", type=int, help="override mcmc.seed")
    parser.add_argument("--out", help="override output.dir")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=os.environ.get(LOG_ENV, "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.mcmc.seed = args.seed
        if args.out is not None:
            cfg.output.dir = os.path.abspath(args.out)
        path = COMMANDS[args.command](cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SamplerAbort, RunawayIntensityError) as err:
        print(f"sampler aborted: {err}", file=sys.stderr)
        return EXIT_ABORT
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
