"""Run configuration read from a sectioned TOML file."""

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .geometry import Window
from .gp import GpSpec
from .priors import PriorSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "FAMILIES", "load_config", "parse_config"]

FAMILIES = ("hardcore", "softcore", "probabilistic", "nonstat-probabilistic")


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


@dataclass
class ModelSection:
    family: str = "hardcore"
    data: str = None
    window: list = None


@dataclass
class McmcSection:
    iters: int = 1000
    burn_in: int = 0
    seed: int = 0
    check: bool = True


@dataclass
class GpSection:
    variance: float = 1.0
    lengthscale: object = 1.0
    jitter: float = 1e-8
    hyper_log_mean: float = 0.0
    hyper_log_sd: float = 1.0
    update_hyperparameters: bool = True


@dataclass
class SimulateSection:
    intensity: float = 1.0
    R: float = 0.5
    p: float = 1.0
    r_lower: float = None
    r_upper: float = None
    window: list = None


@dataclass
class DiagnosticsSection:
    statistic: str = "L"
    n_radii: int = 50
    r_max: float = None
    quadrat_grid: int = 5
    replicates: int = 1
    max_draws: int = None
    trace: str = None
    intensity_grid: str = None


@dataclass
class PredictSection:
    grid_resolution: int = 40


@dataclass
class OutputSection:
    dir: str = "out"


SECTIONS = {
    "model": ModelSection,
    "prior": PriorSpec,
    "gp": GpSection,
    "mcmc": McmcSection,
    "simulate": SimulateSection,
    "diagnostics": DiagnosticsSection,
    "predict": PredictSection,
    "output": OutputSection,
}


@dataclass
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    prior: PriorSpec = field(default_factory=PriorSpec)
    gp: GpSection = field(default_factory=GpSection)
    mcmc: McmcSection = field(default_factory=McmcSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    predict: PredictSection = field(default_factory=PredictSection)
    output: OutputSection = field(default_factory=OutputSection)
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def family(self):
        return self.model.family

    @property
    def nonstat(self):
        return self.family == "nonstat-probabilistic"

    @property
    def kernel_family(self):
        return "probabilistic" if self.nonstat else self.family

    def resolve(self, path):
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def out_dir(self):
        return self.resolve(self.output.dir)

    def window(self):
        """Configured window or ``None``."""
        if self.model.window is None:
            return None
        return window_from_bounds(self.model.window, "model.window")

    def simulation_window(self):
        if self.simulate.window is not None:
            return window_from_bounds(self.simulate.window, "simulate.window")
        window = self.window()
        if window is None:
            raise ConfigError("simulate.window: no window (set simulate.window or model.window)")
        return window

    def gp_spec(self):
        g = self.gp
        return GpSpec(g.variance, g.lengthscale, g.jitter, 0.0, g.hyper_log_mean, g.hyper_log_sd)


def window_from_bounds(bounds, where):
    if not isinstance(bounds, list) or len(bounds) not in (2, 4):
        raise ConfigError(f"{where}: expected [x0, x1] or [x0, y0, x1, y1]")
    half = len(bounds) // 2
    try:
        return Window(bounds[:half], bounds[half:])
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from None


def _check_type(value, default, annotation, where):
    numeric = (int, float)
    if isinstance(value, bool) and not isinstance(default, bool) and annotation is not bool:
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if annotation is bool or isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true or false, got {value!r}")
    elif annotation is int:
        if not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
    elif annotation is float:
        if not isinstance(value, numeric):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = float(value)
    elif annotation is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
    return value


def _build_section(name, cls, table):
    if not isinstance(table, dict):
        raise ConfigError(f"{name}: expected a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        where = f"{name}.{key}"
        if key not in fields:
            raise ConfigError(f"{where}: unknown key (allowed: {', '.join(sorted(fields))})")
        f = fields[key]
        default = f.default if f.default is not dataclasses.MISSING else None
        kwargs[key] = _check_type(value, default, f.type, where)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{name}: {err}") from None


def parse_config(data, base_dir=None):
    """Validate a parsed TOML mapping into a :class:`RunConfig`."""
    sections = {}
    for name, table in data.items():
        if name not in SECTIONS:
            raise ConfigError(f"{name}: unknown section (allowed: {', '.join(SECTIONS)})")
        sections[name] = _build_section(name, SECTIONS[name], table)
    cfg = RunConfig(**sections, base_dir=Path(base_dir) if base_dir else Path.cwd())
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg.family not in FAMILIES:
        raise ConfigError(f"model.family: must be one of {', '.join(FAMILIES)}, got {cfg.family!r}")
    cfg.window()
    m = cfg.mcmc
    if m.burn_in < 0:
        raise ConfigError("mcmc.burn_in: must be nonnegative")
    if m.iters < m.burn_in:
        raise ConfigError("mcmc.iters: must be at least mcmc.burn_in")
    try:
        cfg.gp_spec()
    except ValueError as err:
        raise ConfigError(f"gp: {err}") from None
    s = cfg.simulate
    if not s.intensity > 0:
        raise ConfigError("simulate.intensity: must be positive")
    if not s.R > 0:
        raise ConfigError("simulate.R: must be positive")
    if not 0 < s.p <= 1:
        raise ConfigError("simulate.p: must lie in (0, 1]")
    if s.window is not None:
        window_from_bounds(s.window, "simulate.window")
    d = cfg.diagnostics
    if d.statistic not in ("L", "L_inhom", "Fano"):
        raise ConfigError(f"diagnostics.statistic: must be L, L_inhom or Fano, got {d.statistic!r}")
    for key in ("n_radii", "quadrat_grid", "replicates"):
        if getattr(d, key) < 1:
            raise ConfigError(f"diagnostics.{key}: must be at least 1")
    if d.quadrat_grid < 2 and d.statistic == "Fano":
        raise ConfigError("diagnostics.quadrat_grid: need at least 2 cells per axis")
    if d.r_max is not None and not d.r_max > 0:
        raise ConfigError("diagnostics.r_max: must be positive")
    if d.max_draws is not None and d.max_draws < 1:
        raise ConfigError("diagnostics.max_draws: must be at least 1")
    if cfg.predict.grid_resolution < 1:
        raise ConfigError("predict.grid_resolution: must be at least 1")


def load_config(path):
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    return parse_config(data, base_dir=path.parent)
