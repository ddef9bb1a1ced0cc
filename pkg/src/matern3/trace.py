"""MCMC trace storage and CSV round-tripping."""

import csv

import numpy as np

__all__ = ["Trace", "repulsion_statistic"]

# column order used when writing; absent columns are skipped
COLUMN_ORDER = (
    "iter", "lambda", "lambda_hat", "R", "p", "r_L", "r_U", "n_thinned",
    "n_poisson_thinned", "gp_variance", "gp_lengthscale", "log_joint",
)


class Trace:
    """Per-iteration records of a chain, one row per recorded sweep."""

    def __init__(self, columns=None):
        self.columns = {k: list(v) for k, v in (columns or {}).items()}
        self.birth_times = []
        self.final_state = None

    def __len__(self):
        if not self.columns:
            return 0
        return len(next(iter(self.columns.values())))

    def __contains__(self, name):
        return name in self.columns

    def __getitem__(self, name):
        return np.asarray(self.columns[name], dtype=float)

    def append(self, **row):
        if self.columns and set(row) != set(self.columns):
            raise KeyError(f"row keys {sorted(row)} differ from trace columns {sorted(self.columns)}")
        n = len(self)
        for key, value in row.items():
            self.columns.setdefault(key, [None] * n).append(value)

    @property
    def names(self):
        known = [c for c in COLUMN_ORDER if c in self.columns]
        return known + sorted(c for c in self.columns if c not in COLUMN_ORDER)

    def rows(self):
        names = self.names
        for i in range(len(self)):
            yield {k: self.columns[k][i] for k in names}

    def to_csv(self, path, names=None):
        names = names or self.names
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for i in range(len(self)):
                writer.writerow([_fmt(self.columns[k][i]) for k in names])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = {k: [] for k in header}
            for line in reader:
                for k, v in zip(header, line):
                    data[k].append(_parse(v))
        return cls(data)


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _parse(text):
    try:
        return int(text)
    except ValueError:
        return float(text)


def repulsion_statistic(trace):
    """Thinning probability times squared radius, per row (``p = 1`` if absent)."""
    R = trace["R"]
    p = trace["p"] if "p" in trace else np.ones_like(R)
    return p * R**2
