"""Thinning kernels for generalized Matérn type-III processes."""

from dataclasses import dataclass

import numpy as np

__all__ = ["Hardcore", "Softcore", "Probabilistic", "FAMILIES", "event_radii"]


@dataclass(frozen=True)
class Hardcore:
    """Delete everything within ``R`` of an earlier survivor."""

    R: float
    family = "hardcore"
    thin_prob = 1.0

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"radius must be positive, got {self.R}")


@dataclass(frozen=True)
class Softcore:
    """Each survivor carries its own radius, uniform on ``[r_lower, r_upper]``.

    The radii live on the events (see ``AugmentedPattern.radii``); the kernel
    only holds the bounds of their distribution.
    """

    r_lower: float
    r_upper: float
    family = "softcore"
    thin_prob = 1.0

    def __post_init__(self):
        if not (0 < self.r_lower <= self.r_upper < np.inf):
            raise ValueError(f"need 0 < r_lower <= r_upper, got {self.r_lower}, {self.r_upper}")

    def log_radius_density(self, radii):
        radii = np.asarray(radii, float)
        inside = (radii >= self.r_lower) & (radii <= self.r_upper)
        width = self.r_upper - self.r_lower
        if width == 0:
            return np.where(inside, 0.0, -np.inf)
        return np.where(inside, -np.log(width), -np.inf)


@dataclass(frozen=True)
class Probabilistic:
    """Each earlier survivor within ``R`` deletes with probability ``p``."""

    p: float
    R: float
    family = "probabilistic"

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"thinning probability must be in [0, 1], got {self.p}")
        if not self.R > 0:
            raise ValueError(f"radius must be positive, got {self.R}")

    @property
    def thin_prob(self):
        return float(self.p)


FAMILIES = {"hardcore": Hardcore, "softcore": Softcore, "probabilistic": Probabilistic}


def event_radii(kernel, n, radii=None):
    """Interaction radius of each of ``n`` surviving events."""
    if isinstance(kernel, Softcore):
        if radii is None:
            raise ValueError("softcore patterns need per-event radii")
        radii = np.asarray(radii, float)
        if radii.shape != (n,):
            raise ValueError("one radius per event required")
        return radii
    return np.full(n, float(kernel.R))
