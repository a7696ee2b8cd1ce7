"""Nested smoothstep frequency cutoffs chi_1 < chi_2 < chi_3 around an annulus."""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from ..core.exceptions import ConfigurationError


def smoothstep(t: np.ndarray) -> np.ndarray:
    """C^2 quintic step: 0 for t <= 0, 1 for t >= 1."""
    s = np.clip(t, 0.0, 1.0)
    return s ** 3 * (s * (6.0 * s - 15.0) + 10.0)


def radial_window(r: np.ndarray, inner: Tuple[float, float], outer: Tuple[float, float]) -> np.ndarray:
    """Rises on ``inner`` = (a, b), equals 1 on [b, c], falls on ``outer`` = (c, e)."""
    a, b = inner
    c, e = outer
    rise = smoothstep((r - a) / (b - a))
    fall = 1.0 - smoothstep((r - c) / (e - c))
    return rise * fall


@dataclass(frozen=True)
class FrequencyCutoffs:
    """Cutoffs with chi_1 = 1 on {eps <= |xi| <= 1/eps} and chi_{j+1} = 1 on supp chi_j.

    Level j (1-based) equals one on [eps/(j), j/eps] and is supported in
    [eps/(j+1), (j+1)/eps].
    """

    epsilon: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigurationError(f"annulus parameter must lie in (0, 1), got {self.epsilon}")

    def transitions(self, level: int) -> Dict[str, Tuple[float, float]]:
        if level not in (1, 2, 3):
            raise ConfigurationError(f"cutoff level must be 1, 2 or 3, got {level}")
        eps = self.epsilon
        return {
            "inner": (eps / (level + 1), eps / level),
            "outer": (level / eps, (level + 1) / eps),
        }

    def chi(self, level: int, xi_norm: np.ndarray) -> np.ndarray:
        """chi_level evaluated on |xi|."""
        t = self.transitions(level)
        return radial_window(np.asarray(xi_norm, dtype=float), t["inner"], t["outer"])

    def chi1(self, xi_norm: np.ndarray) -> np.ndarray:
        return self.chi(1, xi_norm)

    def chi2(self, xi_norm: np.ndarray) -> np.ndarray:
        return self.chi(2, xi_norm)

    def chi3(self, xi_norm: np.ndarray) -> np.ndarray:
        return self.chi(3, xi_norm)

    def metadata(self) -> Dict[str, object]:
        """Transition radii recorded in run output."""
        return {f"chi{j}": self.transitions(j) for j in (1, 2, 3)}
