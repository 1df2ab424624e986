"""State sojourn-time densities.

Each hidden state gets a discrete pmf over durations 1..dmax obtained by
evaluating a Gaussian-kernel density estimate at the integers and
renormalising.  The geometric law that an ordinary HMM implies is kept as a
reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

FALLBACK_BANDWIDTH = 0.5
PMF_FLOOR = 1e-12
DEFAULT_DMAX_FACTOR = 1.5

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def silverman_bandwidth(samples: Sequence[float]) -> float:
    """Rule-of-thumb bandwidth ``(4 sigma^5 / (3 n))^(1/5)``.

    ``sigma`` is the sample standard deviation with the n-1 divisor.  A single
    sample or zero spread returns ``FALLBACK_BANDWIDTH``.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n == 0:
        raise ValidationError("bandwidth needs at least one sample")
    if n == 1:
        return FALLBACK_BANDWIDTH
    sigma = float(np.std(x, ddof=1))
    if sigma == 0.0:
        return FALLBACK_BANDWIDTH
    return sigma * (4.0 / (3.0 * n)) ** 0.2


def default_dmax(samples: Sequence[int], factor: float = DEFAULT_DMAX_FACTOR) -> int:
    if factor < 1.0:
        raise ValidationError(f"dmax factor must be >= 1, got {factor}")
    return max(1, math.ceil(factor * max(samples)))


@dataclass(frozen=True, eq=False)
class DurationDensity:
    samples: tuple[int, ...]
    bandwidth: float
    dmax: int
    pmf: np.ndarray

    def prob(self, m: int) -> float:
        return float(self.pmf[m - 1]) if 1 <= m <= self.dmax else 0.0

    def log_pmf(self) -> np.ndarray:
        return np.log(self.pmf)

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(1, self.dmax + 1), self.pmf))

    def to_dict(self) -> dict:
        return {
            "n_samples": len(self.samples),
            "samples": list(self.samples),
            "bandwidth": self.bandwidth,
            "dmax": self.dmax,
            "pmf": [float(p) for p in self.pmf],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DurationDensity":
        pmf = np.array(doc["pmf"], dtype=float)
        if len(pmf) != doc["dmax"]:
            raise ValidationError("duration pmf length does not match dmax")
        return cls(tuple(int(s) for s in doc.get("samples", ())), float(doc["bandwidth"]), int(doc["dmax"]), pmf)

    def __eq__(self, other):
        if not isinstance(other, DurationDensity):
            return NotImplemented
        return (self.samples == other.samples and self.bandwidth == other.bandwidth
                and self.dmax == other.dmax and np.array_equal(self.pmf, other.pmf))


def fit_duration_density(samples: Sequence[int], dmax: int | None = None,
                         bandwidth: float | None = None) -> DurationDensity:
    """Gaussian KDE of ``samples`` evaluated at m = 1..dmax, floored and renormalised."""
    samples = tuple(int(s) for s in samples)
    if not samples:
        raise ValidationError("duration density needs at least one sample")
    if min(samples) < 1:
        raise ValidationError("durations must be >= 1")
    if dmax is None:
        dmax = default_dmax(samples)
    if dmax < max(samples):
        raise ValidationError(f"dmax {dmax} is below the largest sample {max(samples)}")
    h = silverman_bandwidth(samples) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise ValidationError(f"bandwidth must be positive, got {h}")
    m = np.arange(1, dmax + 1, dtype=float)
    z = (m[:, None] - np.asarray(samples, dtype=float)[None, :]) / h
    density = np.exp(-0.5 * z * z).sum(axis=1) * _INV_SQRT_2PI / (len(samples) * h)
    density = np.maximum(density, PMF_FLOOR)
    return DurationDensity(samples, h, dmax, density / density.sum())


def geometric_duration_pmf(p_self: float, m: int) -> float:
    """Probability of staying exactly ``m`` steps when each step repeats with ``p_self``."""
    if not 0.0 <= p_self < 1.0:
        raise ValidationError(f"p_self must lie in [0, 1), got {p_self}")
    if m < 1:
        raise ValidationError(f"duration must be >= 1, got {m}")
    return p_self ** (m - 1) * (1.0 - p_self)
