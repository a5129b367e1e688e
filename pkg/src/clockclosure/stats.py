"""Frequency-metrology statistics: overlapping Allan deviation, the closure
estimator with uncertainty propagation, and averaging-time projections."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .interrogation import FrequencySeries
from .spectra import ClosureCycle


@dataclass(frozen=True)
class AllanPoint:
    """One point of a stability curve: sigma_y at averaging time tau.

    ``fractional`` records whether sigma_y was divided by a carrier
    frequency (dimensionless) or is left in Hz.
    """

    tau_s: float
    sigma_y: float
    n_samples: int
    fractional: bool = False

    def __post_init__(self):
        if not self.tau_s > 0.0:
            raise ValueError("tau must be > 0")
        if self.sigma_y < 0.0:
            raise ValueError("sigma_y must be >= 0")


def default_taus(series: FrequencySeries) -> list[float]:
    """Octave-spaced averaging times compatible with a series, up to span/3."""
    n = len(series)
    taus = []
    m = 1
    while 3 * m <= n:
        taus.append(m * series.cycle_duration_s)
        m *= 2
    return taus


def allan_deviation(
    series: FrequencySeries,
    taus: Sequence[float],
    fractional_of: float | None = None,
) -> list[AllanPoint]:
    """Overlapping Allan deviation of a frequency series.

    sigma_y(tau) = sqrt( <(ybar_{j+m} - ybar_j)^2> / 2 ) with ybar the
    m-cycle sliding averages, m = tau / cycle duration.  Each requested
    tau must be an integer multiple of the cycle duration and at most a
    third of the series span.  ``fractional_of`` divides the result by a
    carrier frequency.
    """
    y = series.freq_hz
    n = y.size
    if n < 3:
        raise DataError(f"series has {n} points; at least 3 are required")
    tau0 = series.cycle_duration_s
    span = n * tau0
    prefix = np.concatenate([[0.0], np.cumsum(y)])
    points = []
    for tau in taus:
        ratio = tau / tau0
        m = round(ratio)
        if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, abs(ratio)):
            raise DataError(f"tau = {tau:.6g} s is not an integer multiple of the cycle duration {tau0:.6g} s")
        if 3 * m > n:
            raise DataError(
                f"insufficient data for tau = {tau:.6g} s: need tau <= span/3 = {span / 3.0:.6g} s"
            )
        averages = (prefix[m:] - prefix[:-m]) / m
        diffs = averages[m:] - averages[:-m]
        var = 0.5 * math.fsum((d * d for d in diffs)) / diffs.size
        sigma = math.sqrt(var)
        if fractional_of is not None:
            sigma /= fractional_of
        points.append(AllanPoint(tau_s=m * tau0, sigma_y=sigma, n_samples=diffs.size, fractional=fractional_of is not None))
    return points


@dataclass(frozen=True)
class ClosureEstimate:
    """The closure statistic of one cycle with its propagated uncertainty.

    sigma_hz is the root-sum-square of the per-transition sigmas, which
    assumes independent estimates; interleaved measurements sharing a
    local oscillator can violate that, so an inflation factor applied at
    construction is recorded with the inputs.  The bound convention is
    |Delta| <= |Delta_hat| + k sigma.
    """

    cycle: ClosureCycle
    delta_hz: float
    sigma_hz: float
    k: float
    inputs: tuple[tuple[str, str, int, float, float], ...]
    sigma_inflation: float = 1.0

    def __post_init__(self):
        if not self.sigma_hz > 0.0:
            raise ValueError("closure sigma must be > 0")
        if not self.k >= 0.0:
            raise ValueError("coverage factor k must be >= 0")

    @property
    def bound_hz(self) -> float:
        return abs(self.delta_hz) + self.k * self.sigma_hz

    def to_dict(self) -> dict:
        return {
            "cycle": self.cycle.name,
            "delta_hz": self.delta_hz,
            "sigma_hz": self.sigma_hz,
            "k": self.k,
            "bound_hz": self.bound_hz,
            "bound_convention": "|delta| <= |delta_hat| + k*sigma",
            "sigma_inflation": self.sigma_inflation,
            "inputs": [
                {"transition": f"{lo}->{up}", "sign": sign, "f_hz": f, "sigma_hz": s}
                for lo, up, sign, f, s in self.inputs
            ],
        }


def closure_estimate(
    cycle: ClosureCycle,
    fits: Mapping[tuple[str, str], tuple[float, float]],
    k: float = 2.0,
    sigma_inflation: float = 1.0,
) -> ClosureEstimate:
    """Signed sum of per-transition frequency estimates around a cycle.

    ``fits`` maps (lower, upper) to (estimate, sigma) in Hz.  The inputs
    may be absolute frequencies or offsets from the linear values; the
    closure statistic is the same because the linear parts cancel.
    """
    if not sigma_inflation >= 1.0:
        raise ValueError("sigma inflation factor must be >= 1")
    terms = []
    variances = []
    inputs = []
    for tr, sign in cycle.steps:
        try:
            f, sigma = fits[tr.pair]
        except KeyError:
            raise KeyError(f"no estimate supplied for transition {tr.name}") from None
        if not sigma > 0.0:
            raise ValueError(f"transition {tr.name}: sigma must be > 0, got {sigma}")
        terms.append(sign * f)
        variances.append(sigma * sigma)
        inputs.append((tr.lower, tr.upper, sign, float(f), float(sigma)))
    return ClosureEstimate(
        cycle=cycle,
        delta_hz=math.fsum(terms),
        sigma_hz=sigma_inflation * math.sqrt(math.fsum(variances)),
        k=k,
        inputs=tuple(inputs),
        sigma_inflation=sigma_inflation,
    )


def sensitivity_projection(
    sigma_cycle_hz: float,
    cycle_time_s: float,
    total_time_s: float,
    n_transitions: int,
    flicker_floor_hz: float = 0.0,
) -> float:
    """Projected closure uncertainty after averaging white noise.

    Each of the n transitions gets a 1/n share of the total time
    (interleaving duty-cycle penalty), so its mean improves as
    sqrt(n t_cycle / T); the root-sum-square over n transitions adds
    another sqrt(n).  A nonzero flicker floor caps how far averaging
    helps (plateau model, no spectral-density machinery behind it).
    """
    if not (sigma_cycle_hz > 0.0 and cycle_time_s > 0.0 and total_time_s > 0.0):
        raise ValueError("sigma, cycle time, and total time must all be > 0")
    if n_transitions < 1:
        raise ValueError("n_transitions must be >= 1")
    if flicker_floor_hz < 0.0:
        raise ValueError("flicker floor must be >= 0")
    cycles_per_transition = total_time_s / (n_transitions * cycle_time_s)
    white = math.sqrt(n_transitions) * sigma_cycle_hz / math.sqrt(cycles_per_transition)
    return max(white, flicker_floor_hz)
