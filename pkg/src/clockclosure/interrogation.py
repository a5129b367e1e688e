"""Simulated clock spectroscopy: Ramsey sequences, fringe scans, lineshape
fits, and a two-point servo emitting per-cycle frequency estimates.

Frequencies handled here are offsets from the unperturbed (linear)
transition frequency; the simulation lives entirely in the rotating
frame, so the absolute optical frequency never enters and sub-Hz
arithmetic is not degraded by 1e14-Hz carriers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import DensityMatrix, DriveTerm, EvolutionGenerator, TWO_PI, evolve
from .errors import DataError, FitError, ServoLockError

HALF_PI = 0.5 * math.pi

#: Target phase advance per integrator step used by the automatic step chooser.
_PHASE_PER_STEP = 0.05
_MIN_PULSE_STEPS = 24
_MIN_FREE_STEPS = 16


@dataclass(frozen=True)
class RamseyProtocol:
    """A pi/2 - free evolution - pi/2 sequence on one transition.

    The pulse area rabi_rad_s * pulse_time_s must equal pi/2 within
    ``pulse_area_tol`` (relative).  ``initial`` names the level the atoms
    are prepared in; the default is the transition's lower level.
    """

    lower: str
    upper: str
    pulse_time_s: float
    free_time_s: float
    rabi_rad_s: float
    initial: str = "lower"
    pulse_area_tol: float = 1e-3

    def __post_init__(self):
        if not self.pulse_time_s > 0.0:
            raise ValueError("pulse time must be > 0")
        if not self.free_time_s > 0.0:
            raise ValueError("free-evolution time must be > 0")
        area = self.rabi_rad_s * self.pulse_time_s
        if abs(area - HALF_PI) > self.pulse_area_tol * HALF_PI:
            raise ValueError(
                f"pulse area {area:.6g} rad is not pi/2 within tolerance {self.pulse_area_tol}"
            )

    @classmethod
    def ideal(
        cls, lower: str, upper: str, free_time_s: float, pulse_time_s: float, initial: str = "lower"
    ) -> "RamseyProtocol":
        """Protocol with the Rabi frequency set for an exact pi/2 area."""
        return cls(
            lower=lower,
            upper=upper,
            pulse_time_s=pulse_time_s,
            free_time_s=free_time_s,
            rabi_rad_s=HALF_PI / pulse_time_s,
            initial=initial,
        )

    @property
    def cycle_time_s(self) -> float:
        return 2.0 * self.pulse_time_s + self.free_time_s

    @property
    def fringe_period_hz(self) -> float:
        return 1.0 / self.free_time_s

    @property
    def pair(self) -> tuple[str, str]:
        return (self.lower, self.upper)


@dataclass(frozen=True)
class FringeCurve:
    """Sampled excitation probability versus detuning.

    ``n_atoms[i]`` is the number of detections behind point i; 0 marks
    the infinite-atom (noise-free) limit.
    """

    detunings_hz: np.ndarray
    excitation: np.ndarray
    n_atoms: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.detunings_hz, dtype=float)
        p = np.asarray(self.excitation, dtype=float)
        n = np.asarray(self.n_atoms, dtype=int)
        if not (d.size == p.size == n.size):
            raise ValueError("fringe curve columns must have equal length")
        if d.size == 0:
            raise ValueError("fringe curve must contain at least one point")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(p))):
            raise ValueError("fringe curve contains non-finite entries")
        if not np.all(np.diff(d) > 0.0):
            raise ValueError("detunings must be strictly increasing")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("excitation probabilities must lie in [0, 1]")
        if np.any(n < 0):
            raise ValueError("sample counts must be >= 0")
        for name, arr in (("detunings_hz", d), ("excitation", p), ("n_atoms", n)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.detunings_hz.size


@dataclass(frozen=True)
class FitResult:
    """Fitted fringe parameters and their covariance-derived uncertainty."""

    center_hz: float
    center_sigma_hz: float
    contrast: float
    asymmetry_per_hz: float
    period_hz: float
    residual_norm: float
    n_iterations: int

    def __post_init__(self):
        if not self.contrast > 0.0:
            raise ValueError(f"fitted contrast must be positive, got {self.contrast:.3g}")
        if self.center_sigma_hz < 0.0:
            raise ValueError("uncertainty must be >= 0")


@dataclass(frozen=True)
class FrequencySeries:
    """Per-cycle frequency estimates for one transition.

    ``freq_hz`` holds offsets from the linear transition frequency.
    ``cycles`` are global servo cycle indices, so interleaved runs keep
    their relative timing.
    """

    lower: str
    upper: str
    cycles: np.ndarray
    timestamps_s: np.ndarray
    freq_hz: np.ndarray
    cycle_duration_s: float

    def __post_init__(self):
        c = np.asarray(self.cycles, dtype=int)
        t = np.asarray(self.timestamps_s, dtype=float)
        f = np.asarray(self.freq_hz, dtype=float)
        if not (c.size == t.size == f.size):
            raise ValueError("series columns must have equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise ValueError("timestamps must be strictly increasing")
        if not self.cycle_duration_s > 0.0:
            raise ValueError("cycle duration must be > 0")
        for name, arr in (("cycles", c), ("timestamps_s", t), ("freq_hz", f)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.freq_hz.size

    @property
    def pair(self) -> tuple[str, str]:
        return (self.lower, self.upper)

    @property
    def name(self) -> str:
        return f"{self.lower}->{self.upper}"

    def summarize(self, warmup: int = 0) -> tuple[float, float, int]:
        """Mean offset, standard error of the mean, and count after a warm-up cut."""
        kept = self.freq_hz[warmup:]
        if kept.size < 2:
            raise ValueError(f"need at least 2 cycles after warm-up, have {kept.size}")
        mean = float(np.mean(kept))
        sem = float(np.std(kept, ddof=1) / math.sqrt(kept.size))
        return mean, sem, int(kept.size)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cycle", "timestamp_s", "transition", "freq_hz"])
            for c, t, f in zip(self.cycles, self.timestamps_s, self.freq_hz):
                writer.writerow([int(c), repr(float(t)), self.name, repr(float(f))])


def read_series_csv(path) -> dict[str, FrequencySeries]:
    """Load exported series, one FrequencySeries per transition name."""
    path = Path(path)
    groups: dict[str, list[tuple[int, float, float]]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(row for row in fh if not row.lstrip().startswith("#"))
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["cycle", "timestamp_s", "transition", "freq_hz"]:
                raise DataError(f"{path.name}: expected header cycle,timestamp_s,transition,freq_hz")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    cyc, ts, name, f = int(row[0]), float(row[1]), row[2].strip(), float(row[3])
                except (ValueError, IndexError):
                    raise DataError(f"{path.name}:{lineno}: malformed series row {row!r}") from None
                groups.setdefault(name, []).append((cyc, ts, f))
    except OSError as exc:
        raise DataError(f"cannot read series {path}: {exc}") from exc
    if not groups:
        raise DataError(f"{path.name}: no data rows")
    out = {}
    for name, entries in groups.items():
        entries.sort(key=lambda e: e[1])
        if "->" in name:
            lower, upper = name.split("->", 1)
        else:
            lower, upper = name, name + "*"
        times = np.array([e[1] for e in entries])
        duration = float(np.median(np.diff(times))) if len(entries) > 1 else 1.0
        out[name] = FrequencySeries(
            lower=lower,
            upper=upper,
            cycles=np.array([e[0] for e in entries]),
            timestamps_s=times,
            freq_hz=np.array([e[2] for e in entries]),
            cycle_duration_s=duration,
        )
    return out


def _segment_steps(rate_rad_s: float, span_s: float, floor: int) -> int:
    return max(floor, math.ceil(rate_rad_s * span_s / _PHASE_PER_STEP))


def ramsey_probability(
    protocol: RamseyProtocol,
    gen: EvolutionGenerator,
    detuning_hz: float,
    dt: float | None = None,
) -> float:
    """Excitation probability after pi/2 - T - pi/2 at the given detuning.

    The sequence is integrated as full density-matrix evolution on the
    generator's level set, so decay and any nonlinearity act throughout.
    When dt is omitted a step size is chosen from the fastest rate in
    each segment.
    """
    if protocol.pair not in gen.adjacency:
        raise ValueError(f"protocol transition {protocol.lower}->{protocol.upper} is not driveable in this generator")
    tp, T = protocol.pulse_time_s, protocol.free_time_s
    delta = TWO_PI * detuning_hz
    drives = [
        DriveTerm(protocol.lower, protocol.upper, protocol.rabi_rad_s, delta, window_s=(0.0, tp)),
        DriveTerm(protocol.lower, protocol.upper, protocol.rabi_rad_s, delta, window_s=(tp + T, 2.0 * tp + T)),
    ]
    seq = gen.with_drives(drives)
    initial = protocol.lower if protocol.initial == "lower" else protocol.initial
    rho = DensityMatrix.pure(seq.dimension, seq.index(initial))
    upper = seq.index(protocol.upper)

    if dt is not None:
        rho = evolve(rho, seq, 2.0 * tp + T, dt)
        return float(rho.population(upper))

    n_pulse = _segment_steps(seq.rate_scale(0.5 * tp), tp, _MIN_PULSE_STEPS)
    n_free = _segment_steps(seq.rate_scale(tp + 0.5 * T), T, _MIN_FREE_STEPS)
    rho = evolve(rho, seq, tp, tp / n_pulse)
    rho = evolve(rho, seq, T, T / n_free, t0=tp)
    rho = evolve(rho, seq, tp, tp / n_pulse, t0=tp + T)
    return float(rho.population(upper))


def scan_fringe(
    protocol: RamseyProtocol,
    gen: EvolutionGenerator,
    detunings_hz: Sequence[float],
    n_atoms: int | None,
    seed: int,
    dt: float | None = None,
) -> FringeCurve:
    """Sample the Ramsey fringe at the given detunings.

    With ``n_atoms`` set, each point is a binomial draw of that many
    detections at the true probability (quantum projection noise); the
    per-point random streams depend only on (seed, point index), so the
    curve is reproducible regardless of evaluation order.  ``n_atoms =
    None`` returns the noise-free probabilities.
    """
    if len(detunings_hz) == 0:
        raise ValueError("at least one detuning point is required")
    if n_atoms is not None and n_atoms < 1:
        raise ValueError(f"n_atoms must be >= 1 (or None for the noise-free limit), got {n_atoms}")
    probs = np.array(
        [ramsey_probability(protocol, gen, d, dt=dt) for d in detunings_hz], dtype=float
    )
    probs = np.clip(probs, 0.0, 1.0)
    if n_atoms is None:
        return FringeCurve(np.asarray(detunings_hz, float), probs, np.zeros(len(probs), dtype=int))
    sampled = np.empty_like(probs)
    for i, p in enumerate(probs):
        rng = np.random.default_rng((int(seed), i))
        sampled[i] = rng.binomial(n_atoms, p) / n_atoms
    return FringeCurve(np.asarray(detunings_hz, float), sampled, np.full(len(probs), n_atoms, dtype=int))


def _fringe_model(theta: np.ndarray, d: np.ndarray, asymmetric: bool):
    if asymmetric:
        center, baseline, contrast, period_time, slope = theta
    else:
        center, baseline, contrast, period_time = theta
        slope = 0.0
    x = TWO_PI * period_time * (d - center)
    cos_x, sin_x = np.cos(x), np.sin(x)
    model = baseline + 0.5 * contrast * cos_x + slope * (d - center)
    jac = np.empty((d.size, theta.size))
    jac[:, 0] = 0.5 * contrast * sin_x * TWO_PI * period_time - slope
    jac[:, 1] = 1.0
    jac[:, 2] = 0.5 * cos_x
    jac[:, 3] = -0.5 * contrast * sin_x * TWO_PI * (d - center)
    if asymmetric:
        jac[:, 4] = d - center
    return model, jac


def fit_center(curve: FringeCurve, free_time_s: float, model: str = "symmetric", max_iter: int = 100) -> FitResult:
    """Weighted least-squares fit of a cosine fringe to a scanned curve.

    The model is baseline + (contrast/2) cos(2 pi (d - center) T), with an
    optional linear asymmetry term slope * (d - center); T is a free
    parameter initialized at the protocol's free-evolution time.  Fitting
    is damped Gauss-Newton with the analytic Jacobian; weights come from
    the binomial sampling uncertainty of each point.  The reported center
    is folded to within half a period of zero detuning.
    """
    if model not in ("symmetric", "asymmetric"):
        raise ValueError(f"model must be 'symmetric' or 'asymmetric', got {model!r}")
    if not free_time_s > 0.0:
        raise ValueError("free_time_s must be > 0")
    asymmetric = model == "asymmetric"
    d = curve.detunings_hz
    y = curve.excitation
    if d.size < 5:
        raise ValueError(f"need at least 5 points to fit, got {d.size}")
    span = d[-1] - d[0]
    if span < 0.5 / free_time_s:
        raise ValueError(
            f"scan span {span:.3g} Hz covers less than half a fringe (period {1.0 / free_time_s:.3g} Hz)"
        )

    weighted = bool(np.any(curve.n_atoms > 0))
    if weighted:
        n = np.maximum(curve.n_atoms, 1)
        p_safe = np.clip(y, 0.5 / n, 1.0 - 0.5 / n)
        sigma2 = p_safe * (1.0 - p_safe) / n
        w = np.where(curve.n_atoms > 0, 1.0 / sigma2, 1.0 / np.max(sigma2))
    else:
        w = np.ones_like(y)
    sqrt_w = np.sqrt(w)

    baseline0 = float(np.mean(y))
    contrast0 = max(float(np.max(y) - np.min(y)), 1e-3)
    center0 = float(d[int(np.argmax(y))])
    theta = np.array([center0, baseline0, contrast0, free_time_s] + ([0.0] if asymmetric else []))

    def cost(th):
        m, _ = _fringe_model(th, d, asymmetric)
        return float(np.sum(w * (y - m) ** 2))

    lam = 1e-3
    current = cost(theta)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        m, jac = _fringe_model(theta, d, asymmetric)
        r = sqrt_w * (y - m)
        jw = sqrt_w[:, None] * jac
        grad = jw.T @ r
        normal = jw.T @ jw
        diag = np.diag(normal).copy()
        if np.any(diag <= 0.0) or not np.all(np.isfinite(normal)):
            raise FitError("degenerate design matrix: a fit parameter has no leverage on the data")
        accepted = False
        while lam < 1e12:
            try:
                step_vec = np.linalg.solve(normal + lam * np.diag(diag), grad)
            except np.linalg.LinAlgError:
                raise FitError("degenerate design matrix: normal equations are singular") from None
            trial = theta + step_vec
            trial_cost = cost(trial)
            if math.isfinite(trial_cost) and trial_cost <= current:
                converged = (current - trial_cost) <= 1e-12 * (current + 1e-30) or np.all(
                    np.abs(step_vec) <= 1e-10 * (np.abs(theta) + 1e-12)
                )
                theta, current = trial, trial_cost
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            converged = True  # damping exhausted at a (local) minimum
        if converged:
            break
    else:
        raise FitError(f"fit did not converge within {max_iter} iterations")

    center, _, contrast, period_time = theta[:4]
    slope = theta[4] if asymmetric else 0.0
    if abs(period_time) < 1e-12:
        raise FitError("fit collapsed to zero fringe frequency")
    if contrast < 0.0:  # cosine sign flip is a half-period shift
        contrast = -contrast
        center += 0.5 / period_time
    period_hz = 1.0 / abs(period_time)
    center -= round(center / period_hz) * period_hz

    m, jac = _fringe_model(theta, d, asymmetric)
    resid = y - m
    dof = max(d.size - theta.size, 1)
    try:
        cov = np.linalg.inv((sqrt_w[:, None] * jac).T @ (sqrt_w[:, None] * jac))
    except np.linalg.LinAlgError:
        raise FitError("degenerate design matrix: covariance is singular") from None
    if not np.all(np.isfinite(cov)) or not cov[0, 0] > 0.0:
        raise FitError("degenerate design matrix: the center is unconstrained by the data")
    if not weighted:
        cov = cov * (float(np.sum(resid**2)) / dof)
    sigma_center = math.sqrt(max(float(cov[0, 0]), 0.0))

    return FitResult(
        center_hz=float(center),
        center_sigma_hz=sigma_center,
        contrast=float(min(contrast, 1.0)),
        asymmetry_per_hz=float(slope),
        period_hz=float(period_hz),
        residual_norm=float(np.linalg.norm(sqrt_w * resid)),
        n_iterations=n_iter,
    )


@dataclass(frozen=True)
class ServoSettings:
    """Two-point lock parameters."""

    gain: float = 0.5
    n_cycles: int = 100
    probe_offset_hz: float | None = None

    def __post_init__(self):
        if not 0.0 < self.gain <= 1.0:
            raise ValueError(f"gain must lie in (0, 1], got {self.gain}")
        if self.n_cycles < 1:
            raise ValueError("n_cycles must be >= 1")


@dataclass(frozen=True)
class NoiseSettings:
    """Measurement noise: projection noise from n_atoms detections plus
    optional white frequency noise of the local oscillator, per cycle."""

    n_atoms: int | None = None
    white_sigma_hz: float = 0.0

    def __post_init__(self):
        if self.n_atoms is not None and self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1 or None for noise-free readout")
        if self.white_sigma_hz < 0.0:
            raise ValueError("white noise sigma must be >= 0")


def run_servo(
    protocol: RamseyProtocol,
    gen: EvolutionGenerator,
    servo: ServoSettings,
    noise: NoiseSettings,
    seed: int,
    dt: float | None = None,
) -> FrequencySeries:
    """Lock to one transition; see run_interleaved_servo for the mechanics."""
    return run_interleaved_servo([protocol], gen, servo, noise, seed, dt=dt)[0]


def run_interleaved_servo(
    protocols: Sequence[RamseyProtocol],
    gen: EvolutionGenerator,
    servo: ServoSettings,
    noise: NoiseSettings | Sequence[NoiseSettings],
    seed: int,
    dead_time_s: float = 0.0,
    dt: float | None = None,
) -> list[FrequencySeries]:
    """Round-robin two-point lock over several transitions.

    Each servo cycle probes one transition at estimate +/- offset (default
    1/(4T), the maximal-slope points), converts the population difference
    into an instantaneous line-center estimate, and applies a gain-scaled
    correction to that transition's local-oscillator estimate.  Cycle k
    interrogates protocol k mod n, so per-transition cycle counts differ
    by at most one.  The emitted estimates are the per-cycle instantaneous
    values, which are statistically independent from cycle to cycle.

    A transition whose estimate wanders half a fringe from where it
    started has lost the lock; this aborts the run with the cycle index.
    Per-transition noise settings may be given as a sequence matching the
    protocols (atom numbers can differ between lines).
    """
    if not protocols:
        raise ValueError("at least one protocol is required")
    if dead_time_s < 0.0:
        raise ValueError("dead time must be >= 0")
    if isinstance(noise, NoiseSettings):
        noises = [noise] * len(protocols)
    else:
        noises = list(noise)
        if len(noises) != len(protocols):
            raise ValueError(f"got {len(noises)} noise settings for {len(protocols)} protocols")
    rng = np.random.default_rng(int(seed))
    n_tr = len(protocols)
    estimates = [0.0] * n_tr
    records: list[list[tuple[int, float, float]]] = [[] for _ in protocols]
    t_now = 0.0
    round_duration = sum(p.cycle_time_s + dead_time_s for p in protocols)

    for k in range(servo.n_cycles):
        i = k % n_tr
        p = protocols[i]
        nz = noises[i]
        offset = servo.probe_offset_hz if servo.probe_offset_hz is not None else 0.25 / p.free_time_s
        lo_error = rng.normal(0.0, nz.white_sigma_hz) if nz.white_sigma_hz > 0.0 else 0.0
        p_low = ramsey_probability(p, gen, estimates[i] - offset + lo_error, dt=dt)
        p_high = ramsey_probability(p, gen, estimates[i] + offset + lo_error, dt=dt)
        if nz.n_atoms is not None:
            p_low = rng.binomial(nz.n_atoms, min(max(p_low, 0.0), 1.0)) / nz.n_atoms
            p_high = rng.binomial(nz.n_atoms, min(max(p_high, 0.0), 1.0)) / nz.n_atoms
        # discriminator: P(e + off) - P(e - off) ~ -sin(2 pi T e) for the
        # half-contrast probe points; invert with the nominal slope
        measured = estimates[i] + (p_high - p_low) / (TWO_PI * p.free_time_s)
        records[i].append((k, t_now, measured))
        estimates[i] += servo.gain * (measured - estimates[i])
        if abs(estimates[i]) >= 0.5 / p.free_time_s:
            raise ServoLockError(
                f"servo on {p.lower}->{p.upper} wandered {estimates[i]:+.3g} Hz from its starting "
                f"estimate, at least half a fringe ({0.5 / p.free_time_s:.3g} Hz), at cycle {k}",
                cycle_index=k,
            )
        t_now += p.cycle_time_s + dead_time_s

    out = []
    for p, recs in zip(protocols, records):
        out.append(
            FrequencySeries(
                lower=p.lower,
                upper=p.upper,
                cycles=np.array([r[0] for r in recs], dtype=int),
                timestamps_s=np.array([r[1] for r in recs]),
                freq_hz=np.array([r[2] for r in recs]),
                cycle_duration_s=round_duration if n_tr > 1 else p.cycle_time_s + dead_time_s,
            )
        )
    return out
