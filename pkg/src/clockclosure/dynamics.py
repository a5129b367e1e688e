"""Density-matrix evolution in the rotating frame of the interrogating fields.

The generator produces

    drho/dt = -i [H(t) + H_nl(rho), rho]
              + sum_k gamma_k (L_k rho L_k^dag - {L_k^dag L_k, rho} / 2)

with H in angular-frequency units (H/hbar), jump operators
L_k = |lower><upper| built from level lifetimes, and an optional
state-dependent diagonal perturbation H_nl.  Counter-rotating terms are
dropped (rotating-wave approximation), which is the clock interrogation
regime: Rabi frequencies are many orders below the optical frequencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import StepSizeError
from .spectra import LevelTable

TWO_PI = 2.0 * math.pi

#: Validation tolerances for a physical density matrix.
TRACE_TOL = 1e-10
HERMITICITY_TOL = 1e-12
POSITIVITY_FLOOR = -1e-10

#: Dimensionless stability bound: dt * (max |H| + max gamma) must stay below this.
STABILITY_LIMIT = 0.1


@dataclass(frozen=True)
class DensityMatrix:
    """An n x n density matrix, validated on construction.

    Hermiticity, unit trace, and numerical positivity are enforced at the
    module tolerances; evolution re-checks them at every public step.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m.view(float))):
            raise ValueError("density matrix contains non-finite entries")
        herm = np.max(np.abs(m - m.conj().T))
        if herm > HERMITICITY_TOL:
            raise ValueError(f"density matrix not Hermitian: max |rho - rho^dag| = {herm:.3e}")
        tr = m.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace deviates from 1 by {abs(tr - 1.0):.3e}")
        lowest = float(np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0])
        if lowest < POSITIVITY_FLOOR:
            raise ValueError(f"density matrix has eigenvalue {lowest:.3e} below the positivity floor")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, dimension: int, index: int) -> "DensityMatrix":
        m = np.zeros((dimension, dimension), dtype=complex)
        m[index, index] = 1.0
        return cls(m)

    @classmethod
    def from_populations(cls, populations: Sequence[float]) -> "DensityMatrix":
        return cls(np.diag(np.asarray(populations, dtype=complex)))

    def population(self, index: int) -> float:
        return float(self.matrix[index, index].real)

    def coherence(self, i: int, j: int) -> complex:
        return complex(self.matrix[i, j])

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


@dataclass(frozen=True)
class DriveTerm:
    """A classical field addressing one transition.

    Rabi frequency and detuning are angular (rad/s); the detuning is
    measured from the unperturbed (linear) transition frequency.  The
    field couples only inside its on/off window.
    """

    lower: str
    upper: str
    rabi_rad_s: float
    detuning_rad_s: float = 0.0
    phase_rad: float = 0.0
    window_s: tuple[float, float] = (0.0, math.inf)

    def __post_init__(self):
        if self.rabi_rad_s < 0.0:
            raise ValueError("Rabi frequency must be >= 0")
        start, end = self.window_s
        if not start < end:
            raise ValueError(f"drive window must have start < end, got {self.window_s}")


@dataclass(frozen=True)
class DecayChannel:
    """Spontaneous decay from one level to another at rate gamma (1/s)."""

    upper: str
    lower: str
    rate_s: float

    def __post_init__(self):
        if not self.rate_s > 0.0:
            raise ValueError("decay rate must be > 0")
        if self.upper == self.lower:
            raise ValueError("decay endpoints must differ")


@dataclass(frozen=True)
class NonlinearModel:
    """Pluggable departure from linear dynamics, two independent knobs.

    ``coupling_hz`` (G) adds a population-conditioned diagonal term:
    level k is shifted by sum_j G[k, j] rho_jj in Hz, evaluated from the
    instantaneous state at every integrator stage.  Matrix indices follow
    the level order of the generator the model is attached to.

    ``anomalies_hz`` shifts a driven transition's line by a fixed amount
    relative to its linear value, keyed by (lower, upper) labels.  This
    kinematic knob produces an exactly known closure violation and is the
    reference input for validating the statistics chain.

    A G of the form G[k, j] = phi_k - phi_j shifts every transition by
    phi_upper - phi_lower, which is level-decomposable and therefore
    invisible to any closure sum; only the non-decomposable part of G
    (for population-symmetric interrogation, its antisymmetric part)
    survives a closure test.
    """

    coupling_hz: np.ndarray | None = None
    anomalies_hz: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        if self.coupling_hz is not None:
            g = np.array(self.coupling_hz, dtype=float)
            if g.ndim != 2 or g.shape[0] != g.shape[1]:
                raise ValueError(f"coupling matrix must be square, got shape {g.shape}")
            if not np.all(np.isfinite(g)):
                raise ValueError("coupling matrix contains non-finite entries")
            g.setflags(write=False)
            object.__setattr__(self, "coupling_hz", g)
        object.__setattr__(self, "anomalies_hz", dict(self.anomalies_hz))

    def anomaly_hz(self, lower: str, upper: str) -> float:
        return float(self.anomalies_hz.get((lower, upper), 0.0))

    @property
    def has_coupling(self) -> bool:
        return self.coupling_hz is not None and bool(np.any(self.coupling_hz))


def nonlinear_shift(model: NonlinearModel, rho: DensityMatrix | np.ndarray) -> np.ndarray:
    """Instantaneous diagonal level shifts in Hz: shift_k = sum_j G[k,j] rho_jj."""
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    pops = np.real(np.diagonal(m)).astype(float)
    if model.coupling_hz is None:
        return np.zeros(pops.size)
    if model.coupling_hz.shape[0] != pops.size:
        raise ValueError(
            f"coupling matrix is {model.coupling_hz.shape[0]}-dimensional, state is {pops.size}-dimensional"
        )
    return model.coupling_hz @ pops


@dataclass(frozen=True)
class _ResolvedDrive:
    lower: int
    upper: int
    rabi_rad_s: float
    phase_rad: float
    t_on: float
    t_off: float

    def active(self, t: float) -> bool:
        return self.t_on <= t < self.t_off


@dataclass(frozen=True)
class _ResolvedDecay:
    upper: int
    lower: int
    rate_s: float


@dataclass(frozen=True)
class EvolutionGenerator:
    """Assembled rotating-frame Lindblad generator over an ordered level subset."""

    labels: tuple[str, ...]
    frame_diag_rad_s: np.ndarray
    drives: tuple[_ResolvedDrive, ...]
    decay_channels: tuple[_ResolvedDecay, ...]
    nonlinear: NonlinearModel | None
    adjacency: frozenset[tuple[str, str]]
    lifetimes_s: tuple[float | None, ...]

    def __post_init__(self):
        diag = np.array(self.frame_diag_rad_s, dtype=float)
        diag.setflags(write=False)
        object.__setattr__(self, "frame_diag_rad_s", diag)

    @property
    def dimension(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"level {label!r} is not part of this generator (levels: {self.labels})") from None

    def rate_scale(self, t: float | None = None) -> float:
        """Conservative bound on max |H|/hbar + max gamma, in rad/s.

        With a time given, only drives active at that instant count;
        otherwise every drive does.
        """
        scale = float(np.max(np.abs(self.frame_diag_rad_s))) if self.dimension else 0.0
        rabi = [d.rabi_rad_s for d in self.drives if t is None or d.active(t)]
        if rabi:
            scale += max(rabi) / 2.0
        if self.nonlinear is not None and self.nonlinear.coupling_hz is not None:
            scale += TWO_PI * float(np.max(np.abs(self.nonlinear.coupling_hz).sum(axis=1)))
        if self.decay_channels:
            scale += max(ch.rate_s for ch in self.decay_channels)
        return scale

    def window_edges(self) -> list[float]:
        edges = set()
        for d in self.drives:
            edges.add(d.t_on)
            if math.isfinite(d.t_off):
                edges.add(d.t_off)
        return sorted(edges)

    def static_hamiltonian(self, t: float) -> np.ndarray:
        """Rotating-frame Hamiltonian (rad/s) at time t, without the nonlinear term."""
        n = self.dimension
        h = np.zeros((n, n), dtype=complex)
        np.fill_diagonal(h, self.frame_diag_rad_s)
        for d in self.drives:
            if d.active(t):
                coupling = 0.5 * d.rabi_rad_s * np.exp(1j * d.phase_rad)
                h[d.upper, d.lower] += coupling
                h[d.lower, d.upper] += np.conj(coupling)
        return h

    def with_drives(self, drives: Sequence[DriveTerm]) -> "EvolutionGenerator":
        """A new generator sharing this one's levels, decay, and nonlinearity."""
        return _assemble(
            labels=self.labels,
            adjacency=self.adjacency,
            drives=tuple(drives),
            decay=self.decay_channels,
            nonlinear=self.nonlinear,
            lifetimes=self.lifetimes_s,
        )

    def _liouvillian(self, t: float) -> np.ndarray:
        """Matrix form of the state-independent part, acting on row-major vec(rho)."""
        n = self.dimension
        eye = np.eye(n)
        h = self.static_hamiltonian(t)
        lv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
        for ch in self.decay_channels:
            jump = np.zeros((n, n))
            jump[ch.lower, ch.upper] = 1.0
            number = np.zeros((n, n))
            number[ch.upper, ch.upper] = 1.0
            lv += ch.rate_s * (np.kron(jump, jump) - 0.5 * np.kron(number, eye) - 0.5 * np.kron(eye, number))
        return lv


def build_generator(
    table: LevelTable,
    subset: Sequence[str],
    drives: Sequence[DriveTerm] = (),
    nonlinear: NonlinearModel | None = None,
    decay_channels: Sequence[DecayChannel] | None = None,
) -> EvolutionGenerator:
    """Assemble a generator for a level subset of a table.

    The rotating frame is anchored per drive: the upper level of each
    driven transition sits at minus the drive detuning (shifted by any
    kinematic anomaly on that transition).  Unless explicit channels are
    given, every subset level with a known lifetime decays to the lowest
    subset level at 1/lifetime.
    """
    labels = tuple(subset)
    if len(set(labels)) != len(labels):
        raise ValueError("subset labels must be unique")
    levels = [table.level(lab) for lab in labels]
    index = {lab: i for i, lab in enumerate(labels)}
    energies = {lab: lv.energy_cm1 for lab, lv in zip(labels, levels)}
    lifetimes = tuple(lv.lifetime_s for lv in levels)

    adjacency = frozenset(
        tr.pair for tr in table.transitions if tr.lower in index and tr.upper in index
    )

    # one frame detuning per driven pair; anomalies offset the line it is measured from
    pair_detuning: dict[tuple[str, str], float] = {}
    for d in drives:
        if (d.lower, d.upper) not in adjacency:
            raise ValueError(
                f"drive on {d.lower}->{d.upper}: no transition record connects these subset levels"
            )
        anomaly = nonlinear.anomaly_hz(d.lower, d.upper) if nonlinear is not None else 0.0
        value = d.detuning_rad_s - TWO_PI * anomaly
        prev = pair_detuning.setdefault((d.lower, d.upper), value)
        if not math.isclose(prev, value, rel_tol=0.0, abs_tol=1e-9 * max(1.0, abs(prev))):
            raise ValueError(
                f"drives on {d.lower}->{d.upper} disagree on detuning; one rotating frame per transition"
            )

    if decay_channels is None:
        ground = min(labels, key=lambda lab: energies[lab])
        resolved_decay = tuple(
            _ResolvedDecay(upper=index[lab], lower=index[ground], rate_s=1.0 / lt)
            for lab, lt in zip(labels, lifetimes)
            if lab != ground and lt is not None
        )
    else:
        per_upper: dict[str, float] = {}
        resolved = []
        for ch in decay_channels:
            for end in (ch.upper, ch.lower):
                if end not in index:
                    raise ValueError(f"decay channel {ch.upper}->{ch.lower}: {end!r} is not in the subset")
            if not energies[ch.upper] > energies[ch.lower]:
                raise ValueError(f"decay channel {ch.upper}->{ch.lower}: must decay downward in energy")
            lt = lifetimes[index[ch.upper]]
            if lt is None:
                raise ValueError(f"decay requested from {ch.upper!r} but that level has no lifetime")
            per_upper[ch.upper] = per_upper.get(ch.upper, 0.0) + ch.rate_s
            resolved.append(_ResolvedDecay(upper=index[ch.upper], lower=index[ch.lower], rate_s=ch.rate_s))
        for upper, total in per_upper.items():
            lt = lifetimes[index[upper]]
            if not math.isclose(total, 1.0 / lt, rel_tol=1e-6):
                raise ValueError(
                    f"decay rates out of {upper!r} sum to {total:.6g}/s, expected 1/lifetime = {1.0 / lt:.6g}/s"
                )
        resolved_decay = tuple(resolved)

    if nonlinear is not None and nonlinear.coupling_hz is not None:
        if nonlinear.coupling_hz.shape[0] != len(labels):
            raise ValueError(
                f"nonlinear coupling matrix is {nonlinear.coupling_hz.shape[0]}-dimensional, "
                f"subset has {len(labels)} levels"
            )

    return _assemble(
        labels=labels,
        adjacency=adjacency,
        drives=tuple(drives),
        decay=resolved_decay,
        nonlinear=nonlinear,
        lifetimes=lifetimes,
        pair_detuning=pair_detuning,
    )


def _assemble(
    labels: tuple[str, ...],
    adjacency: frozenset[tuple[str, str]],
    drives: Sequence[DriveTerm] | tuple[_ResolvedDrive, ...],
    decay: tuple[_ResolvedDecay, ...],
    nonlinear: NonlinearModel | None,
    lifetimes: tuple[float | None, ...],
    pair_detuning: dict[tuple[str, str], float] | None = None,
) -> EvolutionGenerator:
    index = {lab: i for i, lab in enumerate(labels)}

    raw_drives = [d for d in drives if isinstance(d, DriveTerm)]
    if pair_detuning is None:
        pair_detuning = {}
        for d in raw_drives:
            if (d.lower, d.upper) not in adjacency:
                raise ValueError(
                    f"drive on {d.lower}->{d.upper}: no transition record connects these subset levels"
                )
            anomaly = nonlinear.anomaly_hz(d.lower, d.upper) if nonlinear is not None else 0.0
            value = d.detuning_rad_s - TWO_PI * anomaly
            prev = pair_detuning.setdefault((d.lower, d.upper), value)
            if not math.isclose(prev, value, rel_tol=0.0, abs_tol=1e-9 * max(1.0, abs(prev))):
                raise ValueError(
                    f"drives on {d.lower}->{d.upper} disagree on detuning; one rotating frame per transition"
                )

    # propagate frame offsets over the driven-pair graph; loops have no
    # consistent time-independent frame and are rejected
    diag = {lab: None for lab in labels}
    edges: dict[str, list[tuple[str, float]]] = {lab: [] for lab in labels}
    for (lo, up), delta in pair_detuning.items():
        edges[lo].append((up, -delta))
        edges[up].append((lo, +delta))
    for root in labels:
        if diag[root] is not None:
            continue
        diag[root] = 0.0
        stack = [root]
        while stack:
            lab = stack.pop()
            for other, offset in edges[lab]:
                value = diag[lab] + offset
                if diag[other] is None:
                    diag[other] = value
                    stack.append(other)
                elif not math.isclose(diag[other], value, rel_tol=0.0, abs_tol=1e-9):
                    raise ValueError("driven transitions form a closed loop; rotating frame undefined")

    resolved_drives = []
    for d in drives:
        if isinstance(d, _ResolvedDrive):
            resolved_drives.append(d)
        else:
            resolved_drives.append(
                _ResolvedDrive(
                    lower=index[d.lower],
                    upper=index[d.upper],
                    rabi_rad_s=d.rabi_rad_s,
                    phase_rad=d.phase_rad,
                    t_on=d.window_s[0],
                    t_off=d.window_s[1],
                )
            )

    return EvolutionGenerator(
        labels=labels,
        frame_diag_rad_s=np.array([diag[lab] for lab in labels], dtype=float),
        drives=tuple(resolved_drives),
        decay_channels=decay,
        nonlinear=nonlinear,
        adjacency=adjacency,
        lifetimes_s=lifetimes,
    )


def _nl_coupling_2pi(gen: EvolutionGenerator) -> np.ndarray | None:
    if gen.nonlinear is not None and gen.nonlinear.has_coupling:
        return TWO_PI * gen.nonlinear.coupling_hz
    return None


def _rhs(lv: np.ndarray, coupling_2pi: np.ndarray | None, n: int, v: np.ndarray) -> np.ndarray:
    out = lv @ v
    if coupling_2pi is not None:
        rho = v.reshape(n, n)
        d = coupling_2pi @ np.real(np.diagonal(rho))
        out += (-1j * (d[:, None] - d[None, :]) * rho).reshape(-1)
    return out


def _rk4_vec(lv: np.ndarray, coupling_2pi: np.ndarray | None, n: int, v: np.ndarray, dt: float) -> np.ndarray:
    k1 = _rhs(lv, coupling_2pi, n, v)
    k2 = _rhs(lv, coupling_2pi, n, v + (0.5 * dt) * k1)
    k3 = _rhs(lv, coupling_2pi, n, v + (0.5 * dt) * k2)
    k4 = _rhs(lv, coupling_2pi, n, v + dt * k3)
    out = (v + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).reshape(n, n)
    out = 0.5 * (out + out.conj().T)
    return out.reshape(-1)


def step(rho: DensityMatrix, gen: EvolutionGenerator, t: float, dt: float) -> DensityMatrix:
    """One classical 4th-order Runge-Kutta step of the master equation.

    Drives are treated as constant across the step (sampled at its
    midpoint); the nonlinear term is re-evaluated at every stage from the
    stage's state.  The output is re-Hermitized and re-validated.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    scale = gen.rate_scale(t + 0.5 * dt)
    if dt * scale >= STABILITY_LIMIT:
        raise StepSizeError(
            f"dt = {dt:.3e} s violates the stability bound: dt * (max|H| + max gamma) = "
            f"{dt * scale:.3f} >= {STABILITY_LIMIT}"
        )
    if rho.dimension != gen.dimension:
        raise ValueError(f"state dimension {rho.dimension} does not match generator dimension {gen.dimension}")
    lv = gen._liouvillian(t + 0.5 * dt)
    v = _rk4_vec(lv, _nl_coupling_2pi(gen), gen.dimension, rho.matrix.reshape(-1), dt)
    return DensityMatrix(v.reshape(gen.dimension, gen.dimension))


def evolve(
    rho: DensityMatrix,
    gen: EvolutionGenerator,
    duration: float,
    dt: float,
    t0: float = 0.0,
) -> DensityMatrix:
    """Repeated RK4 stepping over a time span, aligned to drive windows.

    The span is split at every drive on/off edge and each piece is
    integrated with uniform steps no longer than dt, so no step straddles
    a field switching on or off.
    """
    if duration < 0.0:
        raise ValueError(f"duration must be >= 0, got {duration}")
    if duration == 0.0:
        return rho
    if not dt > 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    t_end = t0 + duration
    cuts = [t0] + [e for e in gen.window_edges() if t0 < e < t_end] + [t_end]
    n = gen.dimension
    coupling = _nl_coupling_2pi(gen)
    v = rho.matrix.reshape(-1)
    for a, b in zip(cuts[:-1], cuts[1:]):
        span = b - a
        steps = max(1, math.ceil(span / dt - 1e-12))
        h = span / steps
        scale = gen.rate_scale(a + 0.5 * h)
        if h * scale >= STABILITY_LIMIT:
            raise StepSizeError(
                f"step {h:.3e} s violates the stability bound on [{a:.3e}, {b:.3e}] s: "
                f"dt * (max|H| + max gamma) = {h * scale:.3f} >= {STABILITY_LIMIT}"
            )
        lv = gen._liouvillian(a + 0.5 * h)
        for _ in range(steps):
            v = _rk4_vec(lv, coupling, n, v, h)
    return DensityMatrix(v.reshape(n, n))
