"""Scenario configs and the end-to-end closure-test runner.

A scenario selects a closure cycle from a level table and either
propagates tabulated measured frequencies through the closure estimator
("static" mode) or runs the full interleaved servo simulation on every
cycle transition ("simulate" mode), producing a JSON report plus
plot-ready CSV data.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .dynamics import NonlinearModel, build_generator
from .errors import ConfigError, DataError, SimulationError
from .interrogation import (
    FitResult,
    FringeCurve,
    FrequencySeries,
    NoiseSettings,
    RamseyProtocol,
    ServoSettings,
    fit_center,
    run_interleaved_servo,
    scan_fringe,
)
from .spectra import (
    ClosureCycle,
    LevelTable,
    load_level_table,
    transition_frequency,
    vacuum_wavelength,
)
from .stats import AllanPoint, ClosureEstimate, allan_deviation, closure_estimate, default_taus

DATA_ENV_VAR = "CLOCKCLOSURE_DATA"


def bundled_data_dir() -> Path:
    return Path(__file__).resolve().parent / "data"


def resolve_data_path(name, relative_to: Path | None = None) -> Path:
    """Locate a data file: absolute, relative to a directory, the
    CLOCKCLOSURE_DATA directory, or the bundled data set, in that order."""
    p = Path(name)
    if p.is_absolute():
        if p.exists():
            return p
        raise DataError(f"data file not found: {p}")
    candidates = []
    if relative_to is not None:
        candidates.append(Path(relative_to) / p)
    candidates.append(Path.cwd() / p)
    env = os.environ.get(DATA_ENV_VAR)
    if env:
        candidates.append(Path(env) / p)
    candidates.append(bundled_data_dir() / p)
    for c in candidates:
        if c.exists():
            return c.resolve()
    tried = ", ".join(str(c) for c in candidates)
    raise DataError(f"data file {name!r} not found (tried: {tried})")


class _Section:
    """Dict wrapper that tracks consumed keys and reports precise field paths."""

    def __init__(self, data: Mapping[str, Any], path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or '<root>'}: expected a table")
        self._data = data
        self._path = path
        self._seen: set[str] = set()

    def _label(self, key: str) -> str:
        return f"{self._path}.{key}" if self._path else key

    def take(self, key: str, kind, default=...):
        self._seen.add(key)
        if key not in self._data:
            if default is ...:
                raise ConfigError(f"{self._label(key)}: required field is missing")
            return default
        value = self._data[key]
        if kind in (int, float) and isinstance(value, bool):
            raise ConfigError(f"{self._label(key)}: expected a number, got a boolean")
        if kind is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, kind):
            raise ConfigError(f"{self._label(key)}: expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}")
        return value

    def section(self, key: str, default: dict | None = None) -> "_Section":
        self._seen.add(key)
        data = self._data.get(key, default if default is not None else {})
        return _Section(data, self._label(key))

    def raw(self, key: str, default=None):
        self._seen.add(key)
        return self._data.get(key, default)

    def keys(self):
        return self._data.keys()

    def close(self):
        unknown = sorted(set(self._data) - self._seen)
        if unknown:
            raise ConfigError(f"{self._path or '<root>'}: unknown key(s): {', '.join(unknown)}")


def _positive(value, path, strict=True):
    if not math.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = ">" if strict else ">="
        raise ConfigError(f"{path}: must be {bound} 0 and finite, got {value}")
    return value


@dataclass(frozen=True)
class InterrogationSettings:
    """Per-scenario interrogation defaults; individual transitions may
    override the timing fields."""

    free_time_s: float = 0.5
    pulse_time_s: float = 0.005
    n_atoms: int = 1000
    n_cycles: int = 180
    gain: float = 0.5
    probe_offset_hz: float | None = None
    white_sigma_hz: float = 0.0
    dead_time_s: float = 0.0
    warmup_cycles: int = 10
    fringe_points: int = 25
    fringe_span_hz: float | None = None
    fit_model: str = "symmetric"
    per_transition: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def timing_for(self, name: str) -> tuple[float, float]:
        override = self.per_transition.get(name, {})
        return (
            float(override.get("free_time_s", self.free_time_s)),
            float(override.get("pulse_time_s", self.pulse_time_s)),
        )

    def n_atoms_for(self, name: str) -> int:
        return int(self.per_transition.get(name, {}).get("n_atoms", self.n_atoms))


@dataclass(frozen=True)
class StatsSettings:
    k: float = 2.0
    sigma_inflation: float = 1.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario description; see the bundled TOML files for the format."""

    name: str
    mode: str
    levels_path: Path
    cycle_pairs: tuple[tuple[str, str], ...]
    seed: int
    interrogation: InterrogationSettings = InterrogationSettings()
    epsilon_hz: Mapping[str, float] = field(default_factory=dict)
    coupling_hz: tuple[tuple[float, ...], ...] | None = None
    coupling_levels: tuple[str, ...] | None = None
    stats: StatsSettings = StatsSettings()
    static_overrides: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    out_dir: str = "clockclosure-out"
    config_path: Path | None = None
    config_bytes: bytes | None = None

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def echo(self) -> dict:
        """JSON-safe copy of every setting that influenced the run."""
        return {
            "name": self.name,
            "mode": self.mode,
            "levels": str(self.levels_path),
            "cycle_transitions": [list(p) for p in self.cycle_pairs],
            "seed": self.seed,
            "interrogation": {
                "free_time_s": self.interrogation.free_time_s,
                "pulse_time_s": self.interrogation.pulse_time_s,
                "n_atoms": self.interrogation.n_atoms,
                "n_cycles": self.interrogation.n_cycles,
                "gain": self.interrogation.gain,
                "probe_offset_hz": self.interrogation.probe_offset_hz,
                "white_sigma_hz": self.interrogation.white_sigma_hz,
                "dead_time_s": self.interrogation.dead_time_s,
                "warmup_cycles": self.interrogation.warmup_cycles,
                "fringe_points": self.interrogation.fringe_points,
                "fringe_span_hz": self.interrogation.fringe_span_hz,
                "fit_model": self.interrogation.fit_model,
                "per_transition": {k: dict(v) for k, v in self.interrogation.per_transition.items()},
            },
            "nonlinear": {
                "epsilon_hz": dict(self.epsilon_hz),
                "coupling_hz": [list(row) for row in self.coupling_hz] if self.coupling_hz else None,
                "coupling_levels": list(self.coupling_levels) if self.coupling_levels else None,
            },
            "stats": {"k": self.stats.k, "sigma_inflation": self.stats.sigma_inflation},
            "static_overrides": {k: list(v) for k, v in self.static_overrides.items()},
            "out_dir": self.out_dir,
        }


_PAIR_RE = re.compile(r"^(.+?)->(.+)$")


def _parse_pair_key(key: str, path: str) -> tuple[str, str]:
    m = _PAIR_RE.match(key)
    if not m:
        raise ConfigError(f"{path}: transition keys use the form 'lower->upper', got {key!r}")
    return m.group(1), m.group(2)


def load_scenario(path) -> ScenarioConfig:
    """Parse and validate a TOML scenario file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path.name}: {exc}") from exc

    root = _Section(data, "")
    name = root.take("name", str, default=path.stem)
    mode = root.take("mode", str)
    if mode not in ("static", "simulate"):
        raise ConfigError(f"mode: must be 'static' or 'simulate', got {mode!r}")
    levels_name = root.take("levels", str)
    seed = root.take("seed", int)
    if seed < 0:
        raise ConfigError("seed: must be a non-negative integer")

    cycle = root.section("cycle")
    pairs_raw = cycle.take("transitions", list)
    cycle.close()
    pairs = []
    for i, entry in enumerate(pairs_raw):
        if not (isinstance(entry, list) and len(entry) == 2 and all(isinstance(x, str) for x in entry)):
            raise ConfigError(f"cycle.transitions[{i}]: expected a pair of level labels")
        pairs.append((entry[0], entry[1]))
    if len(pairs) < 3:
        raise ConfigError(f"cycle.transitions: a closure needs at least 3 transitions, got {len(pairs)}")

    inter = root.section("interrogation")
    per_tr_raw = inter.section("per_transition")
    per_transition = {}
    for key in list(per_tr_raw.keys()):
        sub = per_tr_raw.section(key)
        entry = {}
        for fld in ("free_time_s", "pulse_time_s"):
            val = sub.take(fld, float, default=None)
            if val is not None:
                entry[fld] = _positive(val, f"interrogation.per_transition.{key}.{fld}")
        atoms = sub.take("n_atoms", int, default=None)
        if atoms is not None:
            if atoms < 1:
                raise ConfigError(f"interrogation.per_transition.{key}.n_atoms: must be >= 1")
            entry["n_atoms"] = atoms
        sub.close()
        _parse_pair_key(key, "interrogation.per_transition")
        per_transition[key] = entry
    per_tr_raw.close()
    defaults = InterrogationSettings()
    probe_offset = inter.take("probe_offset_hz", float, default=None)
    settings = InterrogationSettings(
        free_time_s=_positive(inter.take("free_time_s", float, default=defaults.free_time_s), "interrogation.free_time_s"),
        pulse_time_s=_positive(inter.take("pulse_time_s", float, default=defaults.pulse_time_s), "interrogation.pulse_time_s"),
        n_atoms=inter.take("n_atoms", int, default=defaults.n_atoms),
        n_cycles=inter.take("n_cycles", int, default=defaults.n_cycles),
        gain=inter.take("gain", float, default=defaults.gain),
        probe_offset_hz=_positive(probe_offset, "interrogation.probe_offset_hz") if probe_offset is not None else None,
        white_sigma_hz=_positive(inter.take("white_sigma_hz", float, default=0.0), "interrogation.white_sigma_hz", strict=False),
        dead_time_s=_positive(inter.take("dead_time_s", float, default=0.0), "interrogation.dead_time_s", strict=False),
        warmup_cycles=inter.take("warmup_cycles", int, default=defaults.warmup_cycles),
        fringe_points=inter.take("fringe_points", int, default=defaults.fringe_points),
        fringe_span_hz=inter.take("fringe_span_hz", float, default=None),
        fit_model=inter.take("fit_model", str, default="symmetric"),
        per_transition=per_transition,
    )
    inter.close()
    if settings.n_atoms < 1:
        raise ConfigError("interrogation.n_atoms: must be >= 1")
    if not 0.0 < settings.gain <= 1.0:
        raise ConfigError(f"interrogation.gain: must lie in (0, 1], got {settings.gain}")
    if settings.warmup_cycles < 0:
        raise ConfigError("interrogation.warmup_cycles: must be >= 0")
    if settings.fringe_points < 5:
        raise ConfigError("interrogation.fringe_points: need at least 5 points for the fit")
    if settings.fit_model not in ("symmetric", "asymmetric"):
        raise ConfigError(f"interrogation.fit_model: must be 'symmetric' or 'asymmetric', got {settings.fit_model!r}")
    if mode == "simulate":
        per_tr_cycles = settings.n_cycles // len(pairs)
        if per_tr_cycles < max(3, settings.warmup_cycles + 2):
            raise ConfigError(
                f"interrogation.n_cycles: {settings.n_cycles} total cycles leave {per_tr_cycles} per transition; "
                f"need at least {max(3, settings.warmup_cycles + 2)} (warmup_cycles + 2)"
            )

    nonlin = root.section("nonlinear")
    eps_section = nonlin.section("epsilon_hz")
    epsilon = {}
    for key in list(eps_section.keys()):
        value = eps_section.take(key, float)
        if not math.isfinite(value):
            raise ConfigError(f"nonlinear.epsilon_hz.{key}: must be finite")
        _parse_pair_key(key, "nonlinear.epsilon_hz")
        epsilon[key] = value
    eps_section.close()
    coupling_raw = nonlin.take("coupling_hz", list, default=None)
    coupling_levels_raw = nonlin.take("coupling_levels", list, default=None)
    nonlin.close()
    coupling = None
    coupling_levels = None
    if coupling_raw is not None:
        if coupling_levels_raw is None:
            raise ConfigError("nonlinear.coupling_levels: required when coupling_hz is given")
        coupling_levels = tuple(str(x) for x in coupling_levels_raw)
        n = len(coupling_levels)
        rows = []
        for i, row in enumerate(coupling_raw):
            if not (isinstance(row, list) and len(row) == n):
                raise ConfigError(f"nonlinear.coupling_hz[{i}]: expected a row of {n} numbers")
            try:
                rows.append(tuple(float(x) for x in row))
            except (TypeError, ValueError):
                raise ConfigError(f"nonlinear.coupling_hz[{i}]: expected numbers") from None
        if len(rows) != n:
            raise ConfigError(f"nonlinear.coupling_hz: expected {n} rows to match coupling_levels")
        coupling = tuple(rows)
    elif coupling_levels_raw is not None:
        raise ConfigError("nonlinear.coupling_hz: required when coupling_levels is given")

    stats_sec = root.section("stats")
    stats = StatsSettings(
        k=_positive(stats_sec.take("k", float, default=2.0), "stats.k", strict=False),
        sigma_inflation=stats_sec.take("sigma_inflation", float, default=1.0),
    )
    stats_sec.close()
    if stats.sigma_inflation < 1.0:
        raise ConfigError(f"stats.sigma_inflation: must be >= 1, got {stats.sigma_inflation}")

    static_sec = root.section("static")
    static_overrides = {}
    for key in list(static_sec.keys()):
        sub = static_sec.section(key)
        f = sub.take("measured_hz", float)
        s = _positive(sub.take("sigma_hz", float), f"static.{key}.sigma_hz")
        sub.close()
        _parse_pair_key(key, "static")
        static_overrides[key] = (f, s)
    static_sec.close()

    report_sec = root.section("report")
    out_dir = report_sec.take("out_dir", str, default="clockclosure-out")
    report_sec.close()
    root.close()

    levels_path = resolve_data_path(levels_name, relative_to=path.parent)
    return ScenarioConfig(
        name=name,
        mode=mode,
        levels_path=levels_path,
        cycle_pairs=tuple(pairs),
        seed=seed,
        interrogation=settings,
        epsilon_hz=epsilon,
        coupling_hz=coupling,
        coupling_levels=coupling_levels,
        stats=stats,
        static_overrides=static_overrides,
        out_dir=out_dir,
        config_path=path,
        config_bytes=raw,
    )


def resolve_cycle(table: LevelTable, pairs: Sequence[tuple[str, str]]) -> ClosureCycle:
    """Turn an unordered set of transition pairs into a validated cycle."""
    chosen = []
    for a, b in pairs:
        matches = table.find_transitions(a, b)
        if not matches:
            raise ConfigError(f"cycle: no transition of {table.system!r} connects {a!r} and {b!r}")
        if len(matches) > 1:
            raise ConfigError(f"cycle: {a!r}-{b!r} is ambiguous ({len(matches)} parallel transitions)")
        chosen.append(matches[0])
    degree: dict[str, list] = {}
    for tr in chosen:
        degree.setdefault(tr.lower, []).append(tr)
        degree.setdefault(tr.upper, []).append(tr)
    bad = sorted(lab for lab, trs in degree.items() if len(trs) != 2)
    if bad or len(degree) != len(chosen):
        raise ConfigError(
            "cycle: the selected transitions do not form a single closed cycle"
            + (f" (level(s) {', '.join(bad)} are not used exactly twice)" if bad else "")
        )
    start = min(degree)
    first = min(degree[start], key=lambda tr: tr.upper if tr.lower == start else tr.lower)
    steps = []
    used = {id(first)}
    current = start
    tr = first
    while True:
        sign = +1 if tr.lower == current else -1
        steps.append((tr, sign))
        current = tr.upper if sign > 0 else tr.lower
        if current == start:
            break
        nxt = [t for t in degree[current] if id(t) not in used]
        if not nxt:
            raise ConfigError("cycle: the selected transitions do not form a single closed cycle")
        tr = nxt[0]
        used.add(id(tr))
    if len(steps) != len(chosen):
        raise ConfigError("cycle: the selected transitions split into disconnected loops")
    return ClosureCycle(tuple(steps))


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "", name)


@dataclass
class Report:
    """Everything a scenario run produced, plus provenance for replay."""

    scenario: dict
    provenance: dict
    transitions: list[dict]
    closure: ClosureEstimate
    interpretations: dict
    series: dict[str, FrequencySeries] = field(default_factory=dict)
    fringes: dict[str, FringeCurve] = field(default_factory=dict)
    allan: dict[str, list[AllanPoint]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tool": {"name": "clockclosure", "version": __version__},
            "generated_at": datetime.now(timezone.utc).isoformat(),
            "scenario": self.scenario,
            "provenance": self.provenance,
            "transitions": self.transitions,
            "closure": self.closure.to_dict(),
            "interpretations": self.interpretations,
        }

    def write(self, out_dir) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        report_path = out / "report.json"
        report_path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(report_path)
        for name, series in self.series.items():
            p = out / f"series_{_sanitize(name)}.csv"
            series.to_csv(p)
            written.append(p)
        for name, points in self.allan.items():
            p = out / f"allan_{_sanitize(name)}.csv"
            with open(p, "w", encoding="utf-8") as fh:
                fh.write("tau_s,sigma_y,n\n")
                for pt in points:
                    fh.write(f"{pt.tau_s!r},{pt.sigma_y!r},{pt.n_samples}\n")
            written.append(p)
        for name, curve in self.fringes.items():
            p = out / f"fringe_{_sanitize(name)}.csv"
            with open(p, "w", encoding="utf-8") as fh:
                fh.write("detuning_hz,excitation,n_atoms\n")
                for d, e, n in zip(curve.detunings_hz, curve.excitation, curve.n_atoms):
                    fh.write(f"{float(d)!r},{float(e)!r},{int(n)}\n")
            written.append(p)
        return written


def _provenance(config: ScenarioConfig, seed: int) -> dict:
    return {
        "tool_version": __version__,
        "seed": seed,
        "config_path": str(config.config_path) if config.config_path else None,
        "config_sha256": _sha256(config.config_bytes) if config.config_bytes is not None else None,
        "levels_path": str(config.levels_path),
        "levels_sha256": _sha256(Path(config.levels_path).read_bytes()),
    }


def _transition_header(table: LevelTable, tr, sign: int) -> dict:
    f_linear = transition_frequency(table, tr.lower, tr.upper)
    return {
        "transition": tr.name,
        "sign": sign,
        "kind": tr.kind.value,
        "linear_frequency_hz": f_linear,
        "vacuum_wavelength_nm": vacuum_wavelength(f_linear),
    }


def _interpretations(estimate: ClosureEstimate) -> dict:
    return {
        "per_transition_sigma_hz": [s for *_ignored, s in estimate.inputs],
        "closure_sigma_hz": estimate.sigma_hz,
        "note": (
            "a quoted limit may refer to the per-transition uncertainties or to the "
            "closure combination; both readings are listed"
        ),
    }


def _run_static(config: ScenarioConfig, table: LevelTable, cycle: ClosureCycle, seed: int) -> Report:
    fits = {}
    transitions = []
    for tr, sign in cycle.steps:
        if tr.name in config.static_overrides:
            f, s = config.static_overrides[tr.name]
        elif tr.measured_hz is not None and tr.sigma_hz is not None:
            f, s = tr.measured_hz, tr.sigma_hz
        else:
            raise ConfigError(
                f"static mode: transition {tr.name} has no measured_hz/sigma_hz in "
                f"{config.levels_path.name} and no [static.\"{tr.name}\"] override"
            )
        fits[tr.pair] = (f, s)
        entry = _transition_header(table, tr, sign)
        entry["measured_hz"] = f
        entry["sigma_hz"] = s
        transitions.append(entry)
    estimate = closure_estimate(cycle, fits, k=config.stats.k, sigma_inflation=config.stats.sigma_inflation)
    return Report(
        scenario=config.echo(),
        provenance=_provenance(config, seed),
        transitions=transitions,
        closure=estimate,
        interpretations=_interpretations(estimate),
    )


def _fit_to_dict(fit: FitResult) -> dict:
    return {
        "center_hz": fit.center_hz,
        "center_sigma_hz": fit.center_sigma_hz,
        "contrast": fit.contrast,
        "asymmetry_per_hz": fit.asymmetry_per_hz,
        "period_hz": fit.period_hz,
        "residual_norm": fit.residual_norm,
        "n_iterations": fit.n_iterations,
    }


def _run_simulation(config: ScenarioConfig, table: LevelTable, cycle: ClosureCycle, seed: int) -> Report:
    inter = config.interrogation
    levels = sorted({lab for tr in cycle.transitions for lab in tr.pair},
                    key=lambda lab: table.energy_cm1(lab))

    anomalies = {}
    for key, value in config.epsilon_hz.items():
        lo, up = _parse_pair_key(key, "nonlinear.epsilon_hz")
        if not table.find_transitions(lo, up):
            raise ConfigError(f"nonlinear.epsilon_hz.{key}: no such transition in {table.system!r}")
        anomalies[(lo, up)] = value

    coupling = None
    if config.coupling_hz is not None:
        if sorted(config.coupling_levels) != sorted(levels):
            raise ConfigError(
                f"nonlinear.coupling_levels: must be a permutation of the cycle levels {levels}, "
                f"got {list(config.coupling_levels)}"
            )
        perm = [config.coupling_levels.index(lab) for lab in levels]
        g = np.array(config.coupling_hz, dtype=float)
        coupling = g[np.ix_(perm, perm)]

    nonlinear = NonlinearModel(coupling_hz=coupling, anomalies_hz=anomalies)
    try:
        gen = build_generator(table, levels, drives=(), nonlinear=nonlinear)
    except ValueError as exc:
        raise ConfigError(f"scenario {config.name!r}: {exc}") from exc

    protocols = []
    noises = []
    for tr, _sign in cycle.steps:
        free_t, pulse_t = inter.timing_for(tr.name)
        protocols.append(RamseyProtocol.ideal(tr.lower, tr.upper, free_t, pulse_t))
        noises.append(NoiseSettings(n_atoms=inter.n_atoms_for(tr.name), white_sigma_hz=inter.white_sigma_hz))

    servo = ServoSettings(gain=inter.gain, n_cycles=inter.n_cycles, probe_offset_hz=inter.probe_offset_hz)

    transitions = []
    fringes = {}
    fits = {}
    try:
        series_list = run_interleaved_servo(protocols, gen, servo, noises, seed, dead_time_s=inter.dead_time_s)
        for i, (proto, nz, (tr, sign)) in enumerate(zip(protocols, noises, cycle.steps)):
            span = inter.fringe_span_hz if inter.fringe_span_hz is not None else 0.6 / proto.free_time_s
            detunings = np.linspace(-span, span, inter.fringe_points)
            curve = scan_fringe(proto, gen, detunings, nz.n_atoms, seed ^ (0xA5A50000 + i))
            fringes[tr.name] = curve
            fits[tr.name] = fit_center(curve, proto.free_time_s, model=inter.fit_model)
    except SimulationError as exc:
        raise SimulationError(f"scenario {config.name!r}: {exc}") from exc

    estimates = {}
    allan_tables = {}
    series_map = {}
    for (tr, sign), series in zip(cycle.steps, series_list):
        mean, sem, n_used = series.summarize(warmup=inter.warmup_cycles)
        if not sem > 0.0:
            raise SimulationError(f"scenario {config.name!r}: series {tr.name} has zero scatter")
        estimates[tr.pair] = (mean, sem)
        taus = default_taus(series)
        allan_tables[tr.name] = allan_deviation(series, taus) if taus else []
        series_map[tr.name] = series
        entry = _transition_header(table, tr, sign)
        entry["series"] = {
            "n_cycles": len(series),
            "warmup_dropped": inter.warmup_cycles,
            "n_used": n_used,
            "mean_offset_hz": mean,
            "sem_hz": sem,
        }
        entry["fit"] = _fit_to_dict(fits[tr.name])
        entry["allan"] = [
            {"tau_s": pt.tau_s, "sigma_y_hz": pt.sigma_y, "n": pt.n_samples} for pt in allan_tables[tr.name]
        ]
        transitions.append(entry)

    estimate = closure_estimate(cycle, estimates, k=config.stats.k, sigma_inflation=config.stats.sigma_inflation)
    return Report(
        scenario=config.echo(),
        provenance=_provenance(config, seed),
        transitions=transitions,
        closure=estimate,
        interpretations=_interpretations(estimate),
        series=series_map,
        fringes=fringes,
        allan=allan_tables,
    )


def run_scenario(config: ScenarioConfig, out_dir=None, seed: int | None = None) -> Report:
    """Execute a scenario; write report and CSV files when out_dir is given.

    ``seed`` overrides the configured seed (used for Monte Carlo
    repetition with sub-seeds derived as seed XOR trial index).
    """
    used_seed = config.seed if seed is None else seed
    table = load_level_table(config.levels_path)
    cycle = resolve_cycle(table, config.cycle_pairs)
    if config.mode == "static":
        report = _run_static(config, table, cycle, used_seed)
    else:
        report = _run_simulation(config, table, cycle, used_seed)
    if out_dir is not None:
        report.write(out_dir)
    return report
