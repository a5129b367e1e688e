"""Atomic level tables, unit conversions, and closure-cycle enumeration.

Level energies are stored in cm^-1 (the natural unit of the source data)
and converted to Hz only at computation boundaries, always through the
defined speed of light so the conversion is an exact double product.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Mapping

from .errors import DataError

#: Defined (exact) speed of light.
SPEED_OF_LIGHT_CM_S = 2.99792458e10
SPEED_OF_LIGHT_NM_S = 2.99792458e17

LEVEL_HEADER = ("label", "configuration", "term", "j", "parity", "energy_cm1", "lifetime_s")
TRANSITION_HEADER = ("lower", "upper", "kind", "measured_hz", "sigma_hz")


def wavenumber_to_frequency(energy_cm1: float) -> float:
    """Convert an energy in cm^-1 to a frequency in Hz.

    The result is the exact double-precision product with the defined
    speed of light, 2.99792458e10 cm/s.
    """
    if not math.isfinite(energy_cm1):
        raise ValueError(f"wavenumber must be finite, got {energy_cm1!r}")
    return energy_cm1 * SPEED_OF_LIGHT_CM_S


def vacuum_wavelength(frequency_hz: float) -> float:
    """Vacuum wavelength in nm corresponding to a positive frequency in Hz."""
    if not math.isfinite(frequency_hz) or frequency_hz <= 0.0:
        raise ValueError(f"frequency must be positive and finite, got {frequency_hz!r}")
    return SPEED_OF_LIGHT_NM_S / frequency_hz


def wavelength_to_frequency(wavelength_nm: float) -> float:
    """Frequency in Hz of a vacuum wavelength given in nm."""
    if not math.isfinite(wavelength_nm) or wavelength_nm <= 0.0:
        raise ValueError(f"wavelength must be positive and finite, got {wavelength_nm!r}")
    return SPEED_OF_LIGHT_NM_S / wavelength_nm


class TransitionKind(Enum):
    """Multipolarity / driving mechanism of a transition."""

    E1 = "E1"
    E2 = "E2"
    M1 = "M1"
    TwoPhotonDegenerate = "TwoPhotonDegenerate"
    TwoPhotonNondegenerate = "TwoPhotonNondegenerate"
    E1M1 = "E1M1"
    HyperfineInduced = "HyperfineInduced"


def _as_fraction(j) -> Fraction:
    f = Fraction(j)
    if f.denominator not in (1, 2) or f < 0:
        raise ValueError(f"j must be a non-negative half-integer, got {j!r}")
    return f


@dataclass(frozen=True)
class Level:
    """One atomic level: identification, angular momentum, energy, lifetime.

    ``energy_cm1`` is measured from the ground level of the same table;
    ``lifetime_s`` is absent for the ground level and for levels whose
    lifetime is unknown.
    """

    label: str
    configuration: str
    term: str
    j: Fraction
    parity: str
    energy_cm1: float
    lifetime_s: float | None = None

    def __post_init__(self):
        if not self.label:
            raise ValueError("level label must be non-empty")
        object.__setattr__(self, "j", _as_fraction(self.j))
        if self.parity not in ("even", "odd"):
            raise ValueError(f"level {self.label}: parity must be 'even' or 'odd', got {self.parity!r}")
        if not math.isfinite(self.energy_cm1) or self.energy_cm1 < 0.0:
            raise ValueError(f"level {self.label}: energy must be finite and >= 0")
        if self.lifetime_s is not None and not self.lifetime_s > 0.0:
            raise ValueError(f"level {self.label}: lifetime must be > 0 when present")


@dataclass(frozen=True)
class Transition:
    """A transition between two levels of a table, identified by labels.

    ``measured_hz``/``sigma_hz`` carry an experimental frequency and its
    one-sigma uncertainty when available; a sigma without a value is
    rejected.
    """

    lower: str
    upper: str
    kind: TransitionKind
    measured_hz: float | None = None
    sigma_hz: float | None = None

    def __post_init__(self):
        if self.lower == self.upper:
            raise ValueError(f"transition endpoints must differ, got {self.lower!r} twice")
        if not isinstance(self.kind, TransitionKind):
            raise ValueError(f"kind must be a TransitionKind, got {self.kind!r}")
        if self.sigma_hz is not None:
            if self.measured_hz is None:
                raise ValueError(f"transition {self.lower}-{self.upper}: sigma given without a measured frequency")
            if not self.sigma_hz > 0.0:
                raise ValueError(f"transition {self.lower}-{self.upper}: sigma must be > 0")

    @property
    def pair(self) -> tuple[str, str]:
        return (self.lower, self.upper)

    @property
    def name(self) -> str:
        return f"{self.lower}->{self.upper}"


@dataclass(frozen=True)
class LevelTable:
    """A named set of levels plus the transitions connecting them."""

    system: str
    levels: tuple[Level, ...]
    transitions: tuple[Transition, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        labels = [lv.label for lv in self.levels]
        if len(set(labels)) != len(labels):
            dup = sorted({x for x in labels if labels.count(x) > 1})
            raise ValueError(f"duplicate level label(s): {', '.join(dup)}")
        ground = [lv.label for lv in self.levels if lv.energy_cm1 == 0.0]
        if len(ground) != 1:
            raise ValueError(f"table must contain exactly one level at energy 0, found {len(ground)}")
        by_label = {lv.label: lv for lv in self.levels}
        for tr in self.transitions:
            for end in (tr.lower, tr.upper):
                if end not in by_label:
                    raise ValueError(f"transition {tr.name}: endpoint {end!r} is not a level of this table")
            if not by_label[tr.upper].energy_cm1 > by_label[tr.lower].energy_cm1:
                raise ValueError(f"transition {tr.name}: upper level must lie above lower level")

    @cached_property
    def _by_label(self) -> dict[str, Level]:
        return {lv.label: lv for lv in self.levels}

    def level(self, label: str) -> Level:
        try:
            return self._by_label[label]
        except KeyError:
            raise KeyError(f"unknown level label {label!r} in table {self.system!r}") from None

    def energy_cm1(self, label: str) -> float:
        return self.level(label).energy_cm1

    def find_transitions(self, a: str, b: str) -> tuple[Transition, ...]:
        """All transitions connecting the unordered label pair (a, b)."""
        return tuple(t for t in self.transitions if {t.lower, t.upper} == {a, b})


def transition_frequency(table: LevelTable, lower: str, upper: str) -> float:
    """Frequency in Hz of the interval between two labelled levels."""
    e_lo = table.energy_cm1(lower)
    e_hi = table.energy_cm1(upper)
    if not e_hi > e_lo:
        raise ValueError(
            f"energy difference must be positive: {upper!r} ({e_hi} cm^-1) vs {lower!r} ({e_lo} cm^-1)"
        )
    return wavenumber_to_frequency(e_hi - e_lo)


@dataclass(frozen=True)
class ClosureCycle:
    """A closed, simple chain of transitions with traversal signs.

    Each step pairs a transition with +1 when the chain goes from the
    transition's lower to its upper level and -1 otherwise.  The chain
    structure (every level entered once and left once) makes the signed
    sum of level-energy differences identically zero, independent of the
    numeric energies.
    """

    steps: tuple[tuple[Transition, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple((t, int(s)) for t, s in self.steps))
        if len(self.steps) < 3:
            raise ValueError("a closure cycle needs at least 3 transitions")
        seq = []
        for tr, sign in self.steps:
            if sign not in (+1, -1):
                raise ValueError(f"step sign must be +1 or -1, got {sign}")
            origin, dest = (tr.lower, tr.upper) if sign > 0 else (tr.upper, tr.lower)
            if seq and seq[-1] != origin:
                raise ValueError(f"cycle broken at {tr.name}: expected to leave {seq[-1]!r}, step starts at {origin!r}")
            if not seq:
                seq.append(origin)
            seq.append(dest)
        if seq[-1] != seq[0]:
            raise ValueError(f"cycle does not close: starts at {seq[0]!r}, ends at {seq[-1]!r}")
        interior = seq[:-1]
        if len(set(interior)) != len(interior):
            raise ValueError("cycle is not simple: a level repeats")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def transitions(self) -> tuple[Transition, ...]:
        return tuple(t for t, _ in self.steps)

    @property
    def level_sequence(self) -> tuple[str, ...]:
        seq = []
        for tr, sign in self.steps:
            origin = tr.lower if sign > 0 else tr.upper
            seq.append(origin)
        return tuple(seq)

    @property
    def name(self) -> str:
        return "-".join(self.level_sequence)

    def signed_energy_sum(self, table: LevelTable) -> Fraction:
        """Exact signed sum of energy differences around the cycle.

        Evaluated in rational arithmetic so the telescoping cancellation
        is exact; the result is zero for every valid cycle.
        """
        total = Fraction(0)
        for tr, sign in self.steps:
            diff = Fraction(table.energy_cm1(tr.upper)) - Fraction(table.energy_cm1(tr.lower))
            total += sign * diff
        return total


def enumerate_closures(table: LevelTable, max_length: int = 4) -> list[ClosureCycle]:
    """All simple cycles of the undirected transition graph up to max_length.

    Cycles are canonicalized (start at the lexicographically smallest
    level, orientation toward the smaller neighbour) so the output does
    not depend on the order of the input rows.  Parallel transitions
    between the same level pair yield distinct cycles.
    """
    if max_length < 3:
        raise ValueError(f"max_length must be >= 3, got {max_length}")
    order = {lv.label: i for i, lv in enumerate(sorted(table.levels, key=lambda lv: lv.label))}
    adjacency: dict[str, list[tuple[Transition, str, int]]] = defaultdict(list)
    for tr in table.transitions:
        adjacency[tr.lower].append((tr, tr.upper, +1))
        adjacency[tr.upper].append((tr, tr.lower, -1))

    cycles: list[ClosureCycle] = []

    def extend(start: str, current: str, visited: set[str], steps: list[tuple[Transition, int]]):
        for tr, nxt, sign in adjacency[current]:
            if nxt == start and len(steps) >= 2:
                # orientation rule keeps one of the two traversal directions
                first_out = steps[0][0].upper if steps[0][1] > 0 else steps[0][0].lower
                if order[first_out] < order[current]:
                    cycles.append(ClosureCycle(tuple(steps + [(tr, sign)])))
                continue
            if nxt in visited or order[nxt] <= order[start]:
                continue
            if len(steps) + 1 >= max_length:
                continue
            visited.add(nxt)
            extend(start, nxt, visited, steps + [(tr, sign)])
            visited.remove(nxt)

    for label in sorted(order, key=order.get):
        extend(label, label, {label}, [])

    cycles.sort(key=lambda c: (len(c), c.level_sequence))
    return cycles


def closure_residual(cycle: ClosureCycle, frequencies: Mapping[tuple[str, str], float]) -> float:
    """Signed sum of frequencies around a cycle, in Hz.

    ``frequencies`` maps (lower, upper) label pairs to a frequency; for a
    three-transition cycle with signs (+, +, -) this is f12 + f23 - f13.
    """
    terms = []
    for tr, sign in cycle.steps:
        try:
            f = frequencies[tr.pair]
        except KeyError:
            raise KeyError(f"no frequency supplied for transition {tr.name}") from None
        terms.append(sign * f)
    return math.fsum(terms)


def _parse_float(text: str, what: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"{what}: not a number: {text!r}") from None


def load_level_table(path) -> LevelTable:
    """Read a level table from a CSV file.

    The file holds a level section and an optional transition section,
    each introduced by its fixed header row.  Blank lines and ``#``
    comments are ignored; a ``# system: <name>`` comment names the table.
    """
    path = Path(path)
    system = path.stem
    rows: list[tuple[int, list[str]]] = []
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read level table {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.lower().startswith("system:"):
                system = body.split(":", 1)[1].strip()
            continue
        rows.append((lineno, next(csv.reader([line]))))

    def fail(lineno: int, message: str):
        raise DataError(f"{path.name}:{lineno}: {message}")

    if not rows or tuple(f.strip() for f in rows[0][1]) != LEVEL_HEADER:
        fail(rows[0][0] if rows else 1, f"expected level header {','.join(LEVEL_HEADER)}")

    levels: list[Level] = []
    transitions: list[Transition] = []
    seen: dict[str, int] = {}
    in_transitions = False
    for lineno, fields in rows[1:]:
        fields = [f.strip() for f in fields]
        if tuple(fields) == TRANSITION_HEADER:
            in_transitions = True
            continue
        if not in_transitions:
            if len(fields) != len(LEVEL_HEADER):
                fail(lineno, f"expected {len(LEVEL_HEADER)} level fields, got {len(fields)}")
            label, configuration, term, j, parity, energy, lifetime = fields
            if label in seen:
                fail(lineno, f"duplicate level label {label!r} (first defined on line {seen[label]})")
            seen[label] = lineno
            try:
                levels.append(
                    Level(
                        label=label,
                        configuration=configuration,
                        term=term,
                        j=Fraction(j),
                        parity=parity,
                        energy_cm1=_parse_float(energy, "energy_cm1"),
                        lifetime_s=_parse_float(lifetime, "lifetime_s") if lifetime else None,
                    )
                )
            except (ValueError, ZeroDivisionError) as exc:
                fail(lineno, str(exc))
        else:
            if len(fields) != len(TRANSITION_HEADER):
                fail(lineno, f"expected {len(TRANSITION_HEADER)} transition fields, got {len(fields)}")
            lower, upper, kind, measured, sigma = fields
            for end in (lower, upper):
                if end not in seen:
                    fail(lineno, f"transition endpoint {end!r} does not match any level label")
            try:
                transitions.append(
                    Transition(
                        lower=lower,
                        upper=upper,
                        kind=TransitionKind(kind),
                        measured_hz=_parse_float(measured, "measured_hz") if measured else None,
                        sigma_hz=_parse_float(sigma, "sigma_hz") if sigma else None,
                    )
                )
            except ValueError as exc:
                msg = str(exc)
                if "is not a valid TransitionKind" in msg:
                    valid = ", ".join(k.value for k in TransitionKind)
                    msg = f"unknown transition kind {kind!r}; valid kinds: {valid}"
                fail(lineno, msg)

    try:
        return LevelTable(system=system, levels=tuple(levels), transitions=tuple(transitions))
    except ValueError as exc:
        raise DataError(f"{path.name}: {exc}") from exc
