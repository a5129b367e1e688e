"""Independent oracles and small builders shared across the test modules.

The oracles here are derived from first principles (closed-form two-level
results, brute-force estimator definitions) and never call back into the
code paths they check.
"""

import math

import numpy as np

import clockclosure as cc


def ramsey_two_pulse(delta_hz: float, omega_rad_s: float, pulse_s: float, free_s: float) -> float:
    """Closed-form excitation after pi/2 - T - pi/2 rectangular pulses, no decay.

    For H/hbar = [[0, W/2], [W/2, -d]] the pulse propagator is
    cos(a) I - i sin(a) (W sx + d sz)/We with We = sqrt(W^2 + d^2) and
    a = We tp / 2; free evolution is diag(1, e^{i d T}).  Multiplying the
    three factors and squaring the g->e amplitude gives the expression
    below.
    """
    d = 2.0 * math.pi * delta_hz
    we = math.hypot(omega_rad_s, d)
    a = 0.5 * we * pulse_s
    c, s = math.cos(a), math.sin(a)
    term = c * math.cos(0.5 * d * free_s) - (d / we) * s * math.sin(0.5 * d * free_s)
    return 4.0 * (omega_rad_s / we) ** 2 * s * s * term * term


def ramsey_decay_contrast(free_s: float, upper_lifetime_s: float) -> float:
    """Fringe contrast with upper-state decay during the dark time only.

    The coherence created by the first pulse decays at gamma/2, so the
    cosine amplitude (and with it the contrast of the B + (C/2) cos model,
    whose baseline stays at 1/2 by trace conservation) is e^{-T/(2 tau)}.
    """
    return math.exp(-0.5 * free_s / upper_lifetime_s)


def brute_overlapping_adev(y, tau0: float, m: int) -> tuple[float, int]:
    """Overlapping Allan deviation straight from its definition, plain loops."""
    y = list(map(float, y))
    n = len(y)
    averages = []
    for j in range(n - m + 1):
        total = math.fsum(y[j : j + m])
        averages.append(total / m)
    diffs = [averages[j + m] - averages[j] for j in range(len(averages) - m)]
    var = 0.5 * math.fsum(d * d for d in diffs) / len(diffs)
    return math.sqrt(var), len(diffs)


def two_level_table(energy_cm1: float = 10000.0, lifetime_s: float | None = None) -> cc.LevelTable:
    levels = (
        cc.Level("g", "cfg", "X", 0, "even", 0.0),
        cc.Level("e", "cfg", "X", 1, "odd", energy_cm1, lifetime_s=lifetime_s),
    )
    transitions = (cc.Transition("g", "e", cc.TransitionKind.E1),)
    return cc.LevelTable("two-level", levels, transitions)


def triangle_table(e1: float = 10000.0, e2: float = 25000.0) -> cc.LevelTable:
    levels = (
        cc.Level("a", "cfg", "X", 0, "even", 0.0),
        cc.Level("b", "cfg", "X", 1, "odd", e1),
        cc.Level("c", "cfg", "X", 2, "even", e2),
    )
    transitions = (
        cc.Transition("a", "b", cc.TransitionKind.E1),
        cc.Transition("b", "c", cc.TransitionKind.E1),
        cc.Transition("a", "c", cc.TransitionKind.E2),
    )
    return cc.LevelTable("triangle", levels, transitions)


def seeded_white_series(sigma_hz: float, n: int, seed: int, tau0_s: float = 1.0) -> cc.FrequencySeries:
    rng = np.random.default_rng(seed)
    return cc.FrequencySeries(
        lower="g",
        upper="e",
        cycles=np.arange(n),
        timestamps_s=tau0_s * np.arange(n, dtype=float),
        freq_hz=rng.normal(0.0, sigma_hz, size=n),
        cycle_duration_s=tau0_s,
    )
