"""clockclosure: simulation and analysis of closure tests on connected
optical-clock transitions.

The closure statistic of a cycle of transitions sharing levels (for a
triangle, f12 + f23 - f13) vanishes identically whenever transition
frequencies are differences of level energies; measuring it therefore
probes departures from that structure with clock-grade sensitivity.
"""

__version__ = "0.1.0"

from .dynamics import (
    DecayChannel,
    DensityMatrix,
    DriveTerm,
    EvolutionGenerator,
    NonlinearModel,
    build_generator,
    evolve,
    nonlinear_shift,
    step,
)
from .errors import (
    ClockClosureError,
    ConfigError,
    DataError,
    FitError,
    ServoLockError,
    SimulationError,
    StepSizeError,
)
from .interrogation import (
    FitResult,
    FringeCurve,
    FrequencySeries,
    NoiseSettings,
    RamseyProtocol,
    ServoSettings,
    fit_center,
    ramsey_probability,
    read_series_csv,
    run_interleaved_servo,
    run_servo,
    scan_fringe,
)
from .scenario import (
    Report,
    ScenarioConfig,
    bundled_data_dir,
    load_scenario,
    resolve_cycle,
    resolve_data_path,
    run_scenario,
)
from .spectra import (
    ClosureCycle,
    Level,
    LevelTable,
    Transition,
    TransitionKind,
    closure_residual,
    enumerate_closures,
    load_level_table,
    transition_frequency,
    vacuum_wavelength,
    wavelength_to_frequency,
    wavenumber_to_frequency,
)
from .stats import (
    AllanPoint,
    ClosureEstimate,
    allan_deviation,
    closure_estimate,
    default_taus,
    sensitivity_projection,
)

__all__ = [
    "__version__",
    "AllanPoint",
    "ClockClosureError",
    "ClosureCycle",
    "ClosureEstimate",
    "ConfigError",
    "DataError",
    "DecayChannel",
    "DensityMatrix",
    "DriveTerm",
    "EvolutionGenerator",
    "FitError",
    "FitResult",
    "FrequencySeries",
    "FringeCurve",
    "Level",
    "LevelTable",
    "NoiseSettings",
    "NonlinearModel",
    "RamseyProtocol",
    "Report",
    "ScenarioConfig",
    "ServoLockError",
    "ServoSettings",
    "SimulationError",
    "StepSizeError",
    "Transition",
    "TransitionKind",
    "allan_deviation",
    "build_generator",
    "bundled_data_dir",
    "closure_estimate",
    "closure_residual",
    "default_taus",
    "enumerate_closures",
    "evolve",
    "fit_center",
    "load_level_table",
    "load_scenario",
    "nonlinear_shift",
    "ramsey_probability",
    "read_series_csv",
    "resolve_cycle",
    "resolve_data_path",
    "run_interleaved_servo",
    "run_scenario",
    "run_servo",
    "scan_fringe",
    "sensitivity_projection",
    "step",
    "transition_frequency",
    "vacuum_wavelength",
    "wavelength_to_frequency",
    "wavenumber_to_frequency",
]
