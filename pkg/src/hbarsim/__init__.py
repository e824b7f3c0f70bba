"""Lindblad simulator for two exchange-coupled transmons, each with its own
ladder of high-overtone bulk acoustic modes.  See README.md for an overview
and the demos/ directory for worked examples."""

from .dynamics import (
    IntegratorConfig,
    IntegrationError,
    Trajectory,
    evolve_master,
    evolve_unitary,
)
from .experiments import (
    EigencurveSet,
    PopulationGrid,
    SweepError,
    chevron_scan,
    locality_test,
    run_schedule,
    run_sweep,
    spectroscopy_sweep,
    transfer_experiment,
)
from .model import (
    DeviceSpec,
    ModeSpec,
    QubitSpec,
    build_collapse_ops,
    build_hamiltonian,
    build_layout,
    reference_device,
    single_excitation_hamiltonian,
)
from .opalg import Operator, State, SystemLayout, embed, expectation, ladder
from .pulses import (
    FluxSquare,
    Idle,
    PiPulse,
    Schedule,
    SwapSegment,
    calibrate_swap,
    chevron_grid,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "DeviceSpec",
    "EigencurveSet",
    "FluxSquare",
    "Idle",
    "IntegratorConfig",
    "IntegrationError",
    "ModeSpec",
    "Operator",
    "PiPulse",
    "PopulationGrid",
    "QubitSpec",
    "Schedule",
    "State",
    "SwapSegment",
    "SweepError",
    "SystemLayout",
    "Trajectory",
    "build_collapse_ops",
    "build_hamiltonian",
    "build_layout",
    "calibrate_swap",
    "chevron_grid",
    "chevron_scan",
    "embed",
    "evolve_master",
    "evolve_unitary",
    "expectation",
    "ladder",
    "locality_test",
    "reference_device",
    "run_schedule",
    "run_sweep",
    "single_excitation_hamiltonian",
    "spectroscopy_sweep",
    "transfer_experiment",
]
