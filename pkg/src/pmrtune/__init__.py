"""Model-free auto-tuning of proportional-multi-resonant controllers.

Workflow: identify one point of the plant frequency response (analytically
via :func:`classify` or experimentally via the simulated relay experiment
:func:`rap_auto`), synthesize the controller with :func:`tune`, then check
the closed loop with :func:`simulate_closed_loop`, :func:`margins` and
:func:`stability_check`.  The ``pmrtune`` command line wires the same steps
into scriptable subcommands.
"""

from .lti import (
    ComplexResponse,
    ImproperSystemError,
    PoleAtFrequencyError,
    SimulationDivergedError,
    StateSpaceModel,
    TransferFunction,
    freq_response,
    parse_transfer_function,
    series,
    simulate,
    to_state_space,
)
from .ident import (
    FoiApprox,
    FoiDesignError,
    FrequencyPoint,
    NoLimitCycleError,
    PlantClass,
    RapConfig,
    RapResult,
    UnclassifiablePlantError,
    UnstableRelayLoopError,
    build_foi,
    classify,
    estimate_point,
    rap_auto,
    run_rap,
)
from .tuning import (
    DegenerateTuningError,
    HarmonicSet,
    LeadBlock,
    PmrController,
    ResonantMode,
    TuningCoefficients,
    TuningSpec,
    TuningTargets,
    build_phase_lead,
    compute_mode_gains,
    decompose_targets,
    derive_coefficients,
    tune,
)
from .analysis import (
    ClosedLoopUnstableError,
    MarginReport,
    NyquistData,
    ReferenceSignal,
    SimulationResult,
    make_reference,
    margins,
    nyquist_data,
    simulate_closed_loop,
    stability_check,
)

__version__ = "0.1.0"

__all__ = [
    "ComplexResponse", "ImproperSystemError", "PoleAtFrequencyError",
    "SimulationDivergedError", "StateSpaceModel", "TransferFunction",
    "freq_response", "parse_transfer_function", "series", "simulate",
    "to_state_space",
    "FoiApprox", "FoiDesignError", "FrequencyPoint", "NoLimitCycleError",
    "PlantClass", "RapConfig", "RapResult", "UnclassifiablePlantError",
    "UnstableRelayLoopError", "build_foi", "classify", "estimate_point",
    "rap_auto", "run_rap",
    "DegenerateTuningError", "HarmonicSet", "LeadBlock", "PmrController",
    "ResonantMode", "TuningCoefficients", "TuningSpec", "TuningTargets",
    "build_phase_lead", "compute_mode_gains", "decompose_targets",
    "derive_coefficients", "tune",
    "ClosedLoopUnstableError", "MarginReport", "NyquistData",
    "ReferenceSignal", "SimulationResult", "make_reference", "margins",
    "nyquist_data", "simulate_closed_loop", "stability_check",
]
