"""Brain stimulation modelling toolkit.

Field solvers for voltage-controlled and current-controlled stimulation,
fiber activation estimation (threshold-based and biophysical), a
Markov-chain tremor score for accelerometer recordings, and the batch
runner plus HTTP service that tie them together.
"""

from dbsim.config import (
    ConfigError,
    ExperimentConfig,
    RunOptions,
    validate_config,
)
from dbsim.field import (
    FieldSolution,
    SolverOptions,
    analytic_point_source,
    scale_to_current,
    solve_eqs,
    solve_qs,
)
from dbsim.pipeline import (
    ActivationReport,
    ComparisonTable,
    MODELS,
    Scene,
    build_comparison,
    build_scene,
    compare_settings,
    run_model,
    run_neuron,
    run_static,
)
from dbsim.runner import RunManifest, run_experiment
from dbsim.scene import (
    Contact,
    FiberStatus,
    FiberTract,
    LeadGeometry,
    MaterialTable,
    VoxelGrid,
    build_lead,
    classify_damaged,
    load_fiber_tract,
    save_fiber_tract,
    voxelize_scene,
)
from dbsim.server import create_app, serve
from dbsim.stimulus import (
    PulseTrain,
    Spectrum,
    StimulationSetting,
    fourier_decompose,
    make_pulse_train,
    parse_polarity,
    reconstruct,
)
from dbsim.tremor import (
    TremorModel,
    fit_tremor_model,
    load_recording,
    reconstruct_trajectory,
    save_recording,
    tremor_score,
)
from dbsim.vta import ThresholdTable, threshold_for

__version__ = "0.1.0"

__all__ = [
    "ActivationReport",
    "ComparisonTable",
    "ConfigError",
    "Contact",
    "ExperimentConfig",
    "FiberStatus",
    "FiberTract",
    "FieldSolution",
    "LeadGeometry",
    "MODELS",
    "MaterialTable",
    "PulseTrain",
    "RunManifest",
    "RunOptions",
    "Scene",
    "SolverOptions",
    "Spectrum",
    "StimulationSetting",
    "ThresholdTable",
    "TremorModel",
    "VoxelGrid",
    "analytic_point_source",
    "build_comparison",
    "build_lead",
    "build_scene",
    "classify_damaged",
    "compare_settings",
    "create_app",
    "fit_tremor_model",
    "fourier_decompose",
    "load_fiber_tract",
    "load_recording",
    "make_pulse_train",
    "parse_polarity",
    "reconstruct",
    "reconstruct_trajectory",
    "run_experiment",
    "run_model",
    "run_neuron",
    "run_static",
    "save_fiber_tract",
    "save_recording",
    "scale_to_current",
    "serve",
    "solve_eqs",
    "solve_qs",
    "threshold_for",
    "tremor_score",
    "validate_config",
    "voxelize_scene",
    "__version__",
]
