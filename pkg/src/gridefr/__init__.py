"""Voltage-control frequency response: capability estimation and scheduling value."""

__version__ = "0.1.0"

from .grid import (
    Branch,
    CdcProfile,
    FeederNetwork,
    FrequencyParams,
    GeneratorClass,
    Node,
    StorageUnit,
    SynthesisParams,
    Transformer,
    ValidationIssue,
    ValidationReport,
    synthesize_feeder,
    validate_plant,
    validate_system,
)
from .demand import (
    ApplianceSpec,
    HouseholdProfile,
    aggregate_cdc,
    build_exogenous,
    synth_household,
    zip_exponent,
)
from .powerflow import (
    PowerFlowError,
    PowerFlowSolution,
    TapState,
    apply_oltc,
    ldc_target,
    regulate_feeder,
    seasonal_tap,
    solve_feeder,
)
from .efr import (
    EfrProfile,
    PecEntry,
    PecRating,
    build_profile,
    capability_at,
    delta_efr,
    efr_pvc,
    efr_vcs,
    pec_rating,
    rating_table,
    scale_to_gb,
)
from .scenarios import (
    CommittedStep,
    RollingState,
    ScenarioNode,
    ScenarioTree,
    build_tree,
    quantile_weights,
    roll_horizon,
)
from .milp import MilpInstance, MilpSolution, ModelBuilder, solve_milp
from .suc import (
    DispatchSchedule,
    NadirCut,
    NadirCutSet,
    advance_state,
    fleet_inertia_range,
    formulate,
    linearize_nadir,
    required_pfr,
    schedule_step,
    verify_frequency,
)
from .valuation import (
    ValuationReport,
    build_report,
    c_pvc,
    co2_intensity,
    operation_cost,
    payback,
    pvc_envelope,
    wind_curtailment,
)
from .config import StudyConfig, load_config, packaged_fixture
from .study import StageOneResult, run_study, stage_one, stage_two

__all__ = [
    "ApplianceSpec",
    "Branch",
    "CdcProfile",
    "CommittedStep",
    "DispatchSchedule",
    "EfrProfile",
    "FeederNetwork",
    "FrequencyParams",
    "GeneratorClass",
    "HouseholdProfile",
    "MilpInstance",
    "MilpSolution",
    "ModelBuilder",
    "NadirCut",
    "NadirCutSet",
    "Node",
    "PecEntry",
    "PecRating",
    "PowerFlowError",
    "PowerFlowSolution",
    "RollingState",
    "ScenarioNode",
    "ScenarioTree",
    "StageOneResult",
    "StorageUnit",
    "StudyConfig",
    "SynthesisParams",
    "TapState",
    "Transformer",
    "ValidationIssue",
    "ValidationReport",
    "ValuationReport",
    "advance_state",
    "aggregate_cdc",
    "apply_oltc",
    "build_exogenous",
    "build_profile",
    "build_report",
    "build_tree",
    "c_pvc",
    "capability_at",
    "co2_intensity",
    "delta_efr",
    "efr_pvc",
    "efr_vcs",
    "fleet_inertia_range",
    "formulate",
    "ldc_target",
    "linearize_nadir",
    "load_config",
    "operation_cost",
    "packaged_fixture",
    "payback",
    "pec_rating",
    "pvc_envelope",
    "quantile_weights",
    "rating_table",
    "regulate_feeder",
    "required_pfr",
    "roll_horizon",
    "run_study",
    "scale_to_gb",
    "schedule_step",
    "seasonal_tap",
    "solve_feeder",
    "solve_milp",
    "stage_one",
    "stage_two",
    "synth_household",
    "synthesize_feeder",
    "validate_plant",
    "validate_system",
    "verify_frequency",
    "wind_curtailment",
    "zip_exponent",
]
