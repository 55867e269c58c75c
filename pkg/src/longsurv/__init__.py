"""Time-to-event modeling toolkit for longitudinal cohorts.

Builds Cox proportional-hazards risk models (linear, feed-forward, or a
recurrent composite over daily observation rows) on top of an Efron-tie
partial likelihood, estimates baseline hazards, fits Weibull and Gompertz
parametric baselines, and evaluates with concordance, Brier scores and
permutation importance. See the ``longsurv`` console script for the
command-line workflow.
"""

from ._version import __version__
from .cohort import (
    Cohort,
    EventSpec,
    FeatureSchema,
    LongitudinalMatrix,
    PatientRecord,
    encode_longitudinal,
    load_cohort,
    save_cohort,
    stratified_split,
    truncate_observations,
)
from .engine import (
    BaselineHazardCurve,
    TrainedCoxModel,
    TrainingConfig,
    build_risk_index,
    cumulative_hazard,
    efron_nll,
    efron_nll_gradient,
    estimate_baseline_hazard,
    predict_survival,
    train,
    trained_model_from_dict,
    trained_model_to_dict,
)
from .errors import (
    ConfigError,
    DegenerateFitError,
    EmptyCohortError,
    MetricError,
    NumericError,
    ParseError,
    SamplingError,
    SchemaError,
    ShapeError,
    StratificationError,
    ToolkitError,
    TrainingError,
)
from .ingest import ingest_cohort, load_schema
from .metrics import (
    BrierCurve,
    ConcordanceResult,
    FeatureImportance,
    ImportanceReport,
    brier_curve,
    brier_score,
    concordance_error,
    kaplan_meier,
    permutation_importance,
)
from .models import (
    EncodedInput,
    InputDims,
    ParamVector,
    RiskModel,
    RiskModelSpec,
    backward,
    dims_from_schema,
    encode_input,
    encode_inputs,
    forward,
    init_params,
    model_from_dict,
    model_to_dict,
)
from .parametric import (
    ParametricModel,
    fit_parametric,
    parametric_model_from_dict,
    parametric_model_to_dict,
    parametric_survival,
)
from .synthetic import (
    SyntheticConfig,
    SyntheticTruth,
    generate_synthetic_cohort,
    generate_synthetic_cohort_with_truth,
)

__all__ = [
    "__version__",
    "BaselineHazardCurve",
    "BrierCurve",
    "Cohort",
    "ConcordanceResult",
    "ConfigError",
    "DegenerateFitError",
    "EmptyCohortError",
    "EncodedInput",
    "EventSpec",
    "FeatureImportance",
    "FeatureSchema",
    "ImportanceReport",
    "InputDims",
    "LongitudinalMatrix",
    "MetricError",
    "NumericError",
    "ParamVector",
    "ParametricModel",
    "ParseError",
    "PatientRecord",
    "RiskModel",
    "RiskModelSpec",
    "SamplingError",
    "SchemaError",
    "ShapeError",
    "StratificationError",
    "SyntheticConfig",
    "SyntheticTruth",
    "ToolkitError",
    "TrainedCoxModel",
    "TrainingConfig",
    "TrainingError",
    "backward",
    "brier_curve",
    "brier_score",
    "build_risk_index",
    "concordance_error",
    "cumulative_hazard",
    "dims_from_schema",
    "efron_nll",
    "efron_nll_gradient",
    "encode_input",
    "encode_inputs",
    "encode_longitudinal",
    "estimate_baseline_hazard",
    "fit_parametric",
    "forward",
    "generate_synthetic_cohort",
    "generate_synthetic_cohort_with_truth",
    "ingest_cohort",
    "init_params",
    "kaplan_meier",
    "load_cohort",
    "load_schema",
    "model_from_dict",
    "model_to_dict",
    "parametric_model_from_dict",
    "parametric_model_to_dict",
    "parametric_survival",
    "permutation_importance",
    "predict_survival",
    "save_cohort",
    "stratified_split",
    "train",
    "trained_model_from_dict",
    "trained_model_to_dict",
    "truncate_observations",
]
