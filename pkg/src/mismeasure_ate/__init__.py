"""Misclassification- and selection-bias-corrected IPW estimation of the
average treatment effect, with stacked-estimating-equation sandwich
inference and a Monte Carlo simulation lab."""

__version__ = "0.1.0"

from .frames import (  # noqa: E402
    ESTIMATOR_IDS,
    AteEstimate,
    MisclassRates,
    ObservationFrame,
    PropensityPair,
)
from .estimators import (  # noqa: E402
    compute_b_opt,
    estimate_misclassification,
    tau_all_silver,
    tau_naive,
    tau_nonval_corrected,
    tau_oracle,
    tau_s_combined,
    tau_s_nonval,
    tau_s_opt,
    tau_s_val_only,
    tau_s_weighted,
    tau_sy_combined,
    tau_val_only,
)
from .inference import (  # noqa: E402
    FrameAnalysis,
    SandwichResult,
    StackedParams,
    analyze_frame,
    build_system,
    combine_delta,
    confidence_interval,
    sandwich,
    solve_plugin,
)
from .simulation import (  # noqa: E402
    DgpConfig,
    ScenarioConfig,
    ScenarioResult,
    SelectionConfig,
    calibrate_intercept,
    generate_population,
    run_scenario,
    scenario_catalog,
    select_validation,
    true_ate_oracle,
)

__all__ = [
    "ESTIMATOR_IDS",
    "AteEstimate",
    "MisclassRates",
    "ObservationFrame",
    "PropensityPair",
    "compute_b_opt",
    "estimate_misclassification",
    "tau_all_silver",
    "tau_naive",
    "tau_nonval_corrected",
    "tau_oracle",
    "tau_s_combined",
    "tau_s_nonval",
    "tau_s_opt",
    "tau_s_val_only",
    "tau_s_weighted",
    "tau_sy_combined",
    "tau_val_only",
    "FrameAnalysis",
    "SandwichResult",
    "StackedParams",
    "analyze_frame",
    "build_system",
    "combine_delta",
    "confidence_interval",
    "sandwich",
    "solve_plugin",
    "DgpConfig",
    "ScenarioConfig",
    "ScenarioResult",
    "SelectionConfig",
    "calibrate_intercept",
    "generate_population",
    "run_scenario",
    "scenario_catalog",
    "select_validation",
    "true_ate_oracle",
]
