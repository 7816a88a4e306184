"""Point estimators of the average treatment effect.

Every estimator is a pure function of an ObservationFrame plus externally
fitted propensities, so the same code serves the Monte Carlo loop (refit per
iteration) and one-shot data analysis. Sandwich standard errors live in
``inference``; these functions return point estimates only.

Notation used in the docstrings: e is the treatment propensity, pi the
validation-selection propensity, p11/p10 the misclassification rates, V the
validation indicator, Y the gold outcome, Y* the error-prone outcome.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import (
    DegenerateValidation,
    DegenerateVarianceWarning,
    EmptyArm,
    EmptyComplement,
    EmptyComplementArm,
    EmptyValidationArm,
    MissingGoldOutcomes,
    NonIdentifiable,
    WeightOutOfRange,
)
from .frames import (
    IDENTIFIABILITY_TOL,
    AteEstimate,
    MisclassRates,
    ObservationFrame,
    PropensityPair,
)

B_OPT_DENOM_TOL = 1e-14


def estimate_misclassification(frame: ObservationFrame) -> MisclassRates:
    """Estimate (p11, p10) by direct counting on the validation rows.

    p11 = sum(Y * Y*) / sum(Y) and p10 = sum((1-Y) * Y*) / sum(1-Y), both
    over rows with V=1. Raises DegenerateValidation when the validation
    subsample lacks gold positives or negatives, NonIdentifiable when the
    two rates are closer than 1e-6.
    """
    mask = frame.v == 1.0
    if not np.any(mask):
        raise DegenerateValidation("no validated rows")
    y = frame.y[mask]
    y_star = frame.y_star[mask]
    positives = float(np.sum(y))
    negatives = float(np.sum(1.0 - y))
    if positives == 0.0 or negatives == 0.0:
        raise DegenerateValidation(
            f"validation rows contain {int(positives)} gold positives and {int(negatives)} gold negatives"
        )
    p11 = float(np.sum(y * y_star)) / positives
    p10 = float(np.sum((1.0 - y) * y_star)) / negatives
    if abs(p11 - p10) < IDENTIFIABILITY_TOL:
        raise NonIdentifiable(f"estimated rates p11 = {p11:.6f}, p10 = {p10:.6f} coincide")
    return MisclassRates(p11=p11, p10=p10)


def ipw_difference(treated_ind: np.ndarray, control_ind: np.ndarray,
                   outcome: np.ndarray, e: np.ndarray, denom: float) -> float:
    """Plain IPW contrast between two disjoint arm indicators:
    sum(treated*out/e)/denom - sum(control*out/(1-e))/denom."""
    treated = float(np.sum(treated_ind * outcome / e))
    control = float(np.sum(control_ind * outcome / (1.0 - e)))
    return treated / denom - control / denom


def hajek_contrast(weights_treated: np.ndarray, weights_control: np.ndarray,
                   outcome: np.ndarray) -> float:
    """Difference of weight-normalized outcome means.

    Invariant to rescaling all weights by a common positive constant. The
    two weight vectors must be disjointly supported (treated vs control);
    a zero total weight in either arm raises EmptyArm.
    """
    wt = float(np.sum(weights_treated))
    wc = float(np.sum(weights_control))
    if wt == 0.0 or wc == 0.0:
        raise EmptyArm("a Hajek arm has zero total weight")
    return float(np.sum(weights_treated * outcome)) / wt - float(np.sum(weights_control * outcome)) / wc


def tau_oracle(frame: ObservationFrame, props: PropensityPair) -> AteEstimate:
    """IPW contrast on the true outcome: mean(T*Y/e) - mean((1-T)*Y/(1-e)).

    Requires the gold outcome on every row, so this is a simulation-only
    benchmark.
    """
    if np.any(np.isnan(frame.y)):
        raise MissingGoldOutcomes("oracle estimator needs the gold outcome on every row")
    tau = ipw_difference(frame.t, 1.0 - frame.t, frame.y, props.e, float(frame.n))
    return AteEstimate("oracle", tau)


def tau_naive(frame: ObservationFrame, props: PropensityPair) -> AteEstimate:
    """Oracle formula with the error-prone outcome substituted for Y."""
    tau = ipw_difference(frame.t, 1.0 - frame.t, frame.y_star, props.e, float(frame.n))
    return AteEstimate("naive", tau)


def tau_val_only(frame: ObservationFrame, props: PropensityPair) -> AteEstimate:
    """IPW contrast using gold outcomes on validation rows, normalized by n_V."""
    n_v = frame.n_v
    if n_v < 1:
        raise EmptyValidationArm("no validated rows")
    v = frame.v
    if not (np.any((v == 1.0) & (frame.t == 1.0)) and np.any((v == 1.0) & (frame.t == 0.0))):
        raise EmptyValidationArm("validation rows must include both treatment arms")
    tau = ipw_difference(v * frame.t, v * (1.0 - frame.t), frame.y_validated,
                         props.e, float(n_v))
    return AteEstimate("val_only", tau)


def tau_nonval_corrected(frame: ObservationFrame, props: PropensityPair,
                         rates: MisclassRates) -> AteEstimate:
    """Misclassification-corrected IPW contrast on the non-validation rows.

    (1 / (p11 - p10)) * [mean over complement of T*Y*/e - (1-T)*Y*/(1-e)].
    """
    m = frame.n - frame.n_v
    if m < 1:
        raise EmptyComplement("every row is validated; no complement to correct")
    nv_mask = 1.0 - frame.v
    tau = ipw_difference(nv_mask * frame.t, nv_mask * (1.0 - frame.t),
                         frame.y_star, props.e, float(m)) / rates.gap
    return AteEstimate("nonval_corrected", tau)


def tau_sy_combined(frame: ObservationFrame, props: PropensityPair,
                    rates: MisclassRates, w: float = 0.5) -> AteEstimate:
    """Sample-size-weighted blend of val_only and nonval_corrected.

    lam = w*n_V / (w*n_V + (1-w)*(n - n_V)); w = 0.5 weights the two pieces
    proportionally to their sizes.
    """
    if not 0.0 <= w <= 1.0:
        raise WeightOutOfRange(f"w must lie in [0, 1], got {w}")
    n_v = frame.n_v
    lam = w * n_v / (w * n_v + (1.0 - w) * (frame.n - n_v))
    part_val = tau_val_only(frame, props).tau
    part_nonval = tau_nonval_corrected(frame, props, rates).tau
    return AteEstimate("sy_combined", lam * part_val + (1.0 - lam) * part_nonval,
                       weight_used=w)


def tau_s_val_only(frame: ObservationFrame, props: PropensityPair) -> AteEstimate:
    """Validation-only contrast reweighted by selection propensities:
    mean(V*T*Y/(e*pi)) - mean(V*(1-T)*Y/((1-e)*pi))."""
    pi = props.require_selection()
    v = frame.v
    y = frame.y_validated
    tau = ipw_difference(v * frame.t, v * (1.0 - frame.t), y / pi,
                         props.e, float(frame.n))
    return AteEstimate("s_val_only", tau)


def tau_s_nonval(frame: ObservationFrame, props: PropensityPair,
                 rates: MisclassRates | None = None, *, corrected: bool = True) -> AteEstimate:
    """Hajek contrast of Y* over the complement with selection weighting.

    Treated weights (1-V)*T / (e*(1-pi)), control weights
    (1-V)*(1-T) / ((1-e)*(1-pi)). With ``corrected`` the ratio-of-sums
    difference is scaled by 1/(p11 - p10); the raw Hajek value is what the
    blend in ``tau_s_combined`` consumes before its own correction.
    """
    pi = props.require_selection()
    nv = 1.0 - frame.v
    w_treated = nv * frame.t / (props.e * (1.0 - pi))
    w_control = nv * (1.0 - frame.t) / ((1.0 - props.e) * (1.0 - pi))
    try:
        raw = hajek_contrast(w_treated, w_control, frame.y_star)
    except EmptyArm as exc:
        raise EmptyComplementArm(str(exc)) from None
    if not corrected:
        return AteEstimate("s_nonval", raw)
    if rates is None:
        raise NonIdentifiable("corrected complement contrast needs misclassification rates")
    return AteEstimate("s_nonval", raw / rates.gap)


def tau_s_combined(frame: ObservationFrame, props: PropensityPair,
                   rates: MisclassRates) -> AteEstimate:
    """Selection-weighted blend: (n_V/n) * s_val_only plus
    ((n - n_V)/n) * corrected complement Hajek contrast."""
    n = frame.n
    n_v = frame.n_v
    part_val = tau_s_val_only(frame, props).tau
    if n_v == n:
        return AteEstimate("s_combined", part_val)
    part_nonval = tau_s_nonval(frame, props, rates, corrected=True).tau
    tau = (n_v / n) * part_val + ((n - n_v) / n) * part_nonval
    return AteEstimate("s_combined", tau)


def tau_all_silver(frame: ObservationFrame, props: PropensityPair,
                   rates: MisclassRates) -> AteEstimate:
    """Corrected Hajek contrast of Y* over the full sample:
    (1/(p11-p10)) * [weighted mean of Y* under T/e minus under (1-T)/(1-e)]."""
    w_treated = frame.t / props.e
    w_control = (1.0 - frame.t) / (1.0 - props.e)
    raw = hajek_contrast(w_treated, w_control, frame.y_star)
    return AteEstimate("all_silver", raw / rates.gap)


def tau_s_weighted(frame: ObservationFrame, props: PropensityPair,
                   rates: MisclassRates, b: float = 0.5) -> AteEstimate:
    """Fixed-weight blend b * s_val_only + (1 - b) * all_silver."""
    if not 0.0 <= b <= 1.0:
        raise WeightOutOfRange(f"b must lie in [0, 1], got {b}")
    part_val = tau_s_val_only(frame, props).tau
    part_silver = tau_all_silver(frame, props, rates).tau
    return AteEstimate("s_weighted", b * part_val + (1.0 - b) * part_silver,
                       weight_used=b)


def compute_b_opt(var_a: float, var_b: float, cov_ab: float) -> float:
    """Variance-minimizing blend weight for a*(component A) + (1-a)*(B).

    b_opt = (var_b - cov_ab) / (var_a + var_b - 2*cov_ab), clipped to [0, 1].
    A numerically zero denominator falls back to 0.5 and emits
    DegenerateVarianceWarning so a simulation iteration never aborts here.
    """
    denom = var_a + var_b - 2.0 * cov_ab
    if denom < B_OPT_DENOM_TOL:
        warnings.warn(
            f"optimal-weight denominator {denom:.3e} is degenerate; using b = 0.5",
            DegenerateVarianceWarning,
            stacklevel=2,
        )
        return 0.5
    b = (var_b - cov_ab) / denom
    return float(min(1.0, max(0.0, b)))


def tau_s_opt(frame: ObservationFrame, props: PropensityPair, rates: MisclassRates,
              var_val: float, var_silver: float, cov: float) -> AteEstimate:
    """Blend of s_val_only and all_silver at the variance-minimizing weight.

    The variance/covariance inputs come from the joint sandwich covariance of
    the two components (see ``inference``).
    """
    b = compute_b_opt(var_val, var_silver, cov)
    part_val = tau_s_val_only(frame, props).tau
    part_silver = tau_all_silver(frame, props, rates).tau
    return AteEstimate("s_opt", b * part_val + (1.0 - b) * part_silver, weight_used=b)
