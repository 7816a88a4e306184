"""Stacked estimating equations and empirical sandwich inference.

Two stacked systems are supported, differing in which rows identify the
corrected outcome contrast:

* kind "A": the weighted-least-squares rows run over the non-validation rows
  with weights R_i = (1-V)T/(e(1-pi)) + (1-V)(1-T)/((1-e)(1-pi)), so the
  slope block recovers the selection-weighted complement Hajek contrast.
* kind "B": the WLS rows run over every row with weights
  D_i = T/e + (1-T)/(1-e) under a second copy of the treatment model
  (gamma_s), so the slope block recovers the full-sample corrected contrast.

Parameter layout: (tau_s_val, gamma, eta, alpha, beta, p11, p10[, gamma_s]).
The covariance returned by :func:`sandwich` is already on the variance scale
of the estimators (divided by n).

``analyze_frame`` is the one-stop orchestration used by both the Monte Carlo
runner and the CLI: it fits the propensity models, computes every requested
point estimate, and attaches sandwich standard errors and confidence
intervals from the appropriate stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import estimators as est
from .errors import (
    DegenerateValidation,
    EmptyArm,
    EmptyComplementArm,
    InvalidPropensity,
    MismeasureError,
    MissingGoldOutcomes,
    NegativeVariance,
    NonIdentifiable,
    ResidualCheckFailed,
)
from .frames import (
    ESTIMATOR_IDS,
    AteEstimate,
    MisclassRates,
    ObservationFrame,
    PropensityPair,
)
from .numerics import (
    DesignMatrix,
    LogisticFit,
    clamp_probability,
    expit,
    fit_logistic,
    logit,
    normal_quantile,
    numeric_jacobian,
    predict_proba,
    solve_linear,
)

RESIDUAL_TOL = 1e-6
SCORE_VARIANTS = ("standard", "printed")


def weight_r(t: float, v: float, e: float, pi: float) -> float:
    """Complement weight R = (1-V)T/(e(1-pi)) + (1-V)(1-T)/((1-e)(1-pi)).

    Zero on validation rows. Propensities must lie strictly in (0, 1).
    """
    if not (0.0 < e < 1.0 and 0.0 < pi < 1.0):
        raise InvalidPropensity(f"propensities e={e}, pi={pi} must lie in (0, 1)")
    return (1.0 - v) * (t / (e * (1.0 - pi)) + (1.0 - t) / ((1.0 - e) * (1.0 - pi)))


def weight_d(t: float, e: float) -> float:
    """Full-sample weight D = T/e + (1-T)/(1-e)."""
    if not 0.0 < e < 1.0:
        raise InvalidPropensity(f"propensity e={e} must lie in (0, 1)")
    return t / e + (1.0 - t) / (1.0 - e)


@dataclass(frozen=True)
class SystemLayout:
    """Index map for the stacked parameter vector."""

    tau: int
    gamma: slice
    eta: slice
    alpha: int
    beta: int
    p11: int
    p10: int
    gamma_s: slice | None
    dim: int


@dataclass(frozen=True)
class StackedParams:
    """Joint parameters of a stacked system (see module docstring)."""

    tau_s_val: float
    gamma: np.ndarray
    eta: np.ndarray
    alpha: float
    beta: float
    p11: float
    p10: float
    gamma_s: np.ndarray | None = None

    def to_vector(self) -> np.ndarray:
        parts = [np.atleast_1d(self.tau_s_val), self.gamma, self.eta,
                 [self.alpha, self.beta, self.p11, self.p10]]
        if self.gamma_s is not None:
            parts.append(self.gamma_s)
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    @classmethod
    def from_vector(cls, vec: np.ndarray, layout: SystemLayout) -> "StackedParams":
        gamma_s = None if layout.gamma_s is None else vec[layout.gamma_s].copy()
        return cls(
            tau_s_val=float(vec[layout.tau]),
            gamma=vec[layout.gamma].copy(),
            eta=vec[layout.eta].copy(),
            alpha=float(vec[layout.alpha]),
            beta=float(vec[layout.beta]),
            p11=float(vec[layout.p11]),
            p10=float(vec[layout.p10]),
            gamma_s=gamma_s,
        )


class EstimatingSystem:
    """Per-subject residual evaluator for one stacked system.

    Stateless after construction; safe to share across workers. Row i of
    ``per_subject_residuals(theta)`` is that subject's estimating-function
    contribution at theta.
    """

    def __init__(self, frame: ObservationFrame, kind: str, x_treat: np.ndarray,
                 x_sel: np.ndarray, score_variant: str = "standard"):
        if kind not in ("A", "B"):
            raise ValueError(f"kind must be 'A' or 'B', got {kind!r}")
        if score_variant not in SCORE_VARIANTS:
            raise ValueError(f"score_variant must be one of {SCORE_VARIANTS}")
        if frame.n_v == 0:
            raise DegenerateValidation("stacked system needs at least one validated row")
        self.kind = kind
        self.score_variant = score_variant
        self.x_treat = np.asarray(x_treat, dtype=float)
        self.x_sel = np.asarray(x_sel, dtype=float)
        self._t = frame.t
        self._v = frame.v
        self._y_star = frame.y_star
        self._yv = frame.y_validated
        self._n = frame.n
        self._n_v = frame.n_v

        p_t = self.x_treat.shape[1]
        p_s = self.x_sel.shape[1]
        pos = 1
        gamma = slice(pos, pos + p_t)
        pos += p_t
        eta = slice(pos, pos + p_s)
        pos += p_s
        alpha, beta, p11, p10 = pos, pos + 1, pos + 2, pos + 3
        pos += 4
        gamma_s = None
        if kind == "B":
            gamma_s = slice(pos, pos + p_t)
            pos += p_t
        self.layout = SystemLayout(0, gamma, eta, alpha, beta, p11, p10, gamma_s, pos)

    @property
    def dim(self) -> int:
        return self.layout.dim

    def per_subject_residuals(self, theta) -> np.ndarray:
        """(n, dim) matrix whose row i is phi_i(theta)."""
        vec = theta.to_vector() if isinstance(theta, StackedParams) else np.asarray(theta, dtype=float)
        lay = self.layout
        tau = vec[lay.tau]
        gamma = vec[lay.gamma]
        eta = vec[lay.eta]
        alpha, beta = vec[lay.alpha], vec[lay.beta]
        p11, p10 = vec[lay.p11], vec[lay.p10]

        t, v, y_star, yv = self._t, self._v, self._y_star, self._yv
        e_raw = expit(self.x_treat @ gamma)
        e = clamp_probability(e_raw)
        pi_raw = expit(self.x_sel @ eta)
        pi = clamp_probability(pi_raw)

        out = np.empty((self._n, lay.dim))
        out[:, lay.tau] = yv * (v * t / (e * pi) - v * (1.0 - t) / ((1.0 - e) * pi)) - tau

        score_t = (t - e_raw)[:, None] * self.x_treat
        if self.score_variant == "printed":
            score_t = score_t * pi_raw[:, None]
        out[:, lay.gamma] = score_t
        out[:, lay.eta] = (v - pi_raw)[:, None] * self.x_sel

        if self.kind == "A":
            wls_w = (1.0 - v) * (t / (e * (1.0 - pi)) + (1.0 - t) / ((1.0 - e) * (1.0 - pi)))
        else:
            e_s_raw = expit(self.x_treat @ vec[lay.gamma_s])
            e_s = clamp_probability(e_s_raw)
            wls_w = t / e_s + (1.0 - t) / (1.0 - e_s)
            out[:, lay.gamma_s] = (t - e_s_raw)[:, None] * self.x_treat

        wls_resid = y_star - alpha - (p11 - p10) * beta * t
        out[:, lay.alpha] = wls_w * wls_resid
        out[:, lay.beta] = wls_w * t * wls_resid

        scale = self._n / self._n_v
        out[:, lay.p11] = (yv * y_star - p11 * yv) * v * scale
        out[:, lay.p10] = ((1.0 - yv) * y_star - p10 * (1.0 - yv)) * v * scale
        return out

    def summed_residuals(self, theta) -> np.ndarray:
        return self.per_subject_residuals(theta).sum(axis=0)

    def mean_residuals(self, theta) -> np.ndarray:
        return self.summed_residuals(theta) / self._n


def build_system(frame: ObservationFrame, kind: str, *, x_treat=None, x_sel=None,
                 score_variant: str = "standard") -> EstimatingSystem:
    """Construct the stacked system for a frame.

    Defaults: treatment design is an intercept plus every covariate;
    selection design is an intercept, the treatment indicator, and every
    covariate. Under the "printed" score variant the treatment-score rows
    carry a multiplicative selection-probability factor; the plain ML point
    estimate of gamma does not zero those rows, so the residual check in
    :func:`solve_plugin` skips the treatment block in that case.
    """
    if x_treat is None:
        x_treat = DesignMatrix.with_intercept(frame.x).values
    if x_sel is None:
        x_sel = DesignMatrix.with_intercept(
            np.column_stack([frame.t, frame.x])
        ).values
    return EstimatingSystem(frame, kind, x_treat, x_sel, score_variant)


def fit_selection(x_sel: np.ndarray, v: np.ndarray) -> LogisticFit:
    """ML fit of the selection indicator.

    An intercept-only design is solved in closed form (logit of the
    validation share), which zeroes its score row exactly; anything else
    goes through IRLS.
    """
    x_sel = np.asarray(x_sel, dtype=float)
    if x_sel.shape[1] == 1 and np.all(x_sel[:, 0] == 1.0):
        share = float(np.mean(v))
        if not 0.0 < share < 1.0:
            raise DegenerateValidation("validation indicator is constant; cannot fit selection model")
        coef = np.array([logit(share)])
        score = float(abs(np.sum(v - expit(coef[0]))))
        return LogisticFit(coef, True, 0, score)
    return fit_logistic(x_sel, v)


def _wls_closed_form(weights: np.ndarray, t: np.ndarray, y_star: np.ndarray,
                     gap: float, kind: str) -> tuple[float, float]:
    """Exact weighted-least-squares solution of Y* on (1, T).

    Returns (alpha, beta) where the fitted slope equals gap * beta; for
    binary T this is the Hajek arm contrast divided by the rate gap.
    """
    sw1 = float(np.sum(weights * t))
    sw0 = float(np.sum(weights * (1.0 - t)))
    if sw1 == 0.0 or sw0 == 0.0:
        if kind == "A":
            raise EmptyComplementArm("complement lacks a treatment arm; WLS block undefined")
        raise EmptyArm("a treatment arm has zero weight; WLS block undefined")
    mean1 = float(np.sum(weights * t * y_star)) / sw1
    mean0 = float(np.sum(weights * (1.0 - t) * y_star)) / sw0
    return mean0, (mean1 - mean0) / gap


def solve_plugin(frame: ObservationFrame, kind: str, *, system: EstimatingSystem | None = None,
                 x_treat=None, x_sel=None, score_variant: str = "standard",
                 treat_fit: LogisticFit | None = None, sel_fit: LogisticFit | None = None,
                 rates: MisclassRates | None = None, check: bool = True) -> StackedParams:
    """Fill the stacked parameters by sequential plug-in and verify them.

    gamma (and gamma_s) come from full-sample ML of the treatment model, eta
    from ML of the selection model, (p11, p10) from validation counting,
    (alpha, beta) from the closed-form WLS with R (kind A) or D (kind B)
    weights, and the leading slot from the selection-weighted validation
    contrast. Raises ResidualCheckFailed if the stacked residual mean
    exceeds 1e-6 in max norm.
    """
    if system is None:
        system = build_system(frame, kind, x_treat=x_treat, x_sel=x_sel,
                              score_variant=score_variant)
    if treat_fit is None:
        treat_fit = fit_logistic(system.x_treat, frame.t)
    if sel_fit is None:
        sel_fit = fit_selection(system.x_sel, frame.v)
    if rates is None:
        rates = est.estimate_misclassification(frame)

    e = predict_proba(treat_fit, system.x_treat)
    pi = predict_proba(sel_fit, system.x_sel)
    if system.kind == "A":
        weights = (1.0 - frame.v) * (
            frame.t / (e * (1.0 - pi)) + (1.0 - frame.t) / ((1.0 - e) * (1.0 - pi))
        )
    else:
        weights = frame.t / e + (1.0 - frame.t) / (1.0 - e)
    alpha, beta = _wls_closed_form(weights, frame.t, frame.y_star, rates.gap, system.kind)

    props = PropensityPair(e=e, pi_v=pi)
    tau_s_val = est.tau_s_val_only(frame, props).tau

    params = StackedParams(
        tau_s_val=tau_s_val,
        gamma=np.asarray(treat_fit.coefficients, dtype=float),
        eta=np.asarray(sel_fit.coefficients, dtype=float),
        alpha=alpha,
        beta=beta,
        p11=rates.p11,
        p10=rates.p10,
        gamma_s=np.asarray(treat_fit.coefficients, dtype=float) if system.kind == "B" else None,
    )

    if check:
        means = np.abs(system.mean_residuals(params))
        if system.score_variant == "printed":
            means[system.layout.gamma] = 0.0  # plain-ML gamma does not zero the printed rows
        worst = float(np.max(means))
        if worst > RESIDUAL_TOL:
            raise ResidualCheckFailed(
                f"stacked residual mean max-norm {worst:.3e} exceeds {RESIDUAL_TOL:.0e}"
            )
    return params


@dataclass(frozen=True)
class SandwichResult:
    """Joint covariance (variance scale, already divided by n) and SEs."""

    theta_hat: StackedParams
    covariance: np.ndarray
    se: np.ndarray
    layout: SystemLayout


def _sandwich_core(system, theta_vec: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    jac = numeric_jacobian(system.summed_residuals, theta_vec)
    bread = -jac / n
    phi = system.per_subject_residuals(theta_vec)
    meat = phi.T @ phi / n
    bread_inv = solve_linear(bread, np.eye(len(theta_vec)))
    cov = bread_inv @ meat @ bread_inv.T / n
    cov = 0.5 * (cov + cov.T)
    diag = np.diag(cov)
    if np.any(diag < -1e-12):
        raise NegativeVariance(f"sandwich produced negative variance {float(diag.min()):.3e}")
    return cov, np.sqrt(np.maximum(diag, 0.0))


def sandwich(frame: ObservationFrame, system: EstimatingSystem,
             theta_hat: StackedParams) -> SandwichResult:
    """Empirical sandwich covariance A^-1 B A^-T / n at the plug-in solution.

    The bread A is the central-difference Jacobian of the summed residuals
    divided by -n; the meat B is the mean outer product of per-subject
    residuals. The result is symmetrized as (C + C^T)/2.
    """
    cov, se = _sandwich_core(system, theta_hat.to_vector(), frame.n)
    return SandwichResult(theta_hat, cov, se, system.layout)


def combine_delta(result: SandwichResult, weights: tuple[float, float],
                  indices: tuple[int, int]) -> tuple[float, float]:
    """Point estimate and SE of c_a * theta[ia] + c_b * theta[ib].

    First-order delta method with the weights held fixed. Raises
    NegativeVariance rather than clamping if rounding drives the quadratic
    form negative.
    """
    c_a, c_b = weights
    ia, ib = indices
    vec = result.theta_hat.to_vector()
    point = c_a * float(vec[ia]) + c_b * float(vec[ib])
    cov = result.covariance
    var = (c_a ** 2) * cov[ia, ia] + (c_b ** 2) * cov[ib, ib] + 2.0 * c_a * c_b * cov[ia, ib]
    if var < 0.0:
        raise NegativeVariance(f"combined variance {var:.3e} is negative")
    return point, float(np.sqrt(var))


def confidence_interval(point: float, se: float, level: float = 0.95) -> tuple[float, float]:
    """Normal-theory interval point +/- z_{(1+level)/2} * se."""
    if se < 0:
        raise ValueError("se must be nonnegative")
    z = normal_quantile(0.5 + level / 2.0)
    return point - z * se, point + z * se


class _PlainIpwSystem:
    """Two-block stack (tau, gamma) for the uncorrected IPW estimator."""

    def __init__(self, frame: ObservationFrame, outcome: np.ndarray, x_treat: np.ndarray):
        self._t = frame.t
        self._outcome = np.asarray(outcome, dtype=float)
        self.x_treat = np.asarray(x_treat, dtype=float)
        self._n = frame.n

    @property
    def dim(self) -> int:
        return 1 + self.x_treat.shape[1]

    def per_subject_residuals(self, vec: np.ndarray) -> np.ndarray:
        tau, gamma = vec[0], vec[1:]
        e_raw = expit(self.x_treat @ gamma)
        e = clamp_probability(e_raw)
        t, outcome = self._t, self._outcome
        out = np.empty((self._n, self.dim))
        out[:, 0] = t * outcome / e - (1.0 - t) * outcome / (1.0 - e) - tau
        out[:, 1:] = (t - e_raw)[:, None] * self.x_treat
        return out

    def summed_residuals(self, vec: np.ndarray) -> np.ndarray:
        return self.per_subject_residuals(vec).sum(axis=0)


def ipw_point_and_se(frame: ObservationFrame, outcome: np.ndarray,
                     x_treat: np.ndarray, treat_fit: LogisticFit) -> tuple[float, float]:
    """Plain IPW contrast on a fully observed outcome plus its sandwich SE."""
    e = predict_proba(treat_fit, x_treat)
    tau = est.ipw_difference(frame.t, 1.0 - frame.t, outcome, e, float(frame.n))
    system = _PlainIpwSystem(frame, outcome, x_treat)
    theta = np.concatenate([[tau], treat_fit.coefficients])
    cov, se = _sandwich_core(system, theta, frame.n)
    return tau, float(se[0])


# --- frame-level orchestration ------------------------------------------------

RATE_CONSUMERS = frozenset({
    "nonval_corrected", "sy_combined", "s_nonval", "s_combined",
    "all_silver", "s_weighted", "s_opt",
})
EQ1_FAMILY = ("val_only", "nonval_corrected", "sy_combined")
S_FAMILY_A = ("s_val_only", "s_nonval", "s_combined")
S_FAMILY_B = ("all_silver", "s_weighted", "s_opt")


@dataclass
class FrameAnalysis:
    """Everything ``analyze_frame`` produced for one dataset.

    ``failures`` holds estimators whose point estimate could not be computed;
    ``se_failures`` holds estimators whose point estimate exists but whose
    sandwich SE could not be obtained. Reasons are error class names.
    """

    estimates: dict[str, AteEstimate] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    se_failures: dict[str, str] = field(default_factory=dict)
    rates: MisclassRates | None = None
    b_opt: float | None = None


def _reason(exc: Exception) -> str:
    return type(exc).__name__


def analyze_frame(frame: ObservationFrame, estimator_ids, *, x_treat=None, x_sel=None,
                  w: float = 0.5, b: float | None = None,
                  score_variant: str = "standard", level: float = 0.95) -> FrameAnalysis:
    """Compute requested estimators with sandwich SEs and CIs on one frame.

    ``x_sel`` is the selection-model design matrix; pass None when the
    validation sample is (treated as) a simple random sample, in which case
    the selection propensity is the constant n_V / n and the selection block
    of every stack is intercept-only. The estimators that ignore selection
    weighting always draw their SEs from the intercept-only stack regardless
    of ``x_sel``.

    ``b`` is the fixed weight of the non-optimal blend of s_val_only and
    all_silver; None (the default) weights them proportionally to the
    validation and full sample sizes, b = n_V / n, matching the convention
    the w = 0.5 blend uses for its two pieces.

    Point-estimate failures and SE-only failures are recorded separately and
    never abort the remaining estimators.
    """
    ids = list(estimator_ids)
    unknown = [i for i in ids if i not in ESTIMATOR_IDS]
    if unknown:
        raise ValueError(f"unknown estimator ids: {unknown}")

    analysis = FrameAnalysis()
    if x_treat is None:
        x_treat = DesignMatrix.with_intercept(frame.x).values
    treat_fit = fit_logistic(x_treat, frame.t)
    e = predict_proba(treat_fit, x_treat)
    n, n_v = frame.n, frame.n_v

    def fail(est_ids, exc):
        for est_id in est_ids:
            if est_id in ids and est_id not in analysis.estimates and est_id not in analysis.failures:
                analysis.failures[est_id] = _reason(exc)

    def attach(est_id, tau, se, weight=None):
        if se is None:
            analysis.estimates[est_id] = AteEstimate(est_id, tau, weight_used=weight)
        else:
            low, high = confidence_interval(tau, se, level)
            analysis.estimates[est_id] = AteEstimate(est_id, tau, se, low, high, weight)

    # gold-outcome benchmarks on their own two-block stacks
    for est_id, outcome in (("oracle", frame.y), ("naive", frame.y_star)):
        if est_id not in ids:
            continue
        try:
            if est_id == "oracle" and np.any(np.isnan(frame.y)):
                raise MissingGoldOutcomes("oracle estimator needs the gold outcome on every row")
            tau, se = ipw_point_and_se(frame, outcome, x_treat, treat_fit)
            attach(est_id, tau, se)
        except MismeasureError as exc:
            fail([est_id], exc)

    try:
        rates = est.estimate_misclassification(frame)
        analysis.rates = rates
    except (DegenerateValidation, NonIdentifiable) as exc:
        rates = None
        fail(RATE_CONSUMERS, exc)

    # selection propensities for the point estimates
    sel_fit = None
    pi_points = None
    if x_sel is not None:
        try:
            sel_fit = fit_selection(x_sel, frame.v)
            pi_points = predict_proba(sel_fit, x_sel)
        except MismeasureError as exc:
            fail(S_FAMILY_A + S_FAMILY_B, exc)
    elif n_v > 0:
        pi_points = clamp_probability(np.full(n, n_v / n))
    else:
        fail(S_FAMILY_A + S_FAMILY_B, DegenerateValidation("no validated rows"))

    props_plain = PropensityPair(e=e)
    props_sel = PropensityPair(e=e, pi_v=pi_points) if pi_points is not None else None

    # stacks, built lazily and shared across the estimators they serve;
    # each cache slot holds (SandwichResult | None, error | None)
    x_sel_const = np.ones((n, 1))
    stacks: dict[str, tuple] = {}

    def stack(which):
        if which == "A" and x_sel is None:
            which = "eq1"  # SRS: the fitted-selection stack IS the constant stack
        if which in stacks:
            return stacks[which]
        try:
            if which == "eq1":
                system = build_system(frame, "A", x_treat=x_treat, x_sel=x_sel_const,
                                      score_variant=score_variant)
                params = solve_plugin(frame, "A", system=system, treat_fit=treat_fit,
                                      rates=rates)
            elif which == "A":
                system = build_system(frame, "A", x_treat=x_treat, x_sel=x_sel,
                                      score_variant=score_variant)
                params = solve_plugin(frame, "A", system=system, treat_fit=treat_fit,
                                      sel_fit=sel_fit, rates=rates)
            else:
                sel_design = x_sel_const if x_sel is None else x_sel
                system = build_system(frame, "B", x_treat=x_treat, x_sel=sel_design,
                                      score_variant=score_variant)
                params = solve_plugin(frame, "B", system=system, treat_fit=treat_fit,
                                      sel_fit=sel_fit, rates=rates)
            entry = (sandwich(frame, system, params), None)
        except MismeasureError as exc:
            entry = (None, exc)
        stacks[which] = entry
        return entry

    def point_then_se(est_id, point_fn, se_fn, stack_name, weight=None):
        """Compute the point estimate, then its SE from the named stack."""
        if est_id not in ids:
            return
        try:
            tau = point_fn()
        except MismeasureError as exc:
            fail([est_id], exc)
            return
        res, err = stack(stack_name)
        se = None
        if res is not None:
            try:
                se = se_fn(res)
            except MismeasureError as exc:
                err = exc
        if se is None and err is not None:
            analysis.se_failures[est_id] = _reason(err)
        attach(est_id, tau, se, weight)

    lam = None
    if n > 0:
        lam = w * n_v / (w * n_v + (1.0 - w) * (n - n_v)) if n_v < n else 1.0
    b_eff = n_v / n if b is None else b

    point_then_se(
        "val_only",
        lambda: est.tau_val_only(frame, props_plain).tau,
        lambda res: float(res.se[res.layout.tau]),
        "eq1",
    )
    if rates is not None:
        point_then_se(
            "nonval_corrected",
            lambda: est.tau_nonval_corrected(frame, props_plain, rates).tau,
            lambda res: float(res.se[res.layout.beta]),
            "eq1",
        )
        point_then_se(
            "sy_combined",
            lambda: est.tau_sy_combined(frame, props_plain, rates, w=w).tau,
            lambda res: combine_delta(res, (lam, 1.0 - lam),
                                      (res.layout.tau, res.layout.beta))[1],
            "eq1",
            weight=w,
        )

    if props_sel is not None:
        point_then_se(
            "s_val_only",
            lambda: est.tau_s_val_only(frame, props_sel).tau,
            lambda res: float(res.se[res.layout.tau]),
            "A",
        )
        if rates is not None:
            point_then_se(
                "s_nonval",
                lambda: est.tau_s_nonval(frame, props_sel, rates).tau,
                lambda res: float(res.se[res.layout.beta]),
                "A",
            )
            point_then_se(
                "s_combined",
                lambda: est.tau_s_combined(frame, props_sel, rates).tau,
                lambda res: combine_delta(res, (n_v / n, (n - n_v) / n),
                                          (res.layout.tau, res.layout.beta))[1],
                "A",
            )
            point_then_se(
                "all_silver",
                lambda: est.tau_all_silver(frame, props_sel, rates).tau,
                lambda res: float(res.se[res.layout.beta]),
                "B",
            )
            point_then_se(
                "s_weighted",
                lambda: est.tau_s_weighted(frame, props_sel, rates, b=b_eff).tau,
                lambda res: combine_delta(res, (b_eff, 1.0 - b_eff),
                                          (res.layout.tau, res.layout.beta))[1],
                "B",
                weight=b_eff,
            )
            if "s_opt" in ids:
                res, err = stack("B")
                if res is None:
                    fail(["s_opt"], err)
                else:
                    try:
                        lay = res.layout
                        cov = res.covariance
                        b_opt = est.compute_b_opt(
                            float(cov[lay.tau, lay.tau]), float(cov[lay.beta, lay.beta]),
                            float(cov[lay.tau, lay.beta]),
                        )
                        analysis.b_opt = b_opt
                        tau = est.tau_s_weighted(frame, props_sel, rates, b=b_opt).tau
                        _, se = combine_delta(res, (b_opt, 1.0 - b_opt), (lay.tau, lay.beta))
                        low, high = confidence_interval(tau, se, level)
                        analysis.estimates["s_opt"] = AteEstimate("s_opt", tau, se, low, high, b_opt)
                    except MismeasureError as exc:
                        fail(["s_opt"], exc)

    for est_id in ids:
        if est_id not in analysis.estimates and est_id not in analysis.failures:
            analysis.failures[est_id] = "NotComputed"
    return analysis
