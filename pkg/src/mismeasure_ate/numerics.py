"""Foundational numerical routines.

Logistic-model fitting by iteratively reweighted least squares, a partially
pivoted LU linear solver, central-difference Jacobians, and the stable
logistic / normal-quantile functions everything else consumes. All functions
are pure; nothing here holds state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NonFiniteEvaluation,
    SeparationSuspected,
    SingularSystem,
)

# Probabilities used as inverse-probability denominators are clamped into
# [PROB_CLAMP, 1 - PROB_CLAMP] so a saturated logistic prediction can never
# produce a zero or infinite weight.
PROB_CLAMP = 1e-12

SCORE_TOL = 1e-8       # max |score| at convergence
STEP_TOL = 1e-10       # max |coefficient step| at convergence
MAX_ITER = 100
MAX_HALVINGS = 10      # step halvings per Newton step before giving up
SEPARATION_COEF = 30.0 # |coef| beyond this at failure suggests separation

PIVOT_RTOL = 1e-12     # pivot magnitude below PIVOT_RTOL * max|a| is singular


def expit(u):
    """Logistic function 1 / (1 + exp(-u)), stable for large |u|.

    Scalar in, float out; array in, array out. Negative and nonnegative
    arguments take different branches so exp never overflows.
    """
    arr = np.asarray(u, dtype=float)
    out = np.empty_like(arr)
    neg = arr < 0
    out[~neg] = 1.0 / (1.0 + np.exp(-arr[~neg]))
    eu = np.exp(arr[neg])
    out[neg] = eu / (1.0 + eu)
    if arr.ndim == 0:
        return float(out)
    return out


def logit(p):
    """Inverse of expit: log(p / (1 - p))."""
    arr = np.asarray(p, dtype=float)
    out = np.log(arr) - np.log1p(-arr)
    if arr.ndim == 0:
        return float(out)
    return out


def clamp_probability(p):
    """Clip probabilities into [PROB_CLAMP, 1 - PROB_CLAMP]."""
    return np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)


@dataclass(frozen=True)
class DesignMatrix:
    """Dense design matrix, optionally carrying an all-ones intercept column.

    Invariants checked at construction: at least as many rows as columns,
    every entry finite, and (when declared) column 0 identically one.
    """

    values: np.ndarray
    has_intercept: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionMismatch(f"design matrix must be 2-d, got ndim={values.ndim}")
        if values.shape[0] < values.shape[1]:
            raise DimensionMismatch(
                f"design matrix has more columns ({values.shape[1]}) than rows ({values.shape[0]})"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteEvaluation("design matrix contains non-finite entries")
        if self.has_intercept and not np.all(values[:, 0] == 1.0):
            raise DimensionMismatch("intercept column must be all ones")
        object.__setattr__(self, "values", values)

    @classmethod
    def with_intercept(cls, x: np.ndarray) -> "DesignMatrix":
        """Prepend an intercept column to raw covariates (n,) or (n, k)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        ones = np.ones((x.shape[0], 1))
        return cls(np.hstack([ones, x]), has_intercept=True)

    @classmethod
    def intercept_only(cls, n: int) -> "DesignMatrix":
        return cls(np.ones((n, 1)), has_intercept=True)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LogisticFit:
    """Fitted logistic coefficients plus convergence diagnostics."""

    coefficients: np.ndarray
    converged: bool
    iterations: int
    max_abs_score: float


def _as_design(x) -> np.ndarray:
    if isinstance(x, DesignMatrix):
        return x.values
    return DesignMatrix(np.asarray(x, dtype=float)).values


def _bernoulli_loglik(u: np.ndarray, y: np.ndarray, w: np.ndarray) -> float:
    # log L = sum w * (y*u - log(1 + exp(u))), with logaddexp for stability
    return float(np.sum(w * (y * u - np.logaddexp(0.0, u))))


def fit_logistic(x, y, weights=None) -> LogisticFit:
    """Maximize the (weighted) Bernoulli log-likelihood by Newton/IRLS steps.

    Parameters
    ----------
    x : DesignMatrix or array_like, shape (n, k)
    y : array_like of 0/1, length n
    weights : optional nonnegative array_like, length n

    Convergence is declared when the max absolute score drops to 1e-8 or the
    coefficient step max-norm drops to 1e-10. Newton steps that would lower
    the log-likelihood are halved up to 10 times, which survives
    near-separation without oscillating.

    Raises
    ------
    SingularSystem
        Weighted information matrix is rank deficient.
    SeparationSuspected
        No convergence and some |coefficient| exceeds 30.
    NoConvergence
        Iteration budget (100) exhausted; diagnostics attached to the error.
    """
    xv = _as_design(x)
    y = np.asarray(y, dtype=float)
    n, k = xv.shape
    if y.shape != (n,):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({n},)")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("y entries must be 0 or 1")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise DimensionMismatch(f"weights have shape {w.shape}, expected ({n},)")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")

    beta = np.zeros(k)
    u = xv @ beta
    loglik = _bernoulli_loglik(u, y, w)
    max_abs_score = np.inf

    for iteration in range(1, MAX_ITER + 1):
        p = expit(u)
        score = xv.T @ (w * (y - p))
        max_abs_score = float(np.max(np.abs(score))) if k else 0.0
        if max_abs_score <= SCORE_TOL:
            return LogisticFit(beta, True, iteration - 1, max_abs_score)

        info = xv.T @ (xv * (w * p * (1.0 - p))[:, None])
        step = solve_linear(info, score)

        # step halving keeps the likelihood monotone near separation
        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = beta + scale * step
            u_new = xv @ candidate
            if _bernoulli_loglik(u_new, y, w) >= loglik:
                break
            scale *= 0.5
        beta = beta + scale * step
        u = xv @ beta
        loglik = _bernoulli_loglik(u, y, w)

        if float(np.max(np.abs(scale * step))) <= STEP_TOL:
            p = expit(u)
            max_abs_score = float(np.max(np.abs(xv.T @ (w * (y - p)))))
            return LogisticFit(beta, True, iteration, max_abs_score)

    failed = LogisticFit(beta, False, MAX_ITER, max_abs_score)
    if np.any(np.abs(beta) > SEPARATION_COEF):
        raise SeparationSuspected(
            f"no convergence after {MAX_ITER} iterations with max |coef| = "
            f"{np.max(np.abs(beta)):.2f}; data may be separated",
            fit=failed,
        )
    raise NoConvergence(
        f"no convergence after {MAX_ITER} iterations (max |score| = {max_abs_score:.3e})",
        fit=failed,
    )


def predict_proba(fit: LogisticFit, x) -> np.ndarray:
    """Elementwise expit(x @ coefficients), clamped to [1e-12, 1 - 1e-12].

    The clamp keeps downstream inverse-probability weights finite even for
    saturated linear predictors.
    """
    xv = _as_design(x)
    beta = np.asarray(fit.coefficients, dtype=float)
    if xv.shape[1] != beta.shape[0]:
        raise DimensionMismatch(
            f"design has {xv.shape[1]} columns but fit has {beta.shape[0]} coefficients"
        )
    return clamp_probability(expit(xv @ beta))


def numeric_jacobian(f, theta, step=None) -> np.ndarray:
    """Central-difference Jacobian of a vector-valued function.

    J[i, j] = (f(theta + h_j e_j)[i] - f(theta - h_j e_j)[i]) / (2 h_j) with
    h_j = 1e-6 * max(1, |theta_j|) unless an explicit scalar step is given.

    Raises NonFiniteEvaluation if f returns NaN or infinity anywhere.
    """
    theta = np.asarray(theta, dtype=float)
    if step is None:
        h = 1e-6 * np.maximum(1.0, np.abs(theta))
    else:
        h = np.full(theta.shape, float(step))

    columns = []
    for j in range(theta.size):
        up = theta.copy()
        up[j] += h[j]
        down = theta.copy()
        down[j] -= h[j]
        f_up = np.atleast_1d(np.asarray(f(up), dtype=float))
        f_down = np.atleast_1d(np.asarray(f(down), dtype=float))
        if not (np.all(np.isfinite(f_up)) and np.all(np.isfinite(f_down))):
            raise NonFiniteEvaluation(f"function returned non-finite values near coordinate {j}")
        columns.append((f_up - f_down) / (2.0 * h[j]))
    return np.column_stack(columns)


def solve_linear(a, b) -> np.ndarray:
    """Solve a X = b by partially pivoted LU decomposition.

    Accepts a vector or matrix right-hand side and preserves its shape.
    Raises SingularSystem when a pivot magnitude falls below
    1e-12 * max|a|.
    """
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"coefficient matrix must be square, got {a.shape}")
    n = a.shape[0]
    b_arr = np.array(b, dtype=float)
    vector_rhs = b_arr.ndim == 1
    rhs = b_arr[:, None] if vector_rhs else b_arr
    if rhs.shape[0] != n:
        raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, expected {n}")

    scale = float(np.max(np.abs(a))) if n else 0.0
    tol = PIVOT_RTOL * scale
    lu = a.copy()
    perm = np.arange(n)

    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(lu[col:, col])))
        if np.abs(lu[pivot_row, col]) <= tol:
            raise SingularSystem(f"pivot {np.abs(lu[pivot_row, col]):.3e} below tolerance {tol:.3e}")
        if pivot_row != col:
            lu[[col, pivot_row]] = lu[[pivot_row, col]]
            perm[[col, pivot_row]] = perm[[pivot_row, col]]
        factors = lu[col + 1:, col] / lu[col, col]
        lu[col + 1:, col] = factors
        lu[col + 1:, col + 1:] -= factors[:, None] * lu[col, col + 1:]

    x = rhs[perm].copy()
    for col in range(n):                      # forward substitution (unit lower)
        x[col + 1:] -= lu[col + 1:, col][:, None] * x[col]
    for col in range(n - 1, -1, -1):          # back substitution
        x[col] /= lu[col, col]
        x[:col] -= lu[:col, col][:, None] * x[col]

    return x[:, 0] if vector_rhs else x


def normal_quantile(p: float) -> float:
    """Standard normal quantile (Wichura's AS241, double precision)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile argument must be in (0, 1), got {p}")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0 else 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    value = num / den
    return float(-value if q < 0 else value)
