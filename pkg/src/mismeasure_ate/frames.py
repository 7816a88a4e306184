"""Domain types: analysis frames, propensities, misclassification rates,
and the point-estimate record every estimator returns."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, InvalidPropensity, NonIdentifiable

IDENTIFIABILITY_TOL = 1e-6

# Canonical estimator identifiers, in report order. "oracle" needs the gold
# outcome on every row and is therefore simulation-only.
ESTIMATOR_IDS = (
    "oracle",            # IPW on the true outcome everywhere
    "naive",             # IPW on the error-prone outcome, no correction
    "val_only",          # gold outcomes from the validation rows only
    "nonval_corrected",  # corrected error-prone outcomes outside validation
    "sy_combined",       # size-weighted blend of the two above
    "s_val_only",        # validation gold outcomes, selection-weighted
    "s_nonval",          # complement Hajek contrast, selection-weighted
    "s_combined",        # selection-weighted blend of validation + complement
    "all_silver",        # corrected Hajek on every error-prone outcome
    "s_weighted",        # fixed-b blend of s_val_only and all_silver
    "s_opt",             # variance-minimizing blend of the same pair
)


def _binary(name: str, values: np.ndarray) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise ValueError(f"{name} entries must be 0 or 1")
    return arr


@dataclass(frozen=True)
class ObservationFrame:
    """One analysis dataset.

    ``y`` is the gold outcome, stored as floats with NaN wherever it was not
    observed. Frames built from external data carry ``y`` exactly on the
    validation rows; simulated frames may keep the full vector so the oracle
    estimator can be evaluated against it.
    """

    x: np.ndarray        # (n, p) covariates
    t: np.ndarray        # (n,) treatment, 0/1
    y_star: np.ndarray   # (n,) error-prone outcome, 0/1
    v: np.ndarray        # (n,) validation indicator, 0/1
    y: np.ndarray        # (n,) gold outcome, 0/1 where observed else NaN

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        n = x.shape[0]
        t = _binary("t", self.t)
        y_star = _binary("y_star", self.y_star)
        v = _binary("v", self.v)
        y = np.asarray(self.y, dtype=float)
        for name, arr in [("t", t), ("y_star", y_star), ("v", v), ("y", y)]:
            if arr.shape != (n,):
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected ({n},)")
        observed = ~np.isnan(y)
        if not np.all((y[observed] == 0.0) | (y[observed] == 1.0)):
            raise ValueError("observed y entries must be 0 or 1")
        if np.any((v == 1.0) & ~observed):
            raise ValueError("y must be present on every validation row")
        for name, arr in [("x", x), ("t", t), ("y_star", y_star), ("v", v)]:
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_v(self) -> int:
        return int(np.sum(self.v))

    @property
    def y_validated(self) -> np.ndarray:
        """Gold outcome with zeros off the validation rows (NaN-safe for
        expressions that multiply by the validation indicator)."""
        return np.where(self.v == 1.0, self.y, 0.0)

    def with_full_y(self, y_full: np.ndarray) -> "ObservationFrame":
        """Attach a complete gold-outcome vector (simulation oracle path)."""
        return replace(self, y=np.asarray(y_full, dtype=float))


@dataclass(frozen=True)
class PropensityPair:
    """Treatment propensities, and selection propensities when available.

    Both vectors must lie strictly inside (0, 1); ``pi_v`` may be None for
    estimators that never touch selection weights.
    """

    e: np.ndarray
    pi_v: np.ndarray | None = None

    def __post_init__(self):
        e = np.asarray(self.e, dtype=float)
        if np.any(~np.isfinite(e)) or np.any(e <= 0.0) or np.any(e >= 1.0):
            raise InvalidPropensity("treatment propensities must lie strictly in (0, 1)")
        object.__setattr__(self, "e", e)
        if self.pi_v is not None:
            pi = np.asarray(self.pi_v, dtype=float)
            if np.any(~np.isfinite(pi)) or np.any(pi <= 0.0) or np.any(pi >= 1.0):
                raise InvalidPropensity("selection propensities must lie strictly in (0, 1)")
            object.__setattr__(self, "pi_v", pi)

    def require_selection(self) -> np.ndarray:
        if self.pi_v is None:
            raise InvalidPropensity("estimator requires selection propensities, none supplied")
        return self.pi_v


@dataclass(frozen=True)
class MisclassRates:
    """Sensitivity p11 = P(Y*=1 | Y=1) and false-positive rate
    p10 = P(Y*=1 | Y=0). Identifiability requires them to differ."""

    p11: float
    p10: float

    def __post_init__(self):
        for name, value in [("p11", self.p11), ("p10", self.p10)]:
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if abs(self.p11 - self.p10) < IDENTIFIABILITY_TOL:
            raise NonIdentifiable(
                f"p11 = {self.p11:.6f} and p10 = {self.p10:.6f} are too close to identify the correction"
            )

    @property
    def gap(self) -> float:
        return self.p11 - self.p10


@dataclass(frozen=True)
class AteEstimate:
    """A point estimate, optionally with its sandwich SE and confidence
    interval, plus the combination weight actually used (w, b, or b_opt)."""

    estimator_id: str
    tau: float
    se: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    weight_used: float | None = None

    def __post_init__(self):
        if self.estimator_id not in ESTIMATOR_IDS:
            raise ValueError(f"unknown estimator id {self.estimator_id!r}")
        if (self.se is None) != (self.ci_low is None) or (self.se is None) != (self.ci_high is None):
            raise ValueError("se and confidence bounds must be present together")
        if self.se is not None:
            if self.se < 0:
                raise ValueError("se must be nonnegative")
            if not self.ci_low <= self.tau <= self.ci_high:
                raise ValueError("confidence interval must bracket the point estimate")
