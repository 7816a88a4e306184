"""Report assembly and file formats.

The dataset CSV schema: header row with columns x1..xp (real), t (0/1),
ystar (0/1), v (0/1), y (0/1 or empty, empty exactly where v=0); UTF-8,
comma-delimited, "." decimal separator.

RunReport serializations are deterministic: the JSON and CSV forms contain
no wall-clock or worker-count information, so equal-seed runs are
byte-identical regardless of parallelism. The human-readable table may show
elapsed time in its footer.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigParseError, SchemaError
from .frames import ESTIMATOR_IDS, ObservationFrame
from .simulation import (
    DEFAULT_SEED,
    TABLE_ESTIMATORS,
    DgpConfig,
    ScenarioConfig,
    ScenarioResult,
    SelectionConfig,
    TruthEstimate,
)

DATASET_BASE_COLUMNS = ("t", "ystar", "v", "y")


# --- dataset CSV ----------------------------------------------------------------

def write_dataset_csv(frame: ObservationFrame, path) -> None:
    """Export a frame; the gold outcome is written only on validation rows."""
    header = [f"x{j + 1}" for j in range(frame.p)] + list(DATASET_BASE_COLUMNS)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for i in range(frame.n):
            row = [repr(float(value)) for value in frame.x[i]]
            row += [str(int(frame.t[i])), str(int(frame.y_star[i])), str(int(frame.v[i]))]
            row.append(str(int(frame.y[i])) if frame.v[i] == 1.0 else "")
            writer.writerow(row)


def _parse_binary(value: str, column: str, line: int) -> float:
    if value == "0":
        return 0.0
    if value == "1":
        return 1.0
    raise SchemaError(f"line {line}: column {column!r} must be 0 or 1, got {value!r}")


def read_dataset_csv(path) -> ObservationFrame:
    """Parse a dataset CSV, enforcing the schema strictly.

    Raises SchemaError for missing or unknown columns, non-binary indicator
    values, unparsable covariates, a gold outcome present off-validation, or
    one missing on a validation row.
    """
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("dataset is empty") from None
        rows = list(reader)

    covariate_columns = [name for name in header if name not in DATASET_BASE_COLUMNS]
    expected_covariates = [f"x{j + 1}" for j in range(len(covariate_columns))]
    if covariate_columns != expected_covariates:
        raise SchemaError(
            f"expected covariate columns {expected_covariates} before {DATASET_BASE_COLUMNS}, "
            f"got {covariate_columns}"
        )
    expected_header = expected_covariates + list(DATASET_BASE_COLUMNS)
    if header != expected_header:
        raise SchemaError(f"expected header {expected_header}, got {header}")
    if not rows:
        raise SchemaError("dataset has a header but no rows")

    p = len(covariate_columns)
    index = {name: i for i, name in enumerate(header)}
    n = len(rows)
    x = np.empty((n, p))
    t = np.empty(n)
    y_star = np.empty(n)
    v = np.empty(n)
    y = np.empty(n)
    for i, row in enumerate(rows):
        line = i + 2  # header is line 1
        if len(row) != len(header):
            raise SchemaError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            for j in range(p):
                x[i, j] = float(row[index[f"x{j + 1}"]])
        except ValueError:
            raise SchemaError(f"line {line}: covariates must be real numbers") from None
        t[i] = _parse_binary(row[index["t"]], "t", line)
        y_star[i] = _parse_binary(row[index["ystar"]], "ystar", line)
        v[i] = _parse_binary(row[index["v"]], "v", line)
        y_raw = row[index["y"]]
        if v[i] == 1.0:
            if y_raw == "":
                raise SchemaError(f"line {line}: y must be present where v=1")
            y[i] = _parse_binary(y_raw, "y", line)
        else:
            if y_raw != "":
                raise SchemaError(f"line {line}: y must be empty where v=0")
            y[i] = np.nan
    return ObservationFrame(x=x, t=t, y_star=y_star, v=v, y=y)


# --- model spec -------------------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Covariate columns entering the treatment and selection models.

    ``selection_covariates`` may be None, which declares the validation
    sample a simple random sample: the selection propensity becomes the
    constant n_V / n and no selection model is fitted. The treatment
    indicator is always part of the selection design and never listed.
    """

    treatment_covariates: tuple
    selection_covariates: tuple | None


def load_model_spec(path) -> ModelSpec:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"model spec is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigParseError("model spec must be a JSON object")
    allowed = {"treatment_covariates", "selection_covariates"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigParseError(f"unknown model spec keys: {sorted(unknown)}")
    if "treatment_covariates" not in raw:
        raise ConfigParseError("model spec is missing 'treatment_covariates'")
    treatment = raw["treatment_covariates"]
    selection = raw.get("selection_covariates")
    for name, value in [("treatment_covariates", treatment), ("selection_covariates", selection)]:
        if value is None:
            continue
        if not isinstance(value, list) or not all(isinstance(c, str) for c in value):
            raise ConfigParseError(f"{name} must be a list of column names")
    return ModelSpec(
        treatment_covariates=tuple(treatment),
        selection_covariates=None if selection is None else tuple(selection),
    )


def design_from_columns(frame: ObservationFrame, columns, *, include_treatment: bool) -> np.ndarray:
    """Intercept plus the named x-columns (plus t for selection designs)."""
    pieces = [np.ones(frame.n)]
    if include_treatment:
        pieces.append(frame.t)
    for name in columns:
        if not name.startswith("x"):
            raise ConfigParseError(f"unknown covariate column {name!r}")
        try:
            j = int(name[1:]) - 1
        except ValueError:
            raise ConfigParseError(f"unknown covariate column {name!r}") from None
        if not 0 <= j < frame.p:
            raise ConfigParseError(f"column {name!r} is out of range for {frame.p} covariates")
        pieces.append(frame.x[:, j])
    return np.column_stack(pieces)


# --- scenario config files ----------------------------------------------------------

_DGP_KEYS = {"n", "p11", "p10", "treatment_coefs", "outcome_coefs", "heterogeneous_misclass"}
_SELECTION_KEYS = {"kind", "target_nv", "alpha0", "misspecify_drop"}
_TOP_KEYS = {"dgp", "selection", "iterations", "seed", "estimators",
             "truth", "w", "b", "score_variant"}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigParseError(f"unknown {where} keys: {sorted(unknown)}")


def load_scenario_config(path, *, name: str | None = None,
                         default_seed: int = DEFAULT_SEED) -> ScenarioConfig:
    """Parse a scenario JSON file into a ScenarioConfig.

    Required top-level keys: dgp, selection, iterations. Optional: seed,
    estimators, truth, w, b, score_variant. Unknown keys anywhere are a hard
    error so typos never silently fall back to defaults. ``default_seed``
    fills in when the file has no seed key (the CLI resolves the
    MISMEASURE_ATE_SEED environment override into it).
    """
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(
            f"config is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from None
    if not isinstance(raw, dict):
        raise ConfigParseError("config must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config")
    for required in ("dgp", "selection", "iterations"):
        if required not in raw:
            raise ConfigParseError(f"config is missing required key '{required}'")

    dgp_raw = raw["dgp"]
    if not isinstance(dgp_raw, dict):
        raise ConfigParseError("'dgp' must be an object")
    _check_keys(dgp_raw, _DGP_KEYS, "dgp")
    sel_raw = raw["selection"]
    if not isinstance(sel_raw, dict):
        raise ConfigParseError("'selection' must be an object")
    _check_keys(sel_raw, _SELECTION_KEYS, "selection")
    if "kind" not in sel_raw:
        raise ConfigParseError("selection is missing required key 'kind'")

    def tup(value):
        return None if value is None else tuple(value)

    try:
        dgp = DgpConfig(
            n=int(dgp_raw.get("n", 5000)),
            treatment_coefs=tup(dgp_raw.get("treatment_coefs")) or DgpConfig().treatment_coefs,
            outcome_coefs=tup(dgp_raw.get("outcome_coefs")) or DgpConfig().outcome_coefs,
            p11=float(dgp_raw.get("p11", 0.67)),
            p10=float(dgp_raw.get("p10", 0.24)),
            heterogeneous_misclass=tup(dgp_raw.get("heterogeneous_misclass")),
        )
        selection = SelectionConfig(
            kind=sel_raw["kind"],
            target_nv=int(sel_raw.get("target_nv", 850)),
            alpha0=tup(sel_raw.get("alpha0")),
            misspecify_drop=(None if sel_raw.get("misspecify_drop") is None
                             else int(sel_raw["misspecify_drop"])),
        )
        estimators = raw.get("estimators")
        config = ScenarioConfig(
            name=name or "custom",
            dgp=dgp,
            selection=selection,
            estimators=tuple(estimators) if estimators is not None else TABLE_ESTIMATORS,
            iterations=int(raw["iterations"]),
            base_seed=int(raw.get("seed", default_seed)),
            truth=None if raw.get("truth") is None else float(raw["truth"]),
            w=float(raw.get("w", 0.5)),
            b=None if raw.get("b") is None else float(raw["b"]),
            score_variant=raw.get("score_variant", "standard"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"invalid config value: {exc}") from None
    return config


# --- run reports -----------------------------------------------------------------

SIMULATE_COLUMNS = ("estimator", "bias", "empirical_se", "mean_sandwich_se",
                    "coverage", "n_effective")
ESTIMATE_COLUMNS = ("estimator", "estimate", "se", "ci_low", "ci_high", "weight")
TRUTH_COLUMNS = ("truth", "mc_se", "populations", "population_n")

_TABLE_HEADINGS = {
    "estimator": "Estimator", "bias": "Bias", "empirical_se": "Empirical SE",
    "mean_sandwich_se": "Mean Sandwich SE", "coverage": "Coverage",
    "n_effective": "Iterations Used", "estimate": "Estimate", "se": "SE",
    "ci_low": "95% CI Low", "ci_high": "95% CI High", "weight": "Weight",
    "truth": "True ATE", "mc_se": "MC SE", "populations": "Populations",
    "population_n": "Population Size",
}


@dataclass
class RunReport:
    """A finished command's output: metadata, table rows, warnings.

    Metadata carries everything needed to re-run bit-identically (seed,
    scenario configuration, calibrated intercept) and nothing volatile.
    ``elapsed_seconds`` is shown only in the human-readable rendering.
    """

    command: str
    columns: tuple
    rows: list
    metadata: dict
    warnings: list = field(default_factory=list)
    elapsed_seconds: float | None = None

    def to_json(self) -> str:
        payload = {
            "command": self.command,
            "metadata": self.metadata,
            "columns": list(self.columns),
            "rows": [dict(zip(self.columns, row)) for row in self.rows],
            "warnings": list(self.warnings),
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow(["" if value is None else repr(value) if isinstance(value, float) else value
                             for value in row])
        return buffer.getvalue()

    def to_table(self) -> str:
        def render(value):
            if value is None:
                return "-"
            if isinstance(value, float):
                return f"{value:.4f}"
            return str(value)

        headings = [_TABLE_HEADINGS.get(c, c) for c in self.columns]
        cells = [[render(v) for v in row] for row in self.rows]
        widths = [max(len(headings[j]), *(len(r[j]) for r in cells)) if cells else len(headings[j])
                  for j in range(len(headings))]
        lines = []
        meta_bits = [f"{k}={v}" for k, v in self.metadata.items()
                     if k in ("scenario", "seed", "iterations", "truth") and v is not None]
        if meta_bits:
            lines.append("# " + "  ".join(str(b) for b in meta_bits))
        lines.append("  ".join(h.ljust(widths[j]) for j, h in enumerate(headings)).rstrip())
        lines.append("  ".join("-" * widths[j] for j in range(len(widths))))
        for row in cells:
            lines.append("  ".join(row[j].ljust(widths[j]) for j in range(len(row))).rstrip())
        for warning in self.warnings:
            lines.append(f"! {warning}")
        if self.elapsed_seconds is not None:
            lines.append(f"# elapsed: {self.elapsed_seconds:.1f}s")
        return "\n".join(lines) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "json":
            return self.to_json()
        if fmt == "csv":
            return self.to_csv()
        if fmt == "table":
            return self.to_table()
        raise ValueError(f"unknown format {fmt!r}")


def _config_metadata(config: ScenarioConfig) -> dict:
    return {
        "scenario": config.name,
        "seed": config.base_seed,
        "iterations": config.iterations,
        "n": config.dgp.n,
        "p11": config.dgp.p11,
        "p10": config.dgp.p10,
        "heterogeneous_misclass": (list(config.dgp.heterogeneous_misclass)
                                   if config.dgp.heterogeneous_misclass else None),
        "selection_kind": config.selection.kind,
        "target_nv": config.selection.target_nv,
        "alpha0": list(config.selection.alpha0) if config.selection.alpha0 else None,
        "misspecify_drop": config.selection.misspecify_drop,
        "estimators": list(config.estimators),
        "w": config.w,
        "b": config.b,
        "score_variant": config.score_variant,
        "version": __version__,
    }


def report_from_scenario(result: ScenarioResult, *, elapsed: float | None = None) -> RunReport:
    rows = [
        (row.estimator_id, row.bias, row.empirical_se, row.mean_sandwich_se,
         row.coverage, row.n_effective)
        for row in result.rows
    ]
    metadata = _config_metadata(result.config)
    metadata["truth"] = result.truth
    metadata["calibrated_intercept"] = result.calibrated_intercept
    warnings_list = []
    for est_id, reasons in result.failure_reasons.items():
        detail = ", ".join(f"{reason} x{count}" for reason, count in sorted(reasons.items()))
        warnings_list.append(f"{est_id}: {detail}")
    return RunReport("simulate", SIMULATE_COLUMNS, rows, metadata, warnings_list, elapsed)


def report_from_analysis(analysis, *, metadata: dict, order=ESTIMATOR_IDS,
                         elapsed: float | None = None) -> RunReport:
    rows = []
    for est_id in order:
        estimate = analysis.estimates.get(est_id)
        if estimate is None:
            continue
        rows.append((est_id, estimate.tau, estimate.se, estimate.ci_low,
                     estimate.ci_high, estimate.weight_used))
    warnings_list = []
    for est_id, reason in sorted(analysis.failures.items()):
        warnings_list.append(f"{est_id}: not computed ({reason})")
    for est_id, reason in sorted(analysis.se_failures.items()):
        warnings_list.append(f"{est_id}: point estimate only, no sandwich SE ({reason})")
    if analysis.rates is not None:
        metadata = dict(metadata, p11_hat=analysis.rates.p11, p10_hat=analysis.rates.p10)
    return RunReport("estimate", ESTIMATE_COLUMNS, rows, metadata, warnings_list, elapsed)


def report_from_truth(truth: TruthEstimate, *, metadata: dict,
                      elapsed: float | None = None) -> RunReport:
    rows = [(truth.value, truth.mc_se, truth.populations, truth.population_n)]
    return RunReport("true-ate", TRUTH_COLUMNS, rows, metadata, [], elapsed)
