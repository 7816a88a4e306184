import csv
import json

import numpy as np
import pytest

from mismeasure_ate import cli
from mismeasure_ate import reporting as rep
from mismeasure_ate import simulation as sim
from mismeasure_ate.errors import ConfigParseError, SchemaError
from mismeasure_ate.frames import ObservationFrame
from mismeasure_ate.inference import analyze_frame


def make_frame(seed=0, n=900):
    """One frame drawn from the main biased-validation scenario."""
    config = sim.scenario_catalog()["main_nonprob"]
    selection_used, _ = sim.resolve_selection(config)
    rng = sim._rng(sim.child_seed(seed, 0))
    from dataclasses import replace

    population = sim.generate_population(replace(config.dgp, n=n), rng)
    return sim.select_validation(population, selection_used, rng)


def write_model_spec(path, selection=("x1", "x2", "x3", "x4", "x5")):
    spec = {
        "treatment_covariates": ["x1", "x2", "x3", "x4", "x5"],
        "selection_covariates": None if selection is None else list(selection),
    }
    path.write_text(json.dumps(spec))


def test_dataset_roundtrip_is_exact(tmp_path):
    frame = make_frame()
    path = tmp_path / "data.csv"
    rep.write_dataset_csv(frame, path)
    loaded = rep.read_dataset_csv(path)
    np.testing.assert_array_equal(frame.x, loaded.x)
    np.testing.assert_array_equal(frame.t, loaded.t)
    np.testing.assert_array_equal(frame.y_star, loaded.y_star)
    np.testing.assert_array_equal(frame.v, loaded.v)
    np.testing.assert_array_equal(frame.y[frame.v == 1], loaded.y[loaded.v == 1])
    assert np.all(np.isnan(loaded.y[loaded.v == 0]))


def test_estimate_matches_in_process_analysis(tmp_path, capsys):
    frame = make_frame(seed=3)
    data = tmp_path / "data.csv"
    spec = tmp_path / "spec.json"
    out = tmp_path / "report.json"
    rep.write_dataset_csv(frame, data)
    write_model_spec(spec)

    code = cli.main(["estimate", str(data), str(spec), "--format", "json",
                     "--out", str(out)])
    capsys.readouterr()
    assert code == 0
    payload = json.loads(out.read_text())
    by_id = {row["estimator"]: row for row in payload["rows"]}

    x_sel = np.column_stack([np.ones(frame.n), frame.t, frame.x])
    reference = analyze_frame(frame, cli.ESTIMATE_ORDER, x_sel=x_sel)
    assert set(by_id) == set(reference.estimates)
    for est_id, estimate in reference.estimates.items():
        assert by_id[est_id]["estimate"] == pytest.approx(estimate.tau, abs=1e-12)
        assert by_id[est_id]["se"] == pytest.approx(estimate.se, abs=1e-12)
        assert by_id[est_id]["ci_low"] == pytest.approx(estimate.ci_low, abs=1e-12)
    assert payload["metadata"]["p11_hat"] == pytest.approx(reference.rates.p11)


def test_estimate_includes_naive_for_contrast(tmp_path, capsys):
    frame = make_frame(seed=5)
    data = tmp_path / "data.csv"
    spec = tmp_path / "spec.json"
    rep.write_dataset_csv(frame, data)
    write_model_spec(spec)
    code = cli.main(["estimate", str(data), str(spec), "--format", "csv"])
    captured = capsys.readouterr()
    assert code == 0
    rows = list(csv.DictReader(captured.out.splitlines()))
    assert rows[0]["estimator"] == "naive"


def test_estimate_without_validated_rows_degrades_to_naive(tmp_path, capsys):
    frame = make_frame(seed=7, n=400)
    bare = ObservationFrame(x=frame.x, t=frame.t, y_star=frame.y_star,
                            v=np.zeros(frame.n), y=np.full(frame.n, np.nan))
    data = tmp_path / "data.csv"
    spec = tmp_path / "spec.json"
    rep.write_dataset_csv(bare, data)
    write_model_spec(spec)
    code = cli.main(["estimate", str(data), str(spec), "--format", "json"])
    captured = capsys.readouterr()
    assert code == 0
    payload = json.loads(captured.out)
    assert [row["estimator"] for row in payload["rows"]] == ["naive"]
    assert any("naive" in warning for warning in payload["warnings"])


def test_estimate_rejects_gold_outcome_off_validation(tmp_path, capsys):
    frame = make_frame(seed=9, n=300)
    data = tmp_path / "data.csv"
    rep.write_dataset_csv(frame, data)
    # plant a forbidden y value on a non-validation row
    rows = [line.split(",") for line in data.read_text().splitlines()]
    header = rows[0]
    v_col = header.index("v")
    y_col = header.index("y")
    for row in rows[1:]:
        if row[v_col] == "0":
            row[y_col] = "1"
            break
    data.write_text("\n".join(",".join(row) for row in rows) + "\n")
    spec = tmp_path / "spec.json"
    write_model_spec(spec)
    code = cli.main(["estimate", str(data), str(spec)])
    captured = capsys.readouterr()
    assert code == cli.CONFIG_EXIT
    assert "y must be empty where v=0" in captured.err


def test_estimate_schema_errors(tmp_path, capsys):
    data = tmp_path / "bad.csv"
    data.write_text("x1,t,ystar,v\n0.0,1,0,0\n")
    spec = tmp_path / "spec.json"
    write_model_spec(spec, selection=("x1",))
    assert cli.main(["estimate", str(data), str(spec)]) == cli.CONFIG_EXIT
    capsys.readouterr()

    with pytest.raises(SchemaError):
        rep.read_dataset_csv(data)


def test_simulate_unknown_scenario_exits_2(capsys):
    assert cli.main(["simulate", "not_a_scenario"]) == cli.CONFIG_EXIT
    assert "preset" in capsys.readouterr().err


def test_simulate_config_missing_iterations_names_field(tmp_path, capsys):
    config = tmp_path / "scenario.json"
    config.write_text(json.dumps({
        "dgp": {"n": 400}, "selection": {"kind": "srs", "target_nv": 80},
    }))
    assert cli.main(["simulate", str(config)]) == cli.CONFIG_EXIT
    assert "iterations" in capsys.readouterr().err


def test_simulate_config_unknown_key_is_fatal(tmp_path, capsys):
    config = tmp_path / "scenario.json"
    config.write_text(json.dumps({
        "dgp": {"n": 400}, "selection": {"kind": "srs", "target_nv": 80},
        "iterations": 2, "iteration": 5,
    }))
    assert cli.main(["simulate", str(config)]) == cli.CONFIG_EXIT
    assert "iteration" in capsys.readouterr().err


def test_simulate_config_file_runs(tmp_path, capsys):
    config = tmp_path / "scenario.json"
    config.write_text(json.dumps({
        "dgp": {"n": 500},
        "selection": {"kind": "srs", "target_nv": 100},
        "iterations": 3,
        "seed": 5,
        "estimators": ["oracle", "val_only"],
        "truth": 0.0673,
    }))
    code = cli.main(["simulate", str(config), "--format", "csv"])
    captured = capsys.readouterr()
    assert code == 0
    rows = list(csv.DictReader(captured.out.splitlines()))
    assert [row["estimator"] for row in rows] == ["oracle", "val_only"]
    assert all(row["n_effective"] == "3" for row in rows)


def test_simulate_json_and_csv_encode_identical_values(tmp_path, capsys):
    args = ["simulate", "main_srs", "--iterations", "4", "--seed", "21",
            "--estimators", "oracle,val_only", "--truth", "0.0673"]
    assert cli.main(args + ["--format", "json", "--out", str(tmp_path / "r.json")]) == 0
    assert cli.main(args + ["--format", "csv", "--out", str(tmp_path / "r.csv")]) == 0
    capsys.readouterr()
    payload = json.loads((tmp_path / "r.json").read_text())
    csv_rows = list(csv.DictReader((tmp_path / "r.csv").read_text().splitlines()))
    assert len(csv_rows) == len(payload["rows"])
    for json_row, csv_row in zip(payload["rows"], csv_rows):
        for column in payload["columns"]:
            json_value = json_row[column]
            csv_value = csv_row[column]
            if isinstance(json_value, float):
                assert float(csv_value) == json_value
            else:
                assert str(json_value) == csv_value


def test_simulate_deterministic_across_workers(tmp_path, capsys):
    base = ["simulate", "main_nonprob", "--iterations", "6", "--seed", "77",
            "--estimators", "val_only,s_opt", "--truth", "0.0673", "--format", "json"]
    assert cli.main(base + ["--workers", "1", "--out", str(tmp_path / "w1.json")]) == 0
    assert cli.main(base + ["--workers", "2", "--out", str(tmp_path / "w2.json")]) == 0
    capsys.readouterr()
    assert (tmp_path / "w1.json").read_bytes() == (tmp_path / "w2.json").read_bytes()


def test_env_seed_used_as_default(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.ENV_SEED, "31415")
    assert cli.main(["simulate", "main_srs", "--iterations", "2",
                     "--estimators", "oracle", "--truth", "0.0673",
                     "--format", "json", "--out", str(tmp_path / "env.json")]) == 0
    payload = json.loads((tmp_path / "env.json").read_text())
    assert payload["metadata"]["seed"] == 31415

    # --seed outranks the environment
    assert cli.main(["simulate", "main_srs", "--iterations", "2", "--seed", "99",
                     "--estimators", "oracle", "--truth", "0.0673",
                     "--format", "json", "--out", str(tmp_path / "cli.json")]) == 0
    capsys.readouterr()
    payload = json.loads((tmp_path / "cli.json").read_text())
    assert payload["metadata"]["seed"] == 99


def test_env_seed_must_be_integer(monkeypatch, capsys):
    monkeypatch.setenv(cli.ENV_SEED, "not-a-number")
    assert cli.main(["simulate", "main_srs", "--iterations", "1"]) == cli.CONFIG_EXIT
    capsys.readouterr()


def test_true_ate_command(capsys):
    code = cli.main(["true-ate", "main_srs", "--populations", "3",
                     "--pop-n", "8000", "--seed", "13", "--format", "json"])
    captured = capsys.readouterr()
    assert code == 0
    payload = json.loads(captured.out)
    row = payload["rows"][0]
    assert row["populations"] == 3 and row["population_n"] == 8000
    assert 0.0 < row["truth"] < 0.2

    code = cli.main(["true-ate", "main_srs", "--populations", "3",
                     "--pop-n", "8000", "--seed", "13", "--format", "json"])
    assert code == 0
    assert json.loads(capsys.readouterr().out) == payload  # deterministic


def test_reports_have_no_nan_values(tmp_path, capsys):
    frame = make_frame(seed=11, n=700)
    data = tmp_path / "d.csv"
    spec = tmp_path / "m.json"
    rep.write_dataset_csv(frame, data)
    write_model_spec(spec)
    assert cli.main(["estimate", str(data), str(spec), "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    for row in payload["rows"]:
        for value in row.values():
            if isinstance(value, float):
                assert np.isfinite(value)


def test_estimate_score_variant_changes_only_ses(tmp_path, capsys):
    frame = make_frame(seed=13, n=800)
    data = tmp_path / "d.csv"
    spec = tmp_path / "m.json"
    rep.write_dataset_csv(frame, data)
    write_model_spec(spec)
    payloads = {}
    for variant in ("standard", "printed"):
        code = cli.main(["estimate", str(data), str(spec), "--format", "json",
                         "--selection-score-variant", variant])
        assert code == 0
        payloads[variant] = json.loads(capsys.readouterr().out)
    std = {row["estimator"]: row for row in payloads["standard"]["rows"]}
    prt = {row["estimator"]: row for row in payloads["printed"]["rows"]}
    assert std.keys() == prt.keys()
    for est_id in std:
        if est_id == "s_opt":
            continue  # its blend weight is variance-derived, so it may move
        assert prt[est_id]["estimate"] == pytest.approx(std[est_id]["estimate"], abs=1e-15)
    assert any(prt[e]["se"] != std[e]["se"] for e in std if std[e]["se"] is not None)


def test_model_spec_validation(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"treatment_covariates": ["x1"], "selektion": []}))
    with pytest.raises(ConfigParseError):
        rep.load_model_spec(bad)
    missing = tmp_path / "missing.json"
    missing.write_text(json.dumps({"selection_covariates": ["x1"]}))
    with pytest.raises(ConfigParseError):
        rep.load_model_spec(missing)
