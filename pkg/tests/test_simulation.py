import numpy as np
import pytest
from dataclasses import replace

from mismeasure_ate import simulation as sim
from mismeasure_ate.errors import CalibrationFailed, TooManyFailures
from mismeasure_ate.inference import analyze_frame
from mismeasure_ate.numerics import expit


BASE = sim.DgpConfig()


def test_child_seed_is_deterministic_and_spreads():
    a = sim.child_seed(123, 0)
    assert a == sim.child_seed(123, 0)
    seeds = {sim.child_seed(123, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert sim.child_seed(124, 0) != a
    assert all(0 <= s < 2 ** 64 for s in seeds)


def test_generate_population_shapes_and_prevalences():
    rng = sim._rng(1)
    population = sim.generate_population(replace(BASE, n=50_000), rng)
    assert population.x.shape == (50_000, 5)
    # targets from the generating model
    assert population.t.mean() == pytest.approx(0.67, abs=0.01)
    assert population.y.mean() == pytest.approx(0.14, abs=0.01)
    assert population.y_star.mean() == pytest.approx(0.30, abs=0.01)


def test_perfect_classification_copies_gold_outcome():
    rng = sim._rng(2)
    population = sim.generate_population(
        replace(BASE, n=2000, p11=1.0 - 1e-12, p10=1e-12), rng
    )
    assert np.array_equal(population.y, population.y_star)


def test_heterogeneous_misclassification_rates():
    rng = sim._rng(3)
    population = sim.generate_population(
        replace(BASE, n=200_000, heterogeneous_misclass=(-2.0, 0.5)), rng
    )
    control_neg = (population.y == 0) & (population.t == 0)
    treated_neg = (population.y == 0) & (population.t == 1)
    assert population.y_star[control_neg].mean() == pytest.approx(expit(-2.0), abs=0.01)
    assert population.y_star[treated_neg].mean() == pytest.approx(expit(-1.5), abs=0.01)


def test_srs_selection_probabilities_are_exact_constant():
    selection = sim.SelectionConfig(kind="srs", target_nv=850)
    pi = sim.selection_probabilities(selection, 5000, np.zeros(5000), np.zeros((5000, 5)))
    assert np.all(pi == 850 / 5000)


def test_calibration_hits_target_and_survives_slope_doubling():
    selection = sim.SelectionConfig(kind="non_probability", target_nv=850,
                                    alpha0=(-2.4, 0.5, 1, 1, 1, 1, 0))

    def expected_nv(sel, intercept, seed):
        rng = sim._rng(seed)
        calibration = sim.generate_population(replace(BASE, n=200_000), rng)
        slopes = np.asarray(sel.alpha0)[1:]
        linear = calibration.t * slopes[0] + calibration.x @ slopes[1:]
        return float(np.mean(expit(intercept + linear))) * BASE.n

    intercept = sim.calibrate_intercept(BASE, selection, sim._rng(99))
    assert expected_nv(selection, intercept, 99) == pytest.approx(850, abs=1.0)
    # mean selection probability lands on 0.17 as targeted
    assert expected_nv(selection, intercept, 99) / BASE.n == pytest.approx(0.17, abs=0.001)

    doubled = replace(selection, alpha0=(-2.4, 1.0, 2, 2, 2, 2, 0))
    intercept2 = sim.calibrate_intercept(BASE, doubled, sim._rng(99))
    assert expected_nv(doubled, intercept2, 99) == pytest.approx(850, abs=1.0)


def test_calibration_failure_outside_bracket():
    impossible = sim.SelectionConfig(kind="non_probability", target_nv=6000,
                                     alpha0=(0.0, 0.5, 1, 1, 1, 1, 0))
    with pytest.raises(CalibrationFailed):
        sim.calibrate_intercept(BASE, impossible, sim._rng(1))


def test_select_validation_masks_gold_outcomes():
    rng = sim._rng(4)
    population = sim.generate_population(replace(BASE, n=5000), rng)
    selection = sim.SelectionConfig(kind="srs", target_nv=850)
    frame = sim.select_validation(population, selection, rng)
    n_v = frame.n_v
    assert abs(n_v - 850) < 5 * np.sqrt(5000 * 0.17 * 0.83)  # binomial SD ~ 26.6
    assert np.all(np.isnan(frame.y[frame.v == 0]))
    assert np.array_equal(frame.y[frame.v == 1], population.y[frame.v == 1])


@pytest.mark.parametrize("alpha0", [
    (-2.2, -0.5, -1.0, -1.0, -1.0, -1.0, 0.0),   # flipped selection signs
    (-4.0, 1.0, 1.5, 1.5, 1.5, 1.5, 0.0),        # strong selection
])
def test_alternate_selection_vectors_supported(alpha0):
    selection = sim.SelectionConfig(kind="non_probability", target_nv=850, alpha0=alpha0)
    intercept = sim.calibrate_intercept(BASE, selection, sim._rng(7))
    calibrated = replace(selection, alpha0=(intercept,) + alpha0[1:])
    rng = sim._rng(8)
    population = sim.generate_population(BASE, rng)
    frame = sim.select_validation(population, calibrated, rng)
    assert abs(frame.n_v - 850) < 150
    # calibration lands near the vector's published intercept
    assert intercept == pytest.approx(alpha0[0], abs=0.3)


def test_true_ate_oracle_null_effect_and_determinism():
    null_dgp = replace(BASE, outcome_coefs=(-3.9, 0.0, 1, 1, 1, 1, 1))
    first = sim.true_ate_oracle(null_dgp, populations=30, population_n=20_000, base_seed=5)
    again = sim.true_ate_oracle(null_dgp, populations=30, population_n=20_000, base_seed=5)
    assert first == again
    assert abs(first.value) <= 0.003
    more = sim.true_ate_oracle(null_dgp, populations=60, population_n=20_000, base_seed=5)
    assert abs(more.value - first.value) <= 2 * (first.mc_se + more.mc_se)


def test_misspecified_selection_design_drops_column():
    rng = sim._rng(11)
    population = sim.generate_population(replace(BASE, n=400), rng)
    selection = sim.SelectionConfig(kind="non_probability", target_nv=80,
                                    alpha0=(-2.4, 0.5, 1, 1, 1, 1, 0),
                                    misspecify_drop=2)
    frame = sim.select_validation(population, replace(selection, alpha0=(-2.4, 0.5, 1, 1, 1, 1, 0)), rng)
    design = sim._selection_design(frame, selection)
    assert design.shape == (400, 2 + 4)  # intercept, t, and 4 of 5 covariates
    np.testing.assert_array_equal(design[:, 2], frame.x[:, 0])
    np.testing.assert_array_equal(design[:, 3], frame.x[:, 2])  # x2 dropped


def test_scenario_catalog_contents():
    catalog = sim.scenario_catalog()
    for name in ["main_srs", "main_nonprob", "nv500_srs", "nv500_nonprob",
                 "nv1500_srs", "nv1500_nonprob", "p10_016_srs", "p10_016_nonprob",
                 "p10_032_srs", "p10_032_nonprob", "flipped_alpha", "strong_alpha",
                 "heterogeneous_srs", "heterogeneous_nonprob", "misspecified_selection"]:
        assert name in catalog
    assert catalog["nv1500"] is catalog["nv1500_nonprob"]
    assert catalog["p10_032"] is catalog["p10_032_nonprob"]
    assert catalog["heterogeneous"] is catalog["heterogeneous_nonprob"]
    assert catalog["p10_032_nonprob"].dgp.p10 == 0.32
    assert catalog["nv500_nonprob"].selection.target_nv == 500
    assert catalog["misspecified_selection"].selection.misspecify_drop == 2
    assert catalog["heterogeneous_nonprob"].dgp.heterogeneous_misclass == (-2.0, 0.5)


def small_scenario(**kwargs):
    dgp = replace(BASE, n=600)
    selection = sim.SelectionConfig(kind="non_probability", target_nv=120,
                                    alpha0=(-2.4, 0.5, 1, 1, 1, 1, 0))
    defaults = dict(name="small", dgp=dgp, selection=selection,
                    estimators=("oracle", "val_only", "s_opt"),
                    iterations=12, base_seed=99, truth=0.0675)
    defaults.update(kwargs)
    return sim.ScenarioConfig(**defaults)


def test_run_scenario_deterministic_across_worker_counts():
    config = small_scenario()
    serial = sim.run_scenario(config, workers=1)
    parallel = sim.run_scenario(config, workers=2)
    assert serial.rows == parallel.rows
    assert serial.truth == parallel.truth
    assert serial.calibrated_intercept == parallel.calibrated_intercept


def test_run_scenario_aggregates_match_manual_replay():
    config = small_scenario(estimators=("val_only",), iterations=8)
    result = sim.run_scenario(config, workers=1)
    selection_used, _ = sim.resolve_selection(config)
    taus = []
    ses = []
    for i in range(8):
        rng = sim._rng(sim.child_seed(config.base_seed, i))
        population = sim.generate_population(config.dgp, rng)
        frame = sim.select_validation(population, selection_used, rng)
        analysis = analyze_frame(frame, ["val_only"],
                                 x_sel=sim._selection_design(frame, selection_used))
        taus.append(analysis.estimates["val_only"].tau)
        ses.append(analysis.estimates["val_only"].se)
    row = result.rows[0]
    assert row.n_effective == 8
    assert row.bias == pytest.approx(np.mean(taus) - config.truth, abs=1e-12)
    assert row.empirical_se == pytest.approx(np.std(taus, ddof=1), abs=1e-12)
    assert row.mean_sandwich_se == pytest.approx(np.mean(ses), abs=1e-12)


def test_srs_scenario_val_only_equals_s_val_only_per_iteration():
    dgp = replace(BASE, n=800)
    selection = sim.SelectionConfig(kind="srs", target_nv=160)
    rng = sim._rng(sim.child_seed(4242, 0))
    population = sim.generate_population(dgp, rng)
    frame = sim.select_validation(population, selection, rng)
    analysis = analyze_frame(frame, ["val_only", "s_val_only"],
                             x_sel=sim._selection_design(frame, selection))
    assert analysis.estimates["s_val_only"].tau == pytest.approx(
        analysis.estimates["val_only"].tau, abs=1e-12
    )


def test_too_many_failures_raises():
    # tiny validation samples frequently lack gold positives, so the
    # rate-consuming estimator fails in far more than 1% of iterations
    dgp = replace(BASE, n=120)
    selection = sim.SelectionConfig(kind="srs", target_nv=6)
    config = sim.ScenarioConfig(name="fragile", dgp=dgp, selection=selection,
                                estimators=("all_silver",), iterations=40,
                                base_seed=7, truth=0.07)
    with pytest.raises(TooManyFailures):
        sim.run_scenario(config, workers=1)


def test_realized_validation_size_tracks_target():
    config = small_scenario(estimators=("val_only",), iterations=30)
    selection_used, _ = sim.resolve_selection(config)
    sizes = []
    for i in range(30):
        rng = sim._rng(sim.child_seed(config.base_seed, i))
        population = sim.generate_population(config.dgp, rng)
        frame = sim.select_validation(population, selection_used, rng)
        sizes.append(frame.n_v)
    assert np.mean(sizes) == pytest.approx(config.selection.target_nv, rel=0.02)
