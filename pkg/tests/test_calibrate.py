import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccrm.calibrate import (DEFAULT_BOUNDS, PARAM_NAMES, CalibrationError, FreeParams,
                            ModelObjective, SpsaConfig, bounds_array, landscape_slice,
                            objective, random_directions, read_eval_log, run_seed,
                            smooth_landscape, spsa_optimize, write_eval_log)
from ccrm.scenarios import builtin_case, builtin_cases

from oracles import smooth_2d_direct

UNIT = np.tile([0.0, 1.0], (7, 1))


def quadratic(target, noise=0.0, rng=None):
    rng = rng or np.random.default_rng(0)

    def f(theta, seed=None):
        return float(np.sum((theta.as_array() - target) ** 2) + (rng.normal(0, noise) if noise else 0.0))
    return f


# -- parameters ---------------------------------------------------------------

def test_parameter_order_and_bounds():
    assert PARAM_NAMES == ("beta", "kappa", "gamma", "tau", "psi", "phi", "zeta")
    b = bounds_array({"psi": (1.0, 2.0)})
    assert b[4].tolist() == [1.0, 2.0] and b[0].tolist() == list(DEFAULT_BOUNDS["beta"])
    with pytest.raises(CalibrationError):
        bounds_array({"omega": (0, 1)})
    with pytest.raises(CalibrationError):
        bounds_array({"tau": (0.2, 0.1)})


def test_free_params_validation_and_views():
    fp = FreeParams.default()
    assert fp["kappa"] == 1.0
    assert fp.with_value("zeta", 0.75)["zeta"] == 0.75
    with pytest.raises(CalibrationError):
        fp.with_value("kappa", 2.0)
    with pytest.raises(CalibrationError):
        FreeParams((0.1,) * 6)
    mp = fp.model_params()
    assert mp.replacement.kappa == 1.0 and mp.dynamics.tau == 0.01


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=7, max_size=7))
def test_unit_round_trip(u):
    fp = FreeParams.from_unit(u)
    np.testing.assert_allclose(fp.to_unit(), u, atol=1e-12)


# -- objective ----------------------------------------------------------------

def test_run_seeds_are_distinct():
    a = run_seed(0, 0, 0).generate_state(2).tolist()
    assert a == run_seed(0, 0, 0).generate_state(2).tolist()
    assert a != run_seed(0, 0, 1).generate_state(2).tolist()
    assert a != run_seed(0, 1, 0).generate_state(2).tolist()


def test_perfect_model_scores_zero():
    class Perfect:
        def __call__(self, theta, seed=None):
            return 0.0
    assert Perfect()(FreeParams.default()) == 0.0


def test_objective_has_unimplemented_floor():
    f = ModelObjective(builtin_cases("ABC"), runs=2, seed=0)
    for u in (0.1, 0.5, 0.9):
        theta = FreeParams.from_unit([u] * 7)
        assert f(theta) >= 1 / 3
        assert f.per_run(theta)[1].min() >= 1


def test_objective_is_stochastic_but_seeded():
    f = ModelObjective([builtin_case("A")], runs=3)
    theta = FreeParams.default()
    rows = f.per_run(theta)
    assert rows.shape == (1, 3)
    values = {f(theta, seed=s) for s in range(6)}
    assert len(values) > 1
    assert f(theta, seed=4) == f(theta, seed=4)


def test_objective_independent_of_jobs():
    scs = builtin_cases("AC")
    theta = FreeParams.default()
    serial = ModelObjective(scs, runs=3, seed=5).per_run(theta)
    with ModelObjective(scs, runs=3, seed=5, jobs=2) as f:
        np.testing.assert_array_equal(f.per_run(theta), serial)
    assert objective(theta, scs, runs=3, seed=5) == serial.mean()


def test_objective_rejects_bad_input():
    with pytest.raises(CalibrationError):
        ModelObjective([builtin_case("D")], kind="training")
    with pytest.raises(CalibrationError):
        ModelObjective([builtin_case("A")], runs=0)
    with pytest.raises(CalibrationError):
        ModelObjective([])
    f = ModelObjective([builtin_case("D")], runs=1, kind="all")
    assert 0 <= f(FreeParams.default()) <= 6


def test_mapping_theta_accepted():
    f = ModelObjective([builtin_case("A")], runs=1)
    assert f({"kappa": 0.0}) == f(FreeParams.default().with_value("kappa", 0.0))


# -- SPSA ---------------------------------------------------------------------

def test_gain_sequences():
    cfg = SpsaConfig(iterations=1000)
    assert cfg.stability == 100
    assert cfg.a_k(0) == pytest.approx(0.1 / 101 ** 0.602)
    assert cfg.c_k(9) == pytest.approx(0.1 / 10 ** 0.101)
    assert SpsaConfig(A=5).stability == 5


@pytest.mark.parametrize("kw", [{"iterations": 0}, {"a": 0}, {"c": -1}, {"alpha": 0}, {"restarts": -1}])
def test_bad_config_rejected(kw):
    with pytest.raises(CalibrationError):
        SpsaConfig(**kw)


def test_spsa_converges_on_noisy_quadratic():
    target = np.array([0.2, 0.0, 0.8, 0.5, 0.35, 0.6, 0.75])
    f = quadratic(target, noise=0.01, rng=np.random.default_rng(3))
    res = spsa_optimize(f, SpsaConfig(iterations=1500, runs=1, seed=3),
                        start=FreeParams((0.5,) * 7, UNIT), bounds=UNIT)
    assert np.linalg.norm(res.theta.as_array() - target) < 0.05
    assert len(res.log) == 2 * 1500 + len([e for e in res.log if e.kind == "reevaluation"])


def test_spsa_respects_box_and_pinned_parameters():
    b = UNIT.copy()
    b[1] = (0.3, 0.3)
    target = np.full(7, 2.0)
    res = spsa_optimize(quadratic(target), SpsaConfig(iterations=200, runs=1),
                        start=FreeParams((0.5, 0.3, 0.5, 0.5, 0.5, 0.5, 0.5), b), bounds=b)
    assert res.theta["kappa"] == 0.3
    assert np.all(res.iterates >= 0) and np.all(res.iterates <= 1)
    assert res.theta.as_array()[[0, 2, 3, 4, 5, 6]] == pytest.approx(1.0, abs=1e-6)


def test_spsa_uses_common_random_numbers():
    seeds = []

    def f(theta, seed=None):
        seeds.append(seed)
        return float(theta["beta"])
    spsa_optimize(f, SpsaConfig(iterations=5, runs=1, reevaluate=0))
    pairs = seeds[:10]
    assert all(pairs[2 * k] == pairs[2 * k + 1] for k in range(5))
    assert len(set(pairs)) == 5
    assert seeds[-1] == 2**31 - 1


def test_spsa_is_deterministic():
    f = quadratic(np.full(7, 0.4))
    a = spsa_optimize(f, SpsaConfig(iterations=50, seed=9), bounds=UNIT, start=FreeParams((0.5,) * 7, UNIT))
    b = spsa_optimize(f, SpsaConfig(iterations=50, seed=9), bounds=UNIT, start=FreeParams((0.5,) * 7, UNIT))
    assert a.theta == b.theta
    np.testing.assert_array_equal(a.history, b.history)


def test_restarts_extend_history():
    res = spsa_optimize(quadratic(np.full(7, 0.4)), SpsaConfig(iterations=20, restarts=2), bounds=UNIT,
                        start=FreeParams((0.5,) * 7, UNIT))
    assert len(res.history) == 60 and res.iterates.shape == (63, 7)


def test_eval_log_round_trip(tmp_path):
    res = spsa_optimize(quadratic(np.full(7, 0.4)), SpsaConfig(iterations=10), bounds=UNIT,
                        start=FreeParams((0.5,) * 7, UNIT))
    path = tmp_path / "log.csv"
    write_eval_log(path, res.log)
    back = read_eval_log(path)
    assert [e.theta for e in back] == [e.theta for e in res.log]
    assert [e.value for e in back] == [e.value for e in res.log]


# -- landscape ----------------------------------------------------------------

def test_directions_orthonormal():
    d = random_directions(7, np.random.default_rng(0))
    np.testing.assert_allclose(d @ d.T, np.eye(2), atol=1e-12)


def test_landscape_smoothing_matches_direct_convolution():
    raw = np.random.default_rng(1).normal(size=(16, 16))
    x = y = np.linspace(-0.5, 0.5, 16)
    sigma = 0.1 / (x[1] - x[0])
    np.testing.assert_allclose(smooth_landscape(raw, x, y), smooth_2d_direct(raw, sigma, sigma),
                               atol=1e-9, rtol=0)


def test_constant_landscape_is_flat():
    grid = landscape_slice(lambda th, seed=None: 1.5, FreeParams.default(), n=5)
    np.testing.assert_allclose(grid.smoothed, 1.5)


def test_quadratic_landscape_minimum_near_center():
    center = FreeParams((0.5,) * 7, UNIT)
    grid = landscape_slice(quadratic(center.as_array()), center, n=21, extent=0.4)
    i, j = np.unravel_index(np.argmin(grid.smoothed), grid.smoothed.shape)
    assert abs(i - 10) <= 1 and abs(j - 10) <= 1
    assert grid.raw[10, 10] == 0.0


def test_landscape_needs_three_points():
    with pytest.raises(CalibrationError):
        landscape_slice(lambda th, seed=None: 0.0, FreeParams.default(), n=2)
