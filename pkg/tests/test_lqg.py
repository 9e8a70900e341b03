import csv
import math
import warnings

import numpy as np
import pytest

from meshmdp.errors import InvalidArgumentError
from meshmdp.lqg import (
    SWEEP_COLUMNS,
    TABLE_COLUMNS,
    LqgConfig,
    build_lqg_spec,
    calibrate_lambda,
    lambda_sweep,
    lqg_action_set,
    lqg_reference,
    run_table,
    sample_actions,
    write_sweep_csv,
    write_table_csv,
)
from meshmdp.oracles import gaussian_expectation_1d


def test_config_validation():
    for bad in ({"lam": 0}, {"delta": -1}, {"T": 0.001}, {"terminal_sign": "x"}, {"action_units": "y"}, {"n_paths_list": (1,)}, {"x0": (0.0, 0.0)}):
        with pytest.raises(InvalidArgumentError):
            LqgConfig(**bad)
    cfg = LqgConfig(n_paths_list=(500, 10))
    assert cfg.n_paths_list == (10, 500) and cfg.horizon == 20 and cfg.x0 == (0.0,)


def test_spec_basics():
    spec = build_lqg_spec(LqgConfig())
    assert spec.horizon == 20
    assert all(s == pytest.approx(0.1) for s in spec.kernel.sigmas)
    assert spec.reward(3, np.array([1.7]), np.zeros(1)) == 0.0
    assert spec.terminal(np.zeros(1)) == pytest.approx(math.log(2))
    assert spec.terminal(np.zeros(1)) == pytest.approx(0.6931, abs=1e-4)
    assert spec.reward(0, np.zeros(1), np.array([0.1])) == pytest.approx(-0.01 / 0.04)


def test_spec_plus_and_noise_scale():
    spec = build_lqg_spec(LqgConfig(dim=5, terminal_sign="plus", noise_scale=2.0, lam=0.5))
    assert spec.kernel.sigma(0) == pytest.approx(math.sqrt(0.02))
    assert spec.terminal(np.zeros(5)) == pytest.approx(-math.log(2))
    assert spec.reward(0, np.zeros(5), np.full(5, 0.1)) == pytest.approx(-0.05 / (4 * 0.5 * 0.01))


def test_sample_actions_contract():
    acts = sample_actions(3, 10_000, 0.5, seed=4)
    assert len(acts) == 10_001 and acts.dim == 3
    assert np.all(acts.actions[0] == 0)
    assert np.all(np.abs(acts.actions) <= 0.5)
    assert np.all(np.abs(acts.actions[1:].mean(0)) <= 4 * 0.5 / math.sqrt(3e4))
    assert acts.provenance["zero_prepended"] is True
    again = sample_actions(3, 10_000, 0.5, seed=4)
    assert np.array_equal(acts.actions, again.actions)
    with pytest.raises(InvalidArgumentError):
        sample_actions(1, 0, 1.0, 0)


def test_control_units_scaling():
    cfg = LqgConfig(action_units="control", lam=4.0)
    acts = lqg_action_set(cfg, 1)
    raw = sample_actions(1, cfg.n_actions, 1.0, 1)
    np.testing.assert_allclose(acts.actions, raw.actions * 2 * 2 * 0.01)
    assert cfg.increment_halfwidth == pytest.approx(0.04)


def test_reference_small_lambda_limit():
    cfg = LqgConfig(lam=1e-6)
    ref = lqg_reference(cfg)
    F = build_lqg_spec(cfg).terminal
    quad = gaussian_expectation_1d(lambda y: F(y[:, None]), 0.0, math.sqrt(0.4))
    assert abs(ref.value - quad) <= 3 * ref.std_error


def _small_cfg(**kw):
    base = dict(n_paths_list=(10, 30), n_repetitions=3, n_actions=5, noise_scale=2.0, action_units="control", reference_samples=2000, T=0.05)
    base.update(kw)
    return LqgConfig(**base)


def test_run_table_rows_and_reproducibility(tmp_path):
    cfg = _small_cfg()
    rows = run_table(cfg)
    assert [r.n_paths for r in rows] == [10, 30]
    for r in rows:
        assert r.std >= 0 and r.abs_bias == pytest.approx(abs(r.mean - r.reference))
        assert r.density_evals >= 5 * r.n_paths**2 and r.error is None
    again = run_table(cfg)
    assert [r.values for r in rows] == [r.values for r in again]
    p = tmp_path / "t.csv"
    write_table_csv(rows, p)
    with open(p, newline="", encoding="utf-8") as fh:
        data = list(csv.reader(fh))
    assert data[0] == TABLE_COLUMNS and len(data) == 3


def test_run_table_single_rep_warns():
    with pytest.warns(UserWarning, match="single repetition"):
        rows = run_table(_small_cfg(n_repetitions=1, n_paths_list=(10,)))
    assert rows[0].std == 0.0


def test_run_table_workers_identical():
    cfg = _small_cfg(n_paths_list=(10,))
    a = run_table(cfg, workers=1)
    b = run_table(cfg, workers=2)
    assert a[0].values == b[0].values


def test_run_table_row_failure_isolated(monkeypatch):
    import meshmdp.lqg as lqg

    real = lqg.solve_once

    def flaky(cfg, n_paths, rep):
        if n_paths == 10:
            raise FloatingPointError("boom")
        return real(cfg, n_paths, rep)

    monkeypatch.setattr(lqg, "solve_once", flaky)
    rows = run_table(_small_cfg())
    assert rows[0].error is not None and math.isnan(rows[0].mean)
    assert rows[1].error is None and math.isfinite(rows[1].mean)


def test_sweep_matches_table_row(tmp_path):
    cfg = _small_cfg()
    table = run_table(cfg)
    sweep = lambda_sweep(cfg, [cfg.lam])
    assert sweep[0]["mesh_value"] == table[-1].mean
    assert sweep[0]["mesh_std"] == table[-1].std
    assert sweep[0]["reference_value"] == table[-1].reference
    p = tmp_path / "s.csv"
    write_sweep_csv(sweep, p)
    assert p.read_text(encoding="utf-8").splitlines()[0] == ",".join(SWEEP_COLUMNS)
    with pytest.raises(InvalidArgumentError):
        lambda_sweep(cfg, [0.0])


def test_calibration_selects_lambda_one():
    cfg = LqgConfig(reference_samples=10_000)
    lam, scan = calibrate_lambda(cfg, 0.4542, [0.25, 0.5, 1.0, 2.0, 4.0])
    assert lam == 1.0 and len(scan) == 5
    lam5, _ = calibrate_lambda(cfg.with_(dim=5, terminal_sign="plus"), 0.4054, [0.25, 0.5, 1.0, 2.0, 4.0])
    assert lam5 == 1.0
