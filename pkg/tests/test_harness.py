import json

import numpy as np
import pytest

from outage_cbf import UtilitySpec, generate_channel_set, mrt_init, tighten_rates
from outage_cbf.harness import (SUMMARY_COLUMNS, ExperimentConfig, cap_grid, exhaustive_search,
                                power_grid_oracle, run_method, run_sweep, summary_csv, svg_chart,
                                verify_solution)
from outage_cbf.model import generate_scalar_channel_set
from outage_cbf.utility import utility_value

from conftest import scalar_cs


def test_cap_grid_nested():
    g32 = cap_grid(1e-5, 2.0, 32)
    g64 = cap_grid(1e-5, 2.0, 64)
    np.testing.assert_allclose(g64[1::2], g32, rtol=1e-12)
    assert g32[-1] == pytest.approx(2.0)
    assert np.all(np.diff(g32) > 0) and g32[0] > 1e-5


def test_exhaustive_refinement_never_worse():
    cs = generate_channel_set(2, 2, seed=1, sigma2=0.01)
    spec = UtilitySpec.uniform(2, 0.0)
    u16 = exhaustive_search(cs, spec, M=16).utility
    u32 = exhaustive_search(cs, spec, M=32).utility
    assert u16 <= u32 + 1e-9


def test_exhaustive_requires_two_users():
    cs = generate_channel_set(3, 2, seed=0)
    with pytest.raises(ValueError):
        exhaustive_search(cs, UtilitySpec.uniform(3, 0.0), M=4)


@pytest.mark.parametrize("beta", [0.0, 1.0])
def test_exhaustive_matches_oracle_single_antenna(beta):
    cs = generate_scalar_channel_set(2, seed=0)
    spec = UtilitySpec.uniform(2, beta)
    ex = exhaustive_search(cs, spec, M=32)
    orc = power_grid_oracle(cs, spec, grid=200)
    assert abs(ex.utility - orc.utility) <= 1e-4 * abs(orc.utility)
    assert verify_solution(ex.beamformers, ex.rates, cs)


def test_exhaustive_solution_consistent():
    cs = generate_channel_set(2, 2, seed=2, sigma2=0.01)
    spec = UtilitySpec.uniform(2, 1.0)
    res = exhaustive_search(cs, spec, M=16)
    assert res.utility == pytest.approx(float(utility_value(spec, res.rates)))
    assert np.all(res.beamformers.power() <= cs.P + 1e-9)


def test_oracle_without_cross_gains_is_full_power():
    cs = scalar_cs([[2.0, 0.0], [0.0, 0.5]], sigma2=0.1)
    res = power_grid_oracle(cs, UtilitySpec.uniform(2, 0.0), grid=50)
    np.testing.assert_allclose(res.info["powers"], cs.P)
    np.testing.assert_allclose(res.rates, tighten_rates(res.beamformers, cs))


def test_oracle_grid_refinement_stable():
    cs = generate_scalar_channel_set(3, seed=4)
    spec = UtilitySpec.uniform(3, 0.0)
    u1 = power_grid_oracle(cs, spec, grid=50).utility
    u2 = power_grid_oracle(cs, spec, grid=100).utility
    assert abs(u2 - u1) <= 5e-3 * abs(u2)


def test_oracle_rejects_bad_instances():
    with pytest.raises(ValueError):
        power_grid_oracle(generate_channel_set(2, 2, seed=0), UtilitySpec.uniform(2))
    with pytest.raises(ValueError):
        power_grid_oracle(generate_scalar_channel_set(4, seed=0), UtilitySpec.uniform(4))


def test_oracle_respects_floors():
    cs = generate_scalar_channel_set(2, seed=1)
    res = power_grid_oracle(cs, UtilitySpec.uniform(2, 0.0), grid=40)
    T = cs.traces(res.beamformers)
    assert np.all(T[cs.floor_active()] >= cs.delta)


def test_run_method_mrt_single_user_is_tight_rate():
    cs = generate_channel_set(1, 3, seed=0)
    spec = UtilitySpec.uniform(1, 0.0)
    u, R, bf = run_method("mrt", cs, spec)
    np.testing.assert_allclose(R, tighten_rates(mrt_init(cs), cs))
    assert u == pytest.approx(R[0])


def test_experiment_config_validation(tmp_path):
    with pytest.raises(ValueError):
        ExperimentConfig(axis="temperature")
    with pytest.raises(ValueError):
        ExperimentConfig(methods=("sca", "magic"))
    with pytest.raises(ValueError):
        ExperimentConfig(K=3, methods=("exhaustive",))
    with pytest.raises(ValueError):
        ExperimentConfig(Nt=2, methods=("oracle",))
    cfg = ExperimentConfig(n_instances=2, values=(0.1,), methods=("mrt",))
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json(p) == cfg


def test_experiment_instance_axes():
    cfg = ExperimentConfig(axis="snr_db", values=(20.0,), seed=5, K=2, Nt=2)
    cs = cfg.instance(20.0, 1)
    np.testing.assert_allclose(cs.sigma2, 0.01)
    cs2 = generate_channel_set(2, 2, eta=0.5, seed=6, sigma2=0.01)
    np.testing.assert_array_equal(cs.Q, cs2.Q)


@pytest.fixture(scope="module")
def small_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    cfg = ExperimentConfig(n_instances=3, values=(0.2, 0.8), K=2, Nt=2, methods=("mrt", "zf"),
                           out_dir=str(out))
    return cfg, run_sweep(cfg), out


def test_sweep_outputs(small_sweep):
    cfg, rows, out = small_sweep
    assert len(rows) == len(cfg.values) * len(cfg.methods)
    text = (out / "summary.csv").read_text()
    lines = text.strip().split("\n")
    assert lines[0] == ",".join(SUMMARY_COLUMNS)
    assert len(lines) == 1 + len(rows)
    assert all(r["n_instances"] + r["failures"] == cfg.n_instances for r in rows)
    svg = (out / "chart.svg").read_text()
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert json.loads((out / "config.json").read_text())["n_instances"] == 3


def test_sweep_deterministic(small_sweep):
    cfg, rows, out = small_sweep
    again = run_sweep(ExperimentConfig(**{**cfg.to_dict(), "out_dir": None}))
    assert summary_csv(again) == (out / "summary.csv").read_text()


def test_sweep_means_match_direct_runs(small_sweep):
    cfg, rows, _ = small_sweep
    v = cfg.values[0]
    us = [run_method("mrt", cfg.instance(v, j), cfg.spec, cfg)[0] for j in range(cfg.n_instances)]
    row = next(r for r in rows if r["sweep_value"] == v and r["method"] == "mrt")
    assert row["mean_utility"] == pytest.approx(np.mean(us), rel=1e-12)


def test_svg_chart_handles_nan():
    rows = [{"sweep_value": 0.0, "method": "a", "mean_utility": float("nan"), "stderr": 0.0},
            {"sweep_value": 1.0, "method": "a", "mean_utility": 1.0, "stderr": 0.1}]
    assert "<svg" in svg_chart(rows)
