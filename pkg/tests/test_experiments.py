import json

import numpy as np
import pytest

from tpschwarz import experiments as ex
from tpschwarz.model import ConfigError


def test_config_validation():
    with pytest.raises(ConfigError):
        ex.ScenarioConfig("nope")
    with pytest.raises(ConfigError):
        ex.ScenarioConfig("bounds", {"Mx": 3})
    with pytest.raises(ConfigError):
        ex.ScenarioConfig("bounds", {"N_list": []})
    cfg = ex.ScenarioConfig("bounds", {"M": 16})
    assert cfg.params["M"] == 16 and cfg.params["nu"] == 1e-2


def test_fit_order_and_decay_rate():
    h = 2.0 ** -np.arange(3, 8)
    assert ex.fit_order(h, 3.0 * h ** 2) == pytest.approx(2.0, abs=1e-12)
    e = 0.5 ** np.arange(10) * np.where(np.arange(10) % 2, 0.3, 1.0)
    # period-two oscillation: an even window recovers the mean rate exactly
    assert ex.decay_rate(e, 4) == pytest.approx(0.5, rel=1e-12)
    assert np.isnan(ex.decay_rate([1.0], 4))


def test_unknown_counts_reproduce_reference():
    c = ex.unknown_counts(127, 512, 64)
    assert c["global"] == ex.REFERENCE_UNKNOWNS["global"] == 8_323_326
    assert c["per_period"] == ex.REFERENCE_UNKNOWNS["per_period"] == 16_510


def test_bounds_runner():
    tabs = ex.run_bounds(ex.ScenarioConfig("bounds", {"N_list": [2, 8, 32]}))
    rows = tabs["bounds_M128_nu1e-02"]
    by = {(r["m"], r["N"]): r for r in rows}
    for N in (8, 32):
        assert by[(128, N)]["rho"] < 1e-3 * by[(1, N)]["rho"]
        assert by[(1, N)]["inf_norm"] > 1
        assert by[(1, N)]["inf_norm"] == pytest.approx(by[(1, N)]["inf_norm_closed"], rel=1e-13)
    assert all(0 <= r["rho"] <= r["sqrt_rho_tilde"] + 1e-10 for r in rows)
    curves = tabs["bounds_rhotilde_vs_m_M128"]
    assert len(curves) == 128 * (4 + 5)


def test_clustering_runner():
    cfg = ex.ScenarioConfig("clustering", {"N_list": [16, 32], "nu_list": [1e-2]})
    tabs = ex.run_clustering(cfg)
    stats = tabs["clustering_stats_M128"]
    assert len(stats) == 4
    high = [s for s in stats if s["m"] == 128]
    # highest mode: the symbol curves shrink to the two points +-i sqrt(nu)|C1|
    assert all(s["c2"] < 1e-10 * s["sqrt_nu_c1"] for s in high)
    scatter = tabs["clustering_nu1e-02_m1_N32"]
    assert len(scatter) == 62 and all(r["in_region_D"] for r in scatter)


def test_cn_order_runner():
    tabs = ex.run_cn_order(ex.ScenarioConfig("cn-order", {"h_list": [1 / 8, 1 / 16, 1 / 32]}))
    slopes = {r["variable"]: r["order"] for r in tabs["cn-order_slopes_nu1e-01"]}
    assert 1.8 <= slopes["y"] <= 2.2 and 1.8 <= slopes["p"] <= 2.2
    with pytest.raises(ConfigError):
        ex.cn_errors(0.3, 0.1)


def test_weak_scaling_decay_tracks_prediction():
    cfg = ex.ScenarioConfig("weak-scaling", {"dt_list": [1 / 8, 1 / 16], "N_list": [16],
                                             "max_iters": 50})
    summary = ex.run_weak_scaling(cfg)["weak-scaling_summary_nu1e-01_h0.03125"]
    for r in summary:
        assert r["converged"]
        assert 0.5 <= r["observed_rate"] / r["sqrt_rho_tilde"] <= 1.0


def test_invariant_violation_is_loud(monkeypatch):
    monkeypatch.setattr(ex, "decay_rate", lambda e, w: 10.0)
    cfg = ex.ScenarioConfig("weak-scaling", {"dt_list": [1.0], "N_list": [2]})
    with pytest.raises(ex.InvariantViolation):
        ex.run_weak_scaling(cfg)


def test_heatcool_runner_and_periodic_control(tmp_path):
    cfg = ex.ScenarioConfig("heatcool", {"N_list": [4], "max_iters": 50, "h": 1 / 32},
                            out_dir=str(tmp_path))
    tabs = ex.run(cfg)
    per = tabs["heatcool_periodicity_N4"]
    # the last period feels the terminal condition p(T) = 0; the others repeat
    assert all(r["rel_change"] < 0.05 for r in per[:-1])
    assert per[-1]["rel_change"] > 0.05
    names = sorted(p.name for p in tmp_path.iterdir())
    assert "heatcool_field_control_N4.csv" in names and "manifest.json" in names
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["reference_unknowns_N512"]["global"] == 8_323_326
    assert {"numpy", "scipy", "numba", "python"} <= set(manifest["versions"])


def test_csv_outputs_are_byte_reproducible(tmp_path):
    params = {"h_list": [1 / 8, 1 / 16]}
    for sub in ("a", "b"):
        ex.run(ex.ScenarioConfig("cn-order", params, out_dir=str(tmp_path / sub)))
    for f in (tmp_path / "a").glob("*.csv"):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    first = (tmp_path / "a" / "cn-order_nu1e-01.csv").read_text().splitlines()
    assert first[0] == "h,err_y,err_p" and len(first) == 3


def test_parallel_points_match_serial():
    p = {"N_list": [4, 8], "M": 32}
    a = ex.run_bounds(ex.ScenarioConfig("bounds", p, workers=1))
    b = ex.run_bounds(ex.ScenarioConfig("bounds", p, workers=4))
    assert a == b
