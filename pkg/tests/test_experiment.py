import json
from pathlib import Path

import numpy as np
import pytest

from rpp.experiment import (EXIT_CONVERGED, EXIT_MAX_ITERS, SWEEP_HEADER, ConfigError, build_graph,
                            build_problem, load_config, parse_config, run_experiment, sweep)
from rpp.metrics import read_trace

ROOT = Path(__file__).resolve().parents[1]
BENCH_CONFIG = ROOT / "configs" / "logistic_benchmark.json"


def small_doc(**alg):
    return {
        "graph": {"type": "geometric", "n": 6, "radius": 0.7, "seed": 3},
        "problem": {"type": "logistic_nonconvex", "m": 10, "d": 3, "lambda": 0.001, "mu": 1.0,
                    "seed": 4},
        "algorithm": {"variant": "rpp", "manual": {"rho": 0.5, "alpha": 1.0, "beta": 0.5}, **alg},
        "run": {"max_iters": 60, "gap_tol": 1e-12, "seed": 5},
    }


def test_benchmark_document_valid():
    cfg = load_config(BENCH_CONFIG)
    assert cfg.graph["n"] == 50 and cfg.graph["radius"] == 0.3
    assert (cfg.problem["m"], cfg.problem["d"]) == (200, 10)
    assert cfg.problem["lambda"] == 0.001 and cfg.problem["mu"] == 1.0
    assert cfg.algorithm["sigma_e"] == cfg.algorithm["sigma_r"] == 0.3
    assert cfg.algorithm["tau"] == 2


def test_defaults_filled():
    doc = small_doc()
    del doc["algorithm"]["manual"]
    del doc["run"]["gap_tol"]
    cfg = parse_config(json.dumps(doc))
    a = cfg.algorithm
    assert a["auto_params"] is True and a["delta"] == 2.0 and a["eta"] == 0.0 and a["tau"] is None
    assert cfg.run["gap_tol"] == 1e-8


def test_missing_graph_names_field():
    doc = small_doc()
    del doc["graph"]
    with pytest.raises(ConfigError, match="graph"):
        parse_config(doc)


def test_nested_field_path_in_error():
    doc = small_doc()
    doc["graph"]["n"] = "fifty"
    with pytest.raises(ConfigError, match="graph/n"):
        parse_config(doc)


def test_auto_with_manual_rejected():
    with pytest.raises(ConfigError, match="manual"):
        parse_config(small_doc(auto_params=True))


def test_manual_required_when_not_auto():
    doc = small_doc(auto_params=False)
    doc["algorithm"]["manual"] = None
    with pytest.raises(ConfigError, match="manual"):
        parse_config(doc)


def test_bad_enum_and_json():
    with pytest.raises(ConfigError):
        parse_config(small_doc(variant="admm"))
    with pytest.raises(ConfigError, match="malformed"):
        parse_config("{not json")


def test_dgd_alias_accepted():
    assert parse_config(small_doc(variant="dgd")).algorithm["variant"] == "dgd"


def test_max_iters_zero():
    doc = small_doc()
    doc["run"]["max_iters"] = 0
    res = run_experiment(parse_config(doc), write=False)
    assert len(res.trace) == 0
    assert res.status == "max_iters" and res.exit_code == EXIT_MAX_ITERS


def test_quadratic_auto_converges_with_certificate():
    # theory parameters are conservative, so the tolerance is loose
    cfg = parse_config({
        "graph": {"type": "geometric", "n": 5, "radius": 1.5, "seed": 1},
        "problem": {"type": "quadratic", "d": 3, "seed": 2},
        "algorithm": {"variant": "rpp"},
        "run": {"max_iters": 60000, "gap_tol": 1e-2},
    })
    res = run_experiment(cfg, write=False)
    assert res.status == "converged" and res.exit_code == EXIT_CONVERGED
    assert res.summary["certificate"]["available"] and res.summary["certificate"]["passed"]
    pots = [r.potential for r in res.trace.rows]
    assert all(b <= a + 1e-9 * (1 + abs(a)) for a, b in zip(pots, pots[1:]))


def test_trace_and_summary_written(tmp_path):
    doc = small_doc(sigma_e=0.1, sigma_r=0.1)
    doc["run"]["trace_path"] = str(tmp_path / "out" / "trace.csv")
    res = run_experiment(parse_config(doc))
    back = read_trace(tmp_path / "out" / "trace.csv")
    # repr is exact for floats and treats the NaN potential as equal
    assert [repr(r) for r in back.rows] == [repr(r) for r in res.trace.rows]
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["iterations"] == 60 and summary["comm_rounds"] == 120
    a4 = summary["perturbation_bounds"]
    assert a4["counts"]["e_norm"] == 0 and a4["counts"]["r_norm"] == 0
    assert "diff_violation_rate" in a4 and "iteration_diff_violation_rate" in a4
    assert summary["params"]["rho"] == 0.5


def test_rpp_ca_round_accounting():
    res = run_experiment(parse_config(small_doc(variant="rpp_ca", tau=3)), write=False)
    rounds = [r.comm_rounds for r in res.trace.rows]
    assert rounds == [6 * k for k in range(1, 61)]
    assert res.summary["chebyshev"]["tau"] == 3


def test_dgd_baseline_runs():
    doc = small_doc(variant="dgd_baseline")
    doc["algorithm"]["manual"] = {"rho": 1.0, "alpha": 0.2, "beta": 0.0}
    res = run_experiment(parse_config(doc), write=False)
    assert [r.comm_rounds for r in res.trace.rows][:3] == [1, 2, 3]
    assert res.trace.rows[-1].f_value < res.trace.rows[0].f_value


def test_matches_hand_assembled_loop():
    # dense unperturbed recursion written out independently of the engine
    doc = small_doc()
    cfg = parse_config(doc)
    graph, P = build_graph(cfg)
    problem = build_problem(cfg, graph.n)
    rho, alpha, beta = 0.5, 1.0, 0.5
    L = P.matrix
    x = np.zeros((graph.n, 3))
    d_hat = np.zeros_like(x)
    gaps = []
    for _ in range(60):
        z = problem.gradients(x) + rho * L @ (x + d_hat)
        x = x - alpha * z + beta * L @ z
        d_hat = d_hat + x
        g = problem.gradients(x).sum(0)
        gaps.append(g @ g / graph.n + rho * np.sum(x * (L @ x)))
    res = run_experiment(cfg, write=False)
    got = np.array([r.stationarity_gap for r in res.trace.rows])
    np.testing.assert_allclose(got, gaps, rtol=1e-9, atol=1e-15)
    np.testing.assert_allclose(res.final_state.x, x, rtol=1e-9, atol=1e-13)


def test_repeat_runs_bit_identical(tmp_path):
    doc = small_doc(sigma_e=0.3, sigma_r=0.3)
    paths = []
    for i in range(2):
        doc["run"]["trace_path"] = str(tmp_path / f"r{i}" / "trace.csv")
        run_experiment(parse_config(doc))
        paths.append(tmp_path / f"r{i}" / "trace.csv")
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_sweep_empty_values():
    assert sweep(parse_config(small_doc()), "sigma", [], [0, 1]) == []


def test_sweep_unknown_axis():
    with pytest.raises(ConfigError):
        sweep(parse_config(small_doc()), "colour", [1], [0])


def test_sweep_rows_and_csv(tmp_path):
    rows = sweep(parse_config(small_doc()), "sigma", ["0", "0.3"], [0, 1], out_dir=tmp_path)
    assert len(rows) == 4
    assert {r["sigma"] for r in rows} == {0.0, 0.3}
    header = (tmp_path / "sweep.csv").read_text().splitlines()[0]
    assert header == ",".join(SWEEP_HEADER)
    assert len(list(tmp_path.glob("*/trace.csv"))) == 4


def test_sweep_variant_axis_comm_columns():
    doc = small_doc()
    doc["run"]["gap_tol"] = 1e-3
    doc["run"]["max_iters"] = 400
    rows = sweep(parse_config(doc), "variant", ["rpp", "rpp_ca"], [0])
    by = {r["variant"]: r for r in rows}
    assert by["rpp"]["comm_to_tol"] == 2 * by["rpp"]["iters_to_tol"]
    assert by["rpp_ca"]["comm_to_tol"] == 2 * by["rpp_ca"]["tau"] * by["rpp_ca"]["iters_to_tol"]


def test_sweep_failed_cell_recorded():
    rows = sweep(parse_config(small_doc()), "radius", ["0.7", "0.01"], [0])
    bad = [r for r in rows if str(r["status"]).startswith("error")]
    assert len(rows) == 2 and len(bad) == 1


def test_sweep_worker_count_determinism(tmp_path):
    cfg = parse_config(small_doc(sigma_e=0.3, sigma_r=0.3))
    sweep(cfg, "sigma", ["0.1", "0.3"], [0, 1], out_dir=tmp_path / "w1", workers=1)
    sweep(cfg, "sigma", ["0.1", "0.3"], [0, 1], out_dir=tmp_path / "w2", workers=2)
    files = sorted(p.relative_to(tmp_path / "w1") for p in (tmp_path / "w1").rglob("trace.csv"))
    assert len(files) == 4
    for f in files:
        assert (tmp_path / "w1" / f).read_bytes() == (tmp_path / "w2" / f).read_bytes()
