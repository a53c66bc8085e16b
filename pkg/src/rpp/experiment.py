"""
Experiment configuration, orchestration, sweeps and self-verification.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .chebyshev import make_cheb_operator, rpp_ca_step
from .engine import (AlgoParams, PerturbationMonitor, DivergenceError, Lyapunov, NetworkState,
                     NoiseSpec, ParameterError, dgd_baseline_step, rpp_step, select_parameters,
                     theory_constants)
from .graphs import build_weight_matrix, generate_geometric_graph
from .metrics import (IterationTrace, TraceRow, consensus_error, optimality_gap,
                      stationarity_gap, rate_certificate, write_summary, write_trace)
from .objectives import (generate_classification_data, global_smoothness,
                         logistic_nonconvex_problem, quadratic_problem)

log = logging.getLogger(__name__)

EXIT_CONVERGED, EXIT_MAX_ITERS, EXIT_DIVERGED, EXIT_CONFIG = 0, 2, 3, 4
VARIANT_ALIASES = {"rpp": "rpp", "rpp_ca": "rpp_ca", "dgd": "dgd_baseline",
                   "dgd_baseline": "dgd_baseline"}

_num = {"type": "number"}
_int = {"type": "integer"}
CONFIG_SCHEMA = {
    "type": "object",
    "required": ["graph", "problem", "algorithm", "run"],
    "properties": {
        "graph": {
            "type": "object",
            "required": ["type", "n", "radius", "seed"],
            "properties": {
                "type": {"enum": ["geometric"]},
                "n": {"type": "integer", "minimum": 2},
                "radius": {"type": "number", "exclusiveMinimum": 0},
                "seed": _int,
                "scheme": {"enum": ["normalized_laplacian", "metropolis"]},
            },
        },
        "problem": {
            "type": "object",
            "required": ["type", "d", "seed"],
            "properties": {
                "type": {"enum": ["logistic_nonconvex", "quadratic"]},
                "m": {"type": "integer", "minimum": 1},
                "d": {"type": "integer", "minimum": 1},
                "lambda": {"type": "number", "minimum": 0},
                "mu": {"type": "number", "exclusiveMinimum": 0},
                "seed": _int,
            },
        },
        "algorithm": {
            "type": "object",
            "required": ["variant"],
            "properties": {
                "variant": {"enum": ["rpp", "rpp_ca", "dgd", "dgd_baseline"]},
                "auto_params": {"type": "boolean"},
                "delta": _num,
                "eta": _num,
                "sigma_e": {"type": "number", "minimum": 0},
                "sigma_r": {"type": "number", "minimum": 0},
                "tau": {"type": ["integer", "null"], "minimum": 1},
                "manual": {
                    "type": ["object", "null"],
                    "required": ["rho", "alpha", "beta"],
                    "properties": {"rho": _num, "alpha": _num, "beta": _num},
                },
            },
        },
        "run": {
            "type": "object",
            "required": ["max_iters"],
            "properties": {
                "max_iters": {"type": "integer", "minimum": 0},
                "gap_tol": {"type": "number", "exclusiveMinimum": 0},
                "seed": _int,
                "trace_path": {"type": ["string", "null"]},
                "stop_on": {"enum": ["stationarity_gap", "optimality_gap"]},
            },
        },
    },
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field path."""


@dataclass
class ExperimentConfig:
    graph: dict
    problem: dict
    algorithm: dict
    run: dict

    def to_dict(self) -> dict:
        return {"graph": dict(self.graph), "problem": dict(self.problem),
                "algorithm": copy.deepcopy(self.algorithm), "run": dict(self.run)}

    def with_value(self, path: str, value) -> "ExperimentConfig":
        """Copy with one dotted field replaced, e.g. ``algorithm.sigma_e``."""
        doc = self.to_dict()
        section, key = path.split(".", 1)
        doc[section][key] = value
        return parse_config(doc)


def parse_config(document) -> ExperimentConfig:
    """Validate a JSON document (text or already-parsed dict) and fill defaults.

    Defaults: ``delta=2``, ``eta=0``, ``sigma_e=sigma_r=0``, ``tau`` automatic,
    ``gap_tol=1e-8``, ``auto_params=true`` unless ``manual`` is given.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from exc
    try:
        jsonschema.validate(document, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from exc

    graph = {"scheme": "normalized_laplacian", **document["graph"]}
    problem = {"m": 200, "lambda": 0.001, "mu": 1.0, **document["problem"]}
    alg = {"delta": 2.0, "eta": 0.0, "sigma_e": 0.0, "sigma_r": 0.0, "tau": None,
           "manual": None, **document["algorithm"]}
    alg.setdefault("auto_params", alg["manual"] is None)
    run = {"gap_tol": 1e-8, "seed": 0, "trace_path": None, "stop_on": "stationarity_gap",
           **document["run"]}

    if alg["auto_params"] and alg["manual"] is not None:
        raise ConfigError("algorithm.manual: must be null when auto_params is true")
    if not alg["auto_params"] and alg["manual"] is None:
        raise ConfigError("algorithm.manual: required when auto_params is false")
    if alg["variant"] in ("dgd", "dgd_baseline") and alg["auto_params"] is False and alg["manual"]["alpha"] < 0:
        raise ConfigError("algorithm.manual.alpha: DGD stepsize must be nonnegative")
    if not run["gap_tol"] > 0:
        raise ConfigError("run.gap_tol: must be positive")
    return ExperimentConfig(graph, problem, alg, run)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# -- building blocks --------------------------------------------------------

def build_graph(cfg: ExperimentConfig):
    g = cfg.graph
    graph = generate_geometric_graph(g["n"], g["radius"], g["seed"])
    return graph, build_weight_matrix(graph, g["scheme"])


def build_problem(cfg: ExperimentConfig, n_nodes: int):
    p = cfg.problem
    if p["type"] == "quadratic":
        return quadratic_problem(n_nodes, p["d"], p["seed"])
    data = generate_classification_data(n_nodes, p["m"], p["d"], p["seed"])
    return logistic_nonconvex_problem(data, p["lambda"], p["mu"])


def build_params(cfg: ExperimentConfig, L_eigs, m_bar: float, tau=None) -> AlgoParams:
    a = cfg.algorithm
    variant = VARIANT_ALIASES[a["variant"]]
    if variant == "dgd_baseline":
        step = a["manual"]["alpha"] if a["manual"] else 1.0 / (m_bar + 2.0)
        return AlgoParams("dgd_baseline", rho=1.0, alpha=step, beta=0.0)
    nz = L_eigs[L_eigs > 1e-9]
    lam_min = float(nz.min())
    if a["auto_params"]:
        return select_parameters(m_bar, lam_min, a["eta"], a["sigma_e"], a["sigma_r"], a["delta"],
                                 eigenvalues=L_eigs, variant=variant, tau=tau)
    man = a["manual"]
    consts = theory_constants(man["rho"], man["alpha"], man["beta"], a["eta"], a["sigma_e"],
                              a["sigma_r"], m_bar, lam_min, a["delta"], eigenvalues=L_eigs)
    failed = [k for k, v in consts.margins.items() if v < 0]
    if failed:
        log.info("manual parameters: analysis conditions not met (%s)", ", ".join(failed))
    return AlgoParams(variant, man["rho"], man["alpha"], man["beta"], a["eta"], a["sigma_e"],
                      a["sigma_r"], tau=tau, derived=consts)


@dataclass
class RunResult:
    trace: IterationTrace
    status: str
    exit_code: int
    params: AlgoParams
    summary: dict = field(default_factory=dict)
    final_state: NetworkState | None = None


def run_experiment(cfg: ExperimentConfig, *, write: bool = True) -> RunResult:
    """Build graph, problem and parameters, iterate, record and export a trace.

    Iteration stops when the ``run.stop_on`` metric (stationarity gap by
    default) reaches ``gap_tol`` or after ``max_iters`` steps.  The trace CSV
    and a ``summary.json`` beside it are written when ``run.trace_path`` is
    set and `write` is true.
    """
    graph, P = build_graph(cfg)
    problem = build_problem(cfg, graph.n)
    m_bar = global_smoothness(problem)
    variant = VARIANT_ALIASES[cfg.algorithm["variant"]]
    op = None
    L = P
    if variant == "rpp_ca":
        op = make_cheb_operator(P, cfg.algorithm["tau"])
        L = op
    L_eigs = np.linalg.eigvalsh(L.matrix)
    params = build_params(cfg, L_eigs, m_bar, tau=op.tau if op else None)
    if variant != "dgd_baseline":
        params.check_matrices(L_eigs)
    noise = NoiseSpec.for_params(params, seed=cfg.run["seed"])
    lyap = None
    if variant != "dgd_baseline" and params.derived is not None and params.derived.conditions_hold:
        lyap = Lyapunov(params, L, problem)
    monitor = PerturbationMonitor(params.sigma_e, params.sigma_r)

    state = NetworkState.zeros(problem.n_nodes, problem.dim)
    trace = IterationTrace()
    # overflow on the way to a non-finite iterate is reported as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        status, code, state, x1 = _iterate(cfg, variant, params, P, op, L, problem, noise,
                                           lyap, monitor, state, trace)
    summary = _summary(cfg, params, trace, status, monitor, problem, x1, op, graph)
    result = RunResult(trace, status, code, params, summary, state)
    path = cfg.run.get("trace_path")
    if write and path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        write_trace(trace, path)
        write_summary(summary, path.parent / "summary.json")
    return result


def _iterate(cfg, variant, params, P, op, L, problem, noise, lyap, monitor, state, trace):
    tol, stop_on = cfg.run["gap_tol"], cfg.run["stop_on"]
    x1 = None
    for _ in range(cfg.run["max_iters"]):
        try:
            if variant == "rpp":
                new = rpp_step(state, params, P, problem, noise)
            elif variant == "rpp_ca":
                new = rpp_ca_step(state, params, op, problem, noise)
            else:
                new = dgd_baseline_step(state, params.alpha, P, problem)
        except DivergenceError as exc:
            log.warning("diverged: %s", exc)
            return "diverged", EXIT_DIVERGED, state, x1
        # e^k, r^k were drawn against x^k - x^{k-1}
        viol = monitor.update(new.e, state.e, new.r, state.r, state.x, state.x_prev)
        state = new
        if x1 is None:
            x1 = state.x
        row = TraceRow(
            k=state.k,
            comm_rounds=state.comm_rounds,
            stationarity_gap=stationarity_gap(state, params, L, problem),
            optimality_gap=optimality_gap(state, problem, P),
            consensus_err=consensus_error(state),
            potential=lyap.of_state(state) if lyap else math.nan,
            f_value=problem.value(state.x),
            a4_violations=viol,
        )
        if not all(math.isfinite(getattr(row, f)) for f in ("stationarity_gap", "optimality_gap", "f_value")):
            log.warning("diverged: non-finite metric at iteration %d", state.k)
            return "diverged", EXIT_DIVERGED, state, x1
        trace.append(row)
        if getattr(row, stop_on) <= tol:
            return "converged", EXIT_CONVERGED, state, x1
    return "max_iters", EXIT_MAX_ITERS, state, x1


def _summary(cfg, params, trace, status, monitor, problem, x1, op, graph):
    last = trace.rows[-1] if trace.rows else None
    cert = None
    if trace.rows and params.derived is not None and cfg.algorithm["auto_params"]:
        cert = rate_certificate(trace, params, problem, x1).summary()
    out = {
        "status": status,
        "iterations": len(trace),
        "comm_rounds": last.comm_rounds if last else 0,
        "final_stationarity_gap": last.stationarity_gap if last else None,
        "final_optimality_gap": last.optimality_gap if last else None,
        "final_consensus_err": last.consensus_err if last else None,
        "graph_seed": graph.seed,
        "params": {"variant": params.variant, "rho": params.rho, "alpha": params.alpha,
                   "beta": params.beta, "eta": params.eta, "sigma_e": params.sigma_e,
                   "sigma_r": params.sigma_r, "tau": params.tau},
        "analysis_conditions": (dict(params.derived.margins) if params.derived else None),
        "certificate": cert,
        "perturbation_bounds": monitor.report(),
        "config": cfg.to_dict(),
    }
    if op is not None:
        out["chebyshev"] = {"tau": op.tau, "kappa_P": op.kappa_p, "c": op.c, "b_tau": op.b_final,
                            "degenerate": op.degenerate}
    return out


# -- sweeps -----------------------------------------------------------------

AXES = {
    "variant": ("algorithm.variant", str),
    "sigma": (("algorithm.sigma_e", "algorithm.sigma_r"), float),
    "sigma_e": ("algorithm.sigma_e", float),
    "sigma_r": ("algorithm.sigma_r", float),
    "eta": ("algorithm.eta", float),
    "tau": ("algorithm.tau", int),
    "delta": ("algorithm.delta", float),
    "radius": ("graph.radius", float),
    "n": ("graph.n", int),
}
SWEEP_HEADER = ("variant", "sigma", "tau", "seed", "axis_value", "status", "iters_to_tol",
                "comm_to_tol")


def _cell_config(cfg: ExperimentConfig, axis: str, value, seed: int, out_dir) -> ExperimentConfig:
    paths, cast = AXES[axis]
    for p in (paths if isinstance(paths, tuple) else (paths,)):
        cfg = cfg.with_value(p, cast(value))
    for p in ("graph.seed", "problem.seed", "run.seed"):
        cfg = cfg.with_value(p, int(seed))
    trace = str(Path(out_dir) / f"{axis}={value}_seed={seed}" / "trace.csv") if out_dir else None
    return cfg.with_value("run.trace_path", trace)


def _run_cell(args):
    cfg, axis, value, seed = args
    try:
        res = run_experiment(cfg)
    except (ParameterError, RuntimeError, ValueError) as exc:
        log.warning("sweep cell %s=%s seed=%s failed: %s", axis, value, seed, exc)
        return {"variant": cfg.algorithm["variant"], "sigma": cfg.algorithm["sigma_e"],
                "tau": cfg.algorithm["tau"], "seed": seed, "axis_value": value,
                "status": f"error: {exc}", "iters_to_tol": None, "comm_to_tol": None}
    hit = res.trace.first_below(cfg.run["stop_on"], cfg.run["gap_tol"])
    return {"variant": cfg.algorithm["variant"], "sigma": cfg.algorithm["sigma_e"],
            "tau": res.params.tau, "seed": seed, "axis_value": value, "status": res.status,
            "iters_to_tol": hit.k if hit else None, "comm_to_tol": hit.comm_rounds if hit else None}


def sweep(cfg: ExperimentConfig, axis: str, values, seeds, *, out_dir=None, workers: int = 1) -> list[dict]:
    """Run the cross product ``values x seeds``; one row per cell.

    Each seed is applied to the graph, data and noise.  A failing cell is
    recorded with its error and the sweep continues.  With `out_dir` every
    cell writes its own trace directory and a combined ``sweep.csv``.
    """
    if axis not in AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {sorted(AXES)}")
    jobs = [(_cell_config(cfg, axis, v, s, out_dir), axis, v, s) for v in values for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_run_cell, jobs))
    else:
        rows = [_run_cell(j) for j in jobs]
    if out_dir:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        write_sweep(rows, Path(out_dir) / "sweep.csv")
    return rows


def write_sweep(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_HEADER)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r[k] is None else r[k]) for k in SWEEP_HEADER})
