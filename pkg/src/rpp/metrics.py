"""
Convergence metrics, the sublinear-rate certificate and trace files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .engine import AlgoParams, NetworkState, operator_matrix, quad, sqnorm
from .objectives import ProblemInstance, global_smoothness

TRACE_HEADER = ("k", "comm_rounds", "stationarity_gap", "optimality_gap", "consensus_err",
                "potential", "f_value", "a4_violations")


def _psd_quad(W, x) -> float:
    # the operator is PSD; clip the rounding residue near its null space
    return max(quad(operator_matrix(W), x), 0.0)


def stationarity_gap(state: NetworkState, params: AlgoParams, L, problem: ProblemInstance) -> float:
    """``(1/N) ||sum_i grad f_i(x_i)||^2 + rho ||x||^2_L``.

    `L` is the operator the algorithm actually uses (the normalized
    Chebyshev operator for the accelerated variant).
    """
    g = problem.gradients(state.x).sum(axis=0)
    return sqnorm(g) / state.x.shape[0] + params.rho * _psd_quad(L, state.x)


def optimality_gap(state: NetworkState, problem: ProblemInstance, H) -> float:
    """``||J grad f~(x)||^2 + x^T (H kron I) x`` on the base matrix `H`.

    ``J`` averages over nodes, so the gradient term is
    ``(1/N) ||sum_i grad f_i(x_i)||^2`` and vanishes at consensus
    stationary points of the sum objective.
    """
    g = problem.gradients(state.x).sum(axis=0)
    return sqnorm(g) / state.x.shape[0] + _psd_quad(H, state.x)


def consensus_error(state_or_x) -> float:
    x = state_or_x.x if isinstance(state_or_x, NetworkState) else np.asarray(state_or_x)
    return math.sqrt(sqnorm(x - x.mean(axis=0)))


@dataclass(frozen=True)
class TraceRow:
    k: int
    comm_rounds: int
    stationarity_gap: float
    optimality_gap: float
    consensus_err: float
    potential: float
    f_value: float
    a4_violations: int


@dataclass
class IterationTrace:
    rows: list = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if self.rows:
            last = self.rows[-1]
            if row.k <= last.k:
                raise ValueError("iteration counter must strictly increase")
            if row.comm_rounds < last.comm_rounds:
                raise ValueError("communication rounds cannot decrease")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def first_below(self, name: str, tol: float):
        """First row whose `name` column is <= tol, or None."""
        for r in self.rows:
            if getattr(r, name) <= tol:
                return r
        return None


def _fmt(v):
    return str(v) if isinstance(v, (int, np.integer)) else format(float(v), ".17g")


def write_trace(trace: IterationTrace, path) -> None:
    """CSV with the fixed header; floats carry 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        for r in trace.rows:
            fh.write(",".join(_fmt(getattr(r, name)) for name in TRACE_HEADER) + "\n")


def read_trace(path) -> IterationTrace:
    types = {f.name: f.type for f in fields(TraceRow)}
    trace = IterationTrace()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {reader.fieldnames}")
        for rec in reader:
            trace.rows.append(TraceRow(**{k: (int(v) if types[k] == "int" else float(v))
                                          for k, v in rec.items()}))
    return trace


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(type(o))


@dataclass
class CertificateReport:
    c1: float
    c2: float
    margins: np.ndarray
    available: bool = True

    @property
    def passed(self):
        return bool(self.available and np.all(self.margins >= 0))

    def summary(self) -> dict:
        return {
            "available": self.available,
            "passed": self.passed,
            "C1": self.c1,
            "C2": self.c2,
            "min_margin": float(self.margins.min()) if len(self.margins) else None,
        }


def rate_certificate(trace: IterationTrace, params: AlgoParams, problem: ProblemInstance,
                         x1) -> CertificateReport:
    """Check ``(1/T) sum_{k<=T} gap_k <= C1 C2 / T`` for every prefix ``T``.

    ``C1 = f~(x^1) - f* + (2/M) ||grad f~(0)||^2`` with ``f*`` replaced by
    the problem's lower bound (a smaller value only enlarges ``C1``), and
    ``C2 = 4/alpha + 8 + (8 + (5 + 18/c) 12/c) / ((2 + [eta]_+) c)``.
    Margins are ``C1 C2 / T - running mean``.
    """
    if params.derived is None:
        raise ValueError("certificate requires analysis constants")
    if not np.isfinite(problem.lower_bound):
        return CertificateReport(math.nan, math.nan, np.array([]), available=False)
    c = params.derived.c
    m_bar = params.derived.m_bar or global_smoothness(problem)
    zero = np.zeros((problem.n_nodes, problem.dim))
    g0 = sqnorm(problem.gradients(zero))
    c1 = problem.value(np.asarray(x1)) - problem.lower_bound + 2.0 / m_bar * g0
    c2 = (4.0 / params.alpha + 8.0
          + (8.0 + (5.0 + 18.0 / c) * 12.0 / c) / ((2.0 + max(params.eta, 0.0)) * c))
    gaps = trace.column("stationarity_gap")
    T = np.arange(1, len(gaps) + 1)
    margins = c1 * c2 / T - np.cumsum(gaps) / T
    return CertificateReport(c1, c2, margins)
