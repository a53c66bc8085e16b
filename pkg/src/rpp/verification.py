"""
Executable property suites used by the ``verify`` command.

Each suite returns a list of :class:`Check` records; a failing property is
a report entry, never an exception.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .chebyshev import cacc, make_cheb_operator, poly_values, rpp_ca_step, verify_eigengap_bound
from .engine import (AlgoParams, Lyapunov, NetworkState, NoiseSpec, centralized_step,
                     first_order_residual, rpp_step, select_parameters, sqnorm)
from .graphs import apply_weight, build_weight_matrix, generate_geometric_graph
from .metrics import IterationTrace, TraceRow, stationarity_gap, rate_certificate
from .objectives import (generate_classification_data, global_smoothness,
                         logistic_nonconvex_problem, quadratic_problem)

SUITES = ("equivalence", "lyapunov", "chebyshev", "gradients")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: str = ""


@dataclass
class VerifyReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> str:
        return json.dumps({"passed": self.passed, "checks": [asdict(c) for c in self.checks]},
                          indent=2)

    def lines(self):
        for c in self.checks:
            yield f"{'PASS' if c.passed else 'FAIL'}  {c.suite}/{c.name}  {c.detail}"


def verify(suite: str = "all") -> VerifyReport:
    if suite == "all":
        names = SUITES
    elif suite in SUITES:
        names = (suite,)
    else:
        raise ValueError(f"unknown suite {suite!r}; choose from all, {', '.join(SUITES)}")
    checks = []
    for name in names:
        fn = _SUITE_FUNCS[name]
        try:
            checks.extend(fn())
        except Exception as exc:  # a crashing suite is a failed check, not a crash
            checks.append(Check(name, "suite", False, f"{type(exc).__name__}: {exc}"))
    return VerifyReport(checks)


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def _small_instances(n=5, d=3, seed=0):
    graph = generate_geometric_graph(n, 0.6, seed)
    P = build_weight_matrix(graph)
    quad = quadratic_problem(n, d, seed)
    logi = logistic_nonconvex_problem(generate_classification_data(n, 20, d, seed))
    return P, {"quadratic": quad, "logistic": logi}


# -- equivalence ------------------------------------------------------------

def _equivalence():
    out = []
    P, problems = _small_instances()
    for pname, problem in problems.items():
        for sigma in (0.0, 0.3):
            params = AlgoParams("rpp", rho=1.0, alpha=0.2, beta=0.1, eta=0.1,
                                sigma_e=sigma, sigma_r=sigma)
            noise = NoiseSpec.for_params(params, seed=11)
            s = NetworkState.zeros(problem.n_nodes, problem.dim)
            worst = 0.0
            for _ in range(100):
                nxt = rpp_step(s, params, P, problem, noise)
                ref = centralized_step(s, params, P, problem, nxt.e, nxt.r)
                worst = max(worst, _rel(nxt.x, ref.x), _rel(nxt.d_hat, ref.d_hat), _rel(nxt.d, ref.d))
                s = nxt
            out.append(Check("equivalence", f"rpp_vs_matrix_{pname}_sigma{sigma}",
                             worst <= 1e-10, f"max rel diff {worst:.3g}"))

    problem = problems["logistic"]
    op = make_cheb_operator(P, 2)
    params = AlgoParams("rpp_ca", rho=1.0, alpha=0.2, beta=0.1, sigma_e=0.2, sigma_r=0.2, tau=2)
    noise = NoiseSpec.for_params(params, seed=3)
    s = NetworkState.zeros(problem.n_nodes, problem.dim)
    worst, rounds_ok = 0.0, True
    for _ in range(50):
        nxt = rpp_ca_step(s, params, op, problem, noise)
        ref = centralized_step(s, params, op, problem, nxt.e, nxt.r)
        worst = max(worst, _rel(nxt.x, ref.x))
        rounds_ok &= nxt.comm_rounds - s.comm_rounds == 2 * op.tau
        s = nxt
    out.append(Check("equivalence", "rpp_ca_vs_matrix", worst <= 1e-9, f"max rel diff {worst:.3g}"))
    out.append(Check("equivalence", "rpp_ca_rounds", bool(rounds_ok), f"2*tau = {2 * op.tau} per step"))

    # shifting dhat^0 (and hence d^0) by a consensus vector leaves x unchanged
    params = AlgoParams("rpp", rho=1.0, alpha=0.2, beta=0.1, eta=0.2)
    noise = NoiseSpec.for_params(params)
    a = NetworkState.zeros(problem.n_nodes, problem.dim)
    shift = np.tile(np.arange(1.0, problem.dim + 1), (problem.n_nodes, 1))
    b = NetworkState(0, a.x, a.x_prev, shift, shift, a.e, a.r)
    worst = 0.0
    for _ in range(50):
        a, b = rpp_step(a, params, P, problem, noise), rpp_step(b, params, P, problem, noise)
        worst = max(worst, float(np.abs(a.x - b.x).max()))
    out.append(Check("equivalence", "dual_shift_invariance", worst <= 1e-12, f"max |dx| {worst:.3g}"))

    # first-order identity of each step
    params = AlgoParams("rpp", rho=1.0, alpha=0.2, beta=0.1, eta=0.2, sigma_e=0.1, sigma_r=0.1)
    noise = NoiseSpec.for_params(params, seed=5)
    s = NetworkState.zeros(problem.n_nodes, problem.dim)
    worst = 0.0
    for _ in range(50):
        nxt = rpp_step(s, params, P, problem, noise)
        res = first_order_residual(s, nxt, params, P, problem)
        g = math.sqrt(sqnorm(problem.gradients(s.x)))
        worst = max(worst, math.sqrt(sqnorm(res)) / (1 + g))
        s = nxt
    out.append(Check("equivalence", "first_order_identity", worst <= 1e-8, f"max scaled residual {worst:.3g}"))

    rng = np.random.default_rng(0)
    worst = 0.0
    for t in range(20):
        W = build_weight_matrix(generate_geometric_graph(12, 0.5, t))
        v = rng.standard_normal((12, 4))
        worst = max(worst, _rel(apply_weight(W, v), W.matrix @ v))
    out.append(Check("equivalence", "apply_weight_vs_dense", worst <= 1e-12, f"max rel diff {worst:.3g}"))
    return out


# -- lyapunov ---------------------------------------------------------------

def theory_run(problem, P, params, iters, seed=0):
    """Iterate with theory parameters, returning the trace and per-step potentials."""
    noise = NoiseSpec.for_params(params, seed=seed)
    lyap = Lyapunov(params, P, problem)
    s = NetworkState.zeros(problem.n_nodes, problem.dim)
    trace, pots, x1 = IterationTrace(), [], None
    for _ in range(iters):
        s = rpp_step(s, params, P, problem, noise)
        x1 = s.x if x1 is None else x1
        pots.append(lyap.of_state(s))
        trace.append(TraceRow(s.k, s.comm_rounds, stationarity_gap(s, params, P, problem),
                              math.nan, math.nan, pots[-1], problem.value(s.x), 0))
    return trace, np.array(pots), x1


def potential_checks(problem, P, params, pots, x1):
    """(nonincreasing from k=1, lower bound, first-value bound) as booleans with details."""
    steps = np.diff(pots)
    tol = 1e-9 * (1 + np.abs(pots[:-1]))
    dec = bool(np.all(steps <= tol))
    lower = bool(np.all(pots >= problem.lower_bound))
    t = params.derived
    g0 = sqnorm(problem.gradients(np.zeros_like(x1)))
    bound1 = problem.value(x1) + (2 + t.c) / ((1 + 2 * t.c) * (t.m_bar + 2 * params.sigma_r)) * g0
    first = bool(pots[0] <= bound1)
    worst = float(np.max(steps - tol)) if len(steps) else -math.inf
    return dec, lower, first, worst, float(pots.min()), bound1 - float(pots[0])


def _lyapunov():
    out = []
    P, problems = _small_instances()
    lam = P.eigenvalues
    for pname, problem in problems.items():
        for sigma, eta in ((0.0, 0.0), (0.1, 0.1)):
            params = select_parameters(global_smoothness(problem), P.spectral[1], eta, sigma, sigma,
                                       eigenvalues=lam)
            trace, pots, x1 = theory_run(problem, P, params, 200, seed=1)
            dec, lower, first, worst, pmin, slack = potential_checks(problem, P, params, pots, x1)
            tag = f"{pname}_sigma{sigma}_eta{eta}"
            out.append(Check("lyapunov", f"decrease_{tag}", dec, f"worst excess {worst:.3g}"))
            out.append(Check("lyapunov", f"lower_bound_{tag}", lower, f"min potential {pmin:.6g}"))
            out.append(Check("lyapunov", f"first_value_{tag}", first, f"slack {slack:.3g}"))
            cert = rate_certificate(trace, params, problem, x1)
            out.append(Check("lyapunov", f"certificate_{tag}", cert.passed,
                             f"min margin {cert.margins.min():.3g}"))
    return out


# -- chebyshev --------------------------------------------------------------

def _chebyshev():
    out = []
    rng = np.random.default_rng(1)
    worst, worst_cons = 0.0, 0.0
    for t in range(100):
        n = int(rng.integers(4, 30))
        W = build_weight_matrix(generate_geometric_graph(n, 0.5, t))
        if W.kappa <= 1 + 1e-9:
            continue
        op = make_cheb_operator(W, int(rng.integers(1, 6)))
        mu, V = np.linalg.eigh(op.scaled.entries)
        dense = (V * poly_values(mu, op.c, op.tau, op.b_final)) @ V.T
        s = rng.standard_normal((n, 3))
        got, _ = cacc(s, op)
        worst = max(worst, _rel(got, dense @ s))
        cons, _ = cacc(np.ones((n, 3)), op)
        worst_cons = max(worst_cons, float(np.linalg.norm(cons)))
    out.append(Check("chebyshev", "cacc_vs_dense", worst <= 1e-8, f"max rel diff {worst:.3g}"))
    out.append(Check("chebyshev", "cacc_consensus", worst_cons <= 1e-12, f"max norm {worst_cons:.3g}"))

    worst = 0.0
    for kappa in (1.5, 3.0, 9.0, 30.0):
        for tau in range(1, 8):
            op_c = (kappa + 1) / (kappa - 1)
            b = [1.0, op_c]
            for _ in range(1, tau):
                b.append(2 * op_c * b[-1] - b[-2])
            worst = max(worst, abs(b[tau] / math.cosh(tau * math.acosh(op_c)) - 1))
    out.append(Check("chebyshev", "b_tau_closed_form", worst <= 1e-10, f"max rel diff {worst:.3g}"))

    fails, kmax = 0, 0.0
    for t in range(20):
        op = make_cheb_operator(build_weight_matrix(generate_geometric_graph(50, 0.3, 1000 + t)))
        k_l, bound, ok = verify_eigengap_bound(op)
        fails += not ok
        kmax = max(kmax, k_l)
    out.append(Check("chebyshev", "eigengap_bound", fails == 0, f"max kappa_L {kmax:.4f} vs {bound:.4f}"))
    return out


# -- gradients --------------------------------------------------------------

def fd_gradient_error(f, x, h=None) -> float:
    h = 1e-6 * (1 + np.linalg.norm(x)) if h is None else h
    g = f.gradient(x)
    fd = np.array([(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(len(x))])
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8))


def lipschitz_ratio(f, x, y) -> float:
    return float(np.linalg.norm(f.gradient(x) - f.gradient(y)) / (f.smoothness() * np.linalg.norm(x - y)))


def _gradients():
    out = []
    rng = np.random.default_rng(2)
    _, problems = _small_instances(n=4, d=4, seed=2)
    for pname, problem in problems.items():
        fd, lip = 0.0, 0.0
        for f in problem.locals:
            for _ in range(10):
                fd = max(fd, fd_gradient_error(f, rng.standard_normal(problem.dim)))
            for _ in range(100):
                x, y = 3 * rng.standard_normal((2, problem.dim))
                lip = max(lip, lipschitz_ratio(f, x, y))
        out.append(Check("gradients", f"finite_difference_{pname}", fd <= 1e-5, f"max rel err {fd:.3g}"))
        out.append(Check("gradients", f"lipschitz_{pname}", lip <= 1 + 1e-9, f"max ratio {lip:.4f}"))
        x = rng.standard_normal((problem.n_nodes, problem.dim))
        batch = problem.gradients(x)
        single = np.stack([f.gradient(xi) for f, xi in zip(problem.locals, x)])
        out.append(Check("gradients", f"batched_{pname}", _rel(batch, single) <= 1e-12,
                         f"rel diff {_rel(batch, single):.3g}"))
    return out


_SUITE_FUNCS = {"equivalence": _equivalence, "lyapunov": _lyapunov, "chebyshev": _chebyshev,
                "gradients": _gradients}
