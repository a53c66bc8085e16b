"""
Robust proximal primal-dual iteration with perturbed message exchange.

Per iteration every node ``i`` sends two obfuscated vectors::

    y_i = x_i + d_i + e_i
    z_i = grad f_i(x_i) + rho * sum_j p_ij y_j + r_i
    x_i <- x_i - alpha * z_i + beta * sum_j p_ij z_j
    dhat_i <- dhat_i + x_i
    d_i <- dhat_i + eta * (dhat_i_new - dhat_i_old)

which is the distributed form of
``x+ = x - G (grad f~(x) + r + rho L (x + d + e))`` with
``G = alpha I - beta L``.  The proximal matrix of the underlying primal
update is ``B = G^{-1} - rho L``.

Stacked per-node vectors are arrays of shape ``(n, d)``; a network operator
``L`` is ``P kron I_d`` for an ``n x n`` matrix ``P``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .graphs import WeightMatrix, apply_weight
from .objectives import ProblemInstance

VARIANTS = ("rpp", "rpp_ca", "dgd_baseline")
CHANNEL_E, CHANNEL_R = 0, 1
SLACK = 1e-3


class ParameterError(ValueError):
    """Parameters violate a precondition or a convergence condition."""


class DivergenceError(FloatingPointError):
    """A node vector became non-finite."""

    def __init__(self, k, node, field_name):
        super().__init__(f"non-finite {field_name} at node {node}, iteration {k}")
        self.k, self.node, self.field_name = k, node, field_name


def operator_matrix(op) -> np.ndarray:
    """Dense ``n x n`` matrix of a weight matrix or Chebyshev operator."""
    return np.asarray(op.matrix if hasattr(op, "matrix") else op, dtype=float)


def _rowsq(a) -> np.ndarray:
    return np.einsum("ij,ij->i", a, a)


def sqnorm(v) -> float:
    v = np.ravel(v)
    return float(v @ v)


def quad(A, v) -> float:
    """``||v||^2_{A kron I}`` for stacked ``v`` of shape ``(n, d)``."""
    return float(np.sum(v * (A @ v)))


# -- state and parameters ---------------------------------------------------

@dataclass(frozen=True)
class NetworkState:
    """Complete algorithm state at iteration ``k``.

    ``e`` and ``r`` are the perturbations applied in the step that produced
    this state (zero at ``k = 0``).
    """

    k: int
    x: np.ndarray
    x_prev: np.ndarray
    d_hat: np.ndarray
    d: np.ndarray
    e: np.ndarray
    r: np.ndarray
    comm_rounds: int = 0

    @classmethod
    def zeros(cls, n: int, dim: int) -> "NetworkState":
        z = np.zeros((n, dim))
        z.setflags(write=False)
        return cls(0, z, z, z, z, z, z, 0)

    def to_csv(self, path) -> None:
        """Flat snapshot: one row per (node, field) with the vector coordinates."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", self.k, "comm_rounds", self.comm_rounds])
            for name in ("x", "x_prev", "d_hat", "d", "e", "r"):
                arr = getattr(self, name)
                for i, row in enumerate(arr):
                    w.writerow([i, name] + [format(v, ".17g") for v in row])


@dataclass(frozen=True)
class TheoryConstants:
    """Constants of the Lyapunov analysis for a concrete parameter set."""

    m_bar: float
    lambda_min: float
    delta: float
    c: float
    d1: float
    d2: float
    d3: float
    d4: float
    d5: float
    d6: float
    xi1: float
    kappa: float
    lambda_b_min: float
    lambda_b_max: float
    margins: dict = field(default_factory=dict)

    @property
    def conditions_hold(self) -> bool:
        return all(v >= 0 for v in self.margins.values())


@dataclass(frozen=True)
class AlgoParams:
    variant: str
    rho: float
    alpha: float
    beta: float
    eta: float = 0.0
    sigma_e: float = 0.0
    sigma_r: float = 0.0
    tau: int | None = None
    derived: TheoryConstants | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}")
        if self.variant == "dgd_baseline":
            if self.alpha < 0:
                raise ParameterError("stepsize must be nonnegative")
            return
        if not self.rho > 0:
            raise ParameterError("rho must be positive")
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")
        # lambda_max(L) = 1, so G = alpha I - beta L > 0 iff beta < alpha
        if not 0 < self.beta < self.alpha:
            raise ParameterError("need 0 < beta < alpha / lambda_max(L) = alpha")
        if self.sigma_e < 0 or self.sigma_r < 0:
            raise ParameterError("noise magnitudes must be nonnegative")
        if self.variant == "rpp_ca" and self.tau is not None and self.tau < 1:
            raise ParameterError("tau must be >= 1")

    def b_eigenvalues(self, lam_L) -> np.ndarray:
        return b_eigenvalues(self.alpha, self.beta, self.rho, lam_L)

    def check_matrices(self, lam_L) -> None:
        """Raise unless ``G`` and ``B`` are positive definite on the given spectrum."""
        lam_L = np.asarray(lam_L)
        if np.any(self.alpha - self.beta * lam_L <= 0):
            raise ParameterError("G = alpha I - beta L is not positive definite")
        if np.any(self.b_eigenvalues(lam_L) <= 0):
            raise ParameterError("B = G^{-1} - rho L is not positive definite")


def b_eigenvalues(alpha, beta, rho, lam_L) -> np.ndarray:
    """Eigenvalues ``1/(alpha - beta*lam) - rho*lam`` of ``B`` over the spectrum of ``L``."""
    lam_L = np.asarray(lam_L, dtype=float)
    return 1.0 / (alpha - beta * lam_L) - rho * lam_L


def _b_extremes(alpha, beta, rho, lambda_min, eigenvalues):
    if eigenvalues is not None:
        lb = b_eigenvalues(alpha, beta, rho, eigenvalues)
        return float(lb.min()), float(lb.max())
    # B(lam) is convex on [0, 1]; bound it over {0} u [lambda_min, 1]
    pts = [0.0, lambda_min, 1.0]
    if rho > 0 and beta > 0:
        crit = (alpha - math.sqrt(beta / rho)) / beta
        if lambda_min < crit < 1.0:
            pts.append(crit)
    lb = b_eigenvalues(alpha, beta, rho, pts)
    return float(lb.min()), float(lb.max())


def condition_margins(eta, sigma_e, sigma_r, m_bar, lambda_min, c, d1, d2, kappa, lambda_b_min):
    """Slack of the three sufficient conditions for monotone potential decrease.

    ``noise``:     1/2 - (|eta| + 2 sigma_e)          (must be > 0)
    ``eigengap``:  c d2 / lambda_min - kappa          (must be >= 0)
    ``proximal``:  lB/2 - (1+2c)(M+2 sr)/2 - 5 d1 c / (12 lB), lB = lambda_min(B)
    """
    if lambda_b_min > 0:
        proximal = (0.5 * lambda_b_min - (1 + 2 * c) * (m_bar + 2 * sigma_r) / 2
                    - 5 * d1 * c / (12 * lambda_b_min))
    else:
        proximal = -math.inf
    return {
        "noise": 0.5 - (abs(eta) + 2 * sigma_e),
        "eigengap": c * d2 / lambda_min - kappa,
        "proximal": proximal,
    }


def _c_chain(lambda_min, eta, delta):
    d2 = lambda_min / (6 * (2 + max(eta, 0.0)))
    c = (1 + SLACK) * 20 * delta**2 / (3 * d2**2)
    return d2, c


def theory_constants(rho, alpha, beta, eta, sigma_e, sigma_r, m_bar, lambda_min,
                     delta=2.0, eigenvalues=None) -> TheoryConstants:
    """Analysis constants for arbitrary (possibly hand-tuned) parameters.

    ``c`` follows the same rule as :func:`select_parameters`; ``kappa`` and
    the B-eigenvalues come from the actual ``(rho, alpha, beta)``.
    """
    d2, c = _c_chain(lambda_min, eta, delta)
    d3 = (d2 * c + 1) ** 2 / delta**2 - 20 * c / 3
    d4 = 2 * (c * d2 + 1) * (1 + 2 * c) * (m_bar + 2 * sigma_r) / delta
    d5 = 10 * c * m_bar**2 / 3
    d1 = m_bar**2 + rho**2 * (eta**2 + sigma_e**2) + sigma_r**2
    d6 = (1 + 2 * c) * (m_bar + 2 * sigma_r)
    xi1 = 0.5 * (d6 + math.sqrt(d6**2 + 8 * d1 * c / 3))
    lb_min, lb_max = _b_extremes(alpha, beta, rho, lambda_min, eigenvalues)
    kappa = lb_max / (rho * lambda_min)
    margins = condition_margins(eta, sigma_e, sigma_r, m_bar, lambda_min, c, d1, d2, kappa, lb_min)
    return TheoryConstants(m_bar=m_bar, lambda_min=lambda_min, delta=delta, c=c, d1=d1, d2=d2,
                           d3=d3, d4=d4, d5=d5, d6=d6, xi1=xi1, kappa=kappa,
                           lambda_b_min=lb_min, lambda_b_max=lb_max, margins=margins)


def select_parameters(m_bar, lambda_min, eta=0.0, sigma_e=0.0, sigma_r=0.0, delta=2.0, *,
                      eigenvalues=None, variant="rpp", tau=None) -> AlgoParams:
    """Parameters that provably make the potential function nonincreasing.

    The chain is evaluated in order: ``d2``, ``c`` (1e-3 multiplicative
    slack over its lower bound), ``d3..d5``, ``rho`` (same slack), ``d1``,
    ``d6``, ``xi1``; then ``1/alpha = sqrt(delta) * xi1`` (geometric
    midpoint of ``(xi1, delta*xi1)``) and ``beta = alpha/2``.  The three
    sufficient conditions are re-checked numerically on the spectrum of
    ``B`` (the exact spectrum if `eigenvalues` of ``L`` are given,
    otherwise a convex bound over ``{0} u [lambda_min, 1]``).

    Raises
    ------
    ParameterError
        On a precondition violation or if a post-condition fails; the
        message names the condition and its (negative) margin.
    """
    if not abs(eta) < 0.5:
        raise ParameterError(f"|eta| = {abs(eta)} must be < 1/2")
    if not 0 <= sigma_e < 0.25 - abs(eta) / 2:
        raise ParameterError(f"sigma_e = {sigma_e} must lie in [0, 1/4 - |eta|/2)")
    if sigma_r < 0:
        raise ParameterError("sigma_r must be nonnegative")
    if not delta > 1:
        raise ParameterError("delta must exceed 1")
    if not (m_bar > 0 and lambda_min > 0):
        raise ParameterError("smoothness and lambda_min must be positive")

    d2, c = _c_chain(lambda_min, eta, delta)
    d3 = (d2 * c + 1) ** 2 / delta**2 - 20 * c / 3
    if not d3 > 0:
        raise ParameterError(f"d3 = {d3} is not positive")
    d4 = 2 * (c * d2 + 1) * (1 + 2 * c) * (m_bar + 2 * sigma_r) / delta
    d5 = 10 * c * m_bar**2 / 3
    rho = (1 + SLACK) * (d4 + math.sqrt(d4**2 + 4 * d3 * d5)) / (2 * d3)
    d1 = m_bar**2 + rho**2 * (eta**2 + sigma_e**2) + sigma_r**2
    d6 = (1 + 2 * c) * (m_bar + 2 * sigma_r)
    xi1 = 0.5 * (d6 + math.sqrt(d6**2 + 8 * d1 * c / 3))
    alpha = 1.0 / (math.sqrt(delta) * xi1)
    beta = alpha / 2

    lb_min, lb_max = _b_extremes(alpha, beta, rho, lambda_min, eigenvalues)
    kappa = lb_max / (rho * lambda_min)
    margins = condition_margins(eta, sigma_e, sigma_r, m_bar, lambda_min, c, d1, d2, kappa, lb_min)
    failed = {k: v for k, v in margins.items() if not (v > 0 if k == "noise" else v >= 0)}
    if failed:
        raise ParameterError("convergence conditions violated: "
                             + ", ".join(f"{k} margin {v:.6g}" for k, v in failed.items()))
    consts = TheoryConstants(m_bar=m_bar, lambda_min=lambda_min, delta=delta, c=c, d1=d1,
                             d2=d2, d3=d3, d4=d4, d5=d5, d6=d6, xi1=xi1, kappa=kappa,
                             lambda_b_min=lb_min, lambda_b_max=lb_max, margins=margins)
    return AlgoParams(variant=variant, rho=rho, alpha=alpha, beta=beta, eta=eta,
                      sigma_e=sigma_e, sigma_r=sigma_r, tau=tau, derived=consts)


# -- perturbations ----------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Perturbation magnitudes and the root seed of the per-node substreams.

    Substream for (node ``i``, iteration ``k``, channel ``ch``; e = 0, r = 1)
    is ``Philox(key=[seed, 2*i + ch], counter=[0, 0, 0, k])``.  Each draw
    consumes ``d`` standard normals (the direction) then one uniform (the
    radius fraction), in that order.
    """

    sigma_e: float = 0.0
    sigma_r: float = 0.0
    mode: str = "none"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("none", "spherical_capped"):
            raise ValueError(f"unknown noise mode {self.mode!r}")
        if self.mode == "none" and (self.sigma_e or self.sigma_r):
            raise ValueError("mode 'none' requires sigma_e = sigma_r = 0")
        if self.sigma_e < 0 or self.sigma_r < 0:
            raise ValueError("noise magnitudes must be nonnegative")

    @classmethod
    def for_params(cls, params: AlgoParams, seed: int = 0) -> "NoiseSpec":
        if params.sigma_e == 0 and params.sigma_r == 0:
            return cls(seed=seed)
        return cls(params.sigma_e, params.sigma_r, "spherical_capped", seed)

    def rng(self, node: int, k: int, channel: int) -> np.random.Generator:
        return noise_rng(self.seed, node, k, channel)

    def _stream(self, node: int, k: int, channel: int) -> np.random.Generator:
        # same substream as rng(), reusing one bit generator per process
        bg, gen = _SHARED_PHILOX
        st = bg.state
        st["state"]["key"][:] = (self.seed, 2 * node + channel)
        st["state"]["counter"][:] = (0, 0, 0, k)
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        bg.state = st
        return gen


def noise_rng(seed: int, node: int, k: int, channel: int) -> np.random.Generator:
    key = np.array([seed, 2 * node + channel], dtype=np.uint64)
    counter = np.array([0, 0, 0, k], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


_bg = np.random.Philox(key=0)
_SHARED_PHILOX = (_bg, np.random.Generator(_bg))


def generate_perturbation(delta_x, prev, sigma, rng) -> np.ndarray:
    """Random vector with ``||out||^2 <= sigma^2 ||delta_x||^2`` exactly.

    Draws a uniform direction ``u`` and a uniform fraction ``v`` in [0, 1],
    returns ``sigma * ||delta_x|| * v * u`` clipped to the cap.  `prev` (the
    node's previous perturbation) is not used to shape the draw; the bound
    on ``||out - prev||`` is only monitored, see :class:`PerturbationMonitor`.
    """
    delta_x = np.asarray(delta_x, dtype=float)
    d = delta_x.shape[0]
    u = rng.standard_normal(d)
    v = rng.random()
    rhs = sigma * sigma * sqnorm(delta_x)
    if rhs == 0.0:
        return np.zeros(d)
    nu = math.sqrt(sqnorm(u))
    if nu == 0.0:
        return np.zeros(d)
    out = (math.sqrt(rhs) * v / nu) * u
    # keep a 1e-12 relative margin so any summation order sees the bound hold
    cap = rhs * (1.0 - 1e-12)
    while sqnorm(out) > cap:
        out *= 1.0 - 1e-12
    return out


def _draw(noise: NoiseSpec, dx: np.ndarray, prev: np.ndarray, sigma: float, k: int, channel: int):
    if noise.mode == "none" or sigma == 0:
        return np.zeros_like(dx)
    return np.stack([generate_perturbation(dx[i], prev[i], sigma, noise._stream(i, k, channel))
                     for i in range(dx.shape[0])])


class PerturbationMonitor:
    """Counts per-node violations of the four perturbation bounds.

    For ``k >= 1`` and every node, with ``D = ||x^k - x^{k-1}||^2``:
    ``e_norm``: ``||e^k||^2 <= se^2 D``; ``e_diff``: ``||e^k - e^{k-1}||^2 <= se^2 D``;
    ``r_norm`` and ``r_diff`` likewise with ``sr``.
    """

    KEYS = ("e_norm", "e_diff", "r_norm", "r_diff")

    def __init__(self, sigma_e, sigma_r):
        self.sigma_e, self.sigma_r = sigma_e, sigma_r
        self.counts = dict.fromkeys(self.KEYS, 0)
        self.max_ratio = dict.fromkeys(self.KEYS, 0.0)
        self.checks = 0
        self.iterations = 0
        self.iterations_with_diff_violation = 0

    def update(self, e, e_prev, r, r_prev, x, x_prev) -> int:
        """Check one iteration; returns the number of violations found."""
        D = _rowsq(x - x_prev)
        se2, sr2 = self.sigma_e * self.sigma_e, self.sigma_r * self.sigma_r
        tests = (
            ("e_norm", _rowsq(e), se2 * D),
            ("e_diff", _rowsq(e - e_prev), se2 * D),
            ("r_norm", _rowsq(r), sr2 * D),
            ("r_diff", _rowsq(r - r_prev), sr2 * D),
        )
        found = 0
        diff_hit = False
        for key, lhs, rhs in tests:
            bad = lhs > rhs
            nbad = int(bad.sum())
            if nbad:
                self.counts[key] += nbad
                found += nbad
                diff_hit |= key.endswith("diff")
                ratio = np.divide(lhs[bad], rhs[bad], out=np.full(nbad, np.inf), where=rhs[bad] > 0)
                self.max_ratio[key] = max(self.max_ratio[key], float(ratio.max()))
        self.checks += x.shape[0]
        self.iterations += 1
        self.iterations_with_diff_violation += diff_hit
        return found

    def report(self) -> dict:
        diff = self.counts["e_diff"] + self.counts["r_diff"]
        return {
            "counts": dict(self.counts),
            "max_ratio": dict(self.max_ratio),
            "node_checks": self.checks,
            "iterations": self.iterations,
            "diff_violation_rate": diff / (2 * self.checks) if self.checks else 0.0,
            "iteration_diff_violation_rate": (self.iterations_with_diff_violation / self.iterations
                                              if self.iterations else 0.0),
        }


def check_perturbation_bounds(trace, sigma_e, sigma_r) -> dict:
    """Evaluate the perturbation bounds over ``[(e^k, r^k, x^k), ...]``, k = 0, 1, ...

    The first entry must be the initial state (its x serves as ``x^{k-1}``
    for k = 1).
    """
    if len(trace) < 2:
        raise ValueError("trace needs at least two entries")
    mon = PerturbationMonitor(sigma_e, sigma_r)
    for (e0, r0, x0), (e1, r1, x1) in zip(trace, trace[1:]):
        mon.update(np.asarray(e1), np.asarray(e0), np.asarray(r1), np.asarray(r0),
                   np.asarray(x1), np.asarray(x0))
    return mon.report()


# -- iterations -------------------------------------------------------------

def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _check_finite(k, **arrays):
    for name, arr in arrays.items():
        bad = ~np.all(np.isfinite(arr), axis=1)
        if bad.any():
            raise DivergenceError(k, int(np.flatnonzero(bad)[0]), name)


def primal_dual_step(state: NetworkState, params: AlgoParams, mix, rounds_per_mix: int,
                     problem: ProblemInstance, noise: NoiseSpec) -> NetworkState:
    """One iteration with a generic neighbor operator ``mix(s) -> L s``."""
    k = state.k
    dx = state.x - state.x_prev
    e = _draw(noise, dx, state.e, noise.sigma_e, k, CHANNEL_E)
    y = state.x + state.d + e
    Ly = mix(y)
    r = _draw(noise, dx, state.r, noise.sigma_r, k, CHANNEL_R)
    z = problem.gradients(state.x) + params.rho * Ly + r
    Lz = mix(z)
    x_new = state.x - params.alpha * z + params.beta * Lz
    d_hat = state.d_hat + x_new
    d = d_hat + params.eta * (d_hat - state.d_hat)
    _check_finite(k + 1, x=x_new, d_hat=d_hat, d=d)
    _freeze(x_new, d_hat, d, e, r)
    return NetworkState(k + 1, x_new, state.x, d_hat, d, e, r,
                        state.comm_rounds + 2 * rounds_per_mix)


def rpp_step(state: NetworkState, params: AlgoParams, P: WeightMatrix,
             problem: ProblemInstance, noise: NoiseSpec) -> NetworkState:
    """One RPP iteration using single-hop neighbor sums; adds 2 rounds."""
    if params.variant != "rpp":
        raise ParameterError("rpp_step requires variant 'rpp'")
    return primal_dual_step(state, params, lambda s: apply_weight(P, s), 1, problem, noise)


def centralized_step(state: NetworkState, params: AlgoParams, L, problem: ProblemInstance,
                     e, r) -> NetworkState:
    """Matrix-form iteration with explicit ``L kron I_d`` and given noise.

    Reference path for checking the distributed updates; `L` is a weight
    matrix, a Chebyshev operator or a plain ``n x n`` array.
    """
    n, dim = state.x.shape
    Lk = np.kron(operator_matrix(L), np.eye(dim))
    G = params.alpha * np.eye(n * dim) - params.beta * Lk
    x, d = state.x.ravel(), state.d.ravel()
    e, r = np.asarray(e).ravel(), np.asarray(r).ravel()
    grad = problem.gradients(state.x).ravel()
    x_new = x - G @ (grad + r + params.rho * Lk @ (x + d + e))
    x_new = x_new.reshape(n, dim)
    d_hat = state.d_hat + x_new
    d_new = d_hat + params.eta * (d_hat - state.d_hat)
    _check_finite(state.k + 1, x=x_new, d_hat=d_hat, d=d_new)
    return NetworkState(state.k + 1, x_new, state.x, d_hat, d_new, e.reshape(n, dim),
                        r.reshape(n, dim), state.comm_rounds)


def dgd_baseline_step(state: NetworkState, stepsize: float, P: WeightMatrix,
                      problem: ProblemInstance) -> NetworkState:
    """Distributed gradient descent ``x <- (I - P) x - stepsize * grad``; 1 round."""
    x_new = state.x - apply_weight(P, state.x) - stepsize * problem.gradients(state.x)
    _check_finite(state.k + 1, x=x_new)
    _freeze(x_new)
    return replace(state, k=state.k + 1, x=x_new, x_prev=state.x,
                   comm_rounds=state.comm_rounds + 1)


# -- merit functions --------------------------------------------------------

def augmented_lagrangian(state: NetworkState, params: AlgoParams, L, problem: ProblemInstance) -> float:
    """``f~(x) + <x, rho L d> + (rho/2) ||x||^2_L`` at the state."""
    A = operator_matrix(L)
    x, d = state.x, state.d
    return problem.value(x) + params.rho * float(np.sum(x * (A @ d))) + 0.5 * params.rho * quad(A, x)


class Lyapunov:
    """Potential function for a fixed parameter set and network operator.

    ``P(x1, x0, d1) = AL(x1, d1) + ||x1 - x0||^2_W1
    + (c/2) (rho ||x1||^2_L + ||x1 - x0||^2_W2) - (eta rho / 2) ||x1||^2_L``
    with ``W1 = (5/2)(2 + eta) d1 kappa B^{-1} + (sigma_r I + sigma_e rho L)/2``
    and ``W2 = B + (M + sigma_r) I + (|eta| + sigma_e) rho L``.
    """

    def __init__(self, params: AlgoParams, L, problem: ProblemInstance):
        if params.derived is None:
            raise ParameterError("potential needs the derived analysis constants")
        self.params, self.problem = params, problem
        t = params.derived
        A = operator_matrix(L)
        n = A.shape[0]
        I = np.eye(n)
        G = params.alpha * I - params.beta * A
        B = np.linalg.inv(G) - params.rho * A
        B = 0.5 * (B + B.T)
        Binv = scipy.linalg.solve(B, I, assume_a="pos")
        Binv = 0.5 * (Binv + Binv.T)
        eta, rho = params.eta, params.rho
        self.L, self.B, self.Binv = A, B, Binv
        self.W1 = 2.5 * (2 + eta) * t.d1 * t.kappa * Binv + 0.5 * (params.sigma_r * I + params.sigma_e * rho * A)
        self.W2 = B + (t.m_bar + params.sigma_r) * I + (abs(eta) + params.sigma_e) * rho * A
        self.c = t.c

    def __call__(self, x1, x0, d1) -> float:
        p = self.params
        dx = x1 - x0
        xl = quad(self.L, x1)
        # L kills the consensus part of d, which grows with k; drop it before the product
        d1 = d1 - d1.mean(axis=0)
        al = self.problem.value(x1) + p.rho * float(np.sum(x1 * (self.L @ d1))) + 0.5 * p.rho * xl
        return (al + quad(self.W1, dx) + 0.5 * self.c * (p.rho * xl + quad(self.W2, dx))
                - 0.5 * p.eta * p.rho * xl)

    def of_state(self, state: NetworkState) -> float:
        return self(state.x, state.x_prev, state.d)


def potential(state_pair, params: AlgoParams, L, problem: ProblemInstance) -> float:
    """Potential value for ``(x^{k+1}, x^k, d^{k+1})``."""
    x1, x0, d1 = state_pair
    return Lyapunov(params, L, problem)(np.asarray(x1), np.asarray(x0), np.asarray(d1))


def first_order_residual(before: NetworkState, after: NetworkState, params: AlgoParams, L,
                         problem: ProblemInstance) -> np.ndarray:
    """``grad f~(x^k) + r^k + rho L (dhat^{k+1} + eta x^k + e^k) + B (x^{k+1} - x^k)``.

    Vanishes identically along exact iterations; `after` carries ``e^k, r^k``.
    """
    A = operator_matrix(L)
    n = A.shape[0]
    G = params.alpha * np.eye(n) - params.beta * A
    B = np.linalg.inv(G) - params.rho * A
    return (problem.gradients(before.x) + after.r
            + params.rho * A @ (after.d_hat + params.eta * before.x + after.e)
            + B @ (after.x - before.x))
