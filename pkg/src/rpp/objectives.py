"""
Per-node objective oracles and synthetic data.

Two problem families are provided: the nonconvex-regularized logistic
regression benchmark and a separable quadratic with a closed-form consensus
solution.  Node ``i`` owns ``f_i``; the network objective is
``f~(x) = sum_i f_i(x_i)`` over stacked iterates ``x`` of shape ``(n, d)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class Dataset:
    """Labels ``(n_nodes, m)`` in {-1, +1} and features ``(n_nodes, m, d)``."""

    labels: np.ndarray
    features: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.labels.shape != self.features.shape[:2]:
            raise ValueError("labels and features disagree on (n_nodes, m)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")

    @property
    def n_nodes(self):
        return self.features.shape[0]

    @property
    def m(self):
        return self.features.shape[1]

    @property
    def dim(self):
        return self.features.shape[2]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "label"] + [f"z_{t + 1}" for t in range(self.dim)])
            for i in range(self.n_nodes):
                for s in range(self.m):
                    w.writerow([i, int(self.labels[i, s])] + [repr(v) for v in self.features[i, s].tolist()])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        nodes = np.array([int(r[0]) for r in rows])
        n_nodes = nodes.max() + 1
        m = len(rows) // n_nodes
        labels = np.array([float(r[1]) for r in rows]).reshape(n_nodes, m)
        feats = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(n_nodes, m, -1)
        return cls(labels=labels, features=feats)


def generate_classification_data(n_nodes: int, m: int, d: int, seed: int) -> Dataset:
    """Planted-separator binary classification data, ``m`` samples per node.

    A hidden unit vector ``w*`` is drawn once; features are standard normal
    and labels are ``sign(z^T w* + 0.1 * noise)`` with ``sign(0) = +1``.
    """
    if min(n_nodes, m, d) < 1:
        raise ValueError("n_nodes, m and d must all be >= 1")
    rng = np.random.default_rng(seed)
    w_star = rng.standard_normal(d)
    w_star /= np.linalg.norm(w_star)
    Z = rng.standard_normal((n_nodes, m, d))
    noise = rng.standard_normal((n_nodes, m))
    y = np.where(Z @ w_star + 0.1 * noise >= 0.0, 1.0, -1.0)
    return Dataset(labels=y, features=Z, seed=seed)


class LogisticLocal:
    """``(1/m) sum_s log(1 + exp(-y_s x^T z_s)) + sum_t lam*mu*x_t^2 / (1 + mu*x_t^2)``."""

    def __init__(self, z, y, lam, mu):
        self.z = np.asarray(z, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.lam = float(lam)
        self.mu = float(mu)
        self._yz = self.y[:, None] * self.z
        self.dim = self.z.shape[1]
        self._M = float(np.sum(self.z * self.z)) / (4 * len(self.y)) + 2 * self.lam * self.mu

    def value(self, x):
        u = self._yz @ x
        reg = self.lam * self.mu * x * x / (1 + self.mu * x * x)
        return float(np.mean(np.logaddexp(0.0, -u)) + reg.sum())

    def gradient(self, x):
        u = self._yz @ x
        g = -(expit(-u) @ self._yz) / len(self.y)
        return g + 2 * self.lam * self.mu * x / (1 + self.mu * x * x) ** 2

    def smoothness(self):
        return self._M


class QuadraticLocal:
    """``0.5 * ||x - a||^2``."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)
        self.dim = self.a.shape[0]

    def value(self, x):
        r = x - self.a
        return 0.5 * float(r @ r)

    def gradient(self, x):
        return x - self.a

    def smoothness(self):
        return 1.0


@dataclass
class ProblemInstance:
    """Per-node oracles plus a known lower bound on ``sum_i f_i``.

    `lower_bound` is ``-inf`` when no bound is known.
    """

    locals: list
    lower_bound: float = -np.inf
    name: str = "custom"
    minimizer: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.locals)

    @property
    def dim(self) -> int:
        return self.locals[0].dim

    def __post_init__(self):
        if not self.locals:
            raise ValueError("problem needs at least one node")
        if len({f.dim for f in self.locals}) != 1:
            raise ValueError("all local objectives must share one dimension")

    def value(self, x) -> float:
        """``f~(x)`` for stacked iterates ``x`` of shape ``(n, d)``."""
        return float(sum(f.value(xi) for f, xi in zip(self.locals, x)))

    def gradients(self, x) -> np.ndarray:
        """Stacked per-node gradients, shape ``(n, d)``."""
        return np.stack([f.gradient(xi) for f, xi in zip(self.locals, x)])

    def smoothness(self) -> np.ndarray:
        return np.array([f.smoothness() for f in self.locals])


class LogisticProblem(ProblemInstance):
    """Logistic instance with node-batched value and gradient evaluation.

    Margins of the most recent read-only input are cached, so evaluating
    the value and gradient of one (frozen) iterate costs one contraction.
    """

    def __post_init__(self):
        super().__post_init__()
        self._yz = np.stack([f._yz for f in self.locals])
        self._lam, self._mu = self.locals[0].lam, self.locals[0].mu
        self._memo = (None, None, None)

    def _margins(self, x):
        if x is self._memo[0]:
            return self._memo[1], self._memo
        u = np.einsum("nmd,nd->nm", self._yz, x)
        if isinstance(x, np.ndarray) and not x.flags.writeable:
            self._memo = (x, u, None)
        return u, None

    def value(self, x) -> float:
        u, _ = self._margins(x)
        reg = self._lam * self._mu * x * x / (1 + self._mu * x * x)
        return float(np.mean(np.logaddexp(0.0, -u), axis=1).sum() + reg.sum())

    def gradients(self, x) -> np.ndarray:
        u, memo = self._margins(x)
        if memo is not None and memo[2] is not None:
            return memo[2]
        g = -np.einsum("nm,nmd->nd", expit(-u), self._yz) / self._yz.shape[1]
        g = g + 2 * self._lam * self._mu * x / (1 + self._mu * x * x) ** 2
        if x is self._memo[0]:
            g.setflags(write=False)
            self._memo = (x, u, g)
        return g


def logistic_nonconvex_problem(data: Dataset, lam: float = 0.001, mu: float = 1.0) -> ProblemInstance:
    """Logistic loss with the nonconvex ``lam*mu*t^2 / (1 + mu*t^2)`` regularizer.

    Both terms are nonnegative, so the lower bound is 0.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if mu <= 0:
        raise ValueError("mu must be positive")
    locs = [LogisticLocal(data.features[i], data.labels[i], lam, mu) for i in range(data.n_nodes)]
    return LogisticProblem(locs, lower_bound=0.0, name="logistic_nonconvex")


def quadratic_problem(n_nodes: int, d: int, seed: int, centers=None) -> ProblemInstance:
    """``f_i(x) = 0.5 ||x - a_i||^2`` with standard normal ``a_i`` (or given `centers`).

    The consensus minimizer is the mean of the ``a_i`` and the optimal value
    ``0.5 * sum_i ||a_i - mean||^2`` is the lower bound.
    """
    if n_nodes < 1 or d < 1:
        raise ValueError("n_nodes and d must be >= 1")
    if centers is None:
        centers = np.random.default_rng(seed).standard_normal((n_nodes, d))
    A = np.asarray(centers, dtype=float)
    mean = A.mean(axis=0)
    f_star = 0.5 * float(np.sum((A - mean) ** 2))
    return ProblemInstance([QuadraticLocal(a) for a in A], lower_bound=f_star,
                           name="quadratic", minimizer=mean)


def global_smoothness(p: ProblemInstance) -> float:
    return float(p.smoothness().max())
