"""Dual solver of the one-class SVM.

Solves  min 1/2 a'Qa  s.t.  0 <= a_i <= C,  sum(a) = 1,  with C = 1/(nu * l),
by pairwise (SMO) updates. The first index of each pair is the maximal violator,
the second is picked by second-order gain.
"""
import logging
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from cpsdetect.exceptions import ConvergenceException

logger = logging.getLogger(__name__)

TAU = 1e-12
DENSE_GRAM_LIMIT = 20_000


def rbf_gram(x: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(x, y, "sqeuclidean"))


class KernelRows:
    """Rows of Q, either precomputed or computed on demand behind an LRU cache"""

    def __init__(self, features: np.ndarray, gamma: float, cache_rows: int = 2048,
                 dense_limit: int = DENSE_GRAM_LIMIT):
        self.features = features
        self.gamma = gamma
        self.size = len(features)
        self.dense: Optional[np.ndarray] = None
        if self.size <= dense_limit:
            self.dense = rbf_gram(features, features, gamma)
            self.row: Callable[[int], np.ndarray] = self.dense.__getitem__
        else:
            self.row = lru_cache(maxsize=cache_rows)(self._compute_row)

    def _compute_row(self, i: int) -> np.ndarray:
        return rbf_gram(self.features[i:i + 1], self.features, self.gamma)[0]

    def diagonal(self) -> np.ndarray:
        # exp(0) for the RBF kernel
        return np.ones(self.size)


def recover_rho(alpha: np.ndarray, G: np.ndarray, C: float, rel_eps: float = 1e-12) -> float:
    """Mean gradient over free alphas, else the midpoint of the bound-induced interval"""
    up = alpha < C * (1.0 - rel_eps)
    low = alpha > C * rel_eps
    free = up & low
    if free.any():
        return float(G[free].mean())
    # Alphas at C bound rho from below, alphas at 0 from above
    lower = float(G[~up].max()) if (~up).any() else -np.inf
    upper = float(G[~low].min()) if (~low).any() else np.inf
    if np.isinf(lower):
        return upper
    if np.isinf(upper):
        return lower
    return (lower + upper) / 2.0


class OneClassSolver:
    def __init__(self, rows: KernelRows, nu: float, tol: float = 1e-6):
        size = rows.size
        self.rows = rows
        self.tol = tol
        self.C = 1.0 / (nu * size)
        self.QD = rows.diagonal()

        # floor(nu*l) alphas at the bound, one carrying the remainder
        self.alpha = np.zeros(size)
        at_bound = min(int(np.floor(nu * size)), size)
        self.alpha[:at_bound] = self.C
        if at_bound < size:
            self.alpha[at_bound] = max(0.0, 1.0 - at_bound * self.C)

        self.G = np.zeros(size)
        for t in np.flatnonzero(self.alpha):
            self.G += self.alpha[t] * self.rows.row(int(t))
        self.violation = np.inf

    def _bounds(self) -> tuple[np.ndarray, np.ndarray]:
        up = self.alpha < self.C * (1.0 - 1e-12)
        low = self.alpha > self.C * 1e-12
        return up, low

    def working_set_select(self) -> tuple[int, int]:
        """Return (i, j), or (-1, -1) once the KKT violation is below tol"""
        up, low = self._bounds()
        if not up.any() or not low.any():
            self.violation = 0.0
            return -1, -1
        neg_g = -self.G
        i = int(np.flatnonzero(up)[np.argmax(neg_g[up])])
        g_max = neg_g[i]
        g_min = float(np.min(neg_g[low]))
        self.violation = float(g_max - g_min)
        if self.violation < self.tol:
            return -1, -1

        q_i = self.rows.row(i)
        candidates = low & (neg_g < g_max)
        b = g_max - neg_g[candidates]
        a = self.QD[i] + self.QD[candidates] - 2.0 * q_i[candidates]
        a = np.where(a > 0, a, TAU)
        j = int(np.flatnonzero(candidates)[np.argmin(-(b * b) / a)])
        return i, j

    def update(self, i: int, j: int) -> None:
        q_i = self.rows.row(i)
        q_j = self.rows.row(j)
        quad = self.QD[i] + self.QD[j] - 2.0 * q_i[j]
        if quad <= 0:
            quad = TAU
        old_i, old_j = self.alpha[i], self.alpha[j]
        delta = (self.G[i] - self.G[j]) / quad
        total = old_i + old_j
        new_i = old_i - delta
        new_j = old_j + delta
        if new_i > self.C:
            new_i, new_j = self.C, total - self.C
        if new_j < 0.0:
            new_i, new_j = total, 0.0
        self.alpha[i], self.alpha[j] = new_i, new_j
        self.G += q_i * (new_i - old_i) + q_j * (new_j - old_j)

    def solve(self, max_iter: int) -> int:
        """Run pairwise updates to convergence; returns the iteration count"""
        for iteration in range(max_iter):
            i, j = self.working_set_select()
            if i < 0:
                return iteration
            self.update(i, j)
        self.working_set_select()
        if self.violation >= self.tol:
            raise ConvergenceException(f"solver did not converge in {max_iter} iterations", self.violation)
        return max_iter

    def calculate_rho(self) -> float:
        return recover_rho(self.alpha, self.G, self.C)

    def objective(self) -> float:
        return float(0.5 * self.alpha @ self.G)


def dense_qp_oracle(Q: np.ndarray, nu: float) -> tuple[np.ndarray, float]:
    """Solve the same dual with a dense SLSQP solve; returns (alphas, objective)"""
    size = len(Q)
    C = 1.0 / (nu * size)
    result = minimize(
        lambda a: 0.5 * a @ Q @ a,
        np.full(size, 1.0 / size),
        jac=lambda a: Q @ a,
        bounds=[(0.0, C)] * size,
        constraints=[{"type": "eq", "fun": lambda a: a.sum() - 1.0, "jac": lambda a: np.ones_like(a)}],
        method="SLSQP",
        options={"ftol": 1e-15, "maxiter": 1000},
    )
    alpha = np.clip(result.x, 0.0, C)
    return alpha, float(0.5 * alpha @ Q @ alpha)
