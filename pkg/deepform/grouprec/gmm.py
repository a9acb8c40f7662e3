"""
Gaussian mixture with diagonal covariances fitted by EM.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.special import logsumexp

from deepform.cluster.cluster_engine import ClusterEngine
from deepform.errors import NumericError, UsageError

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GMMResult:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float
    n_iter: int
    converged: bool
    history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.weights)


class DiagonalGMM:
    """
    EM for a K-component mixture with per-dimension variances.

    Means start at k-means++ seeds, variances at the per-dimension data
    variance and weights uniform. Variances never drop below ``var_floor``.
    A non-finite log-likelihood restarts the fit with a fresh seed.
    """

    def __init__(self, k: int, max_iter: int = 100, tol: float = 1e-8, var_floor: float = 1e-6,
                 max_restarts: int = 3, seed: int = 0):
        if k < 1:
            raise UsageError(f"number of components must be >= 1, got {k}")
        self.k = k
        self.max_iter = max_iter
        self.tol = tol
        self.var_floor = var_floor
        self.max_restarts = max_restarts
        self.seed = seed
        self.result: GMMResult | None = None

    @staticmethod
    def log_densities(points: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
        """log N(x | mean_c, diag(var_c)) for every point and component."""
        precision = 1.0 / variances
        quad = ((points ** 2) @ precision.T
                - 2.0 * points @ (means * precision).T
                + np.sum(means ** 2 * precision, axis=1))
        log_det = np.sum(np.log(variances), axis=1)
        return -0.5 * (points.shape[1] * LOG_2PI + log_det + quad)

    def _e_step(self, points: np.ndarray, weights: np.ndarray, means: np.ndarray,
                variances: np.ndarray) -> tuple[np.ndarray, float]:
        with np.errstate(divide="ignore"):
            joint = np.log(weights) + self.log_densities(points, means, variances)
        norm = logsumexp(joint, axis=1)
        return np.exp(joint - norm[:, None]), float(norm.sum())

    def _m_step(self, points: np.ndarray, resp: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        mass = resp.sum(axis=0)
        safe = np.maximum(mass, np.finfo(float).tiny)
        means = (resp.T @ points) / safe[:, None]
        second = (resp.T @ points ** 2) / safe[:, None]
        variances = np.maximum(second - means ** 2, self.var_floor)
        return mass / points.shape[0], means, variances

    def _fit_once(self, points: np.ndarray, rng: np.random.Generator) -> GMMResult:
        n, dim = points.shape
        means = points[ClusterEngine.kmeans_plusplus(points, self.k, rng)].copy()
        variances = np.tile(np.maximum(points.var(axis=0), self.var_floor), (self.k, 1))
        weights = np.full(self.k, 1.0 / self.k)

        history: list[float] = []
        converged = False
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            resp, log_likelihood = self._e_step(points, weights, means, variances)
            if not np.isfinite(log_likelihood):
                raise FloatingPointError(f"non-finite log-likelihood at iteration {n_iter}")
            history.append(log_likelihood)
            if len(history) > 1 and abs(history[-1] - history[-2]) <= self.tol * max(1.0, abs(history[-2])):
                converged = True
                break
            weights, means, variances = self._m_step(points, resp)
            logger.debug(f"EM iteration {n_iter}: log-likelihood {log_likelihood:.6f}")

        return GMMResult(weights=weights, means=means, variances=variances,
                         log_likelihood=history[-1], n_iter=n_iter, converged=converged, history=history)

    def fit(self, points: np.ndarray) -> GMMResult:
        """
        Raises:
            UsageError: If there are fewer points than components
            NumericError: If every restart produced a non-finite likelihood
        """
        points = np.asarray(points, dtype=np.float64)
        if points.shape[0] < self.k:
            raise UsageError(f"need at least {self.k} points, got {points.shape[0]}")
        for attempt in range(self.max_restarts + 1):
            rng = np.random.default_rng(self.seed + attempt)
            try:
                self.result = self._fit_once(points, rng)
                return self.result
            except FloatingPointError as e:
                logger.warning(f"GMM attempt {attempt + 1} failed ({e}); restarting with a new seed")
        raise NumericError(f"GMM log-likelihood stayed non-finite after {self.max_restarts} restarts")

    def responsibilities(self, points: np.ndarray) -> np.ndarray:
        if self.result is None:
            raise UsageError("fit the mixture first")
        resp, _ = self._e_step(np.asarray(points, dtype=np.float64), self.result.weights,
                               self.result.means, self.result.variances)
        return resp

    def predict(self, points: np.ndarray) -> np.ndarray:
        """Hard assignment by maximum responsibility."""
        return np.argmax(self.responsibilities(points), axis=1)
