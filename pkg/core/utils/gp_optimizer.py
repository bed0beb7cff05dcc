"""
Gaussian-process exploration over encoded configurations.

Squared-exponential kernel with fixed hyperparameters, log-transformed PLT
targets, Expected Improvement (minimization form) and the EI/min-sample
termination rule. GPSearch wraps the whole trial/observe loop so the bandit,
the BO baselines and the bootstrap study share one implementation.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import linalg
from scipy.stats import norm

from .config_space import SPACE_SIZE, Configuration, config_from_id, encoded_space
from .exceptions import NotPositiveDefiniteError, SpaceExhaustedError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GPParams:
    lengthscale: float = 0.5
    noise_ratio: float = 0.05
    variance_floor: float = 0.01
    jitter_start: float = 1e-8
    jitter_max: float = 1e-2
    init_sample: int = 4
    min_sample_tested: int = 7
    ei_rel_threshold: float = 0.05
    xi_rel: float = 0.01


def se_kernel(a: np.ndarray, b: np.ndarray, signal_variance: float, lengthscale: float) -> np.ndarray:
    """Squared-exponential kernel matrix between the rows of a and b."""
    a = np.atleast_2d(a) / lengthscale
    b = np.atleast_2d(b) / lengthscale
    sq = np.sum(a ** 2, axis=1)[:, None] + np.sum(b ** 2, axis=1)[None, :] - 2.0 * a @ b.T
    return signal_variance * np.exp(-0.5 * np.maximum(sq, 0.0))


class GPModel:
    """
    Fitted GP posterior in log-PLT space.

    Constant prior mean = mean(y); signal variance = max(var(y), floor) unless
    given; noise variance = noise_ratio * signal variance.
    """

    def __init__(self, X: np.ndarray, y_log: np.ndarray, params: GPParams = GPParams(),
                 signal_variance: Optional[float] = None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y_log = np.asarray(y_log, dtype=float)
        if X.shape[0] < 1:
            raise ValueError("GP needs at least one observation")
        if X.shape[0] != y_log.shape[0]:
            raise ValueError("X and y must have the same length")

        self.params = params
        self.X = X
        self.y = y_log
        self.mean = float(y_log.mean())
        if signal_variance is None:
            signal_variance = max(float(y_log.var()), params.variance_floor)
        self.signal_variance = signal_variance
        self.noise_variance = params.noise_ratio * signal_variance

        K = se_kernel(X, X, signal_variance, params.lengthscale)
        K[np.diag_indices_from(K)] += self.noise_variance
        self.jitter = params.jitter_start
        while True:
            try:
                self.cho = linalg.cho_factor(K + self.jitter * np.eye(len(K)), lower=True)
                break
            except linalg.LinAlgError:
                if self.jitter >= params.jitter_max:
                    raise NotPositiveDefiniteError(
                        f"kernel matrix not positive definite with jitter {self.jitter:g}") from None
                self.jitter *= 10.0
                logger.debug(f"GP Cholesky failed, jitter raised to {self.jitter:g}")
                if self.jitter > 1e-6:
                    logger.warning(f"GP jitter escalated to {self.jitter:g} for {len(K)} observations")
        self.alpha = linalg.cho_solve(self.cho, self.y - self.mean)

    @property
    def prior_variance(self) -> float:
        return self.signal_variance + self.noise_variance

    def predict(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Posterior predictive mean and stddev (noise included) at the rows of x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k_star = se_kernel(x, self.X, self.signal_variance, self.params.lengthscale)
        mu = self.mean + k_star @ self.alpha
        v = linalg.cho_solve(self.cho, k_star.T)
        variance = self.prior_variance - np.sum(k_star * v.T, axis=1)
        return mu, np.sqrt(np.maximum(variance, 0.0))


def fit(X: np.ndarray, y_ms: Sequence[float], params: GPParams = GPParams()) -> GPModel:
    """Fit on raw PLTs in ms; targets are log-transformed."""
    return GPModel(X, np.log(np.asarray(y_ms, dtype=float)), params)


def predict(model: GPModel, x: np.ndarray) -> Tuple[float, float]:
    mu, sigma = model.predict(x)
    return float(mu[0]), float(sigma[0])


def ei_closed_form(mu: np.ndarray, sigma: np.ndarray, y_best: float, xi: float) -> np.ndarray:
    """EI for minimization: (y_best - mu - xi) Phi(z) + sigma phi(z), z = (y_best - mu - xi) / sigma."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    improvement = y_best - mu - xi
    positive = sigma > 0
    safe_sigma = np.where(positive, sigma, 1.0)
    z = improvement / safe_sigma
    ei = improvement * norm.cdf(z) + safe_sigma * norm.pdf(z)
    ei = np.where(positive, ei, np.maximum(0.0, improvement))
    return np.maximum(ei, 0.0)


def default_xi(y_best: float, params: GPParams = GPParams()) -> float:
    return params.xi_rel * abs(y_best)


def expected_improvement(model: GPModel, x: np.ndarray, y_best: float, xi: Optional[float] = None) -> float:
    if xi is None:
        xi = default_xi(y_best, model.params)
    mu, sigma = model.predict(x)
    return float(ei_closed_form(mu, sigma, y_best, xi)[0])


def stop_rule(tested: int, max_ei: float, y_best: float, params: GPParams = GPParams()) -> bool:
    """True iff enough configs were tested and the best remaining EI is small relative to y_best."""
    if tested < params.min_sample_tested:
        return False
    return max_ei / max(abs(y_best), 1e-12) < params.ei_rel_threshold


class GPExploreState:
    """
    Per-class GP exploration bookkeeping.

    Observations are aggregated per config id (mean log PLT); ``tested`` holds
    every config with at least one observation.
    """

    def __init__(self, params: GPParams = GPParams(), candidate_ids: Optional[Sequence[int]] = None):
        self.params = params
        self.candidate_ids = np.arange(SPACE_SIZE) if candidate_ids is None else np.asarray(candidate_ids, dtype=np.int64)
        self.log_sums: Dict[int, float] = {}
        self.plt_sums: Dict[int, float] = {}
        self.counts: Dict[int, int] = {}
        self._model: Optional[GPModel] = None
        self._dirty = True

    @property
    def tested(self) -> Set[int]:
        return set(self.counts)

    @property
    def observation_count(self) -> int:
        return sum(self.counts.values())

    def observe(self, config_id: int, plt_ms: float) -> None:
        if plt_ms <= 0:
            raise ValueError("plt_ms must be positive")
        self.log_sums[config_id] = self.log_sums.get(config_id, 0.0) + math.log(plt_ms)
        self.plt_sums[config_id] = self.plt_sums.get(config_id, 0.0) + plt_ms
        self.counts[config_id] = self.counts.get(config_id, 0) + 1
        self._dirty = True

    def mean_plt(self, config_id: int) -> float:
        return self.plt_sums[config_id] / self.counts[config_id]

    def model(self) -> Optional[GPModel]:
        if not self.counts:
            return None
        if self._dirty:
            ids = sorted(self.counts)
            X = encoded_space()[ids]
            y = np.array([self.log_sums[i] / self.counts[i] for i in ids])
            self._model = GPModel(X, y, self.params)
            self._dirty = False
        return self._model

    def y_best(self) -> float:
        return min(self.log_sums[i] / self.counts[i] for i in self.counts)

    def untested(self, exclude: Optional[Set[int]] = None) -> List[int]:
        skip = set(self.counts) | (exclude or set())
        return [int(i) for i in self.candidate_ids if int(i) not in skip]

    def candidate_ei(self, candidates: Sequence[int]) -> np.ndarray:
        model = self.model()
        if model is None:
            raise ValueError("GP has no observations")
        y_best = self.y_best()
        mu, sigma = model.predict(encoded_space()[list(candidates)])
        return ei_closed_form(mu, sigma, y_best, default_xi(y_best, self.params))


def suggest_next(state: GPExploreState, candidates: Sequence[Configuration]) -> Tuple[Configuration, float]:
    """Argmax EI over candidates, ties to the lowest config id."""
    ids = sorted({c.config_id for c in candidates} - state.tested)
    if not ids:
        raise SpaceExhaustedError("space exhausted")
    ei = state.candidate_ei(ids)
    best = int(np.argmax(ei))
    return config_from_id(ids[best]), float(ei[best])


def should_stop(state: GPExploreState, exclude: Optional[Set[int]] = None) -> bool:
    tested = len(state.counts)
    if tested < state.params.min_sample_tested:
        return False
    remaining = state.untested(exclude)
    if not remaining:
        return True
    max_ei = float(state.candidate_ei(remaining).max())
    return stop_rule(tested, max_ei, state.y_best(), state.params)


class GPSearch:
    """
    Bootstrap-then-EI search over one (class or client) context.

    Trials handed out but not yet observed are ``pending``; they are excluded
    from EI suggestions so concurrent sessions explore distinct configs.
    """

    def __init__(self, params: GPParams = GPParams(), candidate_ids: Optional[Sequence[int]] = None,
                 bootstrap: Sequence[int] = ()):
        self.state = GPExploreState(params, candidate_ids)
        self.queue: List[int] = [int(i) for i in bootstrap]
        self.pending: Dict[int, int] = {}
        self.stopped = False
        self.steps = 0
        self.last_ei: Optional[float] = None

    @property
    def params(self) -> GPParams:
        return self.state.params

    @property
    def inflight(self) -> int:
        return sum(self.pending.values())

    @property
    def bootstrapping(self) -> bool:
        return bool(self.queue)

    def dispatch(self, config_id: int) -> int:
        self.pending[config_id] = self.pending.get(config_id, 0) + 1
        self.steps += 1
        return config_id

    def next_bootstrap(self) -> Optional[int]:
        if not self.queue:
            return None
        return self.dispatch(self.queue.pop(0))

    def next_gp(self) -> Optional[int]:
        """EI suggestion, or None when no observation exists yet or the space is exhausted."""
        if self.state.model() is None:
            return None
        candidates = self.state.untested(set(self.pending))
        if not candidates:
            return None
        ei = self.state.candidate_ei(candidates)
        best = int(np.argmax(ei))
        self.last_ei = float(ei[best])
        return self.dispatch(candidates[best])

    def next_trial(self) -> Optional[Tuple[int, str]]:
        config_id = self.next_bootstrap()
        if config_id is not None:
            return config_id, 'bootstrap'
        config_id = self.next_gp()
        if config_id is not None:
            return config_id, 'gp'
        return None

    def observe(self, config_id: int, plt_ms: float) -> None:
        count = self.pending.get(config_id, 0)
        if count > 1:
            self.pending[config_id] = count - 1
        elif count == 1:
            del self.pending[config_id]
        self.state.observe(config_id, plt_ms)

    def check_stop(self) -> bool:
        if not self.stopped and self.state.counts and not self.queue:
            self.stopped = should_stop(self.state, set(self.pending))
        return self.stopped

    def incumbent(self) -> Optional[int]:
        """Config with the lowest mean observed PLT, ties to the lowest id."""
        if not self.state.counts:
            return None
        return min(self.state.counts, key=lambda i: (self.state.mean_plt(i), i))
