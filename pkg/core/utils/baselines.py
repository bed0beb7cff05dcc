"""
Comparison strategies.

Every strategy answers the same two calls, ``decide`` and ``feedback``, plus
the manager-side hooks ``ensure_class`` and ``update_models`` the control
plane drives. Per-client strategies (Default, Brute, BO, Optimal) bypass the
agent's rule lookup; the network-class strategies and the ConfigTron
variants are only consulted for clients whose class the agent already knows.
"""

import logging
import math
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import config_space, plt_oracle
from .bandit_controller import (BanditController, Decision, EnsembleParams, ModelUpdate,
                                PerformanceSample)
from .dtree import TreeParams
from .exceptions import ConfigError
from .gp_optimizer import GPParams, GPSearch
from .netclass import ALL_FEATURES, FeatureVector
from .workload import NetworkCondition, Website

logger = logging.getLogger(__name__)

EXPLORE = 'Explore'
EXPLOIT = 'Exploit'
OPTIMAL = 'Optimal'
DEFAULT = 'Default'

STRATEGY_KINDS: Tuple[str, ...] = (
    'Default', 'Brute', 'BruteNC', 'BO', 'BONC', 'CherryPickNC', 'MABNC', 'Optimal',
    'ConfigTron', 'ConfigTronNoGP', 'ConfigTronNoDT',
)
_BY_KEY = {kind.lower(): kind for kind in STRATEGY_KINDS}


def normalize_kind(name: str) -> str:
    """Canonical strategy name; matching ignores case, '-' and '_'."""
    key = name.replace('-', '').replace('_', '').lower()
    if key not in _BY_KEY:
        raise ConfigError(f"Unknown algorithm '{name}'. Choose from: {', '.join(STRATEGY_KINDS)}")
    return _BY_KEY[key]


@dataclass(frozen=True)
class DecisionContext:
    client_id: str
    class_id: Optional[int]
    features: FeatureVector
    website: Website
    condition: NetworkCondition
    ts_ms: int = 0


class Strategy(ABC):
    """Decision/feedback interface shared by every algorithm."""

    kind: str = ''
    needs_rules: bool = False

    def __init__(self, candidate_ids: Optional[Sequence[int]] = None, seed: int = 0):
        if candidate_ids is None:
            candidate_ids = config_space.restricted_ids()
        self.candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
        self.seed = seed
        self.version = 0
        self._processed = 0
        self._default_id = config_space.default_config_id()

    @abstractmethod
    def decide(self, ctx: DecisionContext, rng: np.random.Generator) -> Decision:
        ...

    def decide_phase(self, ctx: DecisionContext, current: Decision) -> Optional[Decision]:
        """Re-decide at a network change; None keeps the current configuration."""
        return None

    def feedback(self, sample: PerformanceSample) -> None:
        self._processed += 1

    def ensure_class(self, class_id: int) -> None:
        pass

    def class_decisions(self) -> Dict[int, int]:
        return {}

    def update_models(self) -> ModelUpdate:
        self.version += 1
        processed, self._processed = self._processed, 0
        return ModelUpdate(self.version, None, self.class_decisions(), processed)


class DefaultStrategy(Strategy):
    kind = 'Default'

    def decide(self, ctx, rng):
        return Decision(self._default_id, DEFAULT)


class OptimalStrategy(Strategy):
    """Oracle argmin at the true current condition; an upper bound on improvement."""

    kind = 'Optimal'

    def __init__(self, oracle: plt_oracle.OracleParams, candidate_ids=None, seed=0,
                 evaluator: Optional[Callable[[NetworkCondition, Website], np.ndarray]] = None):
        super().__init__(candidate_ids, seed)
        self.oracle = oracle
        self.evaluator = evaluator

    def _best(self, ctx: DecisionContext) -> int:
        if self.evaluator is None:
            config, _ = plt_oracle.optimal_config(ctx.condition, ctx.website, self.oracle, self.candidate_ids)
            return config.config_id
        values = self.evaluator(ctx.condition, ctx.website)
        return int(self.candidate_ids[int(np.argmin(values[self.candidate_ids]))])

    def decide(self, ctx, rng):
        return Decision(self._best(ctx), OPTIMAL)

    def decide_phase(self, ctx, current):
        best = self._best(ctx)
        return None if best == current.config_id else Decision(best, OPTIMAL)


class BruteStrategy(Strategy):
    """
    Exhaustive exploration: each context walks every candidate id once in id
    order, then keeps the lowest observed mean PLT (ties to the lowest id).
    """

    kind = 'Brute'

    def __init__(self, candidate_ids=None, seed=0):
        super().__init__(candidate_ids, seed)
        self.cursor: Dict[object, int] = {}
        self.sums: Dict[object, Dict[int, float]] = {}
        self.counts: Dict[object, Dict[int, int]] = {}

    def key(self, ctx: DecisionContext):
        return ctx.client_id

    def incumbent(self, key) -> Optional[int]:
        counts = self.counts.get(key)
        if not counts:
            return None
        sums = self.sums[key]
        return min(counts, key=lambda i: (sums[i] / counts[i], i))

    def decide(self, ctx, rng):
        key = self.key(ctx)
        position = self.cursor.get(key, 0)
        if position < len(self.candidate_ids):
            self.cursor[key] = position + 1
            return Decision(int(self.candidate_ids[position]), EXPLORE, position + 1)
        best = self.incumbent(key)
        if best is None:
            return Decision(self._default_id, DEFAULT, position)
        return Decision(best, EXPLOIT, position)

    def _sample_key(self, sample: PerformanceSample):
        return sample.client_id

    def feedback(self, sample):
        super().feedback(sample)
        key = self._sample_key(sample)
        sums = self.sums.setdefault(key, {})
        counts = self.counts.setdefault(key, {})
        sums[sample.config_id] = sums.get(sample.config_id, 0.0) + sample.plt_ms
        counts[sample.config_id] = counts.get(sample.config_id, 0) + 1

    def exhausted(self, key) -> bool:
        return self.cursor.get(key, 0) >= len(self.candidate_ids)


class BruteNCStrategy(BruteStrategy):
    kind = 'BruteNC'
    needs_rules = True

    def key(self, ctx):
        return ctx.class_id

    def _sample_key(self, sample):
        return sample.class_id

    def ensure_class(self, class_id):
        self.cursor.setdefault(class_id, 0)

    def class_decisions(self):
        decisions = {}
        for class_id in sorted(k for k in self.cursor if k is not None):
            best = self.incumbent(class_id)
            decisions[class_id] = self._default_id if best is None else best
        return decisions


class BOStrategy(Strategy):
    """
    GP search per context with ConfigTron's thresholds. Once the EI rule stops
    the search the incumbent is kept forever.
    """

    kind = 'BO'

    def __init__(self, gp_params: GPParams = GPParams(), candidate_ids=None, seed=0,
                 knobs: Optional[Sequence[str]] = None, max_inflight: int = 4):
        super().__init__(candidate_ids, seed)
        self.gp_params = gp_params
        self.knobs = tuple(knobs) if knobs is not None else None
        self.max_inflight = max_inflight
        self.searches: Dict[object, GPSearch] = {}

    def key(self, ctx: DecisionContext):
        return ctx.client_id

    def _sample_key(self, sample: PerformanceSample):
        return sample.client_id

    def _stream(self, key) -> np.random.Generator:
        salt = zlib.crc32(str(key).encode('utf-8'))
        return np.random.default_rng([self.seed, salt])

    def search(self, key) -> GPSearch:
        search = self.searches.get(key)
        if search is None:
            k = min(self.gp_params.init_sample, len(self.candidate_ids))
            bootstrap = [c.config_id for c in config_space.lhc_sample(k, self._stream(key), self.knobs)]
            search = GPSearch(self.gp_params, self.candidate_ids, bootstrap)
            self.searches[key] = search
        return search

    def _exploit(self, search: GPSearch) -> Decision:
        best = search.incumbent()
        if best is None:
            return Decision(self._default_id, DEFAULT, search.steps)
        return Decision(best, EXPLOIT, search.steps)

    def decide(self, ctx, rng):
        search = self.search(self.key(ctx))
        if search.stopped or search.check_stop():
            return self._exploit(search)
        if search.inflight >= self.max_inflight:
            return self._exploit(search)
        trial = search.next_trial()
        if trial is None:
            return self._exploit(search)
        return Decision(trial[0], EXPLORE, search.steps)

    def feedback(self, sample):
        super().feedback(sample)
        self.search(self._sample_key(sample)).observe(sample.config_id, sample.plt_ms)


class BONCStrategy(BOStrategy):
    kind = 'BONC'
    needs_rules = True

    def key(self, ctx):
        return ctx.class_id

    def _sample_key(self, sample):
        return sample.class_id

    def ensure_class(self, class_id):
        self.search(class_id)

    def class_decisions(self):
        decisions = {}
        for class_id in sorted(k for k in self.searches if k is not None):
            best = self.searches[class_id].incumbent()
            decisions[class_id] = self._default_id if best is None else best
        return decisions


class CherryPickNCStrategy(BONCStrategy):
    kind = 'CherryPickNC'


class MABNCStrategy(Strategy):
    """
    One epsilon-greedy bandit per network class with an arm per config.

    Exploration probability decays with the class's pulls:
    epsilon_t = epsilon0 * min(1, arms / (pulls + 1)). Greedy picks the arm
    with the lowest running mean PLT; unpulled arms never win the greedy step.
    """

    kind = 'MABNC'
    needs_rules = True

    def __init__(self, epsilon0: float = 0.2, candidate_ids=None, seed=0):
        super().__init__(candidate_ids, seed)
        if not 0.0 <= epsilon0 <= 1.0:
            raise ConfigError("epsilon0 must lie in [0, 1]")
        self.epsilon0 = epsilon0
        self.position = {int(c): i for i, c in enumerate(self.candidate_ids)}
        self.pulls: Dict[int, np.ndarray] = {}
        self.means: Dict[int, np.ndarray] = {}
        self.m2: Dict[int, np.ndarray] = {}

    def ensure_class(self, class_id):
        if class_id not in self.pulls:
            arms = len(self.candidate_ids)
            self.pulls[class_id] = np.zeros(arms, dtype=np.int64)
            self.means[class_id] = np.zeros(arms)
            self.m2[class_id] = np.zeros(arms)

    def epsilon(self, class_id: int) -> float:
        total = int(self.pulls[class_id].sum())
        return self.epsilon0 * min(1.0, len(self.candidate_ids) / (total + 1))

    def greedy(self, class_id: int) -> Optional[int]:
        pulls = self.pulls[class_id]
        if not pulls.any():
            return None
        means = np.where(pulls > 0, self.means[class_id], math.inf)
        return int(self.candidate_ids[int(np.argmin(means))])

    def decide(self, ctx, rng):
        self.ensure_class(ctx.class_id)
        step = int(self.pulls[ctx.class_id].sum())
        best = self.greedy(ctx.class_id)
        if best is None or rng.random() < self.epsilon(ctx.class_id):
            return Decision(int(rng.choice(self.candidate_ids)), EXPLORE, step)
        return Decision(best, EXPLOIT, step)

    def feedback(self, sample):
        super().feedback(sample)
        self.ensure_class(sample.class_id)
        arm = self.position.get(sample.config_id)
        if arm is None:
            return
        # Welford running mean / M2
        pulls, means, m2 = self.pulls[sample.class_id], self.means[sample.class_id], self.m2[sample.class_id]
        pulls[arm] += 1
        delta = sample.plt_ms - means[arm]
        means[arm] += delta / pulls[arm]
        m2[arm] += delta * (sample.plt_ms - means[arm])

    def arm_variance(self, class_id: int, config_id: int) -> float:
        arm = self.position[config_id]
        n = self.pulls[class_id][arm]
        return float(self.m2[class_id][arm] / (n - 1)) if n > 1 else 0.0

    def class_decisions(self):
        decisions = {}
        for class_id in sorted(self.pulls):
            best = self.greedy(class_id)
            decisions[class_id] = self._default_id if best is None else best
        return decisions


class ConfigTronStrategy(Strategy):
    """The bandit ensemble behind the shared strategy interface."""

    kind = 'ConfigTron'
    needs_rules = True

    def __init__(self, params: EnsembleParams = EnsembleParams(), tree_params: TreeParams = TreeParams(),
                 candidate_ids=None, seed=0, feature_mask: Sequence[bool] = ALL_FEATURES,
                 ranked_ids: Optional[Sequence[int]] = None, knobs: Optional[Sequence[str]] = None):
        super().__init__(candidate_ids, seed)
        self.controller = BanditController(params, tree_params, self.candidate_ids, feature_mask, seed,
                                           ranked_ids, knobs)

    def decide(self, ctx, rng):
        decision = self.controller.on_session(ctx.class_id, ctx.features, rng)
        return Decision(decision.config_id, decision.arm.value, decision.class_step)

    def feedback(self, sample):
        self.controller.on_feedback(sample)

    def ensure_class(self, class_id):
        self.controller.state(class_id)

    def class_decisions(self):
        return self.controller.decisions()

    def update_models(self):
        return self.controller.update_models()


@dataclass(frozen=True)
class StrategyOptions:
    """Per-kind knobs the factory threads through."""
    ensemble: EnsembleParams = EnsembleParams()
    tree: TreeParams = TreeParams()
    oracle: plt_oracle.OracleParams = plt_oracle.OracleParams()
    feature_mask: Tuple[bool, ...] = ALL_FEATURES
    knobs: Optional[Tuple[str, ...]] = None
    cherrypick_init_sample: int = 6
    cherrypick_ei_threshold: float = 0.10
    mab_epsilon0: float = 0.2
    ranked_ids: Optional[Tuple[int, ...]] = None


def make_strategy(kind: str, options: StrategyOptions = StrategyOptions(), seed: int = 0) -> Strategy:
    """
    Build a strategy by (case/separator-insensitive) name.

    Raises:
        ConfigError: unknown kind
    """
    kind = normalize_kind(kind)
    candidates = config_space.restricted_ids(options.knobs)
    ensemble = options.ensemble
    if kind == 'Default':
        return DefaultStrategy(candidates, seed)
    if kind == 'Optimal':
        return OptimalStrategy(options.oracle, candidates, seed)
    if kind == 'Brute':
        return BruteStrategy(candidates, seed)
    if kind == 'BruteNC':
        return BruteNCStrategy(candidates, seed)
    if kind == 'BO':
        return BOStrategy(ensemble.gp_params(), candidates, seed, options.knobs, ensemble.max_inflight)
    if kind == 'BONC':
        return BONCStrategy(ensemble.gp_params(), candidates, seed, options.knobs, ensemble.max_inflight)
    if kind == 'CherryPickNC':
        gp = ensemble.gp_params(init_sample=options.cherrypick_init_sample,
                                ei_rel_threshold=options.cherrypick_ei_threshold)
        return CherryPickNCStrategy(gp, candidates, seed, options.knobs, ensemble.max_inflight)
    if kind == 'MABNC':
        return MABNCStrategy(options.mab_epsilon0, candidates, seed)

    if kind == 'ConfigTronNoGP':
        ensemble = replace(ensemble, use_gp=False)
    elif kind == 'ConfigTronNoDT':
        ensemble = replace(ensemble, use_dt=False)
    strategy = ConfigTronStrategy(ensemble, options.tree, candidates, seed, options.feature_mask,
                                  options.ranked_ids, options.knobs)
    strategy.kind = kind
    return strategy


def list_strategies() -> List[str]:
    return list(STRATEGY_KINDS)
