"""
Per-network-class contextual bandit ensemble.

Each class walks Bootstrap (LHC quartet) -> GpExplore (EI-directed trials)
-> Steady (decision-tree exploitation), while a population-wide epsilon gate
resamples uniformly at random. The slow loop (update_models) retrains one
tree over all classes and produces the rule payload pushed to agents.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import config_space
from .dtree import DTree, TreeParams, train_matrix
from .exceptions import ConfigError, EmptyDataError
from .gp_optimizer import GPParams, GPSearch
from .netclass import ALL_FEATURES, FeatureVector
from .workload import detect_changepoints

logger = logging.getLogger(__name__)

BOOTSTRAP_KINDS = ('lhc', 'random', 'ranked')


class Arm(str, Enum):
    LHC = 'LHC'
    GP = 'GP'
    EPSILON = 'Epsilon'
    DTREE = 'DTree'
    DEFAULT = 'Default'


class Phase(str, Enum):
    BOOTSTRAP = 'Bootstrap'
    GP_EXPLORE = 'GpExplore'
    STEADY = 'Steady'


@dataclass(frozen=True)
class EnsembleParams:
    epsilon: float = 0.05
    init_sample: int = 4
    min_sample_tested: int = 7
    ei_rel_threshold: float = 0.05
    incumbent_switch: float = 0.10
    staleness_window: Optional[int] = None
    use_gp: bool = True
    use_dt: bool = True
    drift_reset: bool = False
    hazard_lambda: float = 250.0
    drift_min_samples: int = 20
    drift_min_snr: float = 2.0
    bootstrap: str = 'lhc'
    max_inflight: int = 4

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError("epsilon must lie in [0, 1]")
        if self.init_sample < 1 or self.min_sample_tested < 1:
            raise ConfigError("init_sample and min_sample_tested must be positive")
        if self.bootstrap not in BOOTSTRAP_KINDS:
            raise ConfigError(f"bootstrap must be one of {BOOTSTRAP_KINDS}")
        if self.max_inflight < 1:
            raise ConfigError("max_inflight must be positive")

    def gp_params(self, **overrides) -> GPParams:
        values = {
            'init_sample': self.init_sample,
            'min_sample_tested': self.min_sample_tested,
            'ei_rel_threshold': self.ei_rel_threshold,
        }
        values.update(overrides)
        return GPParams(**values)


@dataclass(frozen=True)
class PerformanceSample:
    client_id: str
    class_id: int
    features: FeatureVector
    website_id: str
    config_id: int
    plt_ms: float
    ts_ms: int
    arm: str

    def __post_init__(self):
        if not self.plt_ms > 0:
            raise ValueError("plt_ms must be positive")


@dataclass(frozen=True)
class Decision:
    config_id: int
    arm: str
    class_step: int = 0

    @property
    def config(self) -> config_space.Configuration:
        return config_space.config_from_id(self.config_id)


@dataclass
class ClassState:
    class_id: int
    search: GPSearch
    phase: Phase = Phase.BOOTSTRAP
    samples: List[PerformanceSample] = field(default_factory=list)
    best_config: Optional[int] = None
    dt_seeded: bool = False
    dt_slot_open: bool = False
    steps: int = 0
    drift_start: int = 0
    resets: int = 0

    @property
    def sample_count(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class ModelUpdate:
    version: int
    tree: Optional[DTree]
    decisions: Dict[int, int]
    processed_samples: int
    reset_classes: Tuple[int, ...] = ()

    def payload(self, nc_rules: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        return {
            'version': self.version,
            'nc_rules': nc_rules,
            'decisions': {str(k): v for k, v in sorted(self.decisions.items())},
            'tree': self.tree.to_dict() if self.tree is not None else None,
        }


class BanditController:
    """
    Ensemble state for all network classes of one manager.

    Args:
        params: ensemble hyperparameters
        tree_params: decision-tree hyperparameters
        candidate_ids: sorted config ids the learners may pick (knob ablation)
        feature_mask: features the tree trains on
        seed: seed for bootstrap sampling
        ranked_ids: config ids in domain-knowledge order, for bootstrap='ranked'
    """

    def __init__(self, params: EnsembleParams = EnsembleParams(), tree_params: TreeParams = TreeParams(),
                 candidate_ids: Optional[Sequence[int]] = None, feature_mask: Sequence[bool] = ALL_FEATURES,
                 seed: int = 0, ranked_ids: Optional[Sequence[int]] = None, knobs: Optional[Sequence[str]] = None):
        self.params = params
        self.tree_params = tree_params
        self.knobs = tuple(knobs) if knobs is not None else None
        if candidate_ids is None:
            candidate_ids = config_space.restricted_ids(self.knobs)
        self.candidate_ids = np.asarray(candidate_ids, dtype=np.int64)
        self.feature_mask = tuple(feature_mask)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.ranked_ids = list(ranked_ids) if ranked_ids is not None else None
        if params.bootstrap == 'ranked' and self.ranked_ids is None:
            raise ConfigError("ranked bootstrap needs ranked_ids")
        self.classes: Dict[int, ClassState] = {}
        self.tree: Optional[DTree] = None
        self.version = 0
        self._samples_since_update = 0
        self._default_id = config_space.default_config_id()

    def _bootstrap_ids(self, class_id: int) -> List[int]:
        # Per-class stream, independent of class creation order
        rng = np.random.default_rng([self.seed, class_id])
        k = min(self.params.init_sample, len(self.candidate_ids))
        if self.params.bootstrap == 'ranked':
            allowed = set(int(i) for i in self.candidate_ids)
            return [i for i in self.ranked_ids if i in allowed][:k]
        if self.params.bootstrap == 'random':
            configs = config_space.random_sample(k, rng, self.knobs)
        else:
            configs = config_space.lhc_sample(k, rng, self.knobs)
        return [c.config_id for c in configs]

    def state(self, class_id: int) -> ClassState:
        """Class state, created on first sight."""
        st = self.classes.get(class_id)
        if st is None:
            use_tree = self.params.use_dt and self.tree is not None
            if self.params.use_gp:
                search = GPSearch(self.params.gp_params(), self.candidate_ids, self._bootstrap_ids(class_id))
                phase = Phase.BOOTSTRAP
            else:
                search = GPSearch(self.params.gp_params(), self.candidate_ids)
                phase = Phase.STEADY
            st = ClassState(class_id=class_id, search=search, phase=phase,
                            dt_seeded=use_tree and self.params.use_gp, dt_slot_open=use_tree and self.params.use_gp)
            self.classes[class_id] = st
            logger.debug(f"Class {class_id} created in {phase.value} (tree seed: {st.dt_seeded})")
        return st

    def _predict_tree(self, features: FeatureVector) -> Optional[int]:
        if not self.params.use_dt or self.tree is None:
            return None
        return int(self.tree.predict_one(features.active(self.feature_mask)))

    def exploit(self, st: ClassState, features: Optional[FeatureVector]) -> Decision:
        predicted = self._predict_tree(features) if features is not None else None
        if predicted is not None:
            return Decision(predicted, Arm.DTREE, st.steps)
        if st.best_config is not None:
            return Decision(st.best_config, Arm.DTREE, st.steps)
        return Decision(self._default_id, Arm.DEFAULT, st.steps)

    def _enter(self, st: ClassState, phase: Phase) -> None:
        if st.phase != phase:
            logger.debug(f"Class {st.class_id}: {st.phase.value} -> {phase.value} after {st.search.state.observation_count} samples")
            st.phase = phase

    def on_session(self, class_id: int, features: FeatureVector, rng: np.random.Generator) -> Decision:
        st = self.state(class_id)
        st.steps += 1
        if rng.random() < self.params.epsilon:
            return Decision(int(rng.choice(self.candidate_ids)), Arm.EPSILON, st.steps)

        if st.phase == Phase.BOOTSTRAP:
            if st.search.inflight >= self.params.max_inflight:
                return self.exploit(st, features)
            if st.dt_slot_open:
                st.dt_slot_open = False
                predicted = self._predict_tree(features)
                if predicted is not None:
                    if predicted in st.search.queue:
                        st.search.queue.remove(predicted)
                    elif st.search.queue:
                        st.search.queue.pop(0)
                    st.search.dispatch(predicted)
                    if not st.search.queue:
                        self._enter(st, Phase.GP_EXPLORE)
                    return Decision(predicted, Arm.DTREE, st.steps)
            config_id = st.search.next_bootstrap()
            if not st.search.queue:
                self._enter(st, Phase.GP_EXPLORE)
            if config_id is not None:
                return Decision(config_id, Arm.LHC, st.steps)

        if st.phase == Phase.GP_EXPLORE:
            if st.search.check_stop():
                self._enter(st, Phase.STEADY)
            elif st.search.inflight >= self.params.max_inflight:
                return self.exploit(st, features)
            else:
                config_id = st.search.next_gp()
                if config_id is not None:
                    return Decision(config_id, Arm.GP, st.steps)
                if st.search.state.counts and not st.search.state.untested(set(st.search.pending)):
                    self._enter(st, Phase.STEADY)
                return self.exploit(st, features)

        return self.exploit(st, features)

    def _windowed_best(self, st: ClassState) -> Optional[int]:
        window = self.params.staleness_window
        if window is None:
            return st.search.incumbent()
        sums: Dict[int, List[float]] = {}
        for sample in st.samples[-window:]:
            sums.setdefault(sample.config_id, []).append(sample.plt_ms)
        if not sums:
            return None
        return min(sums, key=lambda i: (float(np.mean(sums[i])), i))

    def _config_mean(self, st: ClassState, config_id: int) -> Tuple[float, int]:
        window = self.params.staleness_window
        if window is None:
            counts = st.search.state.counts
            if config_id not in counts:
                return math.inf, 0
            return st.search.state.mean_plt(config_id), counts[config_id]
        values = [s.plt_ms for s in st.samples[-window:] if s.config_id == config_id]
        return (float(np.mean(values)), len(values)) if values else (math.inf, 0)

    def on_feedback(self, sample: PerformanceSample) -> None:
        st = self.state(sample.class_id)
        st.samples.append(sample)
        st.search.observe(sample.config_id, sample.plt_ms)
        self._samples_since_update += 1

        best = self._windowed_best(st)
        if st.best_config is None or st.phase != Phase.STEADY:
            st.best_config = best
            return
        if best is None or best == st.best_config:
            return
        incumbent_mean, _ = self._config_mean(st, st.best_config)
        challenger_mean, _ = self._config_mean(st, best)
        if challenger_mean < incumbent_mean * (1.0 - self.params.incumbent_switch):
            logger.debug(f"Class {st.class_id}: incumbent {st.best_config} -> {best} "
                         f"({incumbent_mean:.1f} -> {challenger_mean:.1f} ms)")
            st.best_config = best

    def decisions(self) -> Dict[int, int]:
        return {cid: st.best_config for cid, st in sorted(self.classes.items()) if st.best_config is not None}

    def training_set(self) -> Tuple[np.ndarray, np.ndarray]:
        rows, labels = [], []
        for cid in sorted(self.classes):
            st = self.classes[cid]
            if st.best_config is None:
                continue
            for sample in st.samples:
                rows.append(sample.features.active(self.feature_mask))
                labels.append(st.best_config)
        if not rows:
            return np.zeros((0, int(sum(self.feature_mask)))), np.zeros(0, dtype=np.int64)
        return np.vstack(rows), np.asarray(labels, dtype=np.int64)

    def update_models(self) -> ModelUpdate:
        """Retrain the cross-class tree and snapshot per-class decisions."""
        X, y = self.training_set()
        if len(y) == 0:
            raise EmptyDataError("no class has samples")
        if self.params.use_dt:
            self.tree = train_matrix(X, y, self.tree_params, self.rng)
        reset = tuple(self.check_drift()) if self.params.drift_reset else ()
        self.version += 1
        processed = self._samples_since_update
        self._samples_since_update = 0
        return ModelUpdate(self.version, self.tree, self.decisions(), processed, reset)

    def reset_class_on_drift(self, class_id: int) -> None:
        st = self.state(class_id)
        st.phase = Phase.GP_EXPLORE
        st.search.queue.clear()
        st.search.stopped = False
        st.dt_slot_open = False
        st.drift_start = len(st.samples)
        st.resets += 1
        logger.debug(f"Class {class_id} reset to GpExplore after drift ({len(st.samples)} samples kept)")

    def incumbent_stream(self, st: ClassState) -> np.ndarray:
        if st.best_config is None:
            return np.zeros(0)
        return np.log([s.plt_ms for s in st.samples[st.drift_start:] if s.config_id == st.best_config])

    def check_drift(self) -> List[int]:
        """Classes whose incumbent PLT stream shows a committed changepoint; those are reset."""
        reset = []
        for cid in sorted(self.classes):
            st = self.classes[cid]
            if st.phase != Phase.STEADY:
                continue
            stream = self.incumbent_stream(st)
            if len(stream) < self.params.drift_min_samples:
                continue
            reference = stream[:self.params.drift_min_samples // 2]
            scale = max(float(reference.std()), 0.05)
            standardized = (stream - reference.mean()) / scale
            changepoints = detect_changepoints(standardized, self.params.hazard_lambda, obs_prior=(0.0, 1.0),
                                               min_snr=self.params.drift_min_snr)
            if changepoints:
                self.reset_class_on_drift(cid)
                reset.append(cid)
        return reset


def arm_contributions(records: Sequence[Tuple[int, str]], bucket_bounds: Sequence[int]) -> List[Dict[str, float]]:
    """
    Arm fractions per time bucket.

    records: (ts_ms, arm tag); bucket i holds timestamps in
    [bucket_bounds[i-1], bucket_bounds[i]) with open ends on both sides, so
    there are len(bucket_bounds) + 1 buckets. Empty buckets map to {}.
    """
    bounds = np.asarray(bucket_bounds, dtype=float)
    counts: List[Dict[str, int]] = [dict() for _ in range(len(bounds) + 1)]
    for ts, arm in records:
        bucket = int(np.searchsorted(bounds, ts, side='right'))
        tag = arm.value if isinstance(arm, Arm) else str(arm)
        counts[bucket][tag] = counts[bucket].get(tag, 0) + 1
    fractions = []
    for bucket in counts:
        total = sum(bucket.values())
        fractions.append({tag: n / total for tag, n in sorted(bucket.items())} if total else {})
    return fractions
