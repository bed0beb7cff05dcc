"""
Experiment harness.

Drives generated (or ingested) client sessions through a strategy and the
simulated control plane against the PLT oracle, one deterministic event loop
per run, and writes the results, decision, event and update files plus the
run metadata. Ablations, parameter sweeps and the bootstrap study are built
on the same runner.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import config_space, netclass, plt_oracle
from .bandit_controller import Decision, EnsembleParams, PerformanceSample
from .baselines import (DEFAULT, DecisionContext, OptimalStrategy, Strategy, StrategyOptions,
                        make_strategy, normalize_kind)
from .control_plane import (TOPOLOGY_MODES, ControlPlane, EventKind, EventQueue, SessionRoute, Source,
                            Topology, reconfigure_midsession)
from .dtree import TreeParams
from .exceptions import ConfigError, LabError
from .gp_optimizer import GPSearch
from .netclass import FeatureVector
from .report import (DECISIONS_COLUMNS, EVENTS_COLUMNS, PERCENTILES, RESULTS_COLUMNS, UPDATES_COLUMNS,
                     percentiles)
from .workload import (ClientSession, NetworkCondition, Website, WorkloadSpec, clamp_condition,
                       generate_sessions, ingest_trace)

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ('update_interval_ms', 'delay_ms', 'topology', 'epsilon')
ABLATION_AXES = ('features', 'knobs')
FLOAT_FORMAT = '%.4f'
MIDSESSION_ARM = 'Rule'

# Independent random streams per concern
STREAM_ESTIMATE = 1
STREAM_CLASSES = 2
STREAM_DECISIONS = 3
STREAM_NOISE = 4


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Everything one run depends on.

    workload is used unless trace_path is given; its seed is replaced by the
    run seed so one seed fixes the whole run. feature_mask / knob_mask of None
    mean all features / the full configuration space.
    """
    algo: str = 'ConfigTron'
    seed: int = 42
    output: str = 'results.csv'
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    trace_path: Optional[str] = None
    tensor_path: Optional[str] = None
    oracle: plt_oracle.OracleParams = field(default_factory=plt_oracle.OracleParams)
    ensemble: EnsembleParams = field(default_factory=EnsembleParams)
    tree: TreeParams = field(default_factory=TreeParams)
    topology: str = 'global'
    pop_count: int = 1
    delay_ms: int = 0
    update_interval_ms: int = 120000
    feature_mask: Optional[Tuple[str, ...]] = None
    knob_mask: Optional[Tuple[str, ...]] = None
    nc_k: int = 20
    estimator_alpha: float = 0.5
    estimator_fuzz: float = 0.1
    cherrypick_init_sample: int = 6
    cherrypick_ei_threshold: float = 0.10
    mab_epsilon0: float = 0.2
    drift_at_ms: Optional[int] = None
    drift_params: Dict[str, float] = field(default_factory=dict)
    spread_threshold: float = 0.25

    def validate(self) -> None:
        """Raise ConfigError on anything that would fail mid-run."""
        normalize_kind(self.algo)
        if self.topology not in TOPOLOGY_MODES:
            raise ConfigError(f"topology must be one of {TOPOLOGY_MODES}")
        if self.pop_count < 1:
            raise ConfigError("pop_count must be positive")
        if self.delay_ms < 0:
            raise ConfigError("propagation delay must be non-negative")
        if self.update_interval_ms <= 0:
            raise ConfigError("update interval must be positive")
        if self.nc_k < 0:
            raise ConfigError("nc_k must be non-negative (0 selects k automatically)")
        if not 0.0 < self.estimator_alpha <= 1.0:
            raise ConfigError("estimator_alpha must lie in (0, 1]")
        if not 0.0 <= self.estimator_fuzz < 1.0:
            raise ConfigError("estimator_fuzz must lie in [0, 1)")
        for path in (self.trace_path, self.tensor_path):
            if path is not None and not Path(path).exists() and not Path(path).with_suffix('.npy').exists():
                raise ConfigError(f"File not found: {path}")
        if self.drift_at_ms is not None and self.drift_at_ms < 0:
            raise ConfigError("drift_at_ms must be non-negative")
        try:
            netclass.mask_from_names(self.feature_mask)
            config_space.validate_knobs(self.knob_mask)
            if self.drift_params:
                self.oracle.replace(**self.drift_params)
        except ConfigError:
            raise
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from e
        if not self.output:
            raise ConfigError("output path is required")

    @property
    def kind(self) -> str:
        return normalize_kind(self.algo)

    @property
    def mask(self) -> Tuple[bool, ...]:
        return netclass.mask_from_names(self.feature_mask)

    def drifted_oracle(self) -> plt_oracle.OracleParams:
        return self.oracle.replace(**self.drift_params) if self.drift_params else self.oracle

    def to_dict(self) -> Dict[str, Any]:
        return {
            'algo': self.kind,
            'seed': self.seed,
            'output': self.output,
            'workload': self.workload.to_dict(),
            'trace_path': self.trace_path,
            'tensor_path': self.tensor_path,
            'oracle': self.oracle.to_dict(),
            'ensemble': asdict(self.ensemble),
            'tree': asdict(self.tree),
            'topology': self.topology,
            'pop_count': self.pop_count,
            'delay_ms': self.delay_ms,
            'update_interval_ms': self.update_interval_ms,
            'feature_mask': list(self.feature_mask) if self.feature_mask is not None else None,
            'knob_mask': list(self.knob_mask) if self.knob_mask is not None else None,
            'nc_k': self.nc_k,
            'estimator_alpha': self.estimator_alpha,
            'estimator_fuzz': self.estimator_fuzz,
            'cherrypick_init_sample': self.cherrypick_init_sample,
            'cherrypick_ei_threshold': self.cherrypick_ei_threshold,
            'mab_epsilon0': self.mab_epsilon0,
            'drift_at_ms': self.drift_at_ms,
            'drift_params': dict(sorted(self.drift_params.items())),
            'spread_threshold': self.spread_threshold,
        }

    def config_hash(self) -> str:
        """sha256 over everything except the output path."""
        data = self.to_dict()
        data.pop('output')
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode('utf-8')).hexdigest()

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown experiment fields: {sorted(unknown)}")
        kwargs = dict(data)
        try:
            if 'workload' in kwargs:
                kwargs['workload'] = WorkloadSpec.from_dict(kwargs['workload'])
            if 'oracle' in kwargs:
                kwargs['oracle'] = plt_oracle.OracleParams.from_dict(kwargs['oracle'])
            if 'ensemble' in kwargs:
                kwargs['ensemble'] = EnsembleParams(**kwargs['ensemble'])
            if 'tree' in kwargs:
                kwargs['tree'] = TreeParams(**kwargs['tree'])
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Invalid experiment configuration: {e}") from e
        for name in ('feature_mask', 'knob_mask'):
            if kwargs.get(name) is not None:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'ExperimentConfig':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return cls.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot load experiment config {path}: {e}") from e


@dataclass(frozen=True)
class SessionResult:
    ts_ms: int
    client_id: str
    class_id: int
    website_id: str
    algo: str
    arm: str
    config_ids: Tuple[int, ...]
    plt_ms: float
    default_plt_ms: float
    optimal_plt_ms: float

    def row(self) -> List[Any]:
        return [self.ts_ms, self.client_id, self.class_id, self.website_id, self.algo, self.arm,
                '|'.join(str(c) for c in self.config_ids), self.plt_ms, self.default_plt_ms,
                self.optimal_plt_ms]

    @property
    def improvement(self) -> float:
        return (self.default_plt_ms - self.plt_ms) / self.default_plt_ms


@dataclass(frozen=True)
class RunSummary:
    config_hash: str
    output: Path
    session_count: int
    update_count: int
    median_improvement: float
    p95_improvement: float


class HistoricalEstimator:
    """
    Per-client network estimate used for prediction.

    First sight: the observed condition times U(1 - fuzz, 1 + fuzz) per
    dimension; afterwards an exponentially weighted average of observed
    conditions.
    """

    def __init__(self, alpha: float = 0.5, fuzz: float = 0.1, rng: Optional[np.random.Generator] = None):
        self.alpha = alpha
        self.fuzz = fuzz
        self.rng = rng or np.random.default_rng(0)
        self.estimates: Dict[str, np.ndarray] = {}

    def estimate(self, client_id: str, observed: NetworkCondition) -> NetworkCondition:
        current = self.estimates.get(client_id)
        if current is None:
            factors = self.rng.uniform(1.0 - self.fuzz, 1.0 + self.fuzz, size=3)
            current = np.array([observed.bandwidth_kbps, observed.rtt_ms, observed.loss_rate]) * factors
            self.estimates[client_id] = current
        return clamp_condition(*current)

    def observe(self, client_id: str, observed: NetworkCondition) -> None:
        value = np.array([observed.bandwidth_kbps, observed.rtt_ms, observed.loss_rate])
        current = self.estimates.get(client_id)
        if current is None:
            self.estimates[client_id] = value
        else:
            self.estimates[client_id] = self.alpha * value + (1.0 - self.alpha) * current


def features_for(condition: NetworkCondition, website: Website, mask: Sequence[bool]) -> FeatureVector:
    return FeatureVector(condition.bandwidth_kbps, condition.rtt_ms, condition.loss_rate,
                         website.complexity, tuple(mask))


def load_sessions(cfg: ExperimentConfig) -> List[ClientSession]:
    if cfg.trace_path is not None:
        sessions = ingest_trace(cfg.trace_path)
    else:
        sessions = generate_sessions(replace(cfg.workload, seed=cfg.seed))
    return sorted(sessions, key=lambda s: (s.arrival_ms, s.client_id))


def fit_classes(sessions: Sequence[ClientSession], websites: Dict[str, Website], mask: Sequence[bool],
                k: int, fuzz: float, rng: np.random.Generator,
                oracle: plt_oracle.OracleParams) -> netclass.NCModel:
    """
    Offline class discovery on each client's first session (fuzzed phase-1 condition).

    k = 0 selects k with choose_k over noiseless default-config PLTs.
    """
    first: Dict[str, ClientSession] = {}
    for session in sessions:
        first.setdefault(session.client_id, session)
    samples, default_plts = [], []
    default_id = config_space.default_config_id()
    for client_id in sorted(first):
        session = first[client_id]
        website = websites[session.website_id]
        observed = session.phases[0].condition
        factors = rng.uniform(1.0 - fuzz, 1.0 + fuzz, size=3)
        condition = clamp_condition(observed.bandwidth_kbps * factors[0], observed.rtt_ms * factors[1],
                                    observed.loss_rate * factors[2])
        samples.append(features_for(condition, website, mask))
        if k == 0:
            default_plts.append(plt_oracle.noiseless_plt_all(observed, website, oracle)[default_id])
    if not samples:
        raise ConfigError("workload has no sessions")
    if k == 0:
        k = netclass.choose_k(samples, default_plts, rng)
    k = min(k, len(samples))
    model = netclass.fit(samples, k, rng, mask)
    logger.info(f"Fitted {model.k} network classes on {len(samples)} clients "
                f"(features: {', '.join(model.feature_names)})")
    return model


@dataclass
class LiveSession:
    session: ClientSession
    website: Website
    features: FeatureVector
    class_id: int
    decision: Decision
    route: Optional[SessionRoute]
    arm: str = ''
    configs: List[int] = field(default_factory=list)
    plts: List[float] = field(default_factory=list)
    defaults: List[float] = field(default_factory=list)
    optimals: List[float] = field(default_factory=list)


class ExperimentRunner:
    """One deterministic event loop over a run's sessions."""

    def __init__(self, cfg: ExperimentConfig):
        cfg.validate()
        self.cfg = cfg
        self.kind = cfg.kind
        self.sessions = load_sessions(cfg)
        self.websites = cfg.workload.website_map()
        self.tensor: Optional[plt_oracle.PLTTensor] = None
        if cfg.tensor_path is not None:
            self.tensor = plt_oracle.PLTTensor.load(cfg.tensor_path)
            for website in self.tensor.websites:
                self.websites.setdefault(website.website_id, website)
        missing = sorted({s.website_id for s in self.sessions} - set(self.websites))
        if missing:
            raise ConfigError(f"Sessions reference unknown websites: {missing}")

        self.mask = cfg.mask
        self.knobs = tuple(cfg.knob_mask) if cfg.knob_mask is not None else None
        self.candidate_ids = config_space.restricted_ids(self.knobs)
        self.default_id = config_space.default_config_id()
        self.oracle = cfg.oracle
        self.drifted = False

        self.estimator = HistoricalEstimator(cfg.estimator_alpha, cfg.estimator_fuzz, self._stream(STREAM_ESTIMATE))
        self.decide_rng = self._stream(STREAM_DECISIONS)
        self.noise_rng = self._stream(STREAM_NOISE)

        self.nc_model = fit_classes(self.sessions, self.websites, self.mask, cfg.nc_k, cfg.estimator_fuzz,
                                    self._stream(STREAM_CLASSES), cfg.oracle)
        self.nc_rules = netclass.export_rules(self.nc_model)
        ranked = None
        if cfg.ensemble.bootstrap == 'ranked':
            ranked = tuple(plt_oracle.ranked_config_ids(list(self.websites.values()), cfg.oracle,
                                                        candidate_ids=self.candidate_ids))
        self.options = StrategyOptions(
            ensemble=cfg.ensemble, tree=cfg.tree, oracle=cfg.oracle, feature_mask=self.mask,
            knobs=self.knobs, cherrypick_init_sample=cfg.cherrypick_init_sample,
            cherrypick_ei_threshold=cfg.cherrypick_ei_threshold, mab_epsilon0=cfg.mab_epsilon0,
            ranked_ids=ranked,
        )
        self.topology = Topology(cfg.topology, cfg.pop_count, cfg.delay_ms, cfg.update_interval_ms)
        self.plane = ControlPlane(self.topology, self._make_learner, self.nc_model, self.nc_rules,
                                  cfg.spread_threshold)

        self.results: List[SessionResult] = []
        self.decisions: List[List[Any]] = []

    def _stream(self, purpose: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, purpose])

    def _make_learner(self, manager_id: int) -> Strategy:
        strategy = make_strategy(self.kind, self.options, self.cfg.seed * 1000 + manager_id)
        if isinstance(strategy, OptimalStrategy):
            strategy.evaluator = self.plt_vector
        return strategy

    def plt_vector(self, condition: NetworkCondition, website: Website) -> np.ndarray:
        """Noiseless PLT of every config under the active oracle."""
        if self.tensor is not None and not self.drifted:
            return self.tensor.cell_vector(self.tensor.grid.nearest_cell(condition), website.website_id)
        return plt_oracle.noiseless_plt_all(condition, website, self.oracle)

    def _check_drift(self, now_ms: int) -> None:
        if self.drifted or self.cfg.drift_at_ms is None or now_ms < self.cfg.drift_at_ms:
            return
        self.drifted = True
        self.oracle = self.cfg.drifted_oracle()
        self.plane.log(now_ms, 'drift', json.dumps(dict(sorted(self.cfg.drift_params.items())), sort_keys=True))
        logger.info(f"Oracle drift injected at {now_ms} ms: {self.cfg.drift_params}")

    def _log_decision(self, ts_ms: int, live: LiveSession, decision: Decision) -> None:
        self.decisions.append([ts_ms, live.session.client_id, live.class_id, decision.config_id,
                               decision.arm, decision.class_step])

    def _arrival(self, now_ms: int, index: int, queue: EventQueue) -> None:
        session = self.sessions[index]
        website = self.websites[session.website_id]
        first = session.phases[0].condition
        estimate = self.estimator.estimate(session.client_id, first)
        features = features_for(estimate, website, self.mask)
        agent = self.plane.agent_for(session.client_id, session.pop)
        strategy: Strategy = agent.manager.learner
        class_id = agent.manager.classify(features)

        route = None
        if strategy.needs_rules:
            result = agent.lookup(features, session.client_id, now_ms)
            route = SessionRoute(agent, result.class_id, result.version, result.rule_config_id)
            if result.source == Source.RULE:
                ctx = DecisionContext(session.client_id, result.class_id, features, website, first, now_ms)
                decision = strategy.decide(ctx, self.decide_rng)
            else:
                decision = Decision(self.default_id, DEFAULT)
        else:
            ctx = DecisionContext(session.client_id, None, features, website, first, now_ms)
            decision = strategy.decide(ctx, self.decide_rng)

        live = LiveSession(session, website, features, class_id, decision, route, str(decision.arm))
        self._log_decision(now_ms, live, decision)
        self._run_phase(now_ms, live, 0)
        for phase_index, start in enumerate(session.phase_starts[1:], start=1):
            queue.push(start, EventKind.PHASE_START, (live, phase_index))

    def _phase_start(self, now_ms: int, live: LiveSession, phase_index: int) -> None:
        condition = live.session.phases[phase_index].condition
        strategy: Strategy = self.plane.agent_for(live.session.client_id, live.session.pop).manager.learner
        ctx = DecisionContext(live.session.client_id, live.class_id, live.features, live.website, condition, now_ms)
        updated = strategy.decide_phase(ctx, live.decision)
        if updated is None and live.route is not None:
            change = reconfigure_midsession(live.route, live.features, now_ms)
            if change is not None:
                updated = Decision(change.new_config_id, MIDSESSION_ARM, live.decision.class_step)
                self.plane.log(now_ms, 'reconfigure', f"client={live.session.client_id} class={change.class_id} "
                                                      f"config={change.old_config_id}->{change.new_config_id} "
                                                      f"version={change.version}")
        if updated is not None:
            live.decision = Decision(updated.config_id, updated.arm, updated.class_step)
            self._log_decision(now_ms, live, updated)
        self._run_phase(now_ms, live, phase_index)

    def _run_phase(self, now_ms: int, live: LiveSession, phase_index: int) -> None:
        self._check_drift(now_ms)
        session = live.session
        condition = session.phases[phase_index].condition
        values = self.plt_vector(condition, live.website)
        # One noise draw scales realized, default and optimal alike
        noise = plt_oracle.noise_factor(self.oracle, self.noise_rng)
        config_id = live.decision.config_id
        realized = float(values[config_id]) * noise
        live.configs.append(config_id)
        live.plts.append(realized)
        live.defaults.append(float(values[self.default_id]) * noise)
        live.optimals.append(float(values[self.candidate_ids].min()) * noise)

        sample = PerformanceSample(session.client_id, live.class_id, live.features, session.website_id,
                                   config_id, realized, now_ms, str(live.decision.arm))
        agent = self.plane.agent_for(session.client_id, session.pop)
        agent.report_telemetry([sample], now_ms + int(math.ceil(realized)))
        self.estimator.observe(session.client_id, condition)

        if phase_index == len(session.phases) - 1:
            self._finish(live)

    def _finish(self, live: LiveSession) -> None:
        session = live.session
        weights = np.array([p.duration_ms for p in session.phases], dtype=float)
        weights /= weights.sum()
        self.results.append(SessionResult(
            ts_ms=session.arrival_ms,
            client_id=session.client_id,
            class_id=live.class_id,
            website_id=session.website_id,
            algo=self.kind,
            arm=live.arm,
            config_ids=tuple(live.configs),
            plt_ms=float(weights @ np.array(live.plts)),
            default_plt_ms=float(weights @ np.array(live.defaults)),
            optimal_plt_ms=float(weights @ np.array(live.optimals)),
        ))

    def _has_pending_work(self, queue: EventQueue) -> bool:
        return bool(queue) or any(m.pending for m in self.plane.managers)

    def run(self) -> List[SessionResult]:
        logger.info(f"Run {self.kind}: {len(self.sessions)} sessions, seed {self.cfg.seed}, "
                    f"topology {self.topology.mode}, delay {self.topology.delay_ms} ms, "
                    f"update interval {self.topology.update_interval_ms} ms")
        queue = EventQueue()
        for index, session in enumerate(self.sessions):
            queue.push(session.arrival_ms, EventKind.ARRIVAL, index)
        queue.push(self.topology.update_interval_ms, EventKind.TICK)

        while queue:
            now_ms, kind, payload = queue.pop()
            if kind == EventKind.TICK:
                self.plane.tick(now_ms, queue)
                if self._has_pending_work(queue):
                    queue.push(now_ms + self.topology.update_interval_ms, EventKind.TICK)
            elif kind == EventKind.DELIVERY:
                agent, rule_map = payload
                self.plane.deliver(now_ms, agent, rule_map)
            elif kind == EventKind.PHASE_START:
                live, phase_index = payload
                self._phase_start(now_ms, live, phase_index)
            else:
                self._arrival(now_ms, payload, queue)

        self.results.sort(key=lambda r: (r.ts_ms, r.client_id))
        if len(self.results) != len(self.sessions):
            raise LabError(f"{len(self.sessions)} sessions produced {len(self.results)} results")
        return self.results

    def frames(self) -> Dict[str, pd.DataFrame]:
        results = pd.DataFrame([r.row() for r in self.results], columns=RESULTS_COLUMNS)
        decisions = pd.DataFrame(self.decisions, columns=DECISIONS_COLUMNS)
        events = pd.DataFrame(self.plane.events, columns=EVENTS_COLUMNS)
        updates = pd.DataFrame([[u.ts_ms, u.manager_id, u.version, u.processed_samples, u.classes]
                                for u in self.plane.update_records], columns=UPDATES_COLUMNS)
        return {'results': results, 'decisions': decisions, 'events': events, 'updates': updates}

    def write(self, output: Union[str, Path]) -> Path:
        output = Path(output)
        output.parent.mkdir(parents=True, exist_ok=True)
        frames = self.frames()
        frames['results'].to_csv(output, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        for name in ('decisions', 'events', 'updates'):
            frames[name].to_csv(sidecar_path(output, name), index=False, lineterminator='\n')
        meta = {
            'config': self.cfg.to_dict(),
            'config_hash': self.cfg.config_hash(),
            'seed': self.cfg.seed,
            'sessions': len(self.results),
            'classes': self.nc_model.k,
            'updates': len(frames['updates']),
        }
        with open(sidecar_path(output, 'meta', '.json'), 'w', encoding='utf-8') as f:
            json.dump(meta, f, indent=2, sort_keys=True)
        return output


def sidecar_path(output: Union[str, Path], name: str, suffix: str = '.csv') -> Path:
    output = Path(output)
    return output.with_name(f"{output.stem}.{name}{suffix}")


def improvement_percentiles(results: Sequence[SessionResult]) -> Tuple[float, float]:
    improvements = np.array([r.improvement for r in results])
    if len(improvements) == 0:
        return 0.0, 0.0
    values = dict(zip(PERCENTILES, percentiles(improvements)))
    return values[50], values[95]


def run_experiment(cfg: ExperimentConfig) -> RunSummary:
    """
    Run one experiment and write its files.

    Raises:
        ConfigError: invalid configuration, before any file is written
    """
    runner = ExperimentRunner(cfg)
    results = runner.run()
    output = runner.write(cfg.output)
    median, p95 = improvement_percentiles(results)
    summary = RunSummary(cfg.config_hash(), output, len(results), len(runner.plane.update_records), median, p95)
    logger.info(f"Run {runner.kind} finished: {summary.session_count} sessions, {summary.update_count} updates, "
                f"median improvement {median:.2%}, p95 {p95:.2%} -> {output}")
    return summary


def _variant_output(output: str, label: str) -> str:
    path = Path(output)
    safe = label.replace(',', '+').replace(' ', '') or 'none'
    return str(path.with_name(f"{path.stem}.{safe}{path.suffix or '.csv'}"))


def ablate(cfg: ExperimentConfig, axis: str, subsets: Sequence[Optional[Sequence[str]]]) -> pd.DataFrame:
    """
    One run per feature or knob subset on a shared seed and workload.

    Knob subsets restrict both the learners' space and the optimal column's
    argmin domain; knobs outside the subset stay at their defaults.
    """
    if axis not in ABLATION_AXES:
        raise ConfigError(f"axis must be one of {ABLATION_AXES}")
    rows = []
    for subset in subsets:
        names = tuple(subset) if subset is not None else None
        label = ','.join(names) if names is not None else 'all'
        if axis == 'features':
            variant = replace(cfg, feature_mask=names, output=_variant_output(cfg.output, f"features-{label}"))
        else:
            variant = replace(cfg, knob_mask=names, output=_variant_output(cfg.output, f"knobs-{label}"))
        variant.validate()
        rows.append(_summary_row(axis, label, variant))
    return pd.DataFrame(rows)


def sweep(cfg: ExperimentConfig, parameter: str, values: Sequence[Any]) -> pd.DataFrame:
    """Sensitivity runs over one control-plane or ensemble parameter."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(f"parameter must be one of {SWEEP_PARAMETERS}")
    rows = []
    for value in values:
        label = f"{parameter}-{value}"
        if parameter == 'epsilon':
            variant = replace(cfg, ensemble=replace(cfg.ensemble, epsilon=float(value)))
        elif parameter == 'topology':
            variant = replace(cfg, topology=str(value))
        else:
            variant = replace(cfg, **{parameter: int(value)})
        variant = replace(variant, output=_variant_output(cfg.output, label))
        variant.validate()
        rows.append(_summary_row(parameter, str(value), variant))
    return pd.DataFrame(rows)


def _summary_row(axis: str, label: str, variant: ExperimentConfig) -> Dict[str, Any]:
    runner = ExperimentRunner(variant)
    results = runner.run()
    runner.write(variant.output)
    improvements = np.array([r.improvement for r in results])
    row = {'axis': axis, 'value': label, 'sessions': len(results), 'output': variant.output}
    row.update({f"p{q}": v for q, v in zip(PERCENTILES, percentiles(improvements))})
    logger.info(f"{axis}={label}: median improvement {row['p50']:.2%}")
    return row


def _steps_to_within(trace: Sequence[float], optimum: float, tolerance: float = 0.05) -> int:
    for step, value in enumerate(trace, start=1):
        if value <= optimum * (1.0 + tolerance):
            return step
    return len(trace) + 1


def bootstrap_study(class_count: int = 200, seed: int = 0, kinds: Sequence[str] = ('lhc', 'random', 'ranked'),
                    workload: Optional[WorkloadSpec] = None,
                    oracle: Optional[plt_oracle.OracleParams] = None,
                    ensemble: EnsembleParams = EnsembleParams(),
                    max_steps: Optional[int] = None) -> pd.DataFrame:
    """
    GP search per seeded (condition, website) class against the noiseless
    oracle for each bootstrap kind.

    Returns one row per (class, kind) with the observations until the EI rule
    stopped and until the incumbent came within 5% of the optimum.
    """
    workload = workload or WorkloadSpec()
    oracle = (oracle or plt_oracle.OracleParams()).without_noise()
    websites = list(workload.websites)
    if not websites:
        raise ConfigError("Workload website catalog is empty")
    unknown = [k for k in kinds if k not in ('lhc', 'random', 'ranked')]
    if unknown:
        raise ConfigError(f"Unknown bootstrap kinds: {unknown}")
    ranked = plt_oracle.ranked_config_ids(websites, oracle) if 'ranked' in kinds else None
    gp_params = ensemble.gp_params()
    limit = max_steps or config_space.SPACE_SIZE

    rows = []
    for index in range(class_count):
        rng = np.random.default_rng([seed, index])
        condition = clamp_condition(workload.bandwidth.sample(rng), workload.rtt.sample(rng),
                                    workload.loss.sample(rng))
        website = websites[int(rng.integers(len(websites)))]
        values = plt_oracle.noiseless_plt_all(condition, website, oracle)
        optimum = float(values.min())
        for kind in kinds:
            kind_rng = np.random.default_rng([seed, index, 1])
            k = gp_params.init_sample
            if kind == 'lhc':
                bootstrap = [c.config_id for c in config_space.lhc_sample(k, kind_rng)]
            elif kind == 'random':
                bootstrap = [c.config_id for c in config_space.random_sample(k, kind_rng)]
            else:
                bootstrap = list(ranked[:k])
            search = GPSearch(gp_params, bootstrap=bootstrap)
            incumbent_trace = []
            while search.steps < limit:
                if not search.bootstrapping and search.check_stop():
                    break
                trial = search.next_trial()
                if trial is None:
                    break
                search.observe(trial[0], float(values[trial[0]]))
                incumbent_trace.append(float(values[search.incumbent()]))
            rows.append({
                'class': index,
                'bootstrap': kind,
                'website_id': website.website_id,
                'steps_to_stop': search.state.observation_count,
                'steps_to_within_5pct': _steps_to_within(incumbent_trace, optimum),
                'final_gap': incumbent_trace[-1] / optimum - 1.0 if incumbent_trace else math.inf,
            })
    frame = pd.DataFrame(rows)
    medians = frame.groupby('bootstrap')[['steps_to_stop', 'steps_to_within_5pct']].median()
    logger.info(f"Bootstrap study over {class_count} classes:\n{medians.to_string()}")
    return frame


def summarize_bootstrap_study(frame: pd.DataFrame) -> pd.DataFrame:
    return (frame.groupby('bootstrap')[['steps_to_stop', 'steps_to_within_5pct', 'final_gap']]
            .median().reset_index())
