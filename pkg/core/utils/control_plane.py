"""
Simulated Configuration Manager / Configuration Agent pair.

Managers learn in a slow loop (one model update per tick) and push versioned
rule maps; agents answer lookups from exactly one immutable snapshot, fall
back to the default configuration on a miss and queue the miss for the next
manager tick. All transport is the simulator's event queue with a scalar
propagation delay.
"""

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple

from . import config_space
from .exceptions import ConfigError, VersionRegressionError
from .netclass import FeatureVector, NCModel, class_spread, import_rules
from .workload import pop_for_client

logger = logging.getLogger(__name__)

GLOBAL = 'global'
LOCAL = 'local'
TOPOLOGY_MODES = (GLOBAL, LOCAL)


@dataclass(frozen=True)
class RuleEntry:
    version: int
    config_id: int


@dataclass(frozen=True, eq=False)
class RuleMap:
    """Immutable rule snapshot; every decision entry embeds the map's version."""
    version: int
    nc_rules: Optional[Dict[str, Any]] = None
    decisions: Dict[int, RuleEntry] = field(default_factory=dict)
    tree: Optional[Dict[str, Any]] = None
    published_ms: int = 0
    manager_id: int = 0

    @classmethod
    def empty(cls) -> 'RuleMap':
        return cls(version=0)

    @classmethod
    def from_update(cls, version: int, nc_rules: Optional[Dict[str, Any]], decisions: Dict[int, int],
                    tree: Optional[Dict[str, Any]], published_ms: int, manager_id: int = 0) -> 'RuleMap':
        entries = {int(cid): RuleEntry(version, int(config_id)) for cid, config_id in decisions.items()}
        return cls(version, nc_rules, entries, tree, published_ms, manager_id)

    @property
    def is_empty(self) -> bool:
        return self.nc_rules is None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'version': self.version,
            'published_ms': self.published_ms,
            'nc_rules': self.nc_rules,
            'decisions': {str(cid): e.config_id for cid, e in sorted(self.decisions.items())},
            'tree': self.tree,
        }


@dataclass(frozen=True)
class Topology:
    mode: str = GLOBAL
    pop_count: int = 1
    delay_ms: int = 0
    update_interval_ms: int = 120000

    def __post_init__(self):
        if self.mode not in TOPOLOGY_MODES:
            raise ConfigError(f"topology must be one of {TOPOLOGY_MODES}")
        if self.delay_ms < 0:
            raise ConfigError("propagation delay must be non-negative")
        if self.update_interval_ms <= 0:
            raise ConfigError("update interval must be positive")
        if self.pop_count < 1:
            raise ConfigError("pop_count must be positive")

    def pop_of(self, client_id: str, session_pop: Optional[int] = None) -> int:
        if session_pop is not None:
            return session_pop % self.pop_count
        return pop_for_client(client_id, self.pop_count)


class Source(str, Enum):
    RULE = 'Rule'
    DEFAULT = 'Default'


@dataclass(frozen=True)
class LookupResult:
    config_id: int
    source: str
    class_id: Optional[int]
    version: int
    rule_config_id: Optional[int] = None


@dataclass(frozen=True)
class PendingQuery:
    client_id: str
    features: FeatureVector
    ts_ms: int


class ConfigAgent:
    """Front-end agent of one PoP."""

    def __init__(self, agent_id: int, manager: 'ConfigManager'):
        self.agent_id = agent_id
        self.manager = manager
        self.snapshot = RuleMap.empty()
        self._model: Optional[NCModel] = None
        self.pending_queries: Dict[str, PendingQuery] = {}
        self.lookups = 0
        self.default_hits = 0

    @property
    def version(self) -> int:
        return self.snapshot.version

    def classify(self, features: FeatureVector) -> Optional[int]:
        if self._model is None:
            return None
        return self._model.classify(features)

    def lookup(self, features: FeatureVector, client_id: str = '', now_ms: int = 0) -> LookupResult:
        """Serve from the current snapshot; on a miss serve the default and queue a query."""
        snapshot = self.snapshot
        self.lookups += 1
        class_id = self.classify(features)
        entry = snapshot.decisions.get(class_id) if class_id is not None else None
        if entry is not None:
            assert entry.version == snapshot.version
            return LookupResult(entry.config_id, Source.RULE, class_id, snapshot.version, entry.config_id)
        self.default_hits += 1
        if client_id not in self.pending_queries:
            query = PendingQuery(client_id, features, now_ms)
            self.pending_queries[client_id] = query
            self.manager.receive_query(query, now_ms + self.manager.delay_ms)
        return LookupResult(config_space.default_config_id(), Source.DEFAULT, class_id, snapshot.version)

    def install(self, rule_map: RuleMap) -> None:
        if rule_map.version <= self.snapshot.version:
            raise VersionRegressionError(
                f"agent {self.agent_id}: version {rule_map.version} does not advance {self.snapshot.version}")
        self._model = import_rules(rule_map.nc_rules) if rule_map.nc_rules is not None else None
        self.snapshot = rule_map
        self.pending_queries.clear()

    def report_telemetry(self, samples: Sequence[Any], sent_ms: int) -> None:
        for sample in samples:
            self.manager.receive_sample(sample, sent_ms + self.manager.delay_ms)

    @property
    def default_rate(self) -> float:
        return self.default_hits / self.lookups if self.lookups else 0.0


class Learner(Protocol):
    def feedback(self, sample: Any) -> None: ...

    def ensure_class(self, class_id: int) -> None: ...

    def update_models(self) -> Any: ...


@dataclass(frozen=True)
class UpdateRecord:
    ts_ms: int
    manager_id: int
    version: int
    processed_samples: int
    classes: int


class ConfigManager:
    """
    Slow-loop learner host.

    Telemetry and queries arrive in an inbox stamped with their arrival time
    and are only applied when a tick drains them.
    """

    def __init__(self, manager_id: int, learner: Learner, nc_model: Optional[NCModel],
                 nc_rules: Optional[Dict[str, Any]], delay_ms: int = 0, spread_threshold: float = 0.25):
        self.manager_id = manager_id
        self.learner = learner
        self.nc_model = nc_model
        self.nc_rules = nc_rules
        self.delay_ms = delay_ms
        self.spread_threshold = spread_threshold
        self.agents: List[ConfigAgent] = []
        self._inbox: List[Tuple[int, int, str, Any]] = []
        self._seq = itertools.count()
        self.updates: List[UpdateRecord] = []
        self.published: Optional[RuleMap] = None
        self._spread_window: List[Tuple[int, float]] = []
        self.diverging: List[int] = []

    @property
    def pending(self) -> int:
        return len(self._inbox)

    def receive_sample(self, sample: Any, arrival_ms: int) -> None:
        heapq.heappush(self._inbox, (arrival_ms, next(self._seq), 'sample', sample))

    def receive_query(self, query: PendingQuery, arrival_ms: int) -> None:
        heapq.heappush(self._inbox, (arrival_ms, next(self._seq), 'query', query))

    def classify(self, features: FeatureVector) -> int:
        return self.nc_model.classify(features) if self.nc_model is not None else 0

    def drain(self, now_ms: int) -> Tuple[int, int]:
        samples = queries = 0
        while self._inbox and self._inbox[0][0] <= now_ms:
            _, _, kind, payload = heapq.heappop(self._inbox)
            if kind == 'sample':
                self.learner.feedback(payload)
                samples += 1
                if payload.config_id == config_space.default_config_id():
                    self._spread_window.append((payload.class_id, payload.plt_ms))
            else:
                self.learner.ensure_class(self.classify(payload.features))
                queries += 1
        return samples, queries

    def tick(self, now_ms: int) -> Optional[RuleMap]:
        """Drain the inbox; publish a new rule map iff telemetry arrived since the last tick."""
        samples, queries = self.drain(now_ms)
        if samples == 0:
            return None
        update = self.learner.update_models()
        tree = update.tree.to_dict() if getattr(update, 'tree', None) is not None else None
        rule_map = RuleMap.from_update(update.version, self.nc_rules, update.decisions, tree, now_ms, self.manager_id)
        if self.published is not None and rule_map.version <= self.published.version:
            raise VersionRegressionError(f"manager {self.manager_id} produced non-increasing version {rule_map.version}")
        self.published = rule_map
        self.updates.append(UpdateRecord(now_ms, self.manager_id, rule_map.version, samples, len(update.decisions)))
        logger.info(f"Manager {self.manager_id} update v{rule_map.version} at {now_ms} ms: "
                    f"{samples} samples, {queries} queries, {len(update.decisions)} class decisions")
        self._check_spread()
        return rule_map

    def _check_spread(self) -> None:
        self._spread_window = self._spread_window[-2000:]
        if len(self._spread_window) < 2:
            return
        class_ids, plts = zip(*self._spread_window)
        _, diverging = class_spread(class_ids, plts, self.spread_threshold)
        if diverging != self.diverging:
            if diverging:
                logger.warning(f"Manager {self.manager_id}: classes with diverging default PLT: {diverging}")
            self.diverging = diverging

    def push_rules(self, rule_map: RuleMap, now_ms: int) -> List[Tuple[int, ConfigAgent, RuleMap]]:
        """Delivery events (time, agent, map) for every attached agent."""
        return [(now_ms + self.delay_ms, agent, rule_map) for agent in self.agents]


class EventKind(IntEnum):
    # Same-time ordering: ticks publish, deliveries install, then sessions run.
    TICK = 0
    DELIVERY = 1
    PHASE_START = 2
    ARRIVAL = 3


class EventQueue:
    """Min-heap of (time, kind, seq) events; seq keeps insertion order among equals."""

    def __init__(self):
        self._heap: List[Tuple[int, int, int, Any]] = []
        self._seq = itertools.count()

    def push(self, time_ms: int, kind: EventKind, payload: Any = None) -> None:
        heapq.heappush(self._heap, (int(time_ms), int(kind), next(self._seq), payload))

    def pop(self) -> Tuple[int, EventKind, Any]:
        time_ms, kind, _, payload = heapq.heappop(self._heap)
        return time_ms, EventKind(kind), payload

    def __len__(self):
        return len(self._heap)

    def __bool__(self):
        return bool(self._heap)


@dataclass
class SessionRoute:
    """What the agent answered when a session started, for mid-session updates."""
    agent: ConfigAgent
    class_id: Optional[int]
    version: int
    rule_config_id: Optional[int]


@dataclass(frozen=True)
class ConfigChange:
    ts_ms: int
    class_id: int
    old_config_id: Optional[int]
    new_config_id: int
    version: int


def reconfigure_midsession(route: SessionRoute, features: FeatureVector, now_ms: int) -> Optional[ConfigChange]:
    """
    Apply a newer snapshot to a live session.

    Emits a change only when the agent's snapshot advanced past the one the
    session started under and the class decision differs.
    """
    agent = route.agent
    snapshot = agent.snapshot
    if snapshot.version == route.version:
        return None
    class_id = agent.classify(features)
    if class_id is None:
        return None
    entry = snapshot.decisions.get(class_id)
    route.version = snapshot.version
    if entry is None or entry.config_id == route.rule_config_id:
        return None
    change = ConfigChange(now_ms, class_id, route.rule_config_id, entry.config_id, snapshot.version)
    route.class_id = class_id
    route.rule_config_id = entry.config_id
    return change


class ControlPlane:
    """
    Managers and agents wired per topology.

    Global: one manager serves every PoP's agent. LocalPerPop: one manager per
    PoP, each with its own learner built by ``learner_factory(pop)``.
    """

    def __init__(self, topology: Topology, learner_factory: Callable[[int], Learner],
                 nc_model: Optional[NCModel] = None, nc_rules: Optional[Dict[str, Any]] = None,
                 spread_threshold: float = 0.25):
        self.topology = topology
        self.managers: List[ConfigManager] = []
        self.agents: List[ConfigAgent] = []
        self.events: List[Tuple[int, str, str]] = []
        manager_count = 1 if topology.mode == GLOBAL else topology.pop_count
        for manager_id in range(manager_count):
            self.managers.append(ConfigManager(manager_id, learner_factory(manager_id), nc_model, nc_rules,
                                               topology.delay_ms, spread_threshold))
        for pop in range(topology.pop_count):
            manager = self.managers[0] if topology.mode == GLOBAL else self.managers[pop]
            agent = ConfigAgent(pop, manager)
            manager.agents.append(agent)
            self.agents.append(agent)

    def agent_for(self, client_id: str, session_pop: Optional[int] = None) -> ConfigAgent:
        return self.agents[self.topology.pop_of(client_id, session_pop)]

    def log(self, ts_ms: int, event: str, detail: str) -> None:
        self.events.append((ts_ms, event, detail))

    def tick(self, now_ms: int, queue: EventQueue) -> List[RuleMap]:
        published = []
        for manager in self.managers:
            rule_map = manager.tick(now_ms)
            if rule_map is None:
                continue
            published.append(rule_map)
            self.log(now_ms, 'publish', f"manager={manager.manager_id} version={rule_map.version} "
                                        f"classes={len(rule_map.decisions)}")
            for time_ms, agent, payload in manager.push_rules(rule_map, now_ms):
                queue.push(time_ms, EventKind.DELIVERY, (agent, payload))
        return published

    def deliver(self, now_ms: int, agent: ConfigAgent, rule_map: RuleMap) -> None:
        agent.install(rule_map)
        self.log(now_ms, 'install', f"agent={agent.agent_id} version={rule_map.version}")

    @property
    def update_records(self) -> List[UpdateRecord]:
        return sorted((r for m in self.managers for r in m.updates), key=lambda r: (r.ts_ms, r.manager_id))
