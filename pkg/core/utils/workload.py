"""
Client session workloads.

Sessions come either from trace files or from distribution-driven synthesis.
Noisy condition time series are segmented into phases with Bayesian online
changepoint detection (constant hazard, Gaussian observations with a
normal-inverse-gamma prior).
"""

import csv
import json
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .exceptions import ConfigError, TraceFormatError

logger = logging.getLogger(__name__)

TRACE_HEADER = ['client_id', 'arrival_ms', 'website_id', 'phase_start_ms',
                'bandwidth_kbps', 'rtt_ms', 'loss_rate']

MAX_LOSS_RATE = 0.5
BANDWIDTH_RANGE = (50.0, 1_000_000.0)
RTT_RANGE = (1.0, 5000.0)


@dataclass(frozen=True)
class NetworkCondition:
    bandwidth_kbps: float
    rtt_ms: float
    loss_rate: float

    def __post_init__(self):
        for name in ('bandwidth_kbps', 'rtt_ms', 'loss_rate'):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
        if self.bandwidth_kbps <= 0:
            raise ValueError("bandwidth_kbps must be positive")
        if self.rtt_ms <= 0:
            raise ValueError("rtt_ms must be positive")
        if not 0.0 <= self.loss_rate <= MAX_LOSS_RATE:
            raise ValueError("loss_rate out of range")

    def scaled(self, bandwidth: float = 1.0, rtt: float = 1.0, loss: float = 1.0) -> 'NetworkCondition':
        return clamp_condition(self.bandwidth_kbps * bandwidth, self.rtt_ms * rtt, self.loss_rate * loss)


def clamp_condition(bandwidth_kbps: float, rtt_ms: float, loss_rate: float) -> NetworkCondition:
    return NetworkCondition(
        bandwidth_kbps=float(np.clip(bandwidth_kbps, *BANDWIDTH_RANGE)),
        rtt_ms=float(np.clip(rtt_ms, *RTT_RANGE)),
        loss_rate=float(np.clip(loss_rate, 0.0, MAX_LOSS_RATE)),
    )


class Phase(NamedTuple):
    condition: NetworkCondition
    duration_ms: int


@dataclass(frozen=True)
class ClientSession:
    client_id: str
    website_id: str
    arrival_ms: int
    phases: Tuple[Phase, ...]
    pop: Optional[int] = None

    def __post_init__(self):
        if not self.phases:
            raise ValueError("session needs at least one phase")
        for phase in self.phases:
            if phase.duration_ms <= 0:
                raise ValueError("phase durations must be positive")

    @property
    def phase_starts(self) -> List[int]:
        starts, t = [], self.arrival_ms
        for phase in self.phases:
            starts.append(t)
            t += phase.duration_ms
        return starts

    @property
    def end_ms(self) -> int:
        return self.arrival_ms + sum(p.duration_ms for p in self.phases)

    @property
    def total_duration_ms(self) -> int:
        return self.end_ms - self.arrival_ms


@dataclass(frozen=True)
class Website:
    website_id: str
    object_count: int
    avg_object_bytes: int
    html_bytes: int
    category: str = 'generic'

    def __post_init__(self):
        if self.object_count < 1:
            raise ValueError("object_count must be >= 1")
        if self.avg_object_bytes <= 0 or self.html_bytes <= 0:
            raise ValueError("byte sizes must be positive")

    @property
    def complexity(self) -> float:
        return float(self.object_count * self.avg_object_bytes)

    @property
    def total_bytes(self) -> int:
        return self.html_bytes + self.object_count * self.avg_object_bytes


def default_catalog() -> List[Website]:
    """Small corpus spanning simple to heavy pages."""
    return [
        Website('landing', 1, 1, 14600, 'minimal'),
        Website('blog', 12, 1500, 30000, 'text'),
        Website('search', 8, 6000, 45000, 'text'),
        Website('news', 90, 9000, 80000, 'media'),
        Website('shop', 60, 1800, 60000, 'commerce'),
        Website('video', 25, 60000, 40000, 'media'),
        Website('social', 140, 1200, 120000, 'social'),
        Website('docs', 4, 25000, 20000, 'text'),
    ]


def website_from_dict(data: Dict[str, Any]) -> Website:
    return Website(
        website_id=str(data['website_id']),
        object_count=int(data['object_count']),
        avg_object_bytes=int(data['avg_object_bytes']),
        html_bytes=int(data['html_bytes']),
        category=str(data.get('category', 'generic')),
    )


@dataclass(frozen=True)
class Distribution:
    """
    Sampling distribution for one scalar dimension.

    kind: lognormal (mu, sigma) | uniform (a, b) | empirical (values) |
    exponential (mean) | constant (value)
    """
    kind: str
    params: Tuple[float, ...] = ()

    KINDS = ('lognormal', 'uniform', 'empirical', 'exponential', 'constant')

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigError(f"Unknown distribution kind '{self.kind}'")
        object.__setattr__(self, 'params', tuple(float(p) for p in self.params))
        expected = {'lognormal': 2, 'uniform': 2, 'exponential': 1, 'constant': 1}
        if self.kind in expected and len(self.params) != expected[self.kind]:
            raise ConfigError(f"{self.kind} distribution takes {expected[self.kind]} parameters")
        if self.kind == 'empirical' and not self.params:
            raise ConfigError("empirical distribution needs at least one value")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == 'lognormal':
            return float(rng.lognormal(self.params[0], self.params[1]))
        if self.kind == 'uniform':
            return float(rng.uniform(self.params[0], self.params[1]))
        if self.kind == 'exponential':
            return float(rng.exponential(self.params[0]))
        if self.kind == 'empirical':
            return float(self.params[int(rng.integers(len(self.params)))])
        return self.params[0]

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'params': list(self.params)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Distribution':
        return cls(kind=data['kind'], params=tuple(data.get('params', ())))


@dataclass(frozen=True)
class RegionSpec:
    """Per-region condition distributions; the region index is the client's PoP."""
    name: str
    share: float
    bandwidth: Distribution
    rtt: Distribution
    loss: Distribution


@dataclass
class WorkloadSpec:
    bandwidth: Distribution = Distribution('lognormal', (math.log(6000), 1.1))
    rtt: Distribution = Distribution('lognormal', (math.log(60), 0.8))
    loss: Distribution = Distribution('lognormal', (math.log(0.004), 1.5))
    session_count: int = 1000
    client_count: int = 0
    arrival_rate_per_min: float = 500.0
    session_duration: Distribution = Distribution('uniform', (30000, 180000))
    change_time: Optional[Distribution] = Distribution('exponential', (240000,))
    perturbation_scale: float = 0.5
    session_jitter: float = 0.0
    websites: List[Website] = field(default_factory=default_catalog)
    regions: List[RegionSpec] = field(default_factory=list)
    seed: int = 42

    def __post_init__(self):
        if self.session_count < 0:
            raise ConfigError("session_count must be non-negative")
        if self.arrival_rate_per_min <= 0:
            raise ConfigError("arrival_rate_per_min must be positive")
        if self.perturbation_scale < 0 or self.session_jitter < 0:
            raise ConfigError("perturbation_scale and session_jitter must be non-negative")

    @property
    def effective_client_count(self) -> int:
        return self.client_count or max(1, self.session_count // 10)

    def website_map(self) -> Dict[str, Website]:
        return {w.website_id: w for w in self.websites}

    def to_dict(self) -> Dict[str, Any]:
        return {
            'bandwidth': self.bandwidth.to_dict(),
            'rtt': self.rtt.to_dict(),
            'loss': self.loss.to_dict(),
            'session_count': self.session_count,
            'client_count': self.client_count,
            'arrival_rate_per_min': self.arrival_rate_per_min,
            'session_duration': self.session_duration.to_dict(),
            'change_time': self.change_time.to_dict() if self.change_time else None,
            'perturbation_scale': self.perturbation_scale,
            'session_jitter': self.session_jitter,
            'websites': [asdict(w) for w in self.websites],
            'regions': [
                {'name': r.name, 'share': r.share, 'bandwidth': r.bandwidth.to_dict(),
                 'rtt': r.rtt.to_dict(), 'loss': r.loss.to_dict()}
                for r in self.regions
            ],
            'seed': self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'WorkloadSpec':
        kwargs: Dict[str, Any] = {}
        for name in ('bandwidth', 'rtt', 'loss', 'session_duration'):
            if name in data:
                kwargs[name] = Distribution.from_dict(data[name])
        if 'change_time' in data:
            kwargs['change_time'] = Distribution.from_dict(data['change_time']) if data['change_time'] else None
        for name in ('session_count', 'client_count', 'seed'):
            if name in data:
                kwargs[name] = int(data[name])
        for name in ('arrival_rate_per_min', 'perturbation_scale', 'session_jitter'):
            if name in data:
                kwargs[name] = float(data[name])
        if 'websites' in data:
            kwargs['websites'] = [website_from_dict(w) for w in data['websites']]
        if 'regions' in data:
            kwargs['regions'] = [
                RegionSpec(
                    name=r['name'], share=float(r['share']),
                    bandwidth=Distribution.from_dict(r['bandwidth']),
                    rtt=Distribution.from_dict(r['rtt']),
                    loss=Distribution.from_dict(r['loss']),
                )
                for r in data['regions']
            ]
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"Unknown workload fields: {sorted(unknown)}")
        return cls(**kwargs)

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'WorkloadSpec':
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return cls.from_dict(json.load(f))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
            raise ConfigError(f"Cannot load workload spec {path}: {e}") from e

    def save(self, path: Union[str, Path]) -> None:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)


def _draw_condition(rng: np.random.Generator, bandwidth: Distribution,
                    rtt: Distribution, loss: Distribution) -> NetworkCondition:
    return clamp_condition(bandwidth.sample(rng), rtt.sample(rng), loss.sample(rng))


def _perturb(rng: np.random.Generator, condition: NetworkCondition, scale: float) -> NetworkCondition:
    if scale == 0:
        return condition
    factors = np.exp(rng.normal(0.0, scale, size=3))
    return condition.scaled(*factors)


def generate_sessions(spec: WorkloadSpec) -> List[ClientSession]:
    """
    Synthesize client sessions from the spec's distributions.

    Clients get a base condition once; each session optionally jitters it
    (session_jitter, off by default), draws a horizon and, if the change time
    falls inside the horizon, a second phase whose condition is the first
    multiplied by per-dimension perturbation factors.
    """
    if not spec.websites:
        raise ConfigError("Workload website catalog is empty")

    rng = np.random.default_rng(spec.seed)
    client_count = spec.effective_client_count

    regions = spec.regions
    if regions:
        shares = np.array([r.share for r in regions], dtype=float)
        if shares.sum() <= 0:
            raise ConfigError("region shares must sum to a positive value")
        shares = shares / shares.sum()

    clients = []
    for index in range(client_count):
        if regions:
            pop = int(rng.choice(len(regions), p=shares))
            region = regions[pop]
            base = _draw_condition(rng, region.bandwidth, region.rtt, region.loss)
        else:
            pop = None
            base = _draw_condition(rng, spec.bandwidth, spec.rtt, spec.loss)
        clients.append((f"c{index:05d}", base, pop))

    mean_gap_ms = 60000.0 / spec.arrival_rate_per_min
    t = 0.0
    sessions = []
    for _ in range(spec.session_count):
        t += rng.exponential(mean_gap_ms)
        client_id, base, pop = clients[int(rng.integers(client_count))]
        website = spec.websites[int(rng.integers(len(spec.websites)))]
        pre = _perturb(rng, base, spec.session_jitter)
        horizon = max(1000, int(round(spec.session_duration.sample(rng))))
        phases = [Phase(pre, horizon)]
        if spec.change_time is not None:
            change_at = int(round(spec.change_time.sample(rng)))
            if 0 < change_at < horizon:
                post = _perturb(rng, pre, spec.perturbation_scale)
                phases = [Phase(pre, change_at), Phase(post, horizon - change_at)]
        sessions.append(ClientSession(client_id, website.website_id, int(t), tuple(phases), pop))

    two_phase = sum(1 for s in sessions if len(s.phases) > 1)
    logger.info(f"Generated {len(sessions)} sessions for {client_count} clients ({two_phase} with a network change)")
    return sessions


def _parse_float(raw: str, name: str, line_number: int) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise TraceFormatError(f"invalid {name} '{raw}'", line_number) from None
    if not math.isfinite(value):
        raise TraceFormatError(f"{name} must be finite", line_number)
    return value


def ingest_trace(path: Union[str, Path]) -> List[ClientSession]:
    """
    Read sessions from a trace CSV (one row per phase).

    Rows are grouped by (client_id, arrival_ms); phases are ordered by
    phase_start_ms and must be contiguous from arrival_ms. The last phase of a
    session lasts until the session's next-phase boundary is unknown, so its
    duration comes from the optional ``phase_end_ms`` column or defaults to the
    gap to the previous phase (60 s for single-phase sessions).
    """
    groups: Dict[Tuple[str, int], List[Tuple[int, str, NetworkCondition, int, Optional[int]]]] = {}
    order: List[Tuple[str, int]] = []
    header: Optional[List[str]] = None

    with open(path, 'r', encoding='utf-8', newline='') as f:
        for line_number, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith('#'):
                continue
            row = next(csv.reader([stripped]))
            if header is None:
                header = [c.strip() for c in row]
                missing = [c for c in TRACE_HEADER if c not in header]
                if missing:
                    raise TraceFormatError(f"missing columns {missing}", line_number)
                continue
            if len(row) != len(header):
                raise TraceFormatError(f"expected {len(header)} fields, got {len(row)}", line_number)
            record = dict(zip(header, (c.strip() for c in row)))
            client_id = record['client_id']
            if not client_id:
                raise TraceFormatError("empty client_id", line_number)
            arrival = int(_parse_float(record['arrival_ms'], 'arrival_ms', line_number))
            start = int(_parse_float(record['phase_start_ms'], 'phase_start_ms', line_number))
            end = None
            if record.get('phase_end_ms'):
                end = int(_parse_float(record['phase_end_ms'], 'phase_end_ms', line_number))
            try:
                condition = NetworkCondition(
                    _parse_float(record['bandwidth_kbps'], 'bandwidth_kbps', line_number),
                    _parse_float(record['rtt_ms'], 'rtt_ms', line_number),
                    _parse_float(record['loss_rate'], 'loss_rate', line_number),
                )
            except ValueError as e:
                if isinstance(e, TraceFormatError):
                    raise
                raise TraceFormatError(str(e), line_number) from None
            key = (client_id, arrival)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append((start, record['website_id'], condition, line_number, end))

    sessions = []
    for client_id, arrival in order:
        rows = sorted(groups[(client_id, arrival)], key=lambda r: r[0])
        if rows[0][0] != arrival:
            raise TraceFormatError(
                f"non-contiguous phases for {client_id}: first phase starts at {rows[0][0]}, arrival {arrival}",
                rows[0][3])
        phases = []
        for i, (start, _, condition, line_number, end) in enumerate(rows):
            if i + 1 < len(rows):
                duration = rows[i + 1][0] - start
                if end is not None and end != rows[i + 1][0]:
                    raise TraceFormatError(f"non-contiguous phases for {client_id}", line_number)
            elif end is not None:
                duration = end - start
            else:
                duration = phases[-1].duration_ms if phases else 60000
            if duration <= 0:
                raise TraceFormatError(f"non-contiguous phases for {client_id}", line_number)
            phases.append(Phase(condition, duration))
        sessions.append(ClientSession(client_id, rows[0][1], arrival, tuple(phases)))

    sessions.sort(key=lambda s: (s.arrival_ms, s.client_id))
    logger.info(f"Ingested {len(sessions)} sessions from {path}")
    return sessions


def write_trace(sessions: Sequence[ClientSession], path: Union[str, Path]) -> None:
    """Write sessions in the trace format, with phase_end_ms so durations round-trip."""
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_HEADER + ['phase_end_ms'])
        for session in sessions:
            for start, phase in zip(session.phase_starts, session.phases):
                c = phase.condition
                writer.writerow([session.client_id, session.arrival_ms, session.website_id, start,
                                 repr(c.bandwidth_kbps), repr(c.rtt_ms), repr(c.loss_rate),
                                 start + phase.duration_ms])


def condition_at(session: ClientSession, t_ms: int) -> NetworkCondition:
    """Condition of the phase containing t_ms; phases are half-open [start, start + duration)."""
    if t_ms < session.arrival_ms:
        raise ValueError(f"t_ms {t_ms} precedes session arrival {session.arrival_ms}")
    for start, phase in zip(session.phase_starts, session.phases):
        if t_ms < start + phase.duration_ms:
            return phase.condition
    return session.phases[-1].condition


def pop_for_client(client_id: str, pop_count: int) -> int:
    return zlib.crc32(client_id.encode('utf-8')) % max(1, pop_count)


class OnlineChangepointDetector:
    """
    Run-length posterior for Bayesian online changepoint detection.

    Constant hazard 1/lambda; Gaussian observations with unknown mean and
    variance under a normal-inverse-gamma prior, so the predictive for each
    run length is a Student-t. After an update, slot i of the posterior is the
    run that started i observations before the latest one; a new run is scored
    with the prior predictive and absorbs the observation that opened it.
    """

    def __init__(self, hazard_lambda: float = 250.0, prior_mean: float = 0.0,
                 variance_scale: float = 1.0, kappa0: float = 1.0, alpha0: float = 1.0):
        if hazard_lambda <= 1:
            raise ValueError("hazard_lambda must exceed 1")
        if variance_scale <= 0:
            raise ValueError("variance scale must be positive")
        self.log_hazard = math.log(1.0 / hazard_lambda)
        self.log_growth = math.log1p(-1.0 / hazard_lambda)
        self.mu0, self.kappa0, self.alpha0, self.beta0 = prior_mean, kappa0, alpha0, variance_scale
        self.mu = np.zeros(0)
        self.kappa = np.zeros(0)
        self.alpha = np.zeros(0)
        self.beta = np.zeros(0)
        self.log_posterior = np.zeros(0)
        self.t = 0

    @staticmethod
    def _student_logpdf(x: float, mu, kappa, alpha, beta):
        scale = np.sqrt(beta * (kappa + 1.0) / (alpha * kappa))
        return stats.t.logpdf(x, df=2.0 * alpha, loc=mu, scale=scale)

    def update(self, x: float) -> np.ndarray:
        """Absorb one observation; returns the normalized run-length posterior."""
        prior_pred = float(self._student_logpdf(x, self.mu0, self.kappa0, self.alpha0, self.beta0))
        if self.t == 0:
            joint = np.array([prior_pred])
        else:
            growth = self.log_posterior + self._student_logpdf(x, self.mu, self.kappa, self.alpha, self.beta)
            changepoint = logsumexp(self.log_posterior) + self.log_hazard + prior_pred
            joint = np.concatenate(([changepoint], growth + self.log_growth))
        self.log_posterior = joint - logsumexp(joint)

        mu = np.concatenate(([self.mu0], self.mu))
        kappa = np.concatenate(([self.kappa0], self.kappa))
        alpha = np.concatenate(([self.alpha0], self.alpha))
        beta = np.concatenate(([self.beta0], self.beta))
        self.beta = beta + kappa * (x - mu) ** 2 / (2.0 * (kappa + 1.0))
        self.mu = (kappa * mu + x) / (kappa + 1.0)
        self.kappa = kappa + 1.0
        self.alpha = alpha + 0.5
        self.t += 1
        return np.exp(self.log_posterior)

    @property
    def map_run_length(self) -> int:
        """Observations preceding the latest one in the MAP run."""
        if self.t == 0:
            return 0
        return int(np.argmax(self.log_posterior))


def detect_changepoints(series: Sequence[float], hazard_lambda: float = 250.0,
                        obs_prior: Optional[Tuple[float, float]] = None,
                        min_snr: Optional[float] = None, snr_window: int = 10) -> List[int]:
    """
    Indices where a new regime starts.

    Once the MAP run length has exceeded 4, a changepoint is committed the
    first time it collapses onto a younger run (usually length 0 or 1); the
    reported index is the first sample of that run. Observations are assumed
    to have roughly unit-scale noise; standardize other series first.

    Args:
        series: observations (at least two)
        hazard_lambda: expected run length (> 1)
        obs_prior: (prior mean, variance scale); defaults to (series[0], 1.0)
        min_snr: optional post-filter on |mean shift| / pooled std around each index
    """
    values = np.asarray(series, dtype=float)
    if len(values) < 2:
        raise ValueError("series needs at least two observations")
    mean, variance_scale = obs_prior if obs_prior is not None else (float(values[0]), 1.0)
    detector = OnlineChangepointDetector(hazard_lambda, mean, variance_scale)

    changepoints: List[int] = []
    armed = False
    previous = 0
    for t, x in enumerate(values):
        detector.update(float(x))
        run_length = detector.map_run_length
        if armed and run_length < previous:
            start = t - run_length
            if not changepoints or start > changepoints[-1]:
                changepoints.append(start)
            armed = False
        if run_length > 4:
            armed = True
        previous = run_length

    if min_snr is not None:
        changepoints = [c for c in changepoints if _shift_snr(values, c, snr_window) >= min_snr]
    return changepoints


def _shift_snr(values: np.ndarray, index: int, window: int) -> float:
    before = values[max(0, index - window):index]
    after = values[index:index + window]
    if len(before) < 2 or len(after) < 2:
        return 0.0
    pooled = math.sqrt((before.var(ddof=1) + after.var(ddof=1)) / 2.0)
    shift = abs(after.mean() - before.mean())
    return math.inf if pooled == 0 else shift / pooled


def segment_condition_series(client_id: str, website_id: str,
                             samples: Sequence[Tuple[int, float, float, float]],
                             hazard_lambda: float = 250.0) -> ClientSession:
    """
    Turn a measured condition time series into a phased session.

    samples: (t_ms, bandwidth_kbps, rtt_ms, loss_rate) in time order. Changepoints
    are detected on log-bandwidth and log-rtt (standardized); each segment's
    median condition becomes a phase.
    """
    if len(samples) < 2:
        raise ValueError("need at least two samples to segment")
    times = np.array([s[0] for s in samples], dtype=np.int64)
    matrix = np.array([s[1:] for s in samples], dtype=float)
    boundaries = set()
    for column in (0, 1):
        series = np.log(matrix[:, column])
        std = series.std() or 1.0
        standardized = (series - series[0]) / std
        boundaries.update(detect_changepoints(standardized, hazard_lambda, obs_prior=(0.0, 1.0)))
    cuts = [0] + sorted(b for b in boundaries if 0 < b < len(samples)) + [len(samples)]

    phases = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        segment = matrix[lo:hi]
        end = times[hi] if hi < len(samples) else times[-1] + max(1, int(np.median(np.diff(times))))
        condition = clamp_condition(*np.median(segment, axis=0))
        phases.append(Phase(condition, int(end - times[lo])))
    return ClientSession(client_id, website_id, int(times[0]), tuple(phases))
