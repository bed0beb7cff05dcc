"""
Web stack configuration space.

Seven tunable knobs spanning transport and application layers, a stable
mixed-radix id for every point, the vector encoding used by the GP and the
decision tree, and Latin-hypercube bootstrap sampling.
"""

import itertools
import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import SampleSizeError

logger = logging.getLogger(__name__)


class CongestionControl(str, Enum):
    CUBIC = 'Cubic'
    RENO = 'Reno'
    VEGAS = 'Vegas'
    BBR = 'Bbr'


class Pacing(str, Enum):
    PFIFO_FAST = 'PfifoFast'
    FQ = 'Fq'


class HttpVersion(str, Enum):
    H1_1 = 'H1_1'
    H2 = 'H2'


# Declaration order defines both the id encoding and the enumeration order.
KNOB_VALUES: Dict[str, Tuple] = {
    'cc': tuple(CongestionControl),
    'icw': (1, 4, 10, 16, 20, 30),
    'slow_start_after_idle': (0, 1),
    'low_latency': (0, 1),
    'autocorking': (0, 1),
    'pacing': tuple(Pacing),
    'http': tuple(HttpVersion),
}
KNOB_NAMES: Tuple[str, ...] = tuple(KNOB_VALUES)
RADICES: Tuple[int, ...] = tuple(len(v) for v in KNOB_VALUES.values())
SPACE_SIZE = int(np.prod(RADICES))

SHORT_NAMES = {
    'cc': 'cc',
    'icw': 'icw',
    'slow_start_after_idle': 'ssai',
    'low_latency': 'll',
    'autocorking': 'ac',
    'pacing': 'pacing',
    'http': 'http',
}
_LONG_NAMES = {short: long for long, short in SHORT_NAMES.items()}

ENCODING_DIM = 10


@dataclass(frozen=True)
class Configuration:
    """One point of the configuration space."""
    cc: CongestionControl = CongestionControl.CUBIC
    icw: int = 10
    slow_start_after_idle: int = 1
    low_latency: int = 0
    autocorking: int = 1
    pacing: Pacing = Pacing.PFIFO_FAST
    http: HttpVersion = HttpVersion.H1_1

    def __post_init__(self):
        # Accept plain strings for the enum knobs
        for name, enum_type in (('cc', CongestionControl), ('pacing', Pacing), ('http', HttpVersion)):
            value = getattr(self, name)
            if not isinstance(value, enum_type):
                try:
                    object.__setattr__(self, name, enum_type(value))
                except ValueError:
                    raise ValueError(f"Invalid value for {name}: {value!r}") from None
        for name in KNOB_NAMES:
            if getattr(self, name) not in KNOB_VALUES[name]:
                raise ValueError(f"Invalid value for {name}: {getattr(self, name)!r}")

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(KNOB_VALUES[name].index(getattr(self, name)) for name in KNOB_NAMES)

    @property
    def config_id(self) -> int:
        config_id = 0
        for index, radix in zip(self.indices, RADICES):
            config_id = config_id * radix + index
        return config_id

    def to_string(self) -> str:
        parts = []
        for name in KNOB_NAMES:
            value = getattr(self, name)
            if isinstance(value, Enum):
                value = value.value
            parts.append(f"{SHORT_NAMES[name]}={value}")
        return ','.join(parts)

    @classmethod
    def from_string(cls, text: str) -> 'Configuration':
        fields = {}
        for part in text.split(','):
            key, _, raw = part.strip().partition('=')
            name = _LONG_NAMES.get(key)
            if name is None:
                raise ValueError(f"Unknown knob '{key}' in configuration string")
            fields[name] = raw if name in ('cc', 'pacing', 'http') else int(raw)
        missing = set(KNOB_NAMES) - set(fields)
        if missing:
            raise ValueError(f"Configuration string misses knobs: {sorted(missing)}")
        return cls(**fields)

    @classmethod
    def from_id(cls, config_id: int) -> 'Configuration':
        return enumerate_space()[config_id]

    def __str__(self):
        return self.to_string()


def _validate_config_id(config_id: int) -> int:
    config_id = int(config_id)
    if not 0 <= config_id < SPACE_SIZE:
        raise ValueError(f"Configuration id out of range: {config_id}")
    return config_id


@lru_cache(maxsize=1)
def enumerate_space() -> Tuple[Configuration, ...]:
    """All configurations exactly once, in id order."""
    configs = []
    for values in itertools.product(*KNOB_VALUES.values()):
        configs.append(Configuration(**dict(zip(KNOB_NAMES, values))))
    return tuple(configs)


def default_config() -> Configuration:
    return Configuration()


def default_config_id() -> int:
    return default_config().config_id


def config_from_id(config_id: int) -> Configuration:
    return enumerate_space()[_validate_config_id(config_id)]


def encode(config: Configuration) -> np.ndarray:
    """
    Encode a configuration as a 10-dim vector in [0, 1].

    One-hot congestion control (4), icw scaled by (icw - 1) / 29 (1), then
    slow_start_after_idle, low_latency, autocorking, pacing == Fq, http == H2.
    """
    vector = np.zeros(ENCODING_DIM)
    vector[KNOB_VALUES['cc'].index(config.cc)] = 1.0
    vector[4] = (config.icw - 1) / 29.0
    vector[5] = float(config.slow_start_after_idle)
    vector[6] = float(config.low_latency)
    vector[7] = float(config.autocorking)
    vector[8] = 1.0 if config.pacing == Pacing.FQ else 0.0
    vector[9] = 1.0 if config.http == HttpVersion.H2 else 0.0
    return vector


@lru_cache(maxsize=1)
def encoded_space() -> np.ndarray:
    """(768, 10) matrix of encodings, row i is config id i."""
    matrix = np.vstack([encode(c) for c in enumerate_space()])
    matrix.setflags(write=False)
    return matrix


@lru_cache(maxsize=1)
def knob_arrays() -> Dict[str, np.ndarray]:
    """Per-knob value-index arrays over the whole space, for vectorized evaluation."""
    arrays = {}
    configs = enumerate_space()
    for position, name in enumerate(KNOB_NAMES):
        arrays[name] = np.array([c.indices[position] for c in configs], dtype=np.int64)
        arrays[name].setflags(write=False)
    icw = np.array([c.icw for c in configs], dtype=np.float64)
    icw.setflags(write=False)
    arrays['icw_value'] = icw
    return arrays


def validate_knobs(knobs: Optional[Iterable[str]]) -> Optional[Tuple[str, ...]]:
    if knobs is None:
        return None
    knobs = tuple(knobs)
    unknown = [k for k in knobs if k not in KNOB_VALUES]
    if unknown:
        raise ValueError(f"Unknown knobs: {unknown}")
    return knobs


def allowed_values(knobs: Optional[Iterable[str]] = None) -> Dict[str, Tuple]:
    """Value lists per knob; knobs outside ``knobs`` are pinned to their default."""
    knobs = validate_knobs(knobs)
    default = default_config()
    values = {}
    for name in KNOB_NAMES:
        if knobs is None or name in knobs:
            values[name] = KNOB_VALUES[name]
        else:
            values[name] = (getattr(default, name),)
    return values


@lru_cache(maxsize=256)
def _restricted_ids(knobs: Optional[Tuple[str, ...]]) -> np.ndarray:
    arrays = knob_arrays()
    default_indices = default_config().indices
    mask = np.ones(SPACE_SIZE, dtype=bool)
    if knobs is not None:
        for position, name in enumerate(KNOB_NAMES):
            if name not in knobs:
                mask &= arrays[name] == default_indices[position]
    ids = np.flatnonzero(mask)
    ids.setflags(write=False)
    return ids


def restricted_ids(knobs: Optional[Iterable[str]] = None) -> np.ndarray:
    """Sorted ids of the subspace where knobs outside ``knobs`` keep their defaults."""
    knobs = validate_knobs(knobs)
    if knobs is not None:
        knobs = tuple(sorted(set(knobs)))
    return _restricted_ids(knobs)


def lhc_sample(k: int, rng: np.random.Generator,
               knobs: Optional[Iterable[str]] = None,
               max_repairs: int = 200000) -> List[Configuration]:
    """
    Latin-hypercube sample of ``k`` distinct configurations.

    Each knob's ordered value list is dealt round-robin into ``k`` strata and the
    strata are permuted independently per knob, so every knob's value counts
    stay within one of a balanced allocation. Duplicate rows are repaired by
    swapping a single knob's values between two rows, which keeps the counts.

    Args:
        k: number of samples
        rng: seeded numpy Generator
        knobs: restrict sampling to these knobs (others pinned to defaults)

    Returns:
        List[Configuration]: k distinct configurations
    """
    values = allowed_values(knobs)
    space = int(np.prod([len(v) for v in values.values()]))
    if k < 1:
        raise SampleSizeError("sample size must be at least 1")
    if k > space:
        raise SampleSizeError("sample exceeds space")

    names = list(values)
    if k == space:
        ids = restricted_ids(knobs)
        return [config_from_id(i) for i in rng.permutation(ids)]

    columns = []
    for name in names:
        strata = np.arange(k) % len(values[name])
        columns.append(rng.permutation(strata))
    rows = np.stack(columns, axis=1)

    counts = Counter(map(tuple, rows))
    repairs = 0
    duplicates = [i for i in range(k) if counts[tuple(rows[i])] > 1]
    while duplicates:
        a = duplicates[0]
        if counts[tuple(rows[a])] <= 1:
            duplicates.pop(0)
            continue
        repairs += 1
        if repairs > max_repairs:
            raise SampleSizeError(f"could not stratify {k} distinct samples")
        b = int(rng.integers(k))
        d = int(rng.integers(len(names)))
        if b == a or rows[a, d] == rows[b, d]:
            continue
        old_a, old_b = tuple(rows[a]), tuple(rows[b])
        rows[a, d], rows[b, d] = rows[b, d], rows[a, d]
        new_a, new_b = tuple(rows[a]), tuple(rows[b])
        counts[old_a] -= 1
        counts[old_b] -= 1
        if counts[new_a] == 0 and counts[new_b] == 0 and new_a != new_b:
            counts[new_a] += 1
            counts[new_b] += 1
        else:
            rows[a, d], rows[b, d] = rows[b, d], rows[a, d]
            counts[old_a] += 1
            counts[old_b] += 1

    if repairs:
        logger.debug(f"lhc_sample: {repairs} swap attempts to de-duplicate {k} samples")

    samples = []
    for row in rows:
        fields = {name: values[name][int(index)] for name, index in zip(names, row)}
        samples.append(Configuration(**fields))
    return samples


def random_sample(k: int, rng: np.random.Generator,
                  knobs: Optional[Iterable[str]] = None) -> List[Configuration]:
    """Uniformly random distinct configurations (the non-stratified bootstrap)."""
    ids = restricted_ids(knobs)
    if k > len(ids):
        raise SampleSizeError("sample exceeds space")
    return [config_from_id(i) for i in rng.choice(ids, size=k, replace=False)]


def knob_counts(samples: Sequence[Configuration], knob: str) -> Dict:
    return dict(Counter(getattr(s, knob) for s in samples))
