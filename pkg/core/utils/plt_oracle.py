"""
Page-load-time oracle.

Deterministic analytic PLT model over (configuration, network condition,
website), lognormal/Pareto noise injection, exhaustive optimal-configuration
lookup and a cached tensor of noiseless PLTs over a condition grid.

All 768 configurations are evaluated at once with numpy; the single-config
entry point indexes the same vector so both paths agree bit for bit.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config_space import SPACE_SIZE, Configuration, config_from_id, knob_arrays
from .exceptions import ConfigError, TensorTooLargeError
from .workload import NetworkCondition, Website, website_from_dict

logger = logging.getLogger(__name__)

MAX_TENSOR_ENTRIES = 100_000_000
LOSS_LOG_OFFSET = 1e-4


@dataclass(frozen=True)
class OracleParams:
    mss_bytes: int = 1500
    http1_max_conns: int = 6
    buffer_factor: float = 1.0
    reno_k: float = 1.22
    cubic_k: float = 1.70
    vegas_share: float = 0.85
    vegas_loss_threshold: float = 0.05
    bbr_share: float = 0.95
    bbr_cliff_share: float = 0.40
    bbr_loss_cliff: float = 0.15
    h2_mux_gain: float = 0.85
    h2_hol_alpha: float = 2.0
    pacing_overshoot_relief: float = 0.5
    autocork_per_small_object_ms: float = 0.5
    autocork_off_throughput_penalty: float = 0.02
    low_latency_transfer_gain: float = 0.02
    noise_sigma_log: float = 0.1
    tail_spike_prob: float = 0.02
    tail_spike_pareto_alpha: float = 1.5

    PROBABILITIES = ('vegas_loss_threshold', 'bbr_loss_cliff', 'pacing_overshoot_relief',
                     'autocork_off_throughput_penalty', 'low_latency_transfer_gain', 'tail_spike_prob')
    NON_NEGATIVE = ('noise_sigma_log', 'autocork_per_small_object_ms', 'h2_hol_alpha')

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ConfigError(f"OracleParams.{f.name} must be finite")
            if f.name in self.PROBABILITIES:
                if not 0.0 <= value <= 1.0:
                    raise ConfigError(f"OracleParams.{f.name} must lie in [0, 1]")
            elif f.name in self.NON_NEGATIVE:
                if value < 0:
                    raise ConfigError(f"OracleParams.{f.name} must be non-negative")
            elif value <= 0:
                raise ConfigError(f"OracleParams.{f.name} must be positive")

    @property
    def noiseless(self) -> bool:
        return self.noise_sigma_log == 0 and self.tail_spike_prob == 0

    def without_noise(self) -> 'OracleParams':
        return self.replace(noise_sigma_log=0.0, tail_spike_prob=0.0)

    def replace(self, **changes) -> 'OracleParams':
        data = asdict(self)
        data.update(changes)
        return OracleParams(**data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'OracleParams':
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown oracle parameters: {sorted(unknown)}")
        return cls(**data)


def _loss_cap(k: float, mss_bits: float, rtt_s: float, loss: float) -> float:
    if loss <= 0:
        return math.inf
    return k * mss_bits / (rtt_s * math.sqrt(loss))


def noiseless_plt_all(n: NetworkCondition, w: Website, p: OracleParams) -> np.ndarray:
    """
    Noiseless PLT in ms for every configuration id under condition n and website w.

    Returns:
        np.ndarray: shape (768,), entry i is the PLT of config id i
    """
    knobs = knob_arrays()
    cc = knobs['cc']
    icw = knobs['icw_value']
    autocorking = knobs['autocorking'] == 1
    low_latency = knobs['low_latency'] == 1
    fq = knobs['pacing'] == 1
    h2 = knobs['http'] == 1

    loss = n.loss_rate
    rtt_ms = n.rtt_ms
    rtt_s = rtt_ms / 1000.0
    link_bps = n.bandwidth_kbps * 1000.0
    mss = float(p.mss_bytes)
    mss_bits = mss * 8.0

    conns = np.where(h2, 1.0, float(min(p.http1_max_conns, w.object_count)))
    fair = link_bps / conns

    reno = np.minimum(fair, _loss_cap(p.reno_k, mss_bits, rtt_s, loss))
    cubic = np.minimum(fair, _loss_cap(p.cubic_k, mss_bits, rtt_s, loss))
    if loss < p.vegas_loss_threshold:
        vegas = p.vegas_share * fair
    else:
        vegas = p.vegas_share * fair * (1.0 - loss)
    bbr = (p.bbr_share if loss < p.bbr_loss_cliff else p.bbr_cliff_share) * fair
    # cc order: Cubic, Reno, Vegas, Bbr
    cap = np.choose(cc, [cubic, reno, vegas, bbr])

    thr = np.minimum(link_bps, conns * cap)
    thr = np.where(autocorking, thr, thr * (1.0 - p.autocork_off_throughput_penalty))

    total = float(w.total_bytes)
    mux = h2 & (w.object_count > 6) & (loss < 0.01)
    total_bytes = np.where(mux, total * p.h2_mux_gain, total)

    setup_ms = 2.0 * rtt_ms

    # Slow start: the aggregate window W0 doubles per round until it covers the
    # throughput-delay product; pages that fit inside the ramp finish mid-ramp.
    w0 = conns * icw * mss
    ratio = np.maximum(1.0, (thr * rtt_s / 8.0) / w0)
    rounds = np.ceil(np.log2(ratio))
    ramp_capacity = w0 * (np.exp2(rounds) - 1.0)
    inside = total_bytes <= ramp_capacity

    k = np.maximum(1.0, np.ceil(np.log2(total_bytes / w0 + 1.0)))
    k = np.where(w0 * (np.exp2(k) - 1.0) < total_bytes, k + 1.0, k)
    k = np.where((k > 1.0) & (w0 * (np.exp2(k - 1.0) - 1.0) >= total_bytes), k - 1.0, k)
    sent_before = w0 * (np.exp2(k - 1.0) - 1.0)
    partial_ms = (k - 1.0) * rtt_ms + (total_bytes - sent_before) / (w0 * np.exp2(k - 1.0)) * rtt_ms

    ramp_ms = np.where(inside, partial_ms, rounds * rtt_ms)
    steady_ms = np.where(inside, 0.0, (total_bytes - ramp_capacity) * 8000.0 / thr)

    bdp = link_bps * rtt_s / 8.0
    buffer = max(16.0 * mss, p.buffer_factor * bdp)
    queue = bdp + buffer
    excess = np.maximum(0.0, conns * icw * mss - queue)
    overshoot_ms = max(200.0, 2.0 * rtt_ms) * excess / queue
    overshoot_ms = np.where(fq, overshoot_ms * (1.0 - p.pacing_overshoot_relief), overshoot_ms)

    hol_ms = np.where(
        h2,
        (setup_ms + ramp_ms + steady_ms) * p.h2_hol_alpha * loss * min(w.object_count, 30) / 30.0,
        0.0,
    )

    small_objects = w.object_count if w.avg_object_bytes < 2048 else 0
    cork_ms = np.where(autocorking, p.autocork_per_small_object_ms * small_objects, 0.0)

    transfer_ms = ramp_ms + steady_ms
    transfer_ms = np.where(low_latency, transfer_ms * (1.0 - p.low_latency_transfer_gain), transfer_ms)

    return setup_ms + transfer_ms + overshoot_ms + hol_ms + cork_ms


def noiseless_plt(config: Configuration, n: NetworkCondition, w: Website, p: OracleParams) -> float:
    return float(noiseless_plt_all(n, w, p)[config.config_id])


def noise_factor(p: OracleParams, rng: np.random.Generator) -> float:
    """Multiplicative noise: lognormal body times an occasional Pareto(alpha, x_min=1) spike."""
    factor = math.exp(rng.normal(0.0, p.noise_sigma_log))
    if rng.random() < p.tail_spike_prob:
        factor *= 1.0 + rng.pareto(p.tail_spike_pareto_alpha)
    return factor


def plt(config: Configuration, n: NetworkCondition, w: Website, p: OracleParams,
        rng: np.random.Generator) -> float:
    return noiseless_plt(config, n, w, p) * noise_factor(p, rng)


def optimal_config(n: NetworkCondition, w: Website, p: OracleParams,
                   candidate_ids: Optional[Sequence[int]] = None) -> Tuple[Configuration, float]:
    """
    Exhaustive noiseless argmin, ties broken by lowest config id.

    candidate_ids restricts the argmin domain (knob ablations); it must be sorted.
    """
    values = noiseless_plt_all(n, w, p)
    if candidate_ids is None:
        best = int(np.argmin(values))
    else:
        ids = np.asarray(candidate_ids, dtype=np.int64)
        best = int(ids[int(np.argmin(values[ids]))])
    return config_from_id(best), float(values[best])


def _grid_coordinates(bandwidth: float, rtt: float, loss: float) -> Tuple[float, float, float]:
    return math.log(bandwidth), math.log(rtt), math.log(loss + LOSS_LOG_OFFSET)


@dataclass(frozen=True)
class ConditionGrid:
    bandwidths: Tuple[float, ...]
    rtts: Tuple[float, ...]
    losses: Tuple[float, ...]

    def __post_init__(self):
        for name in ('bandwidths', 'rtts', 'losses'):
            values = tuple(sorted(float(v) for v in getattr(self, name)))
            if not values:
                raise ValueError(f"grid dimension {name} is empty")
            object.__setattr__(self, name, values)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return len(self.bandwidths), len(self.rtts), len(self.losses)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def cell_condition(self, cell: Tuple[int, int, int]) -> NetworkCondition:
        b, r, l = cell
        return NetworkCondition(self.bandwidths[b], self.rtts[r], self.losses[l])

    def cells(self):
        for b in range(len(self.bandwidths)):
            for r in range(len(self.rtts)):
                for l in range(len(self.losses)):
                    yield (b, r, l)

    def nearest_cell(self, n: NetworkCondition) -> Tuple[int, int, int]:
        """Per-dimension nearest grid value in log space; ties go to the lower value."""
        target = _grid_coordinates(n.bandwidth_kbps, n.rtt_ms, n.loss_rate)
        axes = (
            np.log(self.bandwidths),
            np.log(self.rtts),
            np.log(np.asarray(self.losses) + LOSS_LOG_OFFSET),
        )
        return tuple(int(np.argmin(np.abs(axis - value))) for axis, value in zip(axes, target))

    def to_dict(self) -> Dict[str, List[float]]:
        return {'bandwidths': list(self.bandwidths), 'rtts': list(self.rtts), 'losses': list(self.losses)}

    @classmethod
    def from_dict(cls, data: Dict[str, Sequence[float]]) -> 'ConditionGrid':
        return cls(tuple(data['bandwidths']), tuple(data['rtts']), tuple(data['losses']))


def default_grid() -> ConditionGrid:
    return ConditionGrid(
        bandwidths=(250, 500, 1000, 2000, 4000, 8000, 16000, 32000, 64000, 128000),
        rtts=(5, 10, 20, 40, 80, 160, 320, 640),
        losses=(0.0, 0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2),
    )


class PLTTensor:
    """Dense noiseless PLT cache indexed by (bandwidth, rtt, loss, website, config id)."""

    def __init__(self, grid: ConditionGrid, websites: Sequence[Website], params: OracleParams,
                 values: np.ndarray):
        self.grid = grid
        self.websites = list(websites)
        self.params = params
        self._website_index = {w.website_id: i for i, w in enumerate(self.websites)}
        expected = grid.shape + (len(self.websites), SPACE_SIZE)
        if values.shape != expected:
            raise ValueError(f"tensor shape {values.shape} does not match grid {expected}")
        values.setflags(write=False)
        self.values = values

    @property
    def entry_count(self) -> int:
        return int(self.values.size)

    def website_index(self, website_id: str) -> int:
        try:
            return self._website_index[website_id]
        except KeyError:
            raise KeyError(f"Website '{website_id}' not in tensor") from None

    def lookup(self, config: Union[Configuration, int], cell: Tuple[int, int, int], website_id: str) -> float:
        config_id = config.config_id if isinstance(config, Configuration) else int(config)
        b, r, l = cell
        return float(self.values[b, r, l, self.website_index(website_id), config_id])

    def lookup_condition(self, config: Union[Configuration, int], n: NetworkCondition, website_id: str) -> float:
        return self.lookup(config, self.grid.nearest_cell(n), website_id)

    def cell_vector(self, cell: Tuple[int, int, int], website_id: str) -> np.ndarray:
        b, r, l = cell
        return self.values[b, r, l, self.website_index(website_id)]

    def sha256(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.values).tobytes()).hexdigest()

    def save(self, path: Union[str, Path]) -> Tuple[Path, Path]:
        """Write ``<path>.npy`` and its ``<path>.json`` sidecar."""
        base = Path(path)
        if base.suffix in ('.npy', '.json'):
            base = base.with_suffix('')
        array_path = base.with_suffix('.npy')
        sidecar_path = base.with_suffix('.json')
        np.save(array_path, self.values, allow_pickle=False)
        sidecar = {
            'grid': self.grid.to_dict(),
            'websites': [asdict(w) for w in self.websites],
            'params': self.params.to_dict(),
            'shape': list(self.values.shape),
            'sha256': self.sha256(),
        }
        with open(sidecar_path, 'w', encoding='utf-8') as f:
            json.dump(sidecar, f, indent=2, sort_keys=True)
        logger.info(f"Saved PLT tensor ({self.entry_count} entries) to {array_path}")
        return array_path, sidecar_path

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'PLTTensor':
        base = Path(path)
        if base.suffix in ('.npy', '.json'):
            base = base.with_suffix('')
        with open(base.with_suffix('.json'), 'r', encoding='utf-8') as f:
            sidecar = json.load(f)
        values = np.load(base.with_suffix('.npy'), allow_pickle=False)
        tensor = cls(
            ConditionGrid.from_dict(sidecar['grid']),
            [website_from_dict(w) for w in sidecar['websites']],
            OracleParams.from_dict(sidecar['params']),
            values,
        )
        if tensor.sha256() != sidecar['sha256']:
            raise ValueError(f"Tensor hash mismatch for {base}")
        return tensor


def build_tensor(grid: ConditionGrid, websites: Sequence[Website], p: OracleParams) -> PLTTensor:
    if not websites:
        raise ValueError("website list is empty")
    entries = grid.size * len(websites) * SPACE_SIZE
    if entries > MAX_TENSOR_ENTRIES:
        raise TensorTooLargeError(f"tensor would hold {entries} entries (limit {MAX_TENSOR_ENTRIES})")

    values = np.empty(grid.shape + (len(websites), SPACE_SIZE), dtype=np.float64)
    for cell in grid.cells():
        condition = grid.cell_condition(cell)
        for index, website in enumerate(websites):
            values[cell + (index,)] = noiseless_plt_all(condition, website, p)

    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise ValueError("oracle produced a non-positive or non-finite PLT")
    logger.info(f"Built PLT tensor: {grid.size} cells x {len(websites)} websites x {SPACE_SIZE} configs")
    return PLTTensor(grid, websites, p, values)


def ranked_config_ids(websites: Sequence[Website], p: OracleParams,
                      grid: Optional[ConditionGrid] = None,
                      candidate_ids: Optional[Sequence[int]] = None) -> List[int]:
    """Config ids ordered by mean log noiseless PLT over an offline grid (domain-knowledge ranking)."""
    grid = grid or default_grid()
    scores = np.zeros(SPACE_SIZE)
    count = 0
    for cell in grid.cells():
        condition = grid.cell_condition(cell)
        for website in websites:
            scores += np.log(noiseless_plt_all(condition, website, p))
            count += 1
    scores /= max(1, count)
    ids = np.arange(SPACE_SIZE) if candidate_ids is None else np.asarray(candidate_ids, dtype=np.int64)
    order = np.lexsort((ids, scores[ids]))
    return [int(i) for i in ids[order]]
