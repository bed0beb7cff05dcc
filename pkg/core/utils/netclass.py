"""
Network class discovery.

Clients are clustered on standardized network features (log bandwidth, log
RTT, loss rate, log page complexity) with k-means++ seeded Lloyd iterations;
the fitted model classifies by nearest centroid and exports as a versioned
rule record the agents can apply without the training data.
"""

import itertools
import logging
import threading
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import SampleSizeError

logger = logging.getLogger(__name__)

FEATURE_NAMES: Tuple[str, ...] = ('bandwidth', 'rtt', 'loss', 'complexity')
ALL_FEATURES: Tuple[bool, ...] = (True, True, True, True)

MAX_ITERATIONS = 100

_version_lock = threading.Lock()
_version_counter = itertools.count(1)


def next_rule_version() -> int:
    """Process-wide monotonically increasing rule version."""
    with _version_lock:
        return next(_version_counter)


def mask_from_names(names: Optional[Sequence[str]]) -> Tuple[bool, ...]:
    if names is None:
        return ALL_FEATURES
    unknown = [n for n in names if n not in FEATURE_NAMES]
    if unknown:
        raise ValueError(f"Unknown features: {unknown}")
    mask = tuple(name in names for name in FEATURE_NAMES)
    if not any(mask):
        raise ValueError("at least one feature must be active")
    return mask


def mask_names(mask: Sequence[bool]) -> Tuple[str, ...]:
    return tuple(name for name, active in zip(FEATURE_NAMES, mask) if active)


@dataclass(frozen=True)
class FeatureVector:
    bandwidth_kbps: float
    rtt_ms: float
    loss_rate: float
    complexity: float = 1.0
    mask: Tuple[bool, ...] = ALL_FEATURES

    def __post_init__(self):
        if self.bandwidth_kbps <= 0 or self.rtt_ms <= 0 or self.complexity <= 0:
            raise ValueError("bandwidth, rtt and complexity must be positive")
        if self.loss_rate < 0:
            raise ValueError("loss_rate must be non-negative")
        if len(self.mask) != len(FEATURE_NAMES) or not any(self.mask):
            raise ValueError("at least one feature must be active")

    def transformed(self) -> np.ndarray:
        """All four features on the clustering scale (mask not applied)."""
        return np.array([
            np.log(self.bandwidth_kbps),
            np.log(self.rtt_ms),
            self.loss_rate,
            np.log(self.complexity),
        ])

    def active(self, mask: Optional[Sequence[bool]] = None) -> np.ndarray:
        mask = self.mask if mask is None else mask
        return self.transformed()[np.asarray(mask, dtype=bool)]


def feature_matrix(samples: Sequence[FeatureVector], mask: Sequence[bool]) -> np.ndarray:
    if not samples:
        return np.zeros((0, int(sum(mask))))
    return np.vstack([s.transformed() for s in samples])[:, np.asarray(mask, dtype=bool)]


@dataclass(frozen=True, eq=False)
class NCModel:
    centroids: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    mask: Tuple[bool, ...] = ALL_FEATURES
    version: int = 0
    inertia: float = 0.0
    iterations: int = 0

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def feature_names(self) -> Tuple[str, ...]:
        return mask_names(self.mask)

    def standardize(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.means) / self.stds

    def classify(self, f: FeatureVector) -> int:
        z = self.standardize(f.active(self.mask))
        distances = np.sum((self.centroids - z) ** 2, axis=1)
        return int(np.argmin(distances))

    def classify_matrix(self, matrix: np.ndarray) -> np.ndarray:
        z = self.standardize(matrix)
        distances = np.sum((z[:, None, :] - self.centroids[None, :, :]) ** 2, axis=2)
        return np.argmin(distances, axis=1)

    def centroid_features(self, class_id: int, complexity: float = 1.0) -> FeatureVector:
        """Unstandardized back-image of a centroid; inactive features take neutral values."""
        raw = self.centroids[class_id] * self.stds + self.means
        full = {'bandwidth': np.log(1000.0), 'rtt': np.log(50.0), 'loss': 0.0, 'complexity': np.log(complexity)}
        for name, value in zip(self.feature_names, raw):
            full[name] = value
        return FeatureVector(
            bandwidth_kbps=float(np.exp(full['bandwidth'])),
            rtt_ms=float(np.exp(full['rtt'])),
            loss_rate=float(max(0.0, full['loss'])),
            complexity=float(np.exp(full['complexity'])),
            mask=self.mask,
        )


def _kmeans_plus_plus(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """D² seeding; stops early once every row coincides with a chosen seed, so seeds stay distinct."""
    n = z.shape[0]
    centers = [int(rng.integers(n))]
    closest = np.sum((z - z[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            break
        index = int(rng.choice(n, p=closest / total))
        centers.append(index)
        closest = np.minimum(closest, np.sum((z - z[index]) ** 2, axis=1))
    return z[centers].copy()


def _assign(z: np.ndarray, centroids: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    distances = np.sum((z[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    labels = np.argmin(distances, axis=1)
    return labels, distances[np.arange(z.shape[0]), labels]


def lloyd(z: np.ndarray, centroids: np.ndarray, max_iter: int = MAX_ITERATIONS) -> Tuple[np.ndarray, np.ndarray, int]:
    """Lloyd iterations to an assignment fixpoint; empty clusters take the worst-served point."""
    labels, costs = _assign(z, centroids)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        updated = centroids.copy()
        for j in range(centroids.shape[0]):
            members = labels == j
            if members.any():
                updated[j] = z[members].mean(axis=0)
            else:
                worst = int(np.argmax(costs))
                updated[j] = z[worst]
                costs[worst] = 0.0
        new_labels, costs = _assign(z, updated)
        centroids = updated
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centroids, labels, iterations


def inertia(z: np.ndarray, centroids: np.ndarray) -> float:
    return float(_assign(z, centroids)[1].sum())


def fit(samples: Sequence[FeatureVector], k: int, rng: np.random.Generator,
        mask: Optional[Sequence[bool]] = None, max_iter: int = MAX_ITERATIONS) -> NCModel:
    """
    Cluster samples into k network classes.

    Args:
        samples: client feature vectors
        k: number of classes, 1 <= k <= len(samples)
        rng: seeded generator for k-means++ seeding
        mask: active features; defaults to the first sample's mask

    Returns:
        NCModel: standardized centroids plus standardization parameters
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > len(samples):
        raise SampleSizeError(f"k={k} exceeds sample count {len(samples)}")
    mask = tuple(mask) if mask is not None else samples[0].mask
    matrix = feature_matrix(samples, mask)
    return fit_matrix(matrix, k, rng, mask, max_iter)


def fit_matrix(matrix: np.ndarray, k: int, rng: np.random.Generator,
               mask: Sequence[bool] = ALL_FEATURES, max_iter: int = MAX_ITERATIONS) -> NCModel:
    if k > matrix.shape[0]:
        raise SampleSizeError(f"k={k} exceeds sample count {matrix.shape[0]}")
    means = matrix.mean(axis=0)
    stds = matrix.std(axis=0)
    stds = np.where(stds > 0, stds, 1.0)
    z = (matrix - means) / stds

    seeds = _kmeans_plus_plus(z, k, rng)
    if seeds.shape[0] < k:
        logger.warning(f"k-means: only {seeds.shape[0]} distinct feature rows, "
                       f"fitting {seeds.shape[0]} classes instead of {k}")
    centroids, _, iterations = lloyd(z, seeds, max_iter)
    wcss = inertia(z, centroids)
    logger.debug(f"k-means k={k}: {iterations} iterations, inertia {wcss:.4f}")
    return NCModel(centroids=centroids, means=means, stds=stds, mask=tuple(mask),
                   inertia=wcss, iterations=iterations)


def cluster_cv(labels: np.ndarray, values: np.ndarray, k: int) -> Dict[int, float]:
    """Coefficient of variation of values per non-empty cluster."""
    spread = {}
    for j in range(k):
        members = values[labels == j]
        if len(members) == 0:
            continue
        mean = members.mean()
        spread[j] = float(members.std() / mean) if mean > 0 else 0.0
    return spread


def choose_k(samples: Sequence[FeatureVector], default_plts: Sequence[float], rng: np.random.Generator,
             cv_threshold: float = 0.25, k_max: int = 30, qualifying_share: float = 0.9) -> int:
    """
    Smallest k in [2, k_max] whose clusters keep their default-config PLT spread tight.

    A k qualifies when at least ``qualifying_share`` of its non-empty clusters have a
    coefficient of variation of default PLT at or below ``cv_threshold``.
    """
    if len(samples) != len(default_plts):
        raise ValueError("samples and default_plts must have the same length")
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    values = np.asarray(default_plts, dtype=float)
    mask = samples[0].mask
    matrix = feature_matrix(samples, mask)
    upper = min(k_max, len(samples))
    for k in range(2, upper + 1):
        model = fit_matrix(matrix, k, rng, mask)
        labels = model.classify_matrix(matrix)
        spread = cluster_cv(labels, values, k)
        tight = sum(1 for cv in spread.values() if cv <= cv_threshold)
        if tight >= qualifying_share * len(spread):
            logger.info(f"choose_k: k={k} ({tight}/{len(spread)} clusters within CV {cv_threshold})")
            return k
    logger.info(f"choose_k: no k qualified, using k_max={k_max}")
    return k_max


def classify(model: NCModel, f: FeatureVector) -> int:
    return model.classify(f)


def export_rules(model: NCModel) -> Dict[str, Any]:
    """Serializable NC rules with a fresh version stamp."""
    return {
        'version': next_rule_version(),
        'feature_names': list(model.feature_names),
        'means': [float(v) for v in model.means],
        'stds': [float(v) for v in model.stds],
        'centroids': [[float(v) for v in row] for row in model.centroids],
    }


def import_rules(data: Dict[str, Any]) -> NCModel:
    mask = mask_from_names(data['feature_names'])
    centroids = np.asarray(data['centroids'], dtype=float)
    means = np.asarray(data['means'], dtype=float)
    stds = np.asarray(data['stds'], dtype=float)
    if centroids.ndim != 2 or centroids.shape[1] != int(sum(mask)):
        raise ValueError("centroid dimension does not match feature names")
    if np.any(stds <= 0):
        raise ValueError("standard deviations must be positive")
    return NCModel(centroids=centroids, means=means, stds=stds, mask=mask, version=int(data['version']))


def class_spread(class_ids: Sequence[int], normalized_plts: Sequence[float],
                 threshold: float = 0.25) -> Tuple[Dict[int, float], List[int]]:
    """
    Per-class CV of default-normalized PLT and the classes above threshold.

    Diverging classes are candidates for re-clustering at the next offline fit.
    """
    labels = np.asarray(class_ids, dtype=np.int64)
    values = np.asarray(normalized_plts, dtype=float)
    if len(labels) == 0:
        return {}, []
    spread = cluster_cv(labels, values, int(labels.max()) + 1)
    diverging = sorted(c for c, cv in spread.items() if cv > threshold)
    return spread, diverging
