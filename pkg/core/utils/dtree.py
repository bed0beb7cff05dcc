"""
CART decision tree for the exploitation arm.

Entropy criterion, best-first growth bounded by a maximum leaf count,
unbounded depth, explicit tie-breaking (lowest feature, then lowest
threshold; majority ties to the lowest label) so identical data always
yields an identical tree.
"""

import heapq
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .exceptions import EmptyDataError, SampleSizeError
from .netclass import FeatureVector

logger = logging.getLogger(__name__)

MIN_GAIN = 1e-12


@dataclass(frozen=True)
class TreeParams:
    criterion: str = 'entropy'
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_leaf_nodes: Optional[int] = 80
    max_depth: Optional[int] = None
    max_training_samples: Optional[int] = None

    def __post_init__(self):
        if self.criterion != 'entropy':
            raise ValueError(f"Unsupported split criterion '{self.criterion}'")
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ValueError("min_samples_split must be >= 2 and min_samples_leaf >= 1")
        if self.max_leaf_nodes is not None and self.max_leaf_nodes < 1:
            raise ValueError("max_leaf_nodes must be positive")


@dataclass(frozen=True)
class TrainingSample:
    features: FeatureVector
    label: int

    def __post_init__(self):
        if not 0 <= self.label < 768:
            raise ValueError(f"label {self.label} is not a config id")


@dataclass
class Node:
    samples: int
    label: int
    entropy: float
    depth: int = 0
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional[int] = None
    right: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


def entropy(label_counts: Mapping[Any, int]) -> float:
    """Shannon entropy in bits of a label histogram."""
    counts = np.array([c for c in label_counts.values() if c > 0], dtype=float)
    if counts.sum() < 1:
        raise ValueError("entropy needs at least one sample")
    p = counts / counts.sum()
    return float(-(p * np.log2(p)).sum() + 0.0)


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=1, keepdims=True)
    p = np.divide(counts, totals, out=np.zeros_like(counts, dtype=float), where=totals > 0)
    logs = np.log2(p, out=np.zeros_like(p), where=p > 0)
    return -(p * logs).sum(axis=1)


def _majority(labels: np.ndarray) -> int:
    values, counts = np.unique(labels, return_counts=True)
    return int(values[np.argmax(counts)])


@dataclass(frozen=True)
class Split:
    gain: float
    feature: int
    threshold: float


def best_split(X: np.ndarray, y: np.ndarray, params: TreeParams) -> Optional[Split]:
    """Highest-gain split of (X, y); None if no split has positive gain."""
    n = len(y)
    if n < params.min_samples_split:
        return None
    classes, codes = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        return None
    one_hot = np.zeros((n, len(classes)))
    one_hot[np.arange(n), codes] = 1.0
    parent = _entropy_rows(one_hot.sum(axis=0, keepdims=True))[0]

    best: Optional[Split] = None
    for feature in range(X.shape[1]):
        order = np.argsort(X[:, feature], kind='stable')
        values = X[order, feature]
        left_counts = np.cumsum(one_hot[order], axis=0)[:-1]
        right_counts = one_hot.sum(axis=0) - left_counts
        left_n = np.arange(1, n)
        right_n = n - left_n
        valid = (values[:-1] < values[1:]) & (left_n >= params.min_samples_leaf) & (right_n >= params.min_samples_leaf)
        if not valid.any():
            continue
        children = (left_n * _entropy_rows(left_counts) + right_n * _entropy_rows(right_counts)) / n
        gains = np.where(valid, parent - children, -np.inf)
        position = int(np.argmax(gains))
        gain = float(gains[position])
        if gain <= MIN_GAIN:
            continue
        if best is None or gain > best.gain + MIN_GAIN:
            threshold = float((values[position] + values[position + 1]) / 2.0)
            best = Split(gain, feature, threshold)
    return best


class DTree:
    """Trained tree; nodes[0] is the root."""

    def __init__(self, nodes: List[Node], feature_count: int, params: TreeParams = TreeParams()):
        self.nodes = nodes
        self.feature_count = feature_count
        self.params = params

    @property
    def leaf_count(self) -> int:
        return sum(1 for node in self.nodes if node.is_leaf)

    @property
    def depth(self) -> int:
        return max(node.depth for node in self.nodes)

    def leaf_index(self, x: Sequence[float]) -> int:
        index = 0
        node = self.nodes[0]
        while not node.is_leaf:
            index = node.left if x[node.feature] <= node.threshold else node.right
            node = self.nodes[index]
        return index

    def predict_one(self, x: Sequence[float]) -> int:
        return self.nodes[self.leaf_index(x)].label

    def predict_many(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in np.atleast_2d(X)], dtype=np.int64)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'feature_count': self.feature_count,
            'params': asdict(self.params),
            'nodes': [asdict(node) for node in self.nodes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DTree':
        return cls([Node(**node) for node in data['nodes']], int(data['feature_count']),
                   TreeParams(**data.get('params', {})))

    @classmethod
    def from_json(cls, text: str) -> 'DTree':
        return cls.from_dict(json.loads(text))


def train_matrix(X: np.ndarray, y: Sequence[int], params: TreeParams = TreeParams(),
                 rng: Optional[np.random.Generator] = None) -> DTree:
    """
    Grow a tree best-first: the frontier leaf with the highest gain is split
    next, until no leaf can be split or max_leaf_nodes is reached.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if len(y) < 1:
        raise EmptyDataError("no training samples")
    if params.max_training_samples is not None and len(y) > params.max_training_samples:
        rng = rng or np.random.default_rng(0)
        keep = np.sort(rng.choice(len(y), size=params.max_training_samples, replace=False))
        X, y = X[keep], y[keep]

    root_counts = Counter(y.tolist())
    nodes = [Node(samples=len(y), label=_majority(y), entropy=entropy(root_counts))]
    members = {0: np.arange(len(y))}
    frontier: List[Tuple[float, int, Split]] = []

    def consider(node_id: int):
        node = nodes[node_id]
        if params.max_depth is not None and node.depth >= params.max_depth:
            return
        rows = members[node_id]
        split = best_split(X[rows], y[rows], params)
        if split is not None:
            heapq.heappush(frontier, (-split.gain, node_id, split))

    consider(0)
    leaves = 1
    while frontier and (params.max_leaf_nodes is None or leaves < params.max_leaf_nodes):
        _, node_id, split = heapq.heappop(frontier)
        rows = members.pop(node_id)
        goes_left = X[rows, split.feature] <= split.threshold
        node = nodes[node_id]
        node.feature, node.threshold = split.feature, split.threshold
        for side, child_rows in (('left', rows[goes_left]), ('right', rows[~goes_left])):
            child_labels = y[child_rows]
            child = Node(samples=len(child_rows), label=_majority(child_labels),
                         entropy=entropy(Counter(child_labels.tolist())), depth=node.depth + 1)
            nodes.append(child)
            child_id = len(nodes) - 1
            setattr(node, side, child_id)
            members[child_id] = child_rows
            consider(child_id)
        leaves += 1

    tree = DTree(nodes, X.shape[1], params)
    logger.debug(f"Trained tree on {len(y)} samples: {tree.leaf_count} leaves, depth {tree.depth}")
    return tree


def train(samples: Sequence[TrainingSample], params: TreeParams = TreeParams(),
          rng: Optional[np.random.Generator] = None) -> DTree:
    if not samples:
        raise EmptyDataError("no training samples")
    mask = samples[0].features.mask
    X = np.vstack([s.features.active(mask) for s in samples])
    return train_matrix(X, [s.label for s in samples], params, rng)


def predict(tree: DTree, f: FeatureVector) -> int:
    return tree.predict_one(f.active())


def stratified_folds(y: np.ndarray, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Fold index per sample; each label's samples are shuffled then dealt round-robin."""
    assignment = np.empty(len(y), dtype=np.int64)
    offset = 0
    for label in np.unique(y):
        indices = rng.permutation(np.flatnonzero(y == label))
        assignment[indices] = (np.arange(len(indices)) + offset) % folds
        offset += len(indices)
    return assignment


def cross_validate_matrix(X: np.ndarray, y: Sequence[int], folds: int = 5,
                          params: TreeParams = TreeParams(), seed: int = 0) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if len(y) < folds:
        raise SampleSizeError(f"{len(y)} samples cannot fill {folds} folds")
    rng = np.random.default_rng(seed)
    assignment = stratified_folds(y, folds, rng)
    accuracies = []
    for fold in range(folds):
        held_out = assignment == fold
        if not held_out.any() or held_out.all():
            continue
        tree = train_matrix(X[~held_out], y[~held_out], params)
        accuracies.append(float(np.mean(tree.predict_many(X[held_out]) == y[held_out])))
    return float(np.mean(accuracies))


def cross_validate(samples: Sequence[TrainingSample], folds: int = 5,
                   params: TreeParams = TreeParams(), seed: int = 0) -> float:
    if len(samples) < folds:
        raise SampleSizeError(f"{len(samples)} samples cannot fill {folds} folds")
    mask = samples[0].features.mask
    X = np.vstack([s.features.active(mask) for s in samples])
    return cross_validate_matrix(X, [s.label for s in samples], folds, params, seed)

