"""Gradient-boosted decision trees for binary match probability.

Minimal leaf-wise GBDT trained on binary log loss. Per round, gradients
are g = p - y and hessians h = p(1-p); splits are found by exact sorted
scans (no histograms -- with four features at desk scale exactness is
cheaper than approximation) and leaf values are Newton steps
-sum(g) / (sum(h) + lambda). Training is single-threaded and fully
deterministic; a trained model is immutable and safe to share.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateData, FormatError, LengthMismatch
from .features import FeatureVector

PROB_CLAMP = 1e-12
RAW_CLAMP = 30.0


def sigmoid(raw: float) -> float:
    raw = max(-RAW_CLAMP, min(RAW_CLAMP, raw))
    return 1.0 / (1.0 + math.exp(-raw))


def _sigmoid_arr(raw: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(raw, -RAW_CLAMP, RAW_CLAMP)))


def logloss(labels: Sequence[float], probs: Sequence[float]) -> float:
    """Mean negative log-likelihood; probabilities are clamped away from 0/1."""
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if y.shape != p.shape:
        raise LengthMismatch(f"labels {y.shape} vs probs {p.shape}")
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def auc(labels: Sequence[float], scores: Sequence[float]) -> float:
    """Rank-based area under the ROC curve (ties get half credit)."""
    y = np.asarray(labels, dtype=np.float64)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape:
        raise LengthMismatch(f"labels {y.shape} vs scores {s.shape}")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateData("AUC needs both classes")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True, slots=True)
class TrainRow:
    features: FeatureVector
    label: int
    group: str

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 200
    learning_rate: float = 0.1
    max_leaves: int = 31
    min_samples_leaf: int = 20
    reg_lambda: float = 1.0
    seed: int = 0
    feature_indices: tuple[int, ...] = (0, 1, 2, 3)


@dataclass(frozen=True)
class Tree:
    """Flat arrays; node i is a leaf iff feature[i] < 0. Split rule:
    x[feature] <= threshold goes left (threshold is the left-side max)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict_one(self, x) -> float:
        feature = self.feature
        i = 0
        while feature[i] >= 0:
            i = self.left[i] if x[feature[i]] <= self.threshold[i] else self.right[i]
        return float(self.value[i])

    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())


@dataclass(frozen=True)
class BoostedModel:
    trees: tuple[Tree, ...]
    base_score: float
    learning_rate: float
    config: TrainConfig
    train_history: tuple[float, ...] = field(default_factory=tuple, compare=False)

    def raw_score(self, features) -> float:
        x = _as_input(features)[list(self.config.feature_indices)]
        total = self.base_score
        for tree in self.trees:
            total += self.learning_rate * tree.predict_one(x)
        return total


def _as_input(features) -> np.ndarray:
    if isinstance(features, FeatureVector):
        return np.asarray(features.as_tuple(), dtype=np.float64)
    return np.asarray(features, dtype=np.float64)


def predict(model: BoostedModel, features) -> float:
    """Match probability in (0, 1)."""
    return sigmoid(model.raw_score(features))


def predict_batch(model: BoostedModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)[:, list(model.config.feature_indices)]
    raw = np.full(len(X), model.base_score)
    for tree in model.trees:
        idx = np.zeros(len(X), dtype=np.int64)
        active = tree.feature[idx] >= 0
        while active.any():
            f = tree.feature[idx]
            go_left = X[np.arange(len(X)), np.maximum(f, 0)] <= tree.threshold[idx]
            idx = np.where(active, np.where(go_left, tree.left[idx], tree.right[idx]), idx)
            active = tree.feature[idx] >= 0
        raw += model.learning_rate * tree.value[idx]
    return _sigmoid_arr(raw)


class _TreeBuilder:
    def __init__(self, X, g, h, cfg: TrainConfig, order):
        self.X, self.g, self.h = X, g, h
        self.cfg = cfg
        self.order = order  # presorted row index arrays, one per feature
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.leaf_rows: dict[int, np.ndarray] = {}

    def _new_node(self, rows: np.ndarray) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        gsum, hsum = self.g[rows].sum(), self.h[rows].sum()
        self.value.append(-gsum / (hsum + self.cfg.reg_lambda))
        self.leaf_rows[node] = rows
        return node

    def _best_split(self, rows: np.ndarray):
        cfg = self.cfg
        if len(rows) < 2 * cfg.min_samples_leaf:
            return None
        mask = np.zeros(len(self.g), dtype=bool)
        mask[rows] = True
        g_total = self.g[rows].sum()
        h_total = self.h[rows].sum()
        parent = g_total * g_total / (h_total + cfg.reg_lambda)
        best = None
        for f in range(self.X.shape[1]):
            sorted_rows = self.order[f][mask[self.order[f]]]
            xs = self.X[sorted_rows, f]
            gc = np.cumsum(self.g[sorted_rows])
            hc = np.cumsum(self.h[sorted_rows])
            n = len(rows)
            i = np.arange(cfg.min_samples_leaf - 1, n - cfg.min_samples_leaf)
            if len(i) == 0:
                continue
            distinct = xs[i] < xs[i + 1]
            i = i[distinct]
            if len(i) == 0:
                continue
            gl, hl = gc[i], hc[i]
            gr, hr = g_total - gl, h_total - hl
            gain = (
                gl * gl / (hl + cfg.reg_lambda)
                + gr * gr / (hr + cfg.reg_lambda)
                - parent
            ) * 0.5
            k = int(np.argmax(gain))
            if gain[k] <= 0.0:
                continue
            cand = (float(gain[k]), -f, float(xs[i[k]]))
            if best is None or cand > best:
                best = cand
        if best is None:
            return None
        return best[0], -best[1], best[2]

    def build(self) -> Tree:
        rows = np.arange(len(self.g))
        root = self._new_node(rows)
        heap = []
        counter = 0
        split = self._best_split(rows)
        if split:
            heapq.heappush(heap, (-split[0], counter, root, split))
        n_leaves = 1
        while heap and n_leaves < self.cfg.max_leaves:
            _, _, node, (gain, f, thr) = heapq.heappop(heap)
            rows = self.leaf_rows.pop(node)
            go_left = self.X[rows, f] <= thr
            left_rows, right_rows = rows[go_left], rows[~go_left]
            self.feature[node] = f
            self.threshold[node] = thr
            self.value[node] = 0.0
            for child_rows, side in ((left_rows, "left"), (right_rows, "right")):
                child = self._new_node(child_rows)
                getattr(self, side)[node] = child
                child_split = self._best_split(child_rows)
                if child_split:
                    counter += 1
                    heapq.heappush(heap, (-child_split[0], counter, child, child_split))
            n_leaves += 1
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
        )


def train_matrix(X: np.ndarray, y: np.ndarray, config: TrainConfig = TrainConfig()) -> BoostedModel:
    """Fit on a feature matrix; columns are taken per config.feature_indices."""
    X = np.asarray(X, dtype=np.float64)[:, list(config.feature_indices)]
    y = np.asarray(y, dtype=np.float64)
    if len(X) != len(y):
        raise LengthMismatch(f"{len(X)} rows vs {len(y)} labels")
    if len(y) < 2 or len(np.unique(y)) < 2:
        raise DegenerateData("training needs at least two rows with both classes")

    pos = y.mean()
    base = math.log(pos / (1.0 - pos))
    raw = np.full(len(y), base)
    order = [np.argsort(X[:, f], kind="stable") for f in range(X.shape[1])]

    trees: list[Tree] = []
    history: list[float] = []
    identity = tuple(range(X.shape[1]))
    for _ in range(config.n_trees):
        p = _sigmoid_arr(raw)
        g = p - y
        h = p * (1.0 - p)
        tree = _TreeBuilder(X, g, h, config, order).build()
        trees.append(tree)
        # rows at each leaf are known from construction; update raw scores
        builder_update = np.zeros(len(y))
        stack = [(0, np.arange(len(y)))]
        while stack:
            node, rows = stack.pop()
            if tree.feature[node] < 0:
                builder_update[rows] = tree.value[node]
            else:
                go_left = X[rows, tree.feature[node]] <= tree.threshold[node]
                stack.append((int(tree.left[node]), rows[go_left]))
                stack.append((int(tree.right[node]), rows[~go_left]))
        raw = raw + config.learning_rate * builder_update
        history.append(logloss(y, _sigmoid_arr(raw)))

    return BoostedModel(
        trees=tuple(trees),
        base_score=base,
        learning_rate=config.learning_rate,
        config=config,
        train_history=tuple(history),
    )


def train(rows: Iterable[TrainRow], config: TrainConfig = TrainConfig()) -> BoostedModel:
    rows = list(rows)
    X = np.asarray([r.features.as_tuple() for r in rows], dtype=np.float64)
    y = np.asarray([r.label for r in rows], dtype=np.float64)
    return train_matrix(X, y, config)


def save_model(model: BoostedModel, path: str | Path) -> None:
    cfg = model.config
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("truckmatch-model v1\n")
        fh.write(f"n_trees={len(model.trees)}\n")
        fh.write(f"learning_rate={model.learning_rate.hex()}\n")
        fh.write(f"base_score={model.base_score.hex()}\n")
        fh.write(f"feature_indices={','.join(map(str, cfg.feature_indices))}\n")
        for t, tree in enumerate(model.trees):
            fh.write(f"tree {t} {len(tree.feature)}\n")
            for i in range(len(tree.feature)):
                if tree.feature[i] < 0:
                    fh.write(f"l {float(tree.value[i]).hex()}\n")
                else:
                    fh.write(
                        f"s {int(tree.feature[i])} {float(tree.threshold[i]).hex()} "
                        f"{int(tree.left[i])} {int(tree.right[i])}\n"
                    )


def load_model(path: str | Path) -> BoostedModel:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError:
        raise
    try:
        it = iter(enumerate(lines, 1))
        _, header = next(it)
        if header != "truckmatch-model v1":
            raise FormatError(f"{path}: unrecognized header {header!r}")
        meta = {}
        for _ in range(4):
            _, line = next(it)
            key, _, val = line.partition("=")
            meta[key] = val
        n_trees = int(meta["n_trees"])
        lr = float.fromhex(meta["learning_rate"])
        base = float.fromhex(meta["base_score"])
        feature_indices = tuple(int(v) for v in meta["feature_indices"].split(",") if v)
        trees = []
        for t in range(n_trees):
            _, line = next(it)
            tag, t_idx, n_nodes = line.split(" ")
            if tag != "tree" or int(t_idx) != t:
                raise FormatError(f"{path}: bad tree header {line!r}")
            feat, thr, left, right, value = [], [], [], [], []
            for _ in range(int(n_nodes)):
                lineno, line = next(it)
                parts = line.split(" ")
                if parts[0] == "l":
                    feat.append(-1)
                    thr.append(0.0)
                    left.append(-1)
                    right.append(-1)
                    value.append(float.fromhex(parts[1]))
                elif parts[0] == "s":
                    feat.append(int(parts[1]))
                    thr.append(float.fromhex(parts[2]))
                    left.append(int(parts[3]))
                    right.append(int(parts[4]))
                    value.append(0.0)
                else:
                    raise FormatError(f"{path}:{lineno}: bad node line {line!r}")
            trees.append(
                Tree(
                    feature=np.asarray(feat, dtype=np.int64),
                    threshold=np.asarray(thr, dtype=np.float64),
                    left=np.asarray(left, dtype=np.int64),
                    right=np.asarray(right, dtype=np.int64),
                    value=np.asarray(value, dtype=np.float64),
                )
            )
    except (StopIteration, ValueError, KeyError, IndexError) as exc:
        raise FormatError(f"{path}: truncated or malformed model file: {exc}") from exc
    cfg = TrainConfig(n_trees=n_trees, learning_rate=lr, feature_indices=feature_indices)
    return BoostedModel(trees=tuple(trees), base_score=base, learning_rate=lr, config=cfg)
