"""Least-squares gradient boosted regression trees.

Trees are grown greedily, level by level, with an exact split search: each
feature is presorted once per fit, and a single sweep over that order per
level scores every candidate threshold (the midpoint between consecutive
distinct values) of every open node. Ties in gain go to the lowest feature index, then the lowest
threshold. Everything runs in a single thread with a fixed reduction order,
so fits are bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "GbmConfig",
    "RegressionTree",
    "GbmModel",
    "fit_tree",
    "fit_gbm",
    "predict",
    "dumps_model",
    "loads_model",
]

FORMAT_VERSION = 1

# A split must remove more than this fraction of the node's raw sum of
# squares; keeps round-off from producing splits on constant targets.
_MIN_RELATIVE_GAIN = 1e-12


@dataclass(frozen=True)
class GbmConfig:
    max_iterations: int = 1000
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_leaf: int = 20
    validation_fraction: float = 0.1
    patience: int = 10
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ValueError("validation_fraction must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not self.tol >= 0:
            raise ValueError("tol must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    def replace(self, **changes) -> "GbmConfig":
        return GbmConfig(**{**asdict(self), **changes})


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Array-encoded binary tree; node 0 is the root.

    ``feature[i] == -1`` marks a leaf. Internal nodes send rows with
    ``x[feature] < threshold`` to ``left[i]`` and the rest to ``right[i]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf reached by each row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, n, f = rows[inner], node[inner], f[inner]
            go_left = X[r, f] < self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def equals(self, other: "RegressionTree") -> bool:
        return all(np.array_equal(getattr(self, a), getattr(other, a))
                   for a in ("feature", "threshold", "left", "right", "value"))


@dataclass(frozen=True, eq=False)
class GbmModel:
    base_prediction: float
    trees: tuple
    learning_rate: float
    iterations_used: int
    n_features: int
    train_loss: tuple = field(default=())

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def equals(self, other: "GbmModel") -> bool:
        return (self.base_prediction == other.base_prediction
                and self.learning_rate == other.learning_rate
                and self.iterations_used == other.iterations_used
                and self.n_features == other.n_features
                and len(self.trees) == len(other.trees)
                and all(a.equals(b) for a, b in zip(self.trees, other.trees)))


@njit(cache=True)
def _grow_tree(order, xs, X, y, max_depth, min_leaf, min_rel_gain, out):
    """Grow one tree level by level; ``out`` receives each row's leaf value.

    At every level a single sweep per feature over the presorted rows scores
    all thresholds of all open nodes. Features are scanned in ascending
    index, thresholds in ascending value, and only a strictly larger gain
    replaces the incumbent.
    """
    p, n = order.shape
    cap = 2 ** (max_depth + 1) - 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    node = np.zeros(n, np.int64)
    frontier = np.zeros(1, np.int64)
    n_nodes = 1

    for _ in range(max_depth):
        k = frontier.shape[0]
        slot = np.full(n_nodes, -1, np.int64)
        for j in range(k):
            slot[frontier[j]] = j
        counts = np.zeros(k, np.int64)
        for row in range(n):
            j = slot[node[row]]
            if j >= 0:
                counts[j] += 1
        local = np.full(n, -1, np.int64)
        totals = np.zeros(k)
        sq = np.zeros(k)
        for row in range(n):
            j = slot[node[row]]
            if j >= 0 and counts[j] >= 2 * min_leaf:
                local[row] = j
                totals[j] += y[row]
                sq[j] += y[row] * y[row]

        best_gain = np.full(k, -np.inf)
        best_f = np.full(k, -1, np.int64)
        best_lo = np.zeros(k)
        best_hi = np.zeros(k)
        s = np.zeros(k)
        c = np.zeros(k, np.int64)
        prev = np.zeros(k)
        for f in range(p):
            s[:] = 0.0
            c[:] = 0
            for i in range(n):
                row = order[f, i]
                j = local[row]
                if j < 0:
                    continue
                x = xs[f, i]
                n_left = c[j]
                n_right = counts[j] - n_left
                if n_left >= min_leaf and n_right >= min_leaf and prev[j] < x:
                    sl = s[j]
                    sr = totals[j] - sl
                    g = (sl * sl / n_left + sr * sr / n_right
                         - totals[j] * totals[j] / counts[j])
                    if g > best_gain[j]:
                        best_gain[j] = g
                        best_f[j] = f
                        best_lo[j] = prev[j]
                        best_hi[j] = x
                s[j] += y[row]
                c[j] += 1
                prev[j] = x

        n_split = 0
        for j in range(k):
            if best_gain[j] > min_rel_gain * sq[j]:
                n_split += 1
        if n_split == 0:
            break
        new_frontier = np.empty(2 * n_split, np.int64)
        thr = np.zeros(k)
        split = np.zeros(k, np.bool_)
        m = 0
        for j in range(k):
            if not best_gain[j] > min_rel_gain * sq[j]:
                continue
            a, b = best_lo[j], best_hi[j]
            t = a + (b - a) / 2
            if not (a < t and t <= b):
                t = b
            nid = frontier[j]
            split[j] = True
            thr[j] = t
            feature[nid] = best_f[j]
            threshold[nid] = t
            left[nid] = n_nodes
            right[nid] = n_nodes + 1
            new_frontier[m] = n_nodes
            new_frontier[m + 1] = n_nodes + 1
            m += 2
            n_nodes += 2
        for row in range(n):
            j = local[row]
            if j >= 0 and split[j]:
                nid = frontier[j]
                if X[row, feature[nid]] < thr[j]:
                    node[row] = left[nid]
                else:
                    node[row] = right[nid]
        frontier = new_frontier

    value = np.zeros(n_nodes)
    cnt = np.zeros(n_nodes, np.int64)
    for row in range(n):
        value[node[row]] += y[row]
        cnt[node[row]] += 1
    for i in range(n_nodes):
        if feature[i] < 0 and cnt[i] > 0:
            value[i] /= cnt[i]
        else:
            value[i] = 0.0
    for row in range(n):
        out[row] = value[node[row]]
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
            right[:n_nodes], value)


def presort(X: np.ndarray) -> np.ndarray:
    """Per-feature ascending row order, shape ``(n_features, n_rows)``."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int32))


def _restrict_order(order: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    """Presort of ``X[rows]`` (``rows`` ascending) derived from the presort of ``X``."""
    new_index = np.full(n, -1, dtype=np.int32)
    new_index[rows] = np.arange(rows.size, dtype=np.int32)
    mapped = new_index[order]
    return np.ascontiguousarray(mapped[mapped >= 0].reshape(order.shape[0], rows.size))


class _TreeGrower:
    """Grows trees on a fixed feature matrix, reusing one presort."""

    def __init__(self, X: np.ndarray, max_depth: int, min_samples_leaf: int,
                 order: np.ndarray | None = None):
        self.X = X
        self.max_depth = max_depth
        self.min_leaf = min_samples_leaf
        if order is None:
            order = presort(X)
        self.order = order
        self.xs = np.take_along_axis(X.T, order, axis=1)

    def grow(self, y: np.ndarray, out: np.ndarray | None = None) -> RegressionTree:
        """Fit one tree to ``y``; if given, ``out`` receives each row's leaf value."""
        if out is None:
            out = np.empty_like(y)
        arrays = _grow_tree(self.order, self.xs, self.X, y, self.max_depth,
                            self.min_leaf, _MIN_RELATIVE_GAIN, out)
        return RegressionTree(*arrays)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2:
        raise ValueError("features must be a 2-d array")
    if y.shape != (X.shape[0],):
        raise ValueError(f"targets have shape {y.shape}, expected ({X.shape[0]},)")
    if X.shape[1] == 0:
        raise ValueError("features have zero columns")
    if not np.isfinite(y).all():
        raise ValueError("targets contain non-finite values")
    return X, y


def fit_tree(X, y, config: GbmConfig) -> RegressionTree:
    """Fit a single CART regression tree with ``config``'s depth and leaf size."""
    X, y = _check_xy(X, y)
    if X.shape[0] < 2 * config.min_samples_leaf:
        raise ValueError(f"need at least {2 * config.min_samples_leaf} rows, "
                         f"got {X.shape[0]}")
    return _TreeGrower(X, config.max_depth, config.min_samples_leaf).grow(y)


def _boost(X, y, config: GbmConfig, n_trees: int, order, X_val=None, y_val=None):
    base = float(np.mean(y))
    pred = np.full(y.shape, base)
    grower = _TreeGrower(X, config.max_depth, config.min_samples_leaf, order)
    leaf_values = np.empty_like(y)
    lr = config.learning_rate
    trees, losses = [], [float(np.mean((y - pred) ** 2))]

    validating = X_val is not None
    if validating:
        val_pred = np.full(y_val.shape, base)
        best_loss = float(np.mean((y_val - val_pred) ** 2))
        stale = 0

    for it in range(n_trees):
        tree = grower.grow(y - pred, out=leaf_values)
        pred += lr * leaf_values
        trees.append(tree)
        losses.append(float(np.mean((y - pred) ** 2)))
        if validating:
            val_pred += lr * tree.predict(X_val)
            loss = float(np.mean((y_val - val_pred) ** 2))
            if loss < best_loss - config.tol:
                best_loss, stale = loss, 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    if validating:
        return len(trees)
    return base, trees, losses


def fit_gbm(X, y, config: GbmConfig = GbmConfig()) -> GbmModel:
    """Stagewise least-squares boosting with early stopping.

    A seeded shuffle holds out ``validation_fraction`` of the rows; boosting
    on the rest stops once validation MSE has failed to improve by more than
    ``tol`` for ``patience`` rounds. Trees fitted before the stop are kept
    (there is no rollback to the best round). That many iterations are then
    refit on all rows, so the base prediction is the mean of every supplied
    target.
    """
    X, y = _check_xy(X, y)
    n = X.shape[0]
    if n < 10:
        raise ValueError(f"need at least 10 rows, got {n}")
    n_val = math.ceil(config.validation_fraction * n)
    if n_val >= n:
        raise ValueError("validation split leaves no training rows")
    perm = np.random.default_rng(config.seed).permutation(n)
    val, tr = np.sort(perm[:n_val]), np.sort(perm[n_val:])

    order = presort(X)
    n_trees = _boost(X[tr], y[tr], config, config.max_iterations,
                     _restrict_order(order, tr, n), X[val], y[val])
    base, trees, losses = _boost(X, y, config, n_trees, order)
    return GbmModel(base, tuple(trees), config.learning_rate, n_trees,
                    X.shape[1], tuple(losses))


@njit(cache=True)
def _predict_forest(X, offsets, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.zeros(n)
    for t in range(offsets.shape[0] - 1):
        root = offsets[t]
        for i in range(n):
            node = root
            while feature[node] >= 0:
                if X[i, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] += value[node]
    return out


def _packed(model: GbmModel):
    """Concatenate all trees into flat node arrays with global child ids."""
    packed = model.__dict__.get("_packed")
    if packed is None:
        sizes = [len(t.feature) for t in model.trees]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        shift = lambda a, o: np.where(a >= 0, a + o, -1)
        packed = (
            offsets,
            np.concatenate([t.feature for t in model.trees] or [np.zeros(0, np.int64)]),
            np.concatenate([t.threshold for t in model.trees] or [np.zeros(0)]),
            np.concatenate([shift(t.left, o) for t, o in zip(model.trees, offsets)]
                           or [np.zeros(0, np.int64)]),
            np.concatenate([shift(t.right, o) for t, o in zip(model.trees, offsets)]
                           or [np.zeros(0, np.int64)]),
            np.concatenate([t.value for t in model.trees] or [np.zeros(0)]),
        )
        object.__setattr__(model, "_packed", packed)
    return packed


def predict(model: GbmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} feature columns, "
                         f"got shape {X.shape}")
    if not model.trees:
        return np.full(X.shape[0], model.base_prediction)
    total = _predict_forest(np.ascontiguousarray(X), *_packed(model))
    return model.base_prediction + model.learning_rate * total


# -- serialization -----------------------------------------------------------

def dumps_model(model: GbmModel) -> str:
    """Serialize to versioned JSON; reals are stored as hex for exact reload."""
    doc = {
        "format": "ipc_uplift.gbm",
        "version": FORMAT_VERSION,
        "base_prediction": float.hex(model.base_prediction),
        "learning_rate": float.hex(model.learning_rate),
        "iterations_used": model.iterations_used,
        "n_features": model.n_features,
        "trees": [
            {"nodes": [[int(f), float.hex(float(t)), int(l), int(r), float.hex(float(v))]
                       for f, t, l, r, v in zip(tree.feature, tree.threshold,
                                                tree.left, tree.right, tree.value)]}
            for tree in model.trees
        ],
    }
    return json.dumps(doc, indent=1)


def loads_model(text: str) -> GbmModel:
    doc = json.loads(text)
    if doc.get("format") != "ipc_uplift.gbm":
        raise ValueError("not a serialized GbmModel")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {doc.get('version')}")
    trees = []
    for t in doc["trees"]:
        f, thr, l, r, v = zip(*t["nodes"])
        trees.append(RegressionTree(np.array(f, dtype=np.int64),
                                    np.array([float.fromhex(s) for s in thr]),
                                    np.array(l, dtype=np.int64),
                                    np.array(r, dtype=np.int64),
                                    np.array([float.fromhex(s) for s in v])))
    return GbmModel(float.fromhex(doc["base_prediction"]), tuple(trees),
                    float.fromhex(doc["learning_rate"]), doc["iterations_used"],
                    doc["n_features"])
