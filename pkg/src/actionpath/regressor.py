"""Gradient-boosted regression trees with squared-error loss, built in.

Exact greedy splits over sorted unique values, residual (negative-gradient)
targets per round, and per-split gain bookkeeping for feature importance.
Rows are put into a canonical order before fitting so the result is invariant
to input row permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import DataError, Dataset

__all__ = [
    "GbtHyperParams",
    "GbtModel",
    "ImportanceReport",
    "design_matrix",
    "fit_gbt",
    "evaluate",
    "cross_validate",
    "rfe",
    "DEFAULT_GRID",
]


@dataclass(frozen=True)
class GbtHyperParams:
    tree_count: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 1
    subsample_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.tree_count < 1:
            raise DataError("tree_count must be >= 1")
        if self.max_depth < 1:
            raise DataError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise DataError("learning_rate must be in (0, 1]")
        if self.min_samples_leaf < 1:
            raise DataError("min_samples_leaf must be >= 1")
        if not 0.0 < self.subsample_fraction <= 1.0:
            raise DataError("subsample_fraction must be in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "tree_count": self.tree_count,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_samples_leaf": self.min_samples_leaf,
            "subsample_fraction": self.subsample_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d) -> "GbtHyperParams":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


# Small CV-selectable grid; adequate at the few-hundred-row scale this
# package targets.
DEFAULT_GRID = [
    GbtHyperParams(tree_count=t, max_depth=d, learning_rate=r)
    for d in (2, 3, 4)
    for t in (100, 300)
    for r in (0.05, 0.1)
]


def design_matrix(schema, values):
    """Expand feature columns of a cell matrix into a numeric design matrix.

    Continuous features pass through; discrete features become one one-hot
    column per level, named ``<column>=<level>``. ``values`` is a full cell
    matrix aligned with ``schema``. Missing cells are rejected.
    """
    values = np.asarray(values, dtype=np.float64)
    cols, names = [], []
    for j, spec in enumerate(schema):
        if spec.role != "feature":
            continue
        cells = values[:, j]
        if np.isnan(cells).any():
            raise DataError(f"column {spec.name!r} has missing cells; impute before model fitting")
        if spec.kind == "continuous":
            cols.append(cells)
            names.append(spec.name)
        else:
            idx = cells.astype(np.int64)
            for lv, label in enumerate(spec.levels):
                cols.append((idx == lv).astype(np.float64))
                names.append(f"{spec.name}={label}")
    return np.column_stack(cols), names


@dataclass
class ImportanceReport:
    """Total squared-error-reduction gain per design feature."""

    gains: dict[str, float]

    def ranked(self) -> list[tuple[str, float]]:
        order = sorted(self.gains.items(), key=lambda kv: -kv[1])
        return order

    def top(self, n: int) -> list[str]:
        return [name for name, _ in self.ranked()[:n]]


class _TreeBuilder:
    """Grows one regression tree on residuals; flat-array output."""

    def __init__(self, max_depth, min_samples_leaf):
        self.max_depth = max_depth
        self.min_leaf = min_samples_leaf
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.gain = []

    def _new_node(self):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        self.gain.append(0.0)
        return len(self.feature) - 1

    def build(self, X, g):
        root = self._new_node()
        self._grow(root, X, g, depth=0)
        return (
            np.asarray(self.feature, dtype=np.int32),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.int32),
            np.asarray(self.right, dtype=np.int32),
            np.asarray(self.value, dtype=np.float64),
            np.asarray(self.gain, dtype=np.float64),
        )

    def _grow(self, node, X, g, depth):
        n = g.shape[0]
        if depth >= self.max_depth or n < 2 * self.min_leaf:
            self.value[node] = float(g.mean()) if n else 0.0
            return
        best = self._best_split(X, g)
        if best is None:
            self.value[node] = float(g.mean())
            return
        gain, feat, thr = best
        self.feature[node] = feat
        self.threshold[node] = thr
        self.gain[node] = gain
        mask = X[:, feat] <= thr
        li = self._new_node()
        ri = self._new_node()
        self.left[node] = li
        self.right[node] = ri
        self._grow(li, X[mask], g[mask], depth + 1)
        self._grow(ri, X[~mask], g[~mask], depth + 1)

    def _best_split(self, X, g):
        # Ties break to the lowest feature index, then the lowest threshold.
        n = g.shape[0]
        best = None
        for feat in range(X.shape[1]):
            col = X[:, feat]
            order = np.lexsort((g, col))  # secondary key keeps sums order-stable
            sv = col[order]
            sg = g[order]
            cuts = np.flatnonzero(sv[1:] > sv[:-1]) + 1  # left-side sizes
            if cuts.size == 0:
                continue
            cuts = cuts[(cuts >= self.min_leaf) & (n - cuts >= self.min_leaf)]
            if cuts.size == 0:
                continue
            csum = np.cumsum(sg)
            total = csum[-1]
            left = csum[cuts - 1]
            gain = left**2 / cuts + (total - left) ** 2 / (n - cuts) - total**2 / n
            k = int(np.argmax(gain))  # first max: lowest threshold
            if gain[k] > 0.0 and (best is None or gain[k] > best[0]):
                thr = (sv[cuts[k] - 1] + sv[cuts[k]]) / 2.0
                best = (float(gain[k]), feat, float(thr))
        return best


@dataclass
class GbtModel:
    """Additive tree ensemble: predict(x) = base_score + rate * sum of leaf weights."""

    base_score: float
    hyperparams: GbtHyperParams
    feature_names: list[str]
    # Flat node arrays over all trees; feature < 0 marks a leaf.
    node_feature: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    node_threshold: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    node_left: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    node_right: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    node_value: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    node_gain: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]
    tree_roots: np.ndarray = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.node_feature is None:
            self.node_feature = np.empty(0, dtype=np.int32)
            self.node_threshold = np.empty(0)
            self.node_left = np.empty(0, dtype=np.int32)
            self.node_right = np.empty(0, dtype=np.int32)
            self.node_value = np.empty(0)
            self.node_gain = np.empty(0)
            self.tree_roots = np.empty(0, dtype=np.int32)
        bad = self.node_feature[self.node_feature >= 0]
        if bad.size and bad.max() >= len(self.feature_names):
            raise DataError("tree references a feature index beyond the model arity")

    @property
    def arity(self) -> int:
        return len(self.feature_names)

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.arity,):
            raise DataError(f"expected feature vector of arity {self.arity}, got shape {x.shape}")
        return float(self.predict_batch(x[None, :])[0])

    def predict_batch(self, X) -> np.ndarray:
        """Vectorized over rows and trees; loop depth is the tree height."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.arity:
            raise DataError(f"expected (rows, {self.arity}) matrix, got shape {X.shape}")
        n = X.shape[0]
        if self.tree_roots.size == 0:
            return np.full(n, self.base_score)
        cur = np.broadcast_to(self.tree_roots, (n, self.tree_roots.size)).copy()
        rows = np.arange(n)[:, None]
        while True:
            feat = self.node_feature[cur]
            internal = feat >= 0
            if not internal.any():
                break
            fx = X[rows, np.where(internal, feat, 0)]
            go_left = fx <= self.node_threshold[cur]
            nxt = np.where(go_left, self.node_left[cur], self.node_right[cur])
            cur = np.where(internal, nxt, cur)
        rate = self.hyperparams.learning_rate
        return self.base_score + rate * self.node_value[cur].sum(axis=1)

    def importance(self) -> ImportanceReport:
        gains = {name: 0.0 for name in self.feature_names}
        for feat, gain in zip(self.node_feature, self.node_gain):
            if feat >= 0:
                gains[self.feature_names[feat]] += float(gain)
        return ImportanceReport(gains=gains)

    def to_dict(self, standardizer=None, metrics=None) -> dict:
        d = {
            "kind": "gbt",
            "base_score": self.base_score,
            "hyperparams": self.hyperparams.to_dict(),
            "feature_names": list(self.feature_names),
            "nodes": {
                "feature": self.node_feature.tolist(),
                "threshold": self.node_threshold.tolist(),
                "left": self.node_left.tolist(),
                "right": self.node_right.tolist(),
                "value": self.node_value.tolist(),
                "gain": self.node_gain.tolist(),
            },
            "tree_roots": self.tree_roots.tolist(),
        }
        if standardizer is not None:
            d["standardizer"] = standardizer.to_dict()
        if metrics is not None:
            d["metrics"] = metrics
        return d

    @classmethod
    def from_dict(cls, d) -> "GbtModel":
        nodes = d["nodes"]
        return cls(
            base_score=float(d["base_score"]),
            hyperparams=GbtHyperParams.from_dict(d["hyperparams"]),
            feature_names=list(d["feature_names"]),
            node_feature=np.asarray(nodes["feature"], dtype=np.int32),
            node_threshold=np.asarray(nodes["threshold"], dtype=np.float64),
            node_left=np.asarray(nodes["left"], dtype=np.int32),
            node_right=np.asarray(nodes["right"], dtype=np.int32),
            node_value=np.asarray(nodes["value"], dtype=np.float64),
            node_gain=np.asarray(nodes["gain"], dtype=np.float64),
            tree_roots=np.asarray(d["tree_roots"], dtype=np.int32),
        )


def _canonical_order(X, y):
    # Sort rows by (features..., y) so fits ignore input row permutation.
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def fit_gbt(X, y, hp: GbtHyperParams, feature_names=None) -> GbtModel:
    """Boost ``hp.tree_count`` depth-limited trees against squared error.

    Leaf weights are raw residual means; the learning rate is applied at
    prediction time. An all-identical response yields a constant model.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DataError("X and y must align row-wise")
    if X.shape[0] < 2:
        raise DataError("need at least 2 rows to fit")
    if np.isnan(X).any() or np.isnan(y).any():
        raise DataError("missing values must be imputed before fitting")
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(X.shape[1])]
    order = _canonical_order(X, y)
    X = X[order]
    y = y[order]

    rng = np.random.default_rng(hp.seed)
    n = X.shape[0]
    base = float(y.mean())
    pred = np.full(n, base)

    feature, threshold, left, right, value, gain, roots = [], [], [], [], [], [], []
    offset = 0
    for _ in range(hp.tree_count):
        residual = y - pred
        if hp.subsample_fraction < 1.0:
            m = max(1, int(round(n * hp.subsample_fraction)))
            rows = np.sort(rng.choice(n, size=m, replace=False))
        else:
            rows = slice(None)
        builder = _TreeBuilder(hp.max_depth, hp.min_samples_leaf)
        tf, tt, tl, tr, tv, tg = builder.build(X[rows], residual[rows])
        roots.append(offset)
        feature.append(tf)
        threshold.append(tt)
        left.append(np.where(tl >= 0, tl + offset, tl))
        right.append(np.where(tr >= 0, tr + offset, tr))
        value.append(tv)
        gain.append(tg)
        offset += tf.size
        tree = GbtModel(
            base_score=0.0,
            hyperparams=hp,
            feature_names=feature_names,
            node_feature=tf,
            node_threshold=tt,
            node_left=tl,
            node_right=tr,
            node_value=tv,
            node_gain=tg,
            tree_roots=np.zeros(1, dtype=np.int32),
        )
        pred = pred + tree.predict_batch(X)  # includes the learning rate

    return GbtModel(
        base_score=base,
        hyperparams=hp,
        feature_names=list(feature_names),
        node_feature=np.concatenate(feature),
        node_threshold=np.concatenate(threshold),
        node_left=np.concatenate(left),
        node_right=np.concatenate(right),
        node_value=np.concatenate(value),
        node_gain=np.concatenate(gain),
        tree_roots=np.asarray(roots, dtype=np.int32),
    )


def fit_regressor(train: Dataset, hp: GbtHyperParams) -> GbtModel:
    """Dataset-level wrapper: one-hot expands discrete features, then fits."""
    X, names = design_matrix(train.schema, train.values)
    return fit_gbt(X, train.response, hp, feature_names=names)


def evaluate(model: GbtModel, X, y) -> dict:
    """RMSE and R^2 on a held-out set; R^2 is None for a zero-variance response."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise DataError("cannot evaluate on an empty set")
    pred = model.predict_batch(X)
    resid = y - pred
    rmse = float(np.sqrt(np.mean(resid**2)))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return {"rmse": rmse, "r2": None}
    return {"rmse": rmse, "r2": float(1.0 - np.sum(resid**2) / ss_tot)}


def _fold_indices(n, folds, seed):
    if folds < 2:
        raise DataError("folds must be >= 2")
    if folds > n:
        raise DataError(f"cannot make {folds} folds from {n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def cross_validate(X, y, grid, folds: int, seed: int) -> GbtHyperParams:
    """Pick the grid entry with minimal mean fold RMSE; ties keep grid order."""
    if not grid:
        raise DataError("hyperparameter grid is empty")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    fold_idx = _fold_indices(y.shape[0], folds, seed)
    all_idx = np.arange(y.shape[0])
    best_hp, best_rmse = None, np.inf
    for hp in grid:
        fold_rmse = []
        for test_rows in fold_idx:
            train_rows = np.setdiff1d(all_idx, test_rows)
            model = fit_gbt(X[train_rows], y[train_rows], hp)
            fold_rmse.append(evaluate(model, X[test_rows], y[test_rows])["rmse"])
        mean_rmse = float(np.mean(fold_rmse))
        if mean_rmse < best_rmse:
            best_hp, best_rmse = hp, mean_rmse
    return best_hp


def rfe(X, y, feature_names, keep: int, folds: int, seed: int, hp: GbtHyperParams | None = None):
    """Recursive feature elimination under cross-validated mean importance.

    Repeatedly drops the feature with the lowest importance averaged over the
    CV folds (ties drop the earliest column) until ``keep`` names remain.
    Returned names preserve the original column order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    names = list(feature_names)
    if not 1 <= keep <= len(names):
        raise DataError(f"keep must be in [1, {len(names)}], got {keep}")
    if hp is None:
        hp = GbtHyperParams(tree_count=100, max_depth=3, learning_rate=0.1, seed=seed)
    fold_idx = _fold_indices(y.shape[0], folds, seed)
    all_idx = np.arange(y.shape[0])
    current = list(range(len(names)))
    while len(current) > keep:
        mean_gain = np.zeros(len(current))
        for test_rows in fold_idx:
            train_rows = np.setdiff1d(all_idx, test_rows)
            model = fit_gbt(
                X[np.ix_(train_rows, current)],
                y[train_rows],
                hp,
                feature_names=[names[j] for j in current],
            )
            report = model.importance()
            mean_gain += np.array([report.gains[names[j]] for j in current])
        drop = int(np.argmin(mean_gain / len(fold_idx)))
        current.pop(drop)
    return [names[j] for j in current]
