"""Second-order gradient-boosted decision trees for binary targets.

Supports per-instance weights (weighted logistic loss) and per-feature weights
acting through weighted column subsampling, with fully seed-deterministic
training and exact greedy split finding over sorted unique values.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .data import EncodedMatrix

ACCEPT = "Accept"
REJECT = "Reject"

FEATURE_WEIGHT_MODES = ("sampling", "gain_scaling")


class TrainingError(ValueError):
    """Invalid training inputs or parameters."""


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    colsample_bytree: float = 0.8
    min_child_weight: float = 1.0
    seed: int = 0
    feature_weight_mode: str = "sampling"

    def __post_init__(self):
        if self.n_trees < 1:
            raise TrainingError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise TrainingError("max_depth must be >= 1")
        if not (0.0 < self.learning_rate <= 1.0):
            raise TrainingError("learning_rate must be in (0, 1]")
        if self.reg_lambda < 0:
            raise TrainingError("reg_lambda must be >= 0")
        if self.gamma < 0:
            raise TrainingError("gamma must be >= 0")
        if not (0.0 < self.colsample_bytree <= 1.0):
            raise TrainingError("colsample_bytree must be in (0, 1]")
        if self.min_child_weight < 0:
            raise TrainingError("min_child_weight must be >= 0")
        if self.feature_weight_mode not in FEATURE_WEIGHT_MODES:
            raise TrainingError(f"feature_weight_mode must be one of {FEATURE_WEIGHT_MODES}")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "reg_lambda": self.reg_lambda,
            "gamma": self.gamma,
            "colsample_bytree": self.colsample_bytree,
            "min_child_weight": self.min_child_weight,
            "seed": self.seed,
            "feature_weight_mode": self.feature_weight_mode,
        }

    @staticmethod
    def from_dict(d: Mapping) -> "GbdtParams":
        return GbdtParams(**dict(d))


def normalize_weights(raw: Mapping[str, float]) -> dict[str, float]:
    """Scale a raw feature-weight map so the entries sum to 1."""
    if not raw:
        raise TrainingError("cannot normalize an empty weight map")
    for k, v in raw.items():
        if v < 0:
            raise TrainingError(f"negative weight for feature {k!r}: {v}")
    total = float(sum(raw.values()))
    if total <= 0:
        raise TrainingError("cannot normalize all-zero weights")
    return {k: float(v) / total for k, v in raw.items()}


def uniform_weights(features: Sequence[str]) -> dict[str, float]:
    return normalize_weights({f: 1.0 for f in features})


def balance_instance_weights(
    y: np.ndarray | Sequence[float],
    feedback_rows: Sequence[int] = (),
    alpha: float = 1.0,
) -> np.ndarray:
    """Per-row training weights balancing classes within the original and
    feedback blocks, with the feedback block's total weight scaled to
    ``alpha`` times the original block's total.

    Within each block every class contributes equally (rows weighted inversely
    to the class count in that block); a block's total weight equals its row
    count before the alpha rescaling.
    """
    if alpha < 0:
        raise TrainingError("alpha must be >= 0")
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    fb = np.zeros(n, dtype=bool)
    fb_idx = np.asarray(sorted(feedback_rows), dtype=int)
    if len(fb_idx) and (fb_idx.min() < 0 or fb_idx.max() >= n):
        raise TrainingError("feedback row index out of range")
    fb[fb_idx] = True
    w = np.zeros(n, dtype=np.float64)

    def _block(mask: np.ndarray) -> float:
        m = int(mask.sum())
        if m == 0:
            return 0.0
        classes = np.unique(y[mask])
        k = len(classes)
        for c in classes:
            sel = mask & (y == c)
            w[sel] = m / (k * sel.sum())
        return float(m)

    w_orig = _block(~fb)
    w_fb = _block(fb)
    if w_fb > 0:
        target_total = alpha * w_orig
        w[fb] *= target_total / w_fb
    return w


@dataclass(frozen=True)
class Tree:
    """Flat array form of one regression tree; node 0 is the root and leaves
    carry learning-rate-scaled weights."""

    feature: tuple[int, ...]
    threshold: tuple[float, ...]
    left: tuple[int, ...]
    right: tuple[int, ...]
    value: tuple[float, ...]

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        feat = np.asarray(self.feature)
        thr = np.asarray(self.threshold)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        val = np.asarray(self.value)
        active = left[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            x = X[rows, feat[cur]]
            node[rows] = np.where(x < thr[cur], left[cur], right[cur])
            active = left[node] >= 0
        return val[node]

    def depth(self) -> int:
        def d(node: int) -> int:
            if self.is_leaf(node):
                return 0
            return 1 + max(d(self.left[node]), d(self.right[node]))

        return d(0)

    def split_columns(self) -> set[int]:
        return {f for f, l in zip(self.feature, self.left) if l >= 0}

    def to_nested(self) -> dict:
        def node_dict(i: int) -> dict:
            if self.is_leaf(i):
                return {"leaf": self.value[i]}
            return {
                "feature": self.feature[i],
                "threshold": self.threshold[i],
                "left": node_dict(self.left[i]),
                "right": node_dict(self.right[i]),
            }

        return node_dict(0)

    @staticmethod
    def from_nested(d: Mapping) -> "Tree":
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []

        def add(nd: Mapping) -> int:
            i = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            if "leaf" in nd:
                value[i] = float(nd["leaf"])
            else:
                feature[i] = int(nd["feature"])
                threshold[i] = float(nd["threshold"])
                left[i] = add(nd["left"])
                right[i] = add(nd["right"])
            return i

        add(d)
        return Tree(
            feature=tuple(feature),
            threshold=tuple(threshold),
            left=tuple(left),
            right=tuple(right),
            value=tuple(value),
        )


@dataclass(frozen=True)
class Prediction:
    probability: float  # probability of target = 1, i.e. Reject
    label: str
    confidence: float


@dataclass(frozen=True)
class Model:
    """Immutable trained ensemble plus the inputs' fingerprint."""

    trees: tuple[Tree, ...]
    base_score: float
    params: GbdtParams
    feature_weights: dict[str, float]
    n_columns: int
    fingerprint: str
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "schema_version": "1",
            "base_score": self.base_score,
            "params": self.params.to_dict(),
            "feature_weights": dict(sorted(self.feature_weights.items())),
            "n_columns": self.n_columns,
            "fingerprint": self.fingerprint,
            "warnings": list(self.warnings),
            "trees": [t.to_nested() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_dict(d: Mapping) -> "Model":
        return Model(
            trees=tuple(Tree.from_nested(t) for t in d["trees"]),
            base_score=float(d["base_score"]),
            params=GbdtParams.from_dict(d["params"]),
            feature_weights={k: float(v) for k, v in d["feature_weights"].items()},
            n_columns=int(d["n_columns"]),
            fingerprint=d["fingerprint"],
            warnings=tuple(d.get("warnings", ())),
        )

    @staticmethod
    def from_json(s: str) -> "Model":
        return Model.from_dict(json.loads(s))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def training_fingerprint(
    X: np.ndarray,
    y: np.ndarray,
    iw: np.ndarray,
    fw: Mapping[str, float],
    params: GbdtParams,
) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(iw, dtype=np.float64).tobytes())
    h.update(json.dumps({k: repr(float(v)) for k, v in sorted(fw.items())}).encode())
    h.update(json.dumps(params.to_dict(), sort_keys=True).encode())
    h.update(str(X.shape).encode())
    return h.hexdigest()


class _SplitFinder:
    """Per-training split machinery: presorted column orders and a fast path
    for two-valued columns (the bulk after one-hot encoding)."""

    def __init__(self, X: np.ndarray, params: GbdtParams):
        self.X = X
        self.params = params
        n, d = X.shape
        self.binary_cols: list[int] = []
        self.binary_hi: dict[int, float] = {}
        self.binary_thr: dict[int, float] = {}
        self.order: dict[int, np.ndarray] = {}
        for c in range(d):
            u = np.unique(X[:, c])
            if len(u) <= 2:
                self.binary_cols.append(c)
                if len(u) == 2:
                    self.binary_hi[c] = float(u[1])
                    self.binary_thr[c] = float((u[0] + u[1]) / 2.0)
            else:
                self.order[c] = np.argsort(X[:, c], kind="stable")
        bc = [c for c in self.binary_cols if c in self.binary_hi]
        self.bcols = np.asarray(bc, dtype=int)
        # indicator of the upper value per two-valued column
        self.B = (X[:, self.bcols] == np.asarray([self.binary_hi[c] for c in bc])) * 1.0 \
            if len(bc) else np.zeros((n, 0))

    def best_split(self, mask: np.ndarray, g: np.ndarray, h: np.ndarray,
                   cols: np.ndarray, gain_scale: dict[int, float] | None):
        """Return (gain, col, threshold) of the best admissible split or None.

        Ties resolve to the lowest column index, then the lowest threshold.
        """
        lam = self.params.reg_lambda
        gamma = self.params.gamma
        mcw = self.params.min_child_weight
        G = float(g[mask].sum())
        H = float(h[mask].sum())
        parent = G * G / (H + lam)

        cand: dict[int, tuple[float, float]] = {}

        bsel = np.asarray([c for c in cols if c in self.binary_thr], dtype=int)
        if len(bsel):
            pos = {int(c): i for i, c in enumerate(self.bcols)}
            bidx = np.asarray([pos[int(c)] for c in bsel], dtype=int)
            Bm = self.B[mask][:, bidx]
            gm = g[mask]
            hm = h[mask]
            G_hi = np.einsum("i,ij->j", gm, Bm)
            H_hi = np.einsum("i,ij->j", hm, Bm)
            n_hi = Bm.sum(axis=0)
            n_node = int(mask.sum())
            G_lo = G - G_hi
            H_lo = H - H_hi
            valid = (n_hi > 0) & (n_hi < n_node) & (H_lo >= mcw) & (H_hi >= mcw)
            gains = 0.5 * (G_lo**2 / (H_lo + lam) + G_hi**2 / (H_hi + lam) - parent) - gamma
            for j, c in enumerate(bsel):
                if valid[j]:
                    gain = float(gains[j])
                    if gain_scale is not None:
                        gain = gain + gamma
                        gain = gain * gain_scale[int(c)] - gamma
                    cand[int(c)] = (gain, self.binary_thr[int(c)])

        for c in cols:
            c = int(c)
            if c not in self.order:
                continue
            ord_node = self.order[c][mask[self.order[c]]]
            if len(ord_node) < 2:
                continue
            vals = self.X[ord_node, c]
            gs = np.cumsum(g[ord_node])[:-1]
            hs = np.cumsum(h[ord_node])[:-1]
            boundary = vals[:-1] != vals[1:]
            if not boundary.any():
                continue
            G_l = gs[boundary]
            H_l = hs[boundary]
            G_r = G - G_l
            H_r = H - H_l
            ok = (H_l >= mcw) & (H_r >= mcw)
            if not ok.any():
                continue
            gains = 0.5 * (G_l**2 / (H_l + lam) + G_r**2 / (H_r + lam) - parent) - gamma
            if gain_scale is not None:
                gains = (gains + gamma) * gain_scale[c] - gamma
            gains = np.where(ok, gains, -np.inf)
            j = int(np.argmax(gains))
            if math.isfinite(gains[j]):
                thr_vals = (vals[:-1][boundary] + vals[1:][boundary]) / 2.0
                cand[c] = (float(gains[j]), float(thr_vals[j]))

        best = None
        for c in sorted(cand):
            gain, thr = cand[c]
            if gain < 0:
                continue
            if best is None or gain > best[0]:
                best = (gain, c, thr)
        return best


def _grow_tree(finder: _SplitFinder, mask: np.ndarray, g: np.ndarray, h: np.ndarray,
               cols: np.ndarray, params: GbdtParams,
               gain_scale: dict[int, float] | None) -> Tree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    value: list[float] = []

    def leaf(node_mask: np.ndarray) -> int:
        i = len(feature)
        G = float(g[node_mask].sum())
        H = float(h[node_mask].sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(-G / (H + params.reg_lambda) * params.learning_rate)
        return i

    def grow(node_mask: np.ndarray, depth: int) -> int:
        if depth >= params.max_depth or node_mask.sum() < 2:
            return leaf(node_mask)
        best = finder.best_split(node_mask, g, h, cols, gain_scale)
        if best is None:
            return leaf(node_mask)
        _, c, thr = best
        i = len(feature)
        feature.append(c)
        threshold.append(thr)
        left.append(-2)
        right.append(-2)
        value.append(0.0)
        go_left = node_mask & (finder.X[:, c] < thr)
        go_right = node_mask & ~(finder.X[:, c] < thr)
        left[i] = grow(go_left, depth + 1)
        right[i] = grow(go_right, depth + 1)
        return i

    grow(mask, 0)
    return Tree(
        feature=tuple(feature),
        threshold=tuple(threshold),
        left=tuple(left),
        right=tuple(right),
        value=tuple(value),
    )


def train(
    matrix: EncodedMatrix,
    params: GbdtParams,
    iw: np.ndarray | Sequence[float] | None = None,
    fw: Mapping[str, float] | None = None,
) -> Model:
    """Fit a boosted ensemble with weighted logistic loss.

    Per round the gradients are ``w * (p - y)`` and hessians ``w * p * (1-p)``;
    each tree draws a feature-group subset of size ceil(colsample * F) without
    replacement with probability proportional to the feature weights.  Rows
    with zero instance weight are dropped up front so they contribute neither
    statistics nor split thresholds (and do not enter the fingerprint).
    """
    if matrix.y is None:
        raise TrainingError("training requires a labeled matrix")
    X = np.asarray(matrix.X, dtype=np.float64)
    y = np.asarray(matrix.y, dtype=np.float64)
    n, d = X.shape
    if n == 0:
        raise TrainingError("empty training set")

    if iw is None:
        w = np.ones(n, dtype=np.float64)
    else:
        w = np.asarray(iw, dtype=np.float64).copy()
    if len(w) != n:
        raise TrainingError("instance weight length does not match row count")
    if not np.all(np.isfinite(w)) or (w < 0).any():
        raise TrainingError("instance weights must be finite and non-negative")
    if not (w > 0).any():
        raise TrainingError("instance weights must not be all zero")

    groups = matrix.group_columns()
    if fw is None:
        fw = uniform_weights(sorted(groups))
    missing = sorted(set(groups) - set(fw))
    if missing:
        raise TrainingError(f"feature weights missing groups: {missing}")
    fw = normalize_weights({k: fw[k] for k in sorted(groups)})

    keep = w > 0
    X = np.ascontiguousarray(X[keep])
    y = y[keep]
    w = w[keep]
    n = len(y)

    warnings: list[str] = []
    p_bar = float(np.dot(w, y) / w.sum())
    if p_bar <= 0.0 or p_bar >= 1.0:
        warnings.append(
            "degenerate model: training target has a single class;"
            " base score clamped"
        )
    eps = 1e-6
    p_clamped = min(max(p_bar, eps), 1.0 - eps)
    base_score = math.log(p_clamped / (1.0 - p_clamped))

    fingerprint = training_fingerprint(X, y, w, fw, params)

    group_names = sorted(groups)
    fw_arr = np.asarray([fw[gn] for gn in group_names])
    rng = np.random.Generator(np.random.PCG64(params.seed))
    finder = _SplitFinder(X, params)

    gain_scale = None
    if params.feature_weight_mode == "gain_scaling":
        # Scale so uniform weights leave gains unchanged.
        gain_scale = {}
        for gn in group_names:
            s = fw[gn] * len(group_names)
            for c in groups[gn]:
                gain_scale[c] = s

    scores = np.full(n, base_score, dtype=np.float64)
    trees: list[Tree] = []
    all_mask = np.ones(n, dtype=bool)
    for _ in range(params.n_trees):
        if params.feature_weight_mode == "sampling" and params.colsample_bytree < 1.0:
            m = math.ceil(params.colsample_bytree * len(group_names))
            nonzero = int((fw_arr > 0).sum())
            take = min(m, nonzero)
            chosen = rng.choice(len(group_names), size=take, replace=False, p=fw_arr)
            chosen_groups = [group_names[i] for i in sorted(chosen)]
        else:
            chosen_groups = group_names
        cols = np.asarray(sorted(c for gn in chosen_groups for c in groups[gn]), dtype=int)

        p = _sigmoid(scores)
        g = w * (p - y)
        h = w * p * (1.0 - p)
        tree = _grow_tree(finder, all_mask, g, h, cols, params, gain_scale)
        trees.append(tree)
        scores += tree.predict(X)

    return Model(
        trees=tuple(trees),
        base_score=base_score,
        params=params,
        feature_weights=fw,
        n_columns=d,
        fingerprint=fingerprint,
        warnings=tuple(warnings),
    )


def predict_scores(model: Model, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != model.n_columns:
        raise TrainingError(
            f"row has {X.shape[1]} columns, model expects {model.n_columns}"
        )
    scores = np.full(X.shape[0], model.base_score, dtype=np.float64)
    for tree in model.trees:
        scores += tree.predict(X)
    return scores


def predict_proba(model: Model, X: np.ndarray) -> np.ndarray:
    """Probability of target = 1 (Reject) per row."""
    return _sigmoid(predict_scores(model, X))


def label_of(probability: float) -> str:
    return REJECT if probability >= 0.5 else ACCEPT


def predict(model: Model, row: np.ndarray) -> Prediction:
    p = float(predict_proba(model, np.atleast_2d(row))[0])
    return Prediction(probability=p, label=label_of(p), confidence=max(p, 1.0 - p))


def predict_batch(model: Model, X: np.ndarray) -> list[Prediction]:
    probs = predict_proba(model, X)
    return [
        Prediction(probability=float(p), label=label_of(float(p)), confidence=float(max(p, 1.0 - p)))
        for p in probs
    ]


def weighted_logloss(y: np.ndarray, p: np.ndarray, w: np.ndarray) -> float:
    eps = 1e-12
    p = np.clip(p, eps, 1.0 - eps)
    return float(np.sum(w * -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))
