"""Weighted regression trees and MM-based gradient boosting.

The boosting loop enforces the monotone-descent guarantee of the MM scheme:
each round's residuals define Welsch weights (the Proxy Hessian), a tree is
fit by weighted least squares, and the proposed step is accepted only if the
training loss does not increase, backtracking the step size otherwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace, asdict

import numpy as np

from .losses import (
    GAMMA_WELSCH,
    SQUARED,
    WEIGHT_FLOOR,
    LossSpec,
    gradient_and_weight,
    loss_value,
    mad_scale,
)

MODEL_FORMAT_VERSION = 1

#: Relative slack when accepting a boosting step as non-increasing.
DESCENT_RTOL = 1e-12

#: Maximum step-size halvings before a round is abandoned.
MAX_HALVINGS = 8


class BoostingError(ValueError):
    """Raised for invalid boosting inputs or malformed model files."""


@dataclass(frozen=True)
class BoostConfig:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 3
    min_child_weight: float = 1.0
    min_samples_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_rounds < 0:
            raise BoostingError("n_rounds must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise BoostingError("learning_rate must lie in (0, 1]")
        if self.max_depth < 1:
            raise BoostingError("max_depth must be >= 1")
        if self.min_child_weight < 0:
            raise BoostingError("min_child_weight must be >= 0")
        if self.min_samples_leaf < 1:
            raise BoostingError("min_samples_leaf must be >= 1")


@dataclass
class RegressionTree:
    """Flat-array binary tree; feature == -1 marks a leaf node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.flatnonzero(active)
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))


def _weighted_mean(t: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(w * t) / np.sum(w))


def _best_split_for_feature(xs, ts, ws, config: BoostConfig):
    """Best (gain, threshold) on one feature via prefix sums over sorted values.

    Gain is the weighted-SSE reduction. Returns (-inf, nan) when no valid
    split exists. Ties on gain resolve to the lowest threshold (argmax picks
    the first position in ascending threshold order).
    """
    order = np.argsort(xs, kind="stable")
    xs, ts, ws = xs[order], ts[order], ws[order]
    cw = np.cumsum(ws)
    cwt = np.cumsum(ws * ts)
    cwt2 = np.cumsum(ws * ts * ts)
    total_w, total_wt, total_wt2 = cw[-1], cwt[-1], cwt2[-1]
    total_sse = total_wt2 - total_wt * total_wt / total_w

    n = xs.size
    pos = np.arange(n - 1)  # left block = [0..pos]
    valid = xs[pos] < xs[pos + 1]
    left_n = pos + 1
    right_n = n - left_n
    valid &= (left_n >= config.min_samples_leaf) & (right_n >= config.min_samples_leaf)
    lw = cw[pos]
    rw = total_w - lw
    valid &= (lw >= config.min_child_weight) & (rw >= config.min_child_weight)
    if not np.any(valid):
        return -np.inf, np.nan

    with np.errstate(divide="ignore", invalid="ignore"):
        sse_l = cwt2[pos] - cwt[pos] ** 2 / lw
        sse_r = (total_wt2 - cwt2[pos]) - (total_wt - cwt[pos]) ** 2 / rw
    gain = np.where(valid, total_sse - (sse_l + sse_r), -np.inf)
    best = int(np.argmax(gain))
    return float(gain[best]), float(0.5 * (xs[best] + xs[best + 1]))


def fit_tree(X, targets, instance_weights, config: BoostConfig) -> RegressionTree:
    """Greedy top-down weighted CART; each split maximizes weighted-SSE reduction.

    Leaf value is the weighted mean of its targets (the exact weighted
    least-squares minimizer, i.e. the MM inner step). Split ties resolve to
    the lowest feature index, then the lowest threshold.
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(targets, dtype=float)
    w = np.asarray(instance_weights, dtype=float)
    if X.ndim != 2 or t.shape != (X.shape[0],) or w.shape != t.shape:
        raise BoostingError("features, targets, and weights must have matching lengths")
    if np.any(w < 0) or not np.any(w > 0):
        raise BoostingError("weights must be nonnegative with at least one positive")
    w = np.maximum(w, WEIGHT_FLOOR)

    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(np.nan)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(idx: np.ndarray, depth: int) -> int:
        node = new_node()
        ts, ws = t[idx], w[idx]
        if depth >= config.max_depth or idx.size < 2 * config.min_samples_leaf:
            value[node] = _weighted_mean(ts, ws)
            return node
        best_gain, best_feat, best_thr = 1e-12, -1, np.nan
        for j in range(X.shape[1]):
            gain, thr = _best_split_for_feature(X[idx, j], ts, ws, config)
            if gain > best_gain:
                best_gain, best_feat, best_thr = gain, j, thr
        if best_feat < 0:
            value[node] = _weighted_mean(ts, ws)
            return node
        go_left = X[idx, best_feat] <= best_thr
        feature[node] = best_feat
        threshold[node] = best_thr
        left[node] = build(idx[go_left], depth + 1)
        right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return RegressionTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=float),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=float),
    )


@dataclass
class BoostedEnsemble:
    """Additive tree model with its (non-increasing) training loss trace."""

    base_prediction: float
    trees: list = field(default_factory=list)
    step_sizes: list = field(default_factory=list)
    loss_spec: LossSpec = field(default_factory=LossSpec)
    loss_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    config: BoostConfig = field(default_factory=BoostConfig)
    n_features: int = 0

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise BoostingError(
                f"feature count {X.shape[1] if X.ndim == 2 else '?'} does not match "
                f"training ({self.n_features})"
            )
        out = np.full(X.shape[0], self.base_prediction)
        for eta, tree in zip(self.step_sizes, self.trees):
            out += eta * tree.predict(X)
        return out


def fit_boosted(features, targets, loss: LossSpec, config: BoostConfig) -> BoostedEnsemble:
    """MM gradient boosting with a step-halving monotonicity safeguard.

    Robust losses initialize at the target median and anchor sigma-hat via
    MAD of the initial residuals; squared error uses the mean. A proposed
    step F + eta*h is accepted only if the training loss does not increase;
    otherwise eta is halved up to MAX_HALVINGS times and the loop stops if
    descent still fails (further rounds would propose the identical tree).
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if y.size == 0:
        raise BoostingError("targets must be nonempty")
    if not np.all(np.isfinite(y)):
        raise BoostingError("targets contain non-finite values")
    if X.ndim != 2 or X.shape[0] != y.size:
        raise BoostingError("features and targets must have matching lengths")

    if loss.kind == SQUARED:
        f0 = float(np.mean(y))
        spec = loss
    else:
        f0 = float(np.median(y))
        spec = replace(loss, scale=mad_scale(y - f0))

    F = np.full(y.size, f0)
    r = y - F
    cur = loss_value(r, spec)
    trees, steps, trace = [], [], []

    for t in range(config.n_rounds):
        if loss.refresh_every > 0 and t > 0 and t % loss.refresh_every == 0 and loss.kind != SQUARED:
            spec = replace(spec, scale=mad_scale(r))
            cur = loss_value(r, spec)
        _, w = gradient_and_weight(r, spec)
        tree = fit_tree(X, r, w, config)
        h = tree.predict(X)
        eta = config.learning_rate
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            r_new = y - (F + eta * h)
            new = loss_value(r_new, spec)
            if new <= cur + DESCENT_RTOL * abs(cur):
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            break
        F = F + eta * h
        r = y - F
        cur = new
        trees.append(tree)
        steps.append(eta)
        trace.append(new)

    return BoostedEnsemble(
        base_prediction=f0,
        trees=trees,
        step_sizes=steps,
        loss_spec=spec,
        loss_trace=np.asarray(trace),
        config=config,
        n_features=X.shape[1],
    )


def fit_boosted_logistic(features, labels, config: BoostConfig) -> BoostedEnsemble:
    """Log-odds boosting for binary labels with squared-error trees on
    log-loss gradient residuals. Used for propensity estimation."""
    X = np.asarray(features, dtype=float)
    z = np.asarray(labels, dtype=float)
    if not np.all(np.isin(z, (0.0, 1.0))):
        raise BoostingError("labels must be binary")
    p0 = float(np.clip(np.mean(z), 1e-6, 1 - 1e-6))
    f0 = float(np.log(p0 / (1 - p0)))
    F = np.full(z.size, f0)
    trees, steps, trace = [], [], []
    for _ in range(config.n_rounds):
        p = 1.0 / (1.0 + np.exp(-F))
        resid = z - p
        tree = fit_tree(X, resid, np.ones_like(resid), config)
        F = F + config.learning_rate * tree.predict(X)
        trees.append(tree)
        steps.append(config.learning_rate)
        p = np.clip(1.0 / (1.0 + np.exp(-F)), 1e-12, 1 - 1e-12)
        trace.append(float(-np.sum(z * np.log(p) + (1 - z) * np.log(1 - p))))
    return BoostedEnsemble(
        base_prediction=f0,
        trees=trees,
        step_sizes=steps,
        loss_spec=LossSpec(kind=SQUARED),
        loss_trace=np.asarray(trace),
        config=config,
        n_features=X.shape[1],
    )


def predict_proba(model: BoostedEnsemble, features, clip: float = 0.01) -> np.ndarray:
    """Sigmoid of the boosted log-odds, clipped away from 0 and 1."""
    logits = model.predict(features)
    return np.clip(1.0 / (1.0 + np.exp(-logits)), clip, 1.0 - clip)


def save_model(model: BoostedEnsemble, path) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "base_prediction": model.base_prediction,
        "step_sizes": list(map(float, model.step_sizes)),
        "loss_spec": asdict(model.loss_spec),
        "config": asdict(model.config),
        "n_features": model.n_features,
        "loss_trace": [float(v) for v in model.loss_trace],
        "trees": [
            {
                "feature": tree.feature.tolist(),
                "threshold": tree.threshold.tolist(),
                "left": tree.left.tolist(),
                "right": tree.right.tolist(),
                "value": tree.value.tolist(),
            }
            for tree in model.trees
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_model(path) -> BoostedEnsemble:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BoostingError(f"{path}: malformed model file: {exc}") from None
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise BoostingError(
            f"{path}: unsupported model format version {version!r} "
            f"(expected {MODEL_FORMAT_VERSION})"
        )
    try:
        trees = [
            RegressionTree(
                feature=np.asarray(td["feature"], dtype=np.int64),
                threshold=np.asarray(td["threshold"], dtype=float),
                left=np.asarray(td["left"], dtype=np.int64),
                right=np.asarray(td["right"], dtype=np.int64),
                value=np.asarray(td["value"], dtype=float),
            )
            for td in doc["trees"]
        ]
        return BoostedEnsemble(
            base_prediction=float(doc["base_prediction"]),
            trees=trees,
            step_sizes=[float(v) for v in doc["step_sizes"]],
            loss_spec=LossSpec(**doc["loss_spec"]),
            loss_trace=np.asarray(doc["loss_trace"], dtype=float),
            config=BoostConfig(**doc["config"]),
            n_features=int(doc["n_features"]),
        )
    except (KeyError, TypeError) as exc:
        raise BoostingError(f"{path}: malformed model file: {exc}") from None
