"""Pairwise-ranking surrogate for tour quality.

The network sees a tour as the set of its directed edges. Each edge vector
``(ax, ay, bx, by, bx - ax, by - ay)`` goes through a two-layer tanh encoder,
the per-edge embeddings are mean-pooled, and a small head maps the pooled
vector to a tanh feature layer and then to a scalar score. Higher score means
a shorter (better) tour. Training uses the logistic pairwise loss on score
differences, with gradients derived by hand.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from offline_tsp.errors import InvalidArgumentError, NumericalFailure, ValidationError
from offline_tsp.ood import CostParams, GaussianStats, calibrate_alpha, fit_gaussian, mahalanobis
from offline_tsp.tsp import ProblemInstance, check_route

EDGE_DIM = 6
LAYERS = ("enc1", "enc2", "head1", "head2")
MODEL_VERSION = 1
ACCURACY_MIN_GAP = 0.05


@dataclass(frozen=True)
class EncoderConfig:
    edge_dim: int = EDGE_DIM
    hidden_dim: int = 64
    feature_dim: int = 32

    def __post_init__(self):
        if self.edge_dim != EDGE_DIM:
            raise InvalidArgumentError(f"edge_dim is fixed at {EDGE_DIM}")
        if self.hidden_dim < 1 or self.feature_dim < 1:
            raise InvalidArgumentError("hidden_dim and feature_dim must be >= 1")

    def layer_shapes(self) -> dict[str, tuple[int, int]]:
        """``(out, in)`` shape of each affine layer."""
        h, f = self.hidden_dim, self.feature_dim
        return {"enc1": (h, self.edge_dim), "enc2": (h, h), "head1": (f, h), "head2": (1, f)}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    pairs_per_epoch: int = 5000
    learning_rate: float = 0.01
    holdout_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidArgumentError("epochs must be >= 1")
        if self.pairs_per_epoch < 1:
            raise InvalidArgumentError("pairs_per_epoch must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be > 0")
        if not 0 <= self.holdout_fraction < 1:
            raise InvalidArgumentError("holdout_fraction must be in [0, 1)")


@dataclass
class RankingModel:
    """Weights are ``{layer: (W, b)}`` with ``W`` shaped ``(out, in)``."""

    config: EncoderConfig
    weights: dict[str, tuple[np.ndarray, np.ndarray]]
    gaussian: GaussianStats | None = None
    cost_params: CostParams | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        shapes = self.config.layer_shapes()
        if set(self.weights) != set(shapes):
            raise ValidationError(f"expected layers {sorted(shapes)}, got {sorted(self.weights)}")
        for name, (w, b) in self.weights.items():
            if w.shape != shapes[name] or b.shape != (shapes[name][0],):
                raise ValidationError(
                    f"layer {name}: expected {shapes[name]}, got {w.shape} / {b.shape}"
                )
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {name} has non-finite weights")
        if self.gaussian is not None and self.gaussian.mu.shape != (self.config.feature_dim,):
            raise ValidationError("gaussian stats do not match feature_dim")

    @property
    def calibrated(self) -> bool:
        return self.gaussian is not None and self.cost_params is not None

    def copy(self) -> RankingModel:
        weights = {k: (w.copy(), b.copy()) for k, (w, b) in self.weights.items()}
        return RankingModel(self.config, weights, self.gaussian, self.cost_params, dict(self.meta))


def init_model(config: EncoderConfig, rng: np.random.Generator) -> RankingModel:
    weights = {}
    for name in LAYERS:
        out_dim, in_dim = config.layer_shapes()[name]
        bound = 1.0 / math.sqrt(in_dim)
        w = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        b = rng.uniform(-bound, bound, size=out_dim)
        weights[name] = (w, b)
    return RankingModel(config, weights)


def edge_features(instance: ProblemInstance, route) -> np.ndarray:
    """One row per directed edge of the closed tour; row k runs from stop k to stop k+1."""
    order = check_route(route, instance.n)
    a = instance.cities[order]
    b = np.roll(a, -1, axis=0)
    return np.hstack([a, b, b - a])


def all_edge_features(instance: ProblemInstance) -> np.ndarray:
    """Features of every directed city pair, shaped ``(n, n, 6)``; entry ``[a, b]`` is edge a->b."""
    c = instance.cities
    n = instance.n
    a = np.broadcast_to(c[:, None, :], (n, n, 2))
    b = np.broadcast_to(c[None, :, :], (n, n, 2))
    return np.concatenate([a, b, b - a], axis=2)


def _encode(weights, edges):
    w1, b1 = weights["enc1"]
    w2, b2 = weights["enc2"]
    a1 = np.tanh(edges @ w1.T + b1)
    a2 = np.tanh(a1 @ w2.T + b2)
    return a1, a2


def _head(weights, pooled):
    w3, b3 = weights["head1"]
    w4, b4 = weights["head2"]
    feature = np.tanh(w3 @ pooled + b3)
    score = float(w4[0] @ feature + b4[0])
    return feature, score


def _forward_edges(weights, edges):
    a1, a2 = _encode(weights, edges)
    pooled = a2.mean(axis=0)
    feature, score = _head(weights, pooled)
    if not (math.isfinite(score) and np.all(np.isfinite(feature))):
        raise NumericalFailure("non-finite value in forward pass")
    return score, feature, (edges, a1, a2, pooled)


def forward(model: RankingModel, instance: ProblemInstance, route) -> tuple[float, np.ndarray]:
    """Score and last-hidden-layer feature of one tour."""
    score, feature, _ = _forward_edges(model.weights, edge_features(instance, route))
    return score, feature


def _backward(weights, feature, cache, dscore):
    edges, a1, a2, pooled = cache
    w2 = weights["enc2"][0]
    w3 = weights["head1"][0]
    w4 = weights["head2"][0]
    grads = {"head2": (dscore * feature[None, :], np.array([dscore]))}
    dz3 = dscore * w4[0] * (1.0 - feature**2)
    grads["head1"] = (np.outer(dz3, pooled), dz3)
    dpooled = w3.T @ dz3
    dz2 = (dpooled / edges.shape[0]) * (1.0 - a2**2)
    grads["enc2"] = (dz2.T @ a1, dz2.sum(axis=0))
    dz1 = (dz2 @ w2) * (1.0 - a1**2)
    grads["enc1"] = (dz1.T @ edges, dz1.sum(axis=0))
    return grads


def pairwise_probability(s_i: float, s_j: float) -> float:
    """Probability that tour i beats tour j: logistic in the score difference."""
    d = s_i - s_j
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


def pair_target(length_i: float, length_j: float) -> float:
    if length_i < length_j:
        return 1.0
    if length_i > length_j:
        return 0.0
    return 0.5


def pair_loss(s_i: float, s_j: float, target: float) -> float:
    d = s_i - s_j
    # cross-entropy on the logistic, written with softplus to avoid log(0)
    return float(target * np.logaddexp(0.0, -d) + (1.0 - target) * np.logaddexp(0.0, d))


def _pair_step(weights, edges_i, edges_j, target):
    s_i, f_i, cache_i = _forward_edges(weights, edges_i)
    s_j, f_j, cache_j = _forward_edges(weights, edges_j)
    loss = pair_loss(s_i, s_j, target)
    if not math.isfinite(loss):
        raise NumericalFailure("non-finite pairwise loss")
    dd = pairwise_probability(s_i, s_j) - target
    g_i = _backward(weights, f_i, cache_i, dd)
    g_j = _backward(weights, f_j, cache_j, -dd)
    grads = {k: (g_i[k][0] + g_j[k][0], g_i[k][1] + g_j[k][1]) for k in LAYERS}
    return loss, grads


def pair_loss_and_gradient(model: RankingModel, record_i, record_j):
    """Logistic pairwise loss for two training records and its gradient w.r.t. every weight."""
    target = pair_target(record_i.length, record_j.length)
    return _pair_step(
        model.weights,
        edge_features(record_i.instance, record_i.route),
        edge_features(record_j.instance, record_j.route),
        target,
    )


def record_scores(model: RankingModel, records) -> tuple[np.ndarray, np.ndarray]:
    """Scores and features for a sequence of training records."""
    scores, feats = [], []
    for r in records:
        s, f = forward(model, r.instance, r.route)
        scores.append(s)
        feats.append(f)
    return np.array(scores), np.array(feats).reshape(len(scores), model.config.feature_dim)


def pairwise_accuracy(scores, lengths, min_gap: float = 0.0) -> float:
    """Fraction of unordered pairs ranked correctly (higher score, shorter tour).

    Only pairs whose lengths differ by at least ``min_gap`` relative to the
    shorter one are counted. Returns nan when no pair qualifies.
    """
    scores = np.asarray(scores, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    i, j = np.triu_indices(len(scores), k=1)
    gap = np.abs(lengths[i] - lengths[j]) / np.minimum(lengths[i], lengths[j])
    keep = (gap >= min_gap) & (lengths[i] != lengths[j])
    if not keep.any():
        return float("nan")
    i, j = i[keep], j[keep]
    correct = (scores[i] - scores[j]) * (lengths[j] - lengths[i]) > 0
    return float(correct.mean())


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    holdout_accuracy: float


@dataclass
class TrainReport:
    epochs: list[EpochStats]
    train_ids: list[int]
    holdout_ids: list[int]


def split_holdout(n: int, fraction: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_hold = min(int(round(fraction * n)), n - 2)
    return np.sort(perm[n_hold:]), np.sort(perm[:n_hold])


def train(
    dataset,
    encoder_config: EncoderConfig = EncoderConfig(),
    train_config: TrainConfig = TrainConfig(),
    log=None,
):
    """Fit a ranking model with plain per-pair SGD.

    Each epoch draws ``pairs_per_epoch`` ordered pairs ``(i, j), i != j`` from
    the training split. Held-out accuracy counts only pairs whose lengths
    differ by at least 5%.
    """
    records = list(dataset.records)
    if len(records) < 2:
        raise InvalidArgumentError("training needs at least 2 records")
    rng = np.random.default_rng(train_config.seed)
    model = init_model(encoder_config, rng)
    train_idx, hold_idx = split_holdout(len(records), train_config.holdout_fraction, rng)
    edges = [edge_features(r.instance, r.route) for r in records]
    lengths = np.array([r.length for r in records])
    hold_records = [records[k] for k in hold_idx]
    lr = train_config.learning_rate
    weights = model.weights
    history = []
    m = len(train_idx)
    for epoch in range(1, train_config.epochs + 1):
        first = rng.integers(m, size=train_config.pairs_per_epoch)
        second = rng.integers(m - 1, size=train_config.pairs_per_epoch)
        second += second >= first
        total = 0.0
        for a, b in zip(train_idx[first], train_idx[second]):
            target = pair_target(lengths[a], lengths[b])
            loss, grads = _pair_step(weights, edges[a], edges[b], target)
            total += loss
            for name in LAYERS:
                w, bias = weights[name]
                w -= lr * grads[name][0]
                bias -= lr * grads[name][1]
        acc = float("nan")
        if hold_records:
            scores, _ = record_scores(model, hold_records)
            acc = pairwise_accuracy(scores, lengths[hold_idx], ACCURACY_MIN_GAP)
        stats = EpochStats(epoch, total / train_config.pairs_per_epoch, acc)
        history.append(stats)
        if log is not None:
            log(stats)
    model.meta = {
        "seed": train_config.seed,
        "epochs": train_config.epochs,
        "learning_rate": train_config.learning_rate,
        "pairs_per_epoch": train_config.pairs_per_epoch,
    }
    ids = [r.id for r in records]
    return model, TrainReport(history, [ids[k] for k in train_idx], [ids[k] for k in hold_idx])


def calibrate(
    model: RankingModel,
    records,
    ridge_scale: float = 1e-6,
    quantile: float = 0.95,
    lam: float = 1e6,
) -> RankingModel:
    """Attach Gaussian feature statistics and cost parameters fitted on ``records``."""
    _, feats = record_scores(model, records)
    stats = fit_gaussian(feats, ridge_scale)
    alpha = calibrate_alpha(stats, feats, quantile)
    out = model.copy()
    out.gaussian = stats
    out.cost_params = CostParams(alpha=alpha, lam=lam, alpha_quantile=quantile)
    return out


class InstanceScorer:
    """Fast scoring of many tours on one instance.

    Precomputes the encoder output for every directed city pair so that a
    tour costs one gather, one mean and the head.
    """

    def __init__(self, model: RankingModel, instance: ProblemInstance):
        self.model = model
        self.instance = instance
        n = instance.n
        table = _encode(model.weights, all_edge_features(instance).reshape(n * n, EDGE_DIM))[1]
        self.table = table.reshape(n, n, -1)
        self.gaussian = model.gaussian

    def score_feature(self, route) -> tuple[float, np.ndarray]:
        order = np.asarray(route)
        pooled = self.table[order, np.roll(order, -1)].mean(axis=0)
        feature, score = _head(self.model.weights, pooled)
        if not math.isfinite(score):
            raise NumericalFailure("non-finite score")
        return score, feature

    def score_md(self, route) -> tuple[float, float]:
        score, feature = self.score_feature(route)
        md = mahalanobis(self.gaussian, feature) if self.gaussian is not None else float("nan")
        return score, md


# -- persistence ------------------------------------------------------------


def model_to_dict(model: RankingModel) -> dict:
    weights = {}
    for name in LAYERS:
        w, b = model.weights[name]
        weights[name] = {
            "rows": int(w.shape[0]),
            "cols": int(w.shape[1]),
            "data": w.ravel().tolist(),
            "bias": b.tolist(),
        }
    gaussian = None
    if model.gaussian is not None:
        g = model.gaussian
        gaussian = {
            "mu": g.mu.tolist(),
            "sigma_inv": g.sigma_inv.ravel().tolist(),
            "ridge": g.ridge,
            "n": g.n,
        }
    cost = None
    if model.cost_params is not None:
        c = model.cost_params
        cost = {"alpha": c.alpha, "lambda": c.lam, "alpha_quantile": c.alpha_quantile}
    return {
        "version": MODEL_VERSION,
        "config": asdict(model.config),
        "weights": weights,
        "gaussian": gaussian,
        "cost_params": cost,
        "meta": model.meta,
    }


def _require(obj, key, types, where):
    if not isinstance(obj, dict) or key not in obj:
        raise ValidationError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise ValidationError(f"{where}.{key}: wrong type {type(value).__name__}")
    return value


def _float_array(values, where) -> np.ndarray:
    if not isinstance(values, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
    ):
        raise ValidationError(f"{where}: expected a list of numbers")
    arr = np.array(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{where}: non-finite value")
    return arr


def model_from_dict(obj: dict) -> RankingModel:
    if not isinstance(obj, dict):
        raise ValidationError("model file must hold a JSON object")
    if obj.get("version") != MODEL_VERSION:
        raise ValidationError(f"unsupported model version {obj.get('version')!r}")
    cfg = _require(obj, "config", dict, "model")
    try:
        config = EncoderConfig(
            edge_dim=_require(cfg, "edge_dim", int, "config"),
            hidden_dim=_require(cfg, "hidden_dim", int, "config"),
            feature_dim=_require(cfg, "feature_dim", int, "config"),
        )
    except InvalidArgumentError as exc:
        raise ValidationError(str(exc)) from None
    raw = _require(obj, "weights", dict, "model")
    weights = {}
    for name in LAYERS:
        layer = _require(raw, name, dict, "weights")
        rows = _require(layer, "rows", int, name)
        cols = _require(layer, "cols", int, name)
        data = _float_array(layer.get("data"), f"{name}.data")
        bias = _float_array(layer.get("bias"), f"{name}.bias")
        if data.size != rows * cols or bias.size != rows:
            raise ValidationError(f"layer {name}: data does not match {rows}x{cols}")
        weights[name] = (data.reshape(rows, cols), bias)

    gaussian = None
    if obj.get("gaussian") is not None:
        g = obj["gaussian"]
        d = config.feature_dim
        mu = _float_array(g.get("mu") if isinstance(g, dict) else None, "gaussian.mu")
        sigma_inv = _float_array(g.get("sigma_inv"), "gaussian.sigma_inv")
        if mu.size != d or sigma_inv.size != d * d:
            raise ValidationError("gaussian stats do not match feature_dim")
        ridge = _require(g, "ridge", (int, float), "gaussian")
        n = g.get("n", 0)
        gaussian = GaussianStats(mu, sigma_inv.reshape(d, d), float(ridge), int(n))

    cost = None
    if obj.get("cost_params") is not None:
        c = obj["cost_params"]
        try:
            cost = CostParams(
                alpha=float(_require(c, "alpha", (int, float), "cost_params")),
                lam=float(_require(c, "lambda", (int, float), "cost_params")),
                alpha_quantile=float(_require(c, "alpha_quantile", (int, float), "cost_params")),
            )
        except InvalidArgumentError as exc:
            raise ValidationError(str(exc)) from None
    meta = obj.get("meta") or {}
    return RankingModel(config, weights, gaussian, cost, dict(meta))


def save_model(model: RankingModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model_to_dict(model), fh, allow_nan=False)
        fh.write("\n")


def load_model(path) -> RankingModel:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed model JSON: {exc.msg}") from None
    return model_from_dict(obj)
