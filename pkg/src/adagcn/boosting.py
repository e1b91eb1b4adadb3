"""Multi-class AdaBoost (SAMME and SAMME.R) over propagated node features."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import mlp
from .graph import OpCounter, SparseAdjacency, spmm
from .mlp import PROB_FLOOR, MlpParams, TrainConfig

log = logging.getLogger(__name__)

SAMME = "SAMME"
SAMME_R = "SAMME.R"
ERR_CLAMP = 1e-10


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        sets = [set(map(int, a)) for a in (self.train, self.val, self.test)]
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValueError("train/val/test splits must be pairwise disjoint")


@dataclass(frozen=True)
class SammeLayer:
    params: MlpParams
    alpha: float


@dataclass(frozen=True)
class SammeRLayer:
    params: MlpParams


@dataclass
class Ensemble:
    variant: str
    layers: list
    K: int
    # maps propagated features to logits; MLP for AdaGCN, linear map for AdaSGC
    logits_fn: Callable[[MlpParams, np.ndarray], np.ndarray] = field(
        default=mlp.predict_logits, repr=False
    )

    @property
    def L(self) -> int:
        return len(self.layers) - 1

    def scores(self, propagated: list[np.ndarray]) -> np.ndarray:
        if len(propagated) != len(self.layers):
            raise ValueError(
                f"ensemble has {len(self.layers)} layers, got {len(propagated)} feature matrices"
            )
        total = None
        for layer, feats in zip(self.layers, propagated):
            logits = self.logits_fn(layer.params, feats)
            if self.variant == SAMME:
                contrib = layer.alpha * np.eye(self.K)[np.argmax(logits, axis=1)]
            else:
                contrib = sammer_h(mlp.softmax(logits), self.K)
            total = contrib if total is None else total + contrib
        return total


@dataclass
class LayerMetrics:
    layer: int
    train_err: float
    alpha: float
    val_acc: float  # this layer's base classifier alone
    ensemble_val_acc: float
    epochs: int
    fit_seconds: float
    weight_sum: float
    weight_min: float


def weighted_error(preds, labels, w) -> float:
    """Weighted misclassification rate ``sum(w * [pred != label]) / sum(w)``."""
    preds, labels, w = np.asarray(preds), np.asarray(labels), np.asarray(w, dtype=np.float64)
    if len(w) == 0:
        raise ValueError("weighted_error of an empty sample")
    if not len(preds) == len(labels) == len(w):
        raise ValueError("preds, labels and w must have equal length")
    return float(np.dot(w, preds != labels) / w.sum())


def samme_alpha(err: float, K: int) -> float:
    """Classifier weight ``log((1 - err) / err) + log(K - 1)``; zero at random-guess accuracy."""
    if K < 2:
        raise ValueError(f"need K >= 2 classes, got {K}")
    if err < ERR_CLAMP:
        log.warning("weighted error %.3g clamped to %.0e", err, ERR_CLAMP)
        err = ERR_CLAMP
    elif err > 1 - ERR_CLAMP:
        log.warning("weighted error %.3g clamped to 1 - %.0e", err, ERR_CLAMP)
        err = 1 - ERR_CLAMP
    return math.log((1 - err) / err) + math.log(K - 1)


def _renormalize(w: np.ndarray) -> np.ndarray:
    return w / w.sum()


def samme_update_weights(w, alpha: float, preds, labels) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    miss = np.asarray(preds) != np.asarray(labels)
    return _renormalize(w * np.exp(alpha * miss))


def sammer_h(probs: np.ndarray, K: int) -> np.ndarray:
    """Per-class score ``(K-1) * (log p_k - mean_k' log p_k')``; rows sum to zero."""
    logp = np.log(np.clip(probs, PROB_FLOOR, 1.0))
    return (K - 1) * (logp - logp.mean(axis=1, keepdims=True))


def sammer_update_weights(w, probs: np.ndarray, labels, K: int) -> np.ndarray:
    """Multiply each ``w_i`` by ``exp(-(K-1)/K * log p[i, y_i])`` and renormalize."""
    w = np.asarray(w, dtype=np.float64)
    labels = np.asarray(labels)
    p_true = np.clip(probs[np.arange(len(labels)), labels], PROB_FLOOR, 1.0)
    return _renormalize(w * np.exp(-(K - 1) / K * np.log(p_true)))


def _argmax_lowest(scores: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first (lowest-index) maximum
    return np.argmax(scores, axis=1)


def ensemble_predict(ens: Ensemble, propagated: list[np.ndarray]) -> np.ndarray:
    return _argmax_lowest(ens.scores(propagated))


def vc_depth_bound(d: float, L: int) -> float:
    """Upper bound ``2(d+1)(L+1) log2((L+1) e)`` on the VC dimension of a depth-L ensemble."""
    if d < 1 or L < 0:
        raise ValueError("need d >= 1 and L >= 0")
    return 2 * (d + 1) * (L + 1) * math.log2((L + 1) * math.e)


def boost(
    propagate: Callable[[int], np.ndarray],
    labels: np.ndarray,
    split: Split,
    cfg: TrainConfig,
    L: int,
    variant: str,
    init: Callable[[int, int, int, int], MlpParams],
    fit: Callable,
    logits_fn: Callable[[MlpParams, np.ndarray], np.ndarray],
    K: int,
) -> tuple[Ensemble, list[LayerMetrics]]:
    """Shared driver for AdaGCN and AdaSGC.

    ``propagate(l)`` must return Â^l X and is called for l = 0..L in order.
    """
    if variant not in (SAMME, SAMME_R):
        raise ValueError(f"unknown variant {variant!r}")
    if L < 0:
        raise ValueError(f"L must be >= 0, got {L}")
    labels = np.asarray(labels)
    tr, va = split.train, split.val
    y_tr, y_va = labels[tr], labels[va]
    w = np.full(len(tr), 1.0 / len(tr))
    layers: list = []
    metrics: list[LayerMetrics] = []
    params = None
    val_scores = np.zeros((len(va), K))

    for l in range(L + 1):
        feats = propagate(l)
        if params is None:
            params = init(feats.shape[1], cfg.hidden, K, cfg.seed)
        layer_cfg = cfg.replace(seed=cfg.seed + l)
        params, report = fit(params, feats[tr], y_tr, w, feats[va], y_va, layer_cfg)

        train_logits = logits_fn(params, feats[tr])
        val_logits = logits_fn(params, feats[va])
        preds = np.argmax(train_logits, axis=1)
        err = weighted_error(preds, y_tr, w)
        if variant == SAMME:
            alpha = samme_alpha(err, K)
            if alpha <= 0:
                log.warning("layer %d: alpha %.4f <= 0 (weak-learner condition violated)", l, alpha)
            w = samme_update_weights(w, alpha, preds, y_tr)
            layers.append(SammeLayer(params, alpha))
            val_scores += alpha * np.eye(K)[np.argmax(val_logits, axis=1)]
        else:
            alpha = float("nan")
            probs = mlp.softmax(train_logits)
            w = sammer_update_weights(w, probs, y_tr, K)
            layers.append(SammeRLayer(params))
            val_scores += sammer_h(mlp.softmax(val_logits), K)

        metrics.append(
            LayerMetrics(
                layer=l,
                train_err=err,
                alpha=alpha,
                val_acc=mlp.accuracy(val_logits, y_va),
                ensemble_val_acc=float(np.mean(_argmax_lowest(val_scores) == y_va)),
                epochs=report.epochs_run,
                fit_seconds=report.train_seconds,
                weight_sum=float(w.sum()),
                weight_min=float(w.min()),
            )
        )
    return Ensemble(variant, layers, K, logits_fn), metrics


def _chain(adj_norm: SparseAdjacency, X: np.ndarray, counter: OpCounter | None):
    """Lazily extend [X, ÂX, ...] one sparse product per new layer."""
    cache = [np.asarray(X, dtype=np.float64)]

    def get(l: int) -> np.ndarray:
        while len(cache) <= l:
            cache.append(spmm(adj_norm, cache[-1], counter))
        return cache[l]

    return get, cache


@dataclass
class BoostResult:
    ensemble: Ensemble
    metrics: list[LayerMetrics]
    propagated: list[np.ndarray]
    spmm_count: int
    propagate_seconds: float


def run_adagcn(
    adj_norm: SparseAdjacency,
    X: np.ndarray,
    labels,
    split: Split,
    cfg: TrainConfig,
    L: int,
    variant: str = SAMME_R,
    K: int | None = None,
) -> BoostResult:
    """Boost warm-started MLPs over Â^0 X .. Â^L X.

    Layer 0 starts from a seeded random init; each later layer starts from
    the previous layer's best-validation parameters.
    """
    labels = np.asarray(labels)
    K = int(labels.max()) + 1 if K is None else K
    counter = OpCounter()
    get, cache = _chain(adj_norm, X, counter)
    t0 = time.perf_counter()
    get(L)
    prop_seconds = time.perf_counter() - t0
    ens, metrics = boost(
        get, labels, split, cfg, L, variant, mlp.init_params, mlp.fit, mlp.predict_logits, K
    )
    return BoostResult(ens, metrics, cache, counter.count, prop_seconds)
