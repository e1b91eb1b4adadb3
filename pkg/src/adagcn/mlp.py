"""Two-layer ReLU classifier with hand-written backprop, Adam and early stopping."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

PROB_FLOOR = 1e-10


class UsageError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    hidden: int = 64
    lr: float = 0.01
    l2_first_layer: float = 5e-3
    weight_decay: float = 1e-4
    dropout: float = 0.0
    patience: int = 300
    max_epochs: int = 500
    seed: int = 0
    use_bias: bool = True

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.hidden < 1 or self.max_epochs < 1:
            raise ValueError("hidden and max_epochs must be >= 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ValueError(
                f"patience must be in [0, max_epochs={self.max_epochs}], got {self.patience}"
            )
        if self.l2_first_layer < 0 or self.weight_decay < 0:
            raise ValueError("regularization strengths must be >= 0")

    def replace(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class MlpParams:
    W0: np.ndarray
    b0: np.ndarray
    W1: np.ndarray
    b1: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.W0.shape[0], self.W0.shape[1], self.W1.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"W0": self.W0, "b0": self.b0, "W1": self.W1, "b1": self.b1}


@dataclass
class FitReport:
    epochs_run: int
    best_val_metric: float
    final_train_loss: float
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    train_seconds: float = 0.0


@dataclass
class ForwardCache:
    params: MlpParams
    inputs: np.ndarray  # input after dropout
    pre_hidden: np.ndarray
    hidden: np.ndarray  # after ReLU and dropout
    hidden_mask: np.ndarray | None
    logits: np.ndarray
    consumed: bool = field(default=False)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def init_params(c_in: int, hidden: int, k: int, seed: int) -> MlpParams:
    if min(c_in, hidden, k) < 1:
        raise ValueError(f"dimensions must be >= 1, got ({c_in}, {hidden}, {k})")
    rng = np.random.default_rng(seed)
    return MlpParams(
        W0=glorot_uniform(rng, c_in, hidden),
        b0=np.zeros(hidden),
        W1=glorot_uniform(rng, hidden, k),
        b1=np.zeros(k),
    )


def _dropout_mask(rng, shape, rate):
    return (rng.random(shape) >= rate) / (1.0 - rate)


def forward(
    params: MlpParams,
    B: np.ndarray,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
    train_mode: bool = False,
) -> tuple[np.ndarray, ForwardCache]:
    """Compute ``ReLU(B W0 + b0) W1 + b1`` with inverted dropout in train mode."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim != 2 or B.shape[1] != params.W0.shape[0]:
        raise ValueError(f"input has shape {B.shape}, expected (*, {params.W0.shape[0]})")
    use_dropout = train_mode and dropout_rate > 0
    if use_dropout and rng is None:
        raise UsageError("dropout in train mode needs an rng")
    x = B * _dropout_mask(rng, B.shape, dropout_rate) if use_dropout else B
    pre = x @ params.W0 + params.b0
    h = np.maximum(pre, 0.0)
    mask = None
    if use_dropout:
        mask = _dropout_mask(rng, h.shape, dropout_rate)
        h = h * mask
    logits = h @ params.W1 + params.b1
    return logits, ForwardCache(params, x, pre, h, mask, logits)


def predict_logits(params: MlpParams, B: np.ndarray) -> np.ndarray:
    return forward(params, B)[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    return labels.astype(np.int64)


def weighted_ce_loss(
    probs: np.ndarray, labels, w: np.ndarray, params: MlpParams | None = None, lam: float = 0.0
) -> float:
    """``sum_i w_i * -log p[i, y_i] + lam/2 * ||W0||^2`` with probabilities floored at 1e-10."""
    labels = _check_labels(labels, probs.shape[1])
    if not len(labels) == probs.shape[0] == len(w):
        raise ValueError("probs, labels and weights must have the same length")
    p = np.clip(probs[np.arange(len(labels)), labels], PROB_FLOOR, 1.0)
    loss = float(np.dot(w, -np.log(p)))
    if lam and params is not None:
        loss += 0.5 * lam * float(np.sum(params.W0 * params.W0))
    return loss


def backward(cache: ForwardCache, labels, w: np.ndarray, lam: float = 0.0) -> MlpParams:
    """Exact gradients of :func:`weighted_ce_loss` for the batch in ``cache``."""
    labels = _check_labels(labels, cache.logits.shape[1])
    return backward_from_logits(cache, ce_logits_grad(cache.logits, labels, w), lam)


def ce_logits_grad(logits: np.ndarray, labels: np.ndarray, w: np.ndarray) -> np.ndarray:
    """d(weighted CE)/d(logits). Rows whose true-class probability sits on the
    1e-10 floor contribute zero gradient, matching the clamped loss."""
    probs = softmax(logits)
    rows = np.arange(len(labels))
    live = probs[rows, labels] > PROB_FLOOR
    grad = probs
    grad[rows, labels] -= 1.0
    grad *= (np.asarray(w) * live)[:, None]
    return grad


def backward_from_logits(cache: ForwardCache, d_logits: np.ndarray, lam: float = 0.0) -> MlpParams:
    """Backpropagate an arbitrary logits gradient; adds ``lam * W0`` for the L2 term."""
    if cache.consumed:
        raise UsageError("forward cache already consumed; run forward again")
    cache.consumed = True
    p = cache.params
    dW1 = cache.hidden.T @ d_logits
    db1 = d_logits.sum(axis=0)
    d_h = d_logits @ p.W1.T
    if cache.hidden_mask is not None:
        d_h = d_h * cache.hidden_mask
    d_pre = d_h * (cache.pre_hidden > 0)
    dW0 = cache.inputs.T @ d_pre + lam * p.W0
    db0 = d_pre.sum(axis=0)
    return MlpParams(dW0, db0, dW1, db1)


class Adam:
    """Adam over a dict of named arrays; returns fresh arrays each step.

    ``decay`` names the arrays that receive coupled L2 weight decay.
    """

    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0, decay=()):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.weight_decay = weight_decay
        self.decay = set(decay)
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.t += 1
        out = {}
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for name, x in params.items():
            g = grads[name]
            if self.weight_decay and name in self.decay:
                g = g + self.weight_decay * x
            m = self.beta1 * self.m.get(name, 0.0) + (1 - self.beta1) * g
            v = self.beta2 * self.v.get(name, 0.0) + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            out[name] = x - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out


class EarlyStopping:
    """Keeps the best state by validation accuracy, ties broken by lower loss."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_acc = -np.inf
        self.best_loss = np.inf
        self.best_epoch = 0
        self.best_state = None
        self.since_best = 0

    def update(self, epoch: int, acc: float, loss: float, state) -> bool:
        """Record an epoch; return True when training should stop."""
        if acc > self.best_acc or (acc == self.best_acc and loss < self.best_loss):
            self.best_acc, self.best_loss = acc, loss
            self.best_epoch, self.best_state = epoch, state
            self.since_best = 0
        else:
            self.since_best += 1
        return self.since_best >= self.patience


def accuracy(logits: np.ndarray, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def train_loop(
    params: dict[str, np.ndarray],
    step_fn: Callable[[dict, np.random.Generator], tuple[float, dict]],
    eval_fn: Callable[[dict], tuple[float, float]],
    cfg: TrainConfig,
    decay=(),
    frozen=(),
) -> tuple[dict[str, np.ndarray], FitReport]:
    """Full-batch Adam with early stopping, shared by every model in the package.

    ``step_fn(params, rng)`` returns (train loss, gradients) and
    ``eval_fn(params)`` returns (validation accuracy, validation loss).
    Arrays named in ``frozen`` are never updated. Only the step (forward,
    backward, update) counts toward ``train_seconds``.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(cfg.lr, weight_decay=cfg.weight_decay, decay=decay)
    stopper = EarlyStopping(cfg.patience)
    train_loss = float("nan")
    step_time = 0.0
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        train_loss, grads = step_fn(params, rng)
        for name in frozen:
            grads[name] = np.zeros_like(grads[name])
        params = opt.step(params, grads)
        step_time += time.perf_counter() - t0
        acc, loss = eval_fn(params)
        if stopper.update(epoch, acc, loss, params):
            break
    report = FitReport(
        epochs_run=epoch,
        best_val_metric=stopper.best_acc,
        final_train_loss=train_loss,
        best_epoch=stopper.best_epoch,
        best_val_loss=stopper.best_loss,
        train_seconds=step_time,
    )
    return stopper.best_state, report


def fit(
    params_init: MlpParams,
    B_train: np.ndarray,
    labels,
    w,
    B_val: np.ndarray,
    val_labels,
    cfg: TrainConfig,
) -> tuple[MlpParams, FitReport]:
    """Fit on the weighted loss; returns the parameters of the best validation epoch."""
    k = params_init.W1.shape[1]
    labels = _check_labels(labels, k)
    val_labels = _check_labels(val_labels, k)
    w = np.asarray(w, dtype=np.float64)
    if len(val_labels) == 0:
        raise ValueError("validation set must be nonempty")
    val_w = np.full(len(val_labels), 1.0 / len(val_labels))
    lam = cfg.l2_first_layer

    def step(arrs, rng):
        p = MlpParams(**arrs)
        logits, cache = forward(p, B_train, cfg.dropout, rng, train_mode=True)
        loss = weighted_ce_loss(softmax(logits), labels, w, p, lam)
        return loss, backward(cache, labels, w, lam).arrays()

    def evaluate(arrs):
        logits = predict_logits(MlpParams(**arrs), B_val)
        return accuracy(logits, val_labels), weighted_ce_loss(softmax(logits), val_labels, val_w)

    start = params_init.arrays()
    frozen = ()
    if not cfg.use_bias:
        start = dict(start, b0=np.zeros_like(start["b0"]), b1=np.zeros_like(start["b1"]))
        frozen = ("b0", "b1")
    best, report = train_loop(start, step, evaluate, cfg, decay=("W0", "W1"), frozen=frozen)
    return MlpParams(**best), report


def gradient_check(seed: int, n=8, c=5, h=4, k=3, lam=0.1, step=1e-5) -> float:
    """Max relative error between :func:`backward` and central differences on a random instance."""
    rng = np.random.default_rng(seed)
    params = init_params(c, h, k, seed)
    params = MlpParams(
        params.W0, rng.normal(scale=0.1, size=h), params.W1, rng.normal(scale=0.1, size=k)
    )
    B = rng.normal(size=(n, c))
    labels = rng.integers(0, k, size=n)
    w = rng.random(n)
    w /= w.sum()

    _, cache = forward(params, B)
    analytic = backward(cache, labels, w, lam).arrays()

    def loss_at(arrs):
        q = MlpParams(**arrs)
        return weighted_ce_loss(softmax(predict_logits(q, B)), labels, w, q, lam)

    worst = 0.0
    base = params.arrays()
    for name, arr in base.items():
        for idx in np.ndindex(arr.shape):
            plus = {key: v.copy() for key, v in base.items()}
            minus = {key: v.copy() for key, v in base.items()}
            plus[name][idx] += step
            minus[name][idx] -= step
            numeric = (loss_at(plus) - loss_at(minus)) / (2 * step)
            a = analytic[name][idx]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
