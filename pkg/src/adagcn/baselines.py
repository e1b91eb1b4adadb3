"""Comparison models (GCN, SGC, AdaSGC, PPNP, APPNP) and proposition verifiers."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import mlp
from .boosting import SAMME_R, BoostResult, Split, _chain, boost
from .graph import OpCounter, SparseAdjacency, build_from_edge_list, propagate_chain, spmm, sym_normalize
from .mlp import MlpParams, TrainConfig

PPNP_MAX_NODES = 2000


@dataclass(frozen=True)
class PpnpConfig:
    gamma: float = 0.1
    L: int = 10

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.L < 1:
            raise ValueError(f"APPNP depth must be >= 1, got {self.L}")


@dataclass
class TrainResult:
    """Outcome of a single baseline training run."""

    params: object
    train_acc: float
    val_acc: float
    test_acc: float
    epochs: int
    train_seconds: float
    spmm_count: int
    propagate_seconds: float = 0.0
    passes: int = 0  # forward + backward passes that touched the graph

    @property
    def per_epoch_seconds(self) -> float:
        return self.train_seconds / max(self.epochs, 1)


def _cross_entropy(logits, labels):
    w = np.full(len(labels), 1.0 / len(labels))
    return mlp.weighted_ce_loss(mlp.softmax(logits), labels, w), w


# --------------------------------------------------------------------- GCN


def init_gcn(c_in: int, hidden: int, k: int, depth: int, seed: int) -> list[np.ndarray]:
    if depth < 1:
        raise ValueError(f"GCN depth must be >= 1, got {depth}")
    rng = np.random.default_rng(seed)
    dims = [c_in] + [hidden] * (depth - 1) + [k]
    return [mlp.glorot_uniform(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]


def _gcn_forward(weights, adj, X, residual, dropout=0.0, rng=None, counter=None):
    depth = len(weights)
    h = np.asarray(X, dtype=np.float64)
    cache = []
    for i, W in enumerate(weights):
        mask = None
        if dropout > 0 and rng is not None:
            mask = (rng.random(h.shape) >= dropout) / (1.0 - dropout)
        h_in = h * mask if mask is not None else h
        pre = spmm(adj, h_in @ W, counter)
        if i == depth - 1:
            cache.append((h_in, mask, pre, False))
            return pre, cache
        out = np.maximum(pre, 0.0)
        skip = residual and out.shape == h.shape
        if skip:
            out = out + h
        cache.append((h_in, mask, pre, skip))
        h = out
    raise AssertionError("unreachable")


def gcn_forward(weights, adj_norm: SparseAdjacency, X, depth: int | None = None, residual=False, counter=None):
    """Logits of a ``depth``-layer GCN: ReLU(Â H W) per inner layer, linear Â H W on top.

    With ``residual`` the layer input is added after the ReLU wherever the
    widths match.
    """
    if depth is not None and depth != len(weights):
        raise ValueError(f"got {len(weights)} weight matrices for depth {depth}")
    return _gcn_forward(weights, adj_norm, X, residual, counter=counter)[0]


def _gcn_backward(weights, adj, cache, d_out, counter=None):
    grads = [None] * len(weights)
    d_h = None
    for i in range(len(weights) - 1, -1, -1):
        h_in, mask, pre, skip = cache[i]
        if i < len(weights) - 1:
            d_pre = d_h * (pre > 0)
        else:
            d_pre = d_out
        # Â is symmetric, so Â^T d = Â d
        d_u = spmm(adj, d_pre, counter)
        grads[i] = h_in.T @ d_u
        if i == 0:
            break
        d_in = d_u @ weights[i].T
        if mask is not None:
            d_in = d_in * mask
        if skip:
            d_in = d_in + d_h
        d_h = d_in
    return grads


def gcn_loss_and_grads(weights, adj, X, idx, labels, lam=0.0, residual=False, dropout=0.0, rng=None, counter=None):
    """Mean cross-entropy on nodes ``idx`` plus ``lam/2 ||W_0||^2``, and its gradients."""
    logits, cache = _gcn_forward(weights, adj, X, residual, dropout, rng, counter)
    loss, w = _cross_entropy(logits[idx], labels)
    loss += 0.5 * lam * float(np.sum(weights[0] ** 2))
    d_out = np.zeros_like(logits)
    d_out[idx] = mlp.ce_logits_grad(logits[idx], labels, w)
    grads = _gcn_backward(weights, adj, cache, d_out, counter)
    grads[0] = grads[0] + lam * weights[0]
    return loss, grads


def train_gcn(
    adj_norm: SparseAdjacency,
    X,
    labels,
    split: Split,
    cfg: TrainConfig,
    depth: int,
    residual: bool = False,
    K: int | None = None,
) -> TrainResult:
    """Train a GCN with the shared Adam/early-stopping loop (unweighted loss)."""
    labels = np.asarray(labels)
    K = int(labels.max()) + 1 if K is None else K
    X = np.asarray(X, dtype=np.float64)
    counter = OpCounter()
    tr, va, te = split.train, split.val, split.test
    names = [f"W{i}" for i in range(depth)]
    start = dict(zip(names, init_gcn(X.shape[1], cfg.hidden, K, depth, cfg.seed)))
    passes = [0]

    def step(arrs, rng):
        ws = [arrs[n] for n in names]
        loss, grads = gcn_loss_and_grads(
            ws, adj_norm, X, tr, labels[tr], cfg.l2_first_layer, residual, cfg.dropout, rng, counter
        )
        passes[0] += 2
        return loss, dict(zip(names, grads))

    def evaluate(arrs):
        logits = gcn_forward([arrs[n] for n in names], adj_norm, X, residual=residual, counter=counter)
        passes[0] += 1
        return mlp.accuracy(logits[va], labels[va]), _cross_entropy(logits[va], labels[va])[0]

    best, report = mlp.train_loop(start, step, evaluate, cfg, decay=names)
    ws = [best[n] for n in names]
    logits = gcn_forward(ws, adj_norm, X, residual=residual)
    return TrainResult(
        params=ws,
        train_acc=mlp.accuracy(logits[tr], labels[tr]),
        val_acc=mlp.accuracy(logits[va], labels[va]),
        test_acc=mlp.accuracy(logits[te], labels[te]),
        epochs=report.epochs_run,
        train_seconds=report.train_seconds,
        spmm_count=counter.count,
        passes=passes[0],
    )


# ------------------------------------------------------- SGC and AdaSGC


@dataclass(frozen=True)
class LinearParams:
    W: np.ndarray
    b: np.ndarray


def init_linear(c_in: int, hidden: int, k: int, seed: int) -> LinearParams:
    """``hidden`` is ignored; the signature matches :func:`mlp.init_params`."""
    rng = np.random.default_rng(seed)
    return LinearParams(mlp.glorot_uniform(rng, c_in, k), np.zeros(k))


def linear_logits(params: LinearParams, B: np.ndarray) -> np.ndarray:
    return np.asarray(B, dtype=np.float64) @ params.W + params.b


def fit_linear(params_init: LinearParams, B_train, labels, w, B_val, val_labels, cfg: TrainConfig):
    """Weighted multinomial logistic regression, same contract as :func:`mlp.fit`."""
    labels, val_labels = np.asarray(labels), np.asarray(val_labels)
    w = np.asarray(w, dtype=np.float64)
    lam = cfg.l2_first_layer
    B_train = np.asarray(B_train, dtype=np.float64)

    def step(arrs, rng):
        logits = B_train @ arrs["W"] + arrs["b"]
        loss = mlp.weighted_ce_loss(mlp.softmax(logits), labels, w)
        loss += 0.5 * lam * float(np.sum(arrs["W"] ** 2))
        d = mlp.ce_logits_grad(logits, labels, w)
        return loss, {"W": B_train.T @ d + lam * arrs["W"], "b": d.sum(axis=0)}

    def evaluate(arrs):
        logits = linear_logits(LinearParams(**arrs), B_val)
        return mlp.accuracy(logits, val_labels), _cross_entropy(logits, val_labels)[0]

    start = {"W": params_init.W, "b": params_init.b}
    frozen = () if cfg.use_bias else ("b",)
    best, report = mlp.train_loop(start, step, evaluate, cfg, decay=("W",), frozen=frozen)
    return LinearParams(**best), report


def sgc_forward(W, adj_norm: SparseAdjacency, X, l: int, counter=None) -> np.ndarray:
    """``Â^l X W`` with the propagation done by ``l`` sparse products."""
    feats = propagate_chain(adj_norm, X, l, counter)[-1]
    if feats.shape[1] != np.shape(W)[0]:
        raise ValueError(f"features have {feats.shape[1]} columns, W has {np.shape(W)[0]} rows")
    return feats @ W


def train_sgc(adj_norm, X, labels, split: Split, cfg: TrainConfig, depth: int, K: int | None = None) -> TrainResult:
    """Logistic regression on precomputed ``Â^depth X``."""
    labels = np.asarray(labels)
    K = int(labels.max()) + 1 if K is None else K
    counter = OpCounter()
    t0 = time.perf_counter()
    feats = propagate_chain(adj_norm, X, depth, counter)[-1]
    prop = time.perf_counter() - t0
    tr, va, te = split.train, split.val, split.test
    w = np.full(len(tr), 1.0 / len(tr))
    init = init_linear(feats.shape[1], cfg.hidden, K, cfg.seed)
    params, report = fit_linear(init, feats[tr], labels[tr], w, feats[va], labels[va], cfg)
    logits = linear_logits(params, feats)
    return TrainResult(
        params=params,
        train_acc=mlp.accuracy(logits[tr], labels[tr]),
        val_acc=mlp.accuracy(logits[va], labels[va]),
        test_acc=mlp.accuracy(logits[te], labels[te]),
        epochs=report.epochs_run,
        train_seconds=report.train_seconds,
        spmm_count=counter.count,
        propagate_seconds=prop,
    )


def run_adasgc(
    adj_norm, X, labels, split: Split, cfg: TrainConfig, L: int, variant: str = SAMME_R, K: int | None = None
) -> BoostResult:
    """AdaGCN with a linear base classifier in place of the MLP."""
    labels = np.asarray(labels)
    K = int(labels.max()) + 1 if K is None else K
    counter = OpCounter()
    get, cache = _chain(adj_norm, X, counter)
    t0 = time.perf_counter()
    get(L)
    prop = time.perf_counter() - t0
    ens, metrics = boost(get, labels, split, cfg, L, variant, init_linear, fit_linear, linear_logits, K)
    return BoostResult(ens, metrics, cache, counter.count, prop)


# ------------------------------------------------------ PPNP and APPNP


def ppnp_exact(f_out, adj_norm: SparseAdjacency, gamma: float) -> np.ndarray:
    """Solve ``(I - (1-gamma) Â) Z = gamma f_out`` by dense LU."""
    if adj_norm.n > PPNP_MAX_NODES:
        raise ValueError(f"dense PPNP limited to {PPNP_MAX_NODES} nodes, graph has {adj_norm.n}")
    f_out = np.asarray(f_out, dtype=np.float64)
    M = np.eye(adj_norm.n) - (1.0 - gamma) * adj_norm.to_dense()
    return scipy.linalg.lu_solve(scipy.linalg.lu_factor(M), gamma * f_out)


def appnp_iterate(f_out, adj_norm: SparseAdjacency, gamma: float, L: int, counter=None) -> np.ndarray:
    """``L`` steps of ``Z <- (1-gamma) Â Z + gamma f_out`` starting from ``Z = f_out``."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    f_out = np.asarray(f_out, dtype=np.float64)
    z = f_out
    for _ in range(L):
        z = (1.0 - gamma) * spmm(adj_norm, z, counter) + gamma * f_out
    return z


def train_appnp(
    adj_norm, X, labels, split: Split, cfg: TrainConfig, ppnp: PpnpConfig, K: int | None = None
) -> TrainResult:
    """MLP predictions propagated by APPNP, trained end to end.

    The propagation operator is symmetric, so its adjoint is itself and the
    backward pass reuses :func:`appnp_iterate`.
    """
    labels = np.asarray(labels)
    K = int(labels.max()) + 1 if K is None else K
    X = np.asarray(X, dtype=np.float64)
    counter = OpCounter()
    tr, va, te = split.train, split.val, split.test
    lam = cfg.l2_first_layer
    passes = [0]

    def propagate(f):
        return appnp_iterate(f, adj_norm, ppnp.gamma, ppnp.L, counter)

    def step(arrs, rng):
        p = MlpParams(**arrs)
        f, cache = mlp.forward(p, X, cfg.dropout, rng, train_mode=True)
        z = propagate(f)
        loss, w = _cross_entropy(z[tr], labels[tr])
        loss += 0.5 * lam * float(np.sum(p.W0**2))
        d_z = np.zeros_like(z)
        d_z[tr] = mlp.ce_logits_grad(z[tr], labels[tr], w)
        passes[0] += 2
        return loss, mlp.backward_from_logits(cache, propagate(d_z), lam).arrays()

    def evaluate(arrs):
        z = propagate(mlp.predict_logits(MlpParams(**arrs), X))
        passes[0] += 1
        return mlp.accuracy(z[va], labels[va]), _cross_entropy(z[va], labels[va])[0]

    start = mlp.init_params(X.shape[1], cfg.hidden, K, cfg.seed).arrays()
    best, report = mlp.train_loop(start, step, evaluate, cfg, decay=("W0", "W1"))
    params = MlpParams(**best)
    z = appnp_iterate(mlp.predict_logits(params, X), adj_norm, ppnp.gamma, ppnp.L)
    return TrainResult(
        params=params,
        train_acc=mlp.accuracy(z[tr], labels[tr]),
        val_acc=mlp.accuracy(z[va], labels[va]),
        test_acc=mlp.accuracy(z[te], labels[te]),
        epochs=report.epochs_run,
        train_seconds=report.train_seconds,
        spmm_count=counter.count,
        passes=passes[0],
    )


# ------------------------------------------------------------ verifiers


@dataclass
class Prop1Report:
    n: int
    gamma: float
    seed: int
    series_terms: int
    series_error: float  # Frobenius ||PPNP - Neumann series||
    fixed_point_residual: float
    depths: list[int]
    gaps: list[float]  # Frobenius ||APPNP_L - PPNP||
    passed: bool
    notes: list[str] = field(default_factory=list)


def random_connected_graph(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.15) -> SparseAdjacency:
    """Random spanning tree plus independent extra edges."""
    edges = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < extra_edge_prob
    edges += list(zip(iu[keep].tolist(), ju[keep].tolist()))
    return build_from_edge_list(n, edges)


def neumann_series(f_out, adj_norm: SparseAdjacency, gamma: float, tol: float = 1e-10):
    """``sum_{l<T} gamma (1-gamma)^l Â^l f_out`` with T the first index where (1-gamma)^T < tol."""
    T = 1 if gamma >= 1 else int(np.floor(np.log(tol) / np.log(1 - gamma))) + 1
    A = adj_norm.to_dense()
    term = np.asarray(f_out, dtype=np.float64)
    total = np.zeros_like(term)
    for l in range(T):
        total += gamma * (1 - gamma) ** l * term
        term = A @ term
    return total, T


def verify_prop1(n: int = 20, gamma: float = 0.1, seed: int = 0, depths=(10, 50, 200), k: int = 4) -> Prop1Report:
    """PPNP equals its Neumann series, and APPNP approaches it as depth grows."""
    if n > 100:
        raise ValueError("verify_prop1 is meant for n <= 100")
    rng = np.random.default_rng(seed)
    adj = sym_normalize(random_connected_graph(n, rng))
    f_out = rng.normal(size=(n, k))
    z = ppnp_exact(f_out, adj, gamma)
    series, T = neumann_series(f_out, adj, gamma)
    series_err = float(np.linalg.norm(z - series))
    residual = float(np.abs(z - ((1 - gamma) * (adj.to_dense() @ z) + gamma * f_out)).max())
    gaps = [float(np.linalg.norm(appnp_iterate(f_out, adj, gamma, L) - z)) for L in depths]
    notes = []
    ok = series_err < 1e-8
    if not ok:
        notes.append(f"series error {series_err:.3g} >= 1e-8")
    for a, b in zip(gaps, gaps[1:]):
        if b > a + 1e-12:
            ok = False
            notes.append(f"gap not decreasing: {a:.3g} -> {b:.3g}")
    return Prop1Report(n, gamma, seed, T, series_err, residual, list(depths), gaps, ok, notes)


@dataclass
class Prop2Report:
    max_abs_error: float
    lhs: np.ndarray
    rhs: np.ndarray
    passed: bool


def mixing_weights(b: float, alpha: float, c: int) -> MlpParams:
    """Bias-free MLP with ``W0 = b/(sign(b) alpha) I`` and ``W1 = sign(b) I``."""
    s = float(np.sign(b))
    return MlpParams(
        W0=(b / (s * alpha)) * np.eye(c), b0=np.zeros(c), W1=s * np.eye(c), b1=np.zeros(c)
    )


def verify_prop2(adj_norm: SparseAdjacency, X, b, alphas, tol: float = 1e-9) -> Prop2Report:
    """Check that an alpha-weighted ensemble of constructed MLPs equals ``sum_l b_l ReLU(Â^l X)``."""
    b = [float(v) for v in b]
    alphas = [float(a) for a in alphas]
    if len(b) != len(alphas):
        raise ValueError("b and alphas must have equal length")
    if any(v == 0 for v in b):
        raise ValueError("every b_l must be nonzero (sign undefined at 0)")
    if any(a <= 0 for a in alphas):
        raise ValueError("every alpha must be positive")
    X = np.asarray(X, dtype=np.float64)
    c = X.shape[1]
    feats = propagate_chain(adj_norm, X, len(b) - 1)
    lhs = sum(a * mlp.predict_logits(mixing_weights(bl, a, c), f) for bl, a, f in zip(b, alphas, feats))
    A = adj_norm.to_dense()
    rhs = sum(bl * np.maximum(np.linalg.matrix_power(A, l) @ X, 0.0) for l, bl in enumerate(b))
    err = float(np.abs(lhs - rhs).max())
    return Prop2Report(err, lhs, rhs, err < tol)
