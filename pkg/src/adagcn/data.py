"""Dataset files, the stochastic-block-model generator and split protocol."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boosting import Split
from .graph import GraphInputError, SparseAdjacency, build_from_edge_list, read_edge_list, write_edge_list


@dataclass
class Dataset:
    adjacency: SparseAdjacency  # unnormalized
    features: np.ndarray
    labels: np.ndarray
    K: int
    label_names: list[str] = field(default_factory=list)
    node_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = self.adjacency.n
        if self.features.shape[0] != n or len(self.labels) != n:
            raise GraphInputError(
                f"{n} nodes but {self.features.shape[0]} feature rows and {len(self.labels)} labels"
            )
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.K):
            raise GraphInputError(f"labels must lie in [0, {self.K})")
        if not self.label_names:
            self.label_names = [str(k) for k in range(self.K)]
        if not self.node_ids:
            self.node_ids = [str(i) for i in range(n)]

    @property
    def n(self) -> int:
        return self.adjacency.n


def row_normalize(features: np.ndarray) -> np.ndarray:
    """L1-normalize rows; all-zero rows stay zero."""
    s = np.abs(features).sum(axis=1, keepdims=True)
    return features / np.where(s == 0, 1.0, s)


def load_dataset(edge_path, node_path) -> Dataset:
    """Read a node TSV (``id, label, f_0..f_{C-1}``) and an edge list keyed by node id.

    Nodes are indexed in file order; labels get dense ids in order of first
    appearance.
    """
    ids: list[str] = []
    label_ids: dict[str, int] = {}
    labels, rows = [], []
    width = None
    text = Path(node_path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) < 2:
            raise GraphInputError(f"{node_path}:{lineno}: expected id<TAB>label<TAB>features")
        node, label, feats = parts[0].strip(), parts[1].strip(), parts[2:]
        if width is None:
            width = len(feats)
        elif len(feats) != width:
            raise GraphInputError(
                f"{node_path}:{lineno}: ragged feature row ({len(feats)} values, expected {width})"
            )
        try:
            rows.append([float(v) for v in feats])
        except ValueError:
            raise GraphInputError(f"{node_path}:{lineno}: non-numeric feature value") from None
        ids.append(node)
        labels.append(label_ids.setdefault(label, len(label_ids)))
    if not ids:
        raise GraphInputError(f"{node_path}: no nodes")
    index = {node: i for i, node in enumerate(ids)}
    if len(index) != len(ids):
        raise GraphInputError(f"{node_path}: duplicate node id")

    edges = []
    for i, j in read_edge_list(edge_path):
        try:
            edges.append((index[str(i)], index[str(j)]))
        except KeyError as e:
            raise GraphInputError(f"{edge_path}: edge references unknown node id {e.args[0]}") from None
    adj = build_from_edge_list(len(ids), edges)
    feats = np.asarray(rows, dtype=np.float64).reshape(len(ids), width or 0)
    names = sorted(label_ids, key=label_ids.get)
    return Dataset(adj, feats, np.asarray(labels, dtype=np.int64), len(names), names, ids)


def save_dataset(ds: Dataset, edge_path, node_path) -> None:
    """Inverse of :func:`load_dataset`. Node ids must be base-10 integers for the edge file."""
    lines = []
    for node, lab, row in zip(ds.node_ids, ds.labels, ds.features):
        lines.append("\t".join([node, ds.label_names[lab], *(repr(float(v)) for v in row)]) + "\n")
    Path(node_path).write_text("".join(lines), encoding="utf-8", newline="\n")
    if ds.node_ids == [str(i) for i in range(ds.n)]:
        write_edge_list(edge_path, ds.adjacency)
        return
    out = []
    adj = ds.adjacency
    for i in range(adj.n):
        for j in adj.col_idx[adj.row_ptr[i] : adj.row_ptr[i + 1]]:
            if i < j:
                out.append(f"{ds.node_ids[i]} {ds.node_ids[j]}\n")
    Path(edge_path).write_text("".join(out), encoding="utf-8", newline="\n")


@dataclass(frozen=True)
class SbmConfig:
    """Block model with class-dependent Gaussian features.

    Each class is split into ``modes_per_class`` communities. The first
    ``signal_fraction`` of the feature dimensions carry signal: dimension d
    belongs to class ``d % blocks`` and community m of that class has mean
    ``+signal`` (even m) or ``-signal`` (odd m) on it. With two modes the
    class-feature relation is XOR-like and no linear map separates it.
    """

    blocks: int = 4
    nodes_per_block: int = 100
    p_in: float = 0.05
    p_out: float = 0.005
    feature_dim: int = 16
    feature_signal: float = 0.5
    noise_sd: float = 1.0
    seed: int = 0
    modes_per_class: int = 1
    signal_fraction: float = 1.0

    def __post_init__(self):
        if not 0 <= self.p_out < self.p_in <= 1:
            raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={self.p_in} p_out={self.p_out}")
        if self.feature_signal < 0 or self.noise_sd < 0:
            raise ValueError("feature_signal and noise_sd must be >= 0")
        if self.blocks < 1 or self.nodes_per_block < self.modes_per_class or self.modes_per_class < 1:
            raise ValueError("invalid block sizes")
        if not 0 <= self.signal_fraction <= 1:
            raise ValueError("signal_fraction must lie in [0, 1]")


SBM_PRESETS = {
    # 2-layer GCN separates the blocks; a 15-layer GCN oversmooths
    "reference": SbmConfig(),
    # half the dimensions are pure noise and each class is a +/- mixture
    "xor": SbmConfig(p_in=0.1, p_out=0.005, feature_signal=1.0, modes_per_class=2, signal_fraction=0.5),
}


def generate_sbm(cfg: SbmConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.blocks * cfg.nodes_per_block
    labels = np.repeat(np.arange(cfg.blocks), cfg.nodes_per_block)
    within = np.arange(n) % cfg.nodes_per_block
    mode = within * cfg.modes_per_class // cfg.nodes_per_block
    community = labels * cfg.modes_per_class + mode

    iu, ju = np.triu_indices(n, 1)
    prob = np.where(community[iu] == community[ju], cfg.p_in, cfg.p_out)
    keep = rng.random(len(iu)) < prob
    adj = build_from_edge_list(n, np.stack([iu[keep], ju[keep]], axis=1))

    n_signal = int(round(cfg.signal_fraction * cfg.feature_dim))
    means = np.zeros((n, cfg.feature_dim))
    dims = np.arange(n_signal)
    sign = np.where(mode % 2 == 0, 1.0, -1.0)
    for d in dims:
        owner = labels == d % cfg.blocks
        means[owner, d] = cfg.feature_signal * sign[owner]
    feats = means + cfg.noise_sd * rng.normal(size=means.shape)
    return Dataset(adj, feats, labels.astype(np.int64), cfg.blocks)


@dataclass(frozen=True)
class SplitSpec:
    train_per_class: int = 20
    val_size: int = 100
    seed: int = 0


def make_split(ds: Dataset, spec: SplitSpec) -> Split:
    """Sample ``train_per_class`` nodes of every class, then ``val_size`` from the rest; test is the remainder."""
    rng = np.random.default_rng(spec.seed)
    train = []
    for k in range(ds.K):
        members = np.flatnonzero(ds.labels == k)
        if len(members) < spec.train_per_class:
            raise ValueError(
                f"class {ds.label_names[k]!r} has {len(members)} nodes, "
                f"{spec.train_per_class} requested for training"
            )
        train.append(rng.choice(members, spec.train_per_class, replace=False))
    train = np.sort(np.concatenate(train))
    rest = np.setdiff1d(np.arange(ds.n), train)
    if len(rest) < spec.val_size:
        raise ValueError(f"only {len(rest)} nodes left for a validation set of {spec.val_size}")
    val = np.sort(rng.choice(rest, spec.val_size, replace=False))
    test = np.setdiff1d(rest, val)
    return Split(train, val, test)


def label_rate(split: Split, n: int) -> float:
    return len(split.train) / n
