"""Experiment driver and command-line interface."""

from __future__ import annotations

import configparser
import csv
import io
import logging
import os
import statistics
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import click
import numpy as np
from scipy import stats

from . import baselines, verify
from .boosting import SAMME, SAMME_R, ensemble_predict, run_adagcn
from .data import SBM_PRESETS, Dataset, SplitSpec, generate_sbm, load_dataset, make_split, row_normalize, save_dataset
from .graph import GraphInputError, sym_normalize
from .mlp import TrainConfig

log = logging.getLogger(__name__)

MODELS = ("adagcn", "adasgc", "gcn", "gcn_res", "sgc", "appnp")
SWEEP_MODELS = ("gcn", "gcn_res", "sgc", "adagcn")
BENCH_MODELS = ("adagcn", "gcn", "sgc")

# Per-family training defaults. Boosted models follow the AdaGCN settings
# (patience 300 / 500 epochs, L2 5e-3 on the first layer); graph-convolution
# baselines follow the usual GCN settings (16 hidden, dropout 0.5, L2 5e-4,
# patience 100) with the epoch cap lowered from 10000 for desk runs.
MODEL_DEFAULTS = {
    "adagcn": TrainConfig(),
    "adasgc": TrainConfig(),
    "gcn": TrainConfig(hidden=16, dropout=0.5, l2_first_layer=5e-4, weight_decay=0.0, patience=100, max_epochs=1000),
    "gcn_res": TrainConfig(hidden=16, dropout=0.5, l2_first_layer=5e-4, weight_decay=0.0, patience=100, max_epochs=1000),
    "sgc": TrainConfig(l2_first_layer=5e-4, weight_decay=0.0, patience=100, max_epochs=1000),
    "appnp": TrainConfig(hidden=64, dropout=0.5, l2_first_layer=5e-3, weight_decay=0.0, patience=100, max_epochs=1000),
}

TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}


class ConfigError(click.ClickException):
    exit_code = 2


@dataclass
class ExperimentConfig:
    model: str = "adagcn"
    depth: int = 2
    train: TrainConfig = field(default_factory=TrainConfig)
    gamma: float = 0.1
    appnp_steps: int = 10
    variant: str = SAMME_R
    edges: str | None = None
    nodes: str | None = None
    sbm_preset: str = "reference"
    sbm_seed: int = 0
    normalize_features: bool = False
    train_per_class: int = 20
    val_size: int = 100
    seed: int = 0
    repeats: int = 5
    out: str | None = None
    timing: bool = False
    # training fields set by the user; reapplied over other models' defaults in sweeps
    train_overrides: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.depth < (0 if self.model in ("adagcn", "adasgc", "sgc") else 1):
            raise ConfigError(f"depth {self.depth} is too small for model {self.model}")
        if self.model == "appnp" and not 0 < self.gamma <= 1:
            raise ConfigError(f"appnp needs gamma in (0, 1], got {self.gamma}")
        if self.variant not in (SAMME, SAMME_R):
            raise ConfigError(f"variant must be {SAMME} or {SAMME_R}, got {self.variant!r}")
        if (self.edges is None) != (self.nodes is None):
            raise ConfigError("--edges and --nodes must be given together")
        if self.edges is None and self.sbm_preset not in SBM_PRESETS:
            raise ConfigError(f"unknown SBM preset {self.sbm_preset!r}; choose from {', '.join(SBM_PRESETS)}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")


@dataclass
class RunRecord:
    model: str
    depth: int
    seed: int
    train_acc: float
    val_acc: float
    test_acc: float
    epochs: int
    spmm_count: int
    passes: int = 0
    alphas: list[float] = field(default_factory=list)
    errs: list[float] = field(default_factory=list)
    per_epoch_ms: float = 0.0
    propagate_ms: float = 0.0


def load_experiment_dataset(cfg: ExperimentConfig) -> Dataset:
    try:
        if cfg.edges is not None:
            ds = load_dataset(cfg.edges, cfg.nodes)
        else:
            ds = generate_sbm(replace(SBM_PRESETS[cfg.sbm_preset], seed=cfg.sbm_seed))
    except (OSError, GraphInputError) as e:
        raise ConfigError(str(e)) from e
    if cfg.normalize_features:
        ds = replace(ds, features=row_normalize(ds.features))
    return ds


def _acc(pred, labels, idx) -> float:
    return float(np.mean(pred[idx] == labels[idx]))


def run_once(cfg: ExperimentConfig, ds: Dataset, adj_norm, seed: int) -> RunRecord:
    """One training run with a fresh split and initialization drawn from ``seed``."""
    try:
        split = make_split(ds, SplitSpec(cfg.train_per_class, cfg.val_size, seed))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    tcfg = cfg.train.replace(seed=seed)
    X, y, K = ds.features, ds.labels, ds.K

    if cfg.model in ("adagcn", "adasgc"):
        run = run_adagcn if cfg.model == "adagcn" else baselines.run_adasgc
        res = run(adj_norm, X, y, split, tcfg, cfg.depth, cfg.variant, K=K)
        pred = ensemble_predict(res.ensemble, res.propagated)
        epochs = sum(m.epochs for m in res.metrics)
        seconds = sum(m.fit_seconds for m in res.metrics)
        alphas = [m.alpha for m in res.metrics] if cfg.variant == SAMME else []
        return RunRecord(
            cfg.model, cfg.depth, seed,
            _acc(pred, y, split.train), _acc(pred, y, split.val), _acc(pred, y, split.test),
            epochs, res.spmm_count, 0, alphas, [m.train_err for m in res.metrics],
            1e3 * seconds / max(epochs, 1), 1e3 * res.propagate_seconds,
        )

    if cfg.model in ("gcn", "gcn_res"):
        r = baselines.train_gcn(adj_norm, X, y, split, tcfg, cfg.depth, residual=cfg.model == "gcn_res", K=K)
    elif cfg.model == "sgc":
        r = baselines.train_sgc(adj_norm, X, y, split, tcfg, cfg.depth, K=K)
    else:
        r = baselines.train_appnp(adj_norm, X, y, split, tcfg, baselines.PpnpConfig(cfg.gamma, cfg.appnp_steps), K=K)
    return RunRecord(
        cfg.model, cfg.depth, seed, r.train_acc, r.val_acc, r.test_acc, r.epochs, r.spmm_count,
        r.passes, per_epoch_ms=1e3 * r.per_epoch_seconds, propagate_ms=1e3 * r.propagate_seconds,
    )


def run_repeats(cfg: ExperimentConfig, ds: Dataset | None = None) -> list[RunRecord]:
    ds = ds if ds is not None else load_experiment_dataset(cfg)
    adj_norm = sym_normalize(ds.adjacency)
    return [run_once(cfg, ds, adj_norm, cfg.seed + r) for r in range(cfg.repeats)]


# ----------------------------------------------------------------- CSV


def _f(x: float) -> str:
    return f"{x:.6f}"


def _mean_sd(xs) -> tuple[float, float]:
    xs = list(xs)
    return statistics.fmean(xs), (statistics.stdev(xs) if len(xs) > 1 else 0.0)


def train_csv(records: list[RunRecord], timing: bool = False) -> str:
    """One row per run plus a ``summary`` row holding mean±sd of each accuracy."""
    cols = ["model", "depth", "seed", "train_acc", "val_acc", "test_acc", "epochs", "spmm_count", "alphas", "errs"]
    if timing:
        cols += ["per_epoch_ms", "propagate_ms"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        row = [r.model, r.depth, r.seed, _f(r.train_acc), _f(r.val_acc), _f(r.test_acc), r.epochs, r.spmm_count,
               ";".join(map(_f, r.alphas)), ";".join(map(_f, r.errs))]
        if timing:
            row += [_f(r.per_epoch_ms), _f(r.propagate_ms)]
        w.writerow(row)
    summary = [records[0].model, records[0].depth, "summary"]
    for key in ("train_acc", "val_acc", "test_acc"):
        m, s = _mean_sd(getattr(r, key) for r in records)
        summary.append(f"{m:.6f}±{s:.6f}")
    summary += [""] * (len(cols) - len(summary))
    w.writerow(summary)
    return buf.getvalue()


def depth_sweep(cfg: ExperimentConfig, depths, models=SWEEP_MODELS, ds: Dataset | None = None) -> list[dict]:
    ds = ds if ds is not None else load_experiment_dataset(cfg)
    rows = []
    for model in models:
        for d in depths:
            mcfg = replace(cfg, model=model, depth=d, train=_model_train(cfg, model))
            mcfg.validate()
            recs = run_repeats(mcfg, ds)
            tm, ts = _mean_sd(r.test_acc for r in recs)
            rows.append({
                "model": model, "depth": d, "runs": len(recs),
                "train_acc_mean": statistics.fmean(r.train_acc for r in recs),
                "val_acc_mean": statistics.fmean(r.val_acc for r in recs),
                "test_acc_mean": tm, "test_acc_sd": ts,
                "test_accs": [r.test_acc for r in recs],
            })
            log.info("%s depth=%d test=%.4f±%.4f", model, d, tm, ts)
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "depth", "runs", "train_acc_mean", "val_acc_mean", "test_acc_mean", "test_acc_sd"])
    for r in rows:
        w.writerow([r["model"], r["depth"], r["runs"], _f(r["train_acc_mean"]), _f(r["val_acc_mean"]),
                    _f(r["test_acc_mean"]), _f(r["test_acc_sd"])])
    return buf.getvalue()


@dataclass
class SlopeFit:
    model: str
    slope: float
    intercept: float
    r2: float


def fit_slope(depths, times) -> tuple[float, float, float]:
    """Least-squares ``time = slope * depth + intercept``; returns (slope, intercept, r^2)."""
    res = stats.linregress(np.asarray(depths, dtype=float), np.asarray(times, dtype=float))
    r2 = float(res.rvalue**2) if np.isfinite(res.rvalue) else 0.0
    return float(res.slope), float(res.intercept), r2


def bench(cfg: ExperimentConfig, depths, models=BENCH_MODELS, ds: Dataset | None = None):
    """Per-epoch training time against depth, one median over ``repeats`` per point."""
    if len(depths) < 3:
        raise ConfigError("bench needs at least three depths")
    ds = ds if ds is not None else load_experiment_dataset(cfg)
    adj_norm = sym_normalize(ds.adjacency)
    points, fits = [], []
    for model in models:
        times = []
        for d in depths:
            mcfg = replace(cfg, model=model, depth=d, train=_model_train(cfg, model))
            mcfg.validate()
            recs = [run_once(mcfg, ds, adj_norm, cfg.seed + r) for r in range(cfg.repeats)]
            t = statistics.median(r.per_epoch_ms for r in recs)
            times.append(t)
            points.append({
                "model": model, "depth": d, "per_epoch_ms": t,
                "propagate_ms": statistics.median(r.propagate_ms for r in recs),
                "spmm_count": recs[0].spmm_count, "epochs": recs[0].epochs, "passes": recs[0].passes,
            })
        fits.append(SlopeFit(model, *fit_slope(depths, times)))
    return points, fits


def bench_csv(points, fits) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "depth", "per_epoch_ms", "propagate_ms", "spmm_count", "epochs", "passes",
                "slope_ms_per_layer", "intercept_ms", "r2"])
    for p in points:
        w.writerow([p["model"], p["depth"], _f(p["per_epoch_ms"]), _f(p["propagate_ms"]), p["spmm_count"],
                    p["epochs"], p["passes"], "", "", ""])
    for f in fits:
        w.writerow([f.model, "fit", "", "", "", "", "", f"{f.slope:.6g}", f"{f.intercept:.6g}", f"{f.r2:.4f}"])
    return buf.getvalue()


# ------------------------------------------------------------ config


def read_config_file(path, model: str) -> dict:
    """Flat ``key = value`` file; ``[DEFAULT]`` applies everywhere, ``[<model>]`` overrides it."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    values = dict(parser.defaults())
    if parser.has_section(model):
        values.update(parser.items(model))
    return {k.replace("-", "_"): v for k, v in values.items()}


def _model_train(cfg: ExperimentConfig, model: str) -> TrainConfig:
    """Model-family defaults with any user overrides recorded on ``cfg`` reapplied."""
    return replace(MODEL_DEFAULTS[model], **cfg.train_overrides)


_CONVERTERS = {bool: lambda v: str(v).lower() in ("1", "true", "yes", "on"), int: int, float: float, str: str}


def _convert(name: str, value, typ):
    try:
        return _CONVERTERS[typ](value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {value!r}") from None


def build_config(options: dict, explicit: set[str]) -> ExperimentConfig:
    """Merge built-in defaults, config file and command line (command line wins)."""
    model = options.get("model") or "adagcn"
    file_values = read_config_file(options["config"], model) if options.get("config") else {}
    if "model" in file_values and "model" not in explicit:
        model = file_values["model"]
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; choose from {', '.join(MODELS)}")

    exp_types = {f.name: f.type for f in fields(ExperimentConfig)}
    type_of = {"bool": bool, "int": int, "float": float, "str": str}
    train_types = {f.name: type_of[f.type] for f in fields(TrainConfig)}
    merged = {}
    merged.update(file_values)
    for key in explicit:
        if options.get(key) is not None:
            merged[key] = options[key]

    exp_kw, train_kw = {"model": model}, {}
    for key, val in merged.items():
        if key in ("config", "model", "depths", "models", "train_overrides"):
            continue
        if key in TRAIN_KEYS:
            train_kw[key] = _convert(key, val, train_types[key])
        elif key in exp_types:
            t = {"int": int, "float": float, "bool": bool}.get(exp_types[key].split(" ")[0], str)
            exp_kw[key] = _convert(key, val, t)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        train = replace(MODEL_DEFAULTS[model], **train_kw)
        cfg = ExperimentConfig(train=train, train_overrides=train_kw, **exp_kw)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    cfg.validate()
    return cfg


def _parse_list(text: str, conv=int) -> list:
    try:
        return [conv(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse list {text!r}") from None


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        click.echo(text, nl=False)


# --------------------------------------------------------------- CLI


def _apply_thread_cap() -> None:
    raw = os.environ.get("ADAGCN_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"ADAGCN_THREADS must be a positive integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits

    # kept alive for the process lifetime
    _apply_thread_cap.limiter = threadpool_limits(limits=n)


def experiment_options(fn):
    opts = [
        click.option("--config", type=click.Path(dir_okay=False), help="key = value config file."),
        click.option("--model", type=click.Choice(MODELS), help="Model to train."),
        click.option("--depth", type=int, help="Layers (boosting rounds L for adagcn/adasgc)."),
        click.option("--seed", type=int, help="Base seed; repeat r uses seed + r."),
        click.option("--repeats", type=int, help="Number of runs (default 5)."),
        click.option("--gamma", type=float, help="APPNP teleport probability."),
        click.option("--appnp-steps", type=int, help="APPNP power-iteration steps."),
        click.option("--variant", type=click.Choice([SAMME, SAMME_R]), help="Boosting variant."),
        click.option("--edges", type=click.Path(dir_okay=False), help="Edge-list file."),
        click.option("--nodes", type=click.Path(dir_okay=False), help="Node TSV file."),
        click.option("--sbm-preset", type=click.Choice(sorted(SBM_PRESETS)), help="Synthetic dataset preset."),
        click.option("--sbm-seed", type=int, help="Seed of the synthetic graph."),
        click.option("--normalize-features", is_flag=True, default=None, help="L1-normalize feature rows."),
        click.option("--train-per-class", type=int, help="Training nodes per class."),
        click.option("--val-size", type=int, help="Early-stopping set size."),
        click.option("--hidden", type=int),
        click.option("--lr", type=float),
        click.option("--dropout", type=float),
        click.option("--l2-first-layer", type=float),
        click.option("--weight-decay", type=float),
        click.option("--patience", type=int),
        click.option("--max-epochs", type=int),
        click.option("--out", type=click.Path(dir_okay=False), help="Write CSV here instead of stdout."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _explicit(ctx: click.Context) -> set[str]:
    return {
        name for name in ctx.params
        if ctx.get_parameter_source(name) is not click.core.ParameterSource.DEFAULT
    }


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """AdaGCN experiments: training, depth sweeps, timing and verification."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    _apply_thread_cap()


@main.command()
@experiment_options
@click.option("--timing", is_flag=True, default=None, help="Add wall-time columns (not reproducible).")
@click.pass_context
def train(ctx, **options):
    """Train one model over several seeds and write per-run CSV rows."""
    cfg = build_config(options, _explicit(ctx))
    records = run_repeats(cfg)
    _write(train_csv(records, timing=cfg.timing), cfg.out)


@main.command("depth-sweep")
@experiment_options
@click.option("--depths", default="2,4,8,15", show_default=True, help="Comma-separated depths.")
@click.option("--models", default=",".join(SWEEP_MODELS), show_default=True,
              help="Comma-separated models; add adasgc for the linear-base ablation.")
@click.pass_context
def depth_sweep_cmd(ctx, depths, models, **options):
    """Accuracy against depth for several models."""
    cfg = build_config(options, _explicit(ctx))
    models = [m.strip() for m in models.split(",") if m.strip()]
    bad = [m for m in models if m not in MODELS]
    if bad:
        raise ConfigError(f"unknown models: {', '.join(bad)}")
    depths = _parse_list(depths)
    if not depths:
        raise ConfigError("--depths must list at least one depth")
    _write(sweep_csv(depth_sweep(cfg, depths, models)), cfg.out)


@main.command("bench")
@experiment_options
@click.option("--depths", default="2,4,6,8,10,12,15", show_default=True)
@click.option("--models", default=",".join(BENCH_MODELS), show_default=True)
@click.pass_context
def bench_cmd(ctx, depths, models, **options):
    """Per-epoch training time against depth, with fitted slopes."""
    explicit = _explicit(ctx)
    if "repeats" not in explicit:
        options["repeats"], explicit = 1, explicit | {"repeats"}
    cfg = build_config(options, explicit)
    models = [m.strip() for m in models.split(",") if m.strip()]
    points, fits = bench(cfg, _parse_list(depths), models)
    _write(bench_csv(points, fits), cfg.out)


@main.command("verify")
def verify_cmd():
    """Run the numerical self-checks; exit status 1 if any fails."""
    results = verify.run_all()
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        line = f"{r.name:<{width}}  {status}  max_error={r.max_error:.3e}"
        if r.detail:
            line += f"  {r.detail}"
        click.echo(line)
    if not all(r.passed for r in results):
        sys.exit(1)


@main.command("gen-sbm")
@click.option("--preset", type=click.Choice(sorted(SBM_PRESETS)), default="reference", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory.")
def gen_sbm_cmd(preset, seed, out):
    """Write a synthetic dataset as edges.txt + nodes.tsv."""
    ds = generate_sbm(replace(SBM_PRESETS[preset], seed=seed))
    Path(out).mkdir(parents=True, exist_ok=True)
    save_dataset(ds, Path(out) / "edges.txt", Path(out) / "nodes.tsv")
    click.echo(f"wrote {ds.n} nodes, {ds.adjacency.nnz // 2} edges, {ds.K} classes to {out}")


if __name__ == "__main__":
    main()
