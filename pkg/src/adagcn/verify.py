"""Self-checking numerical verifiers behind ``adagcn verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import baselines, boosting, mlp
from .graph import sym_normalize


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    detail: str = ""


def check_formula_units() -> CheckResult:
    cases = [
        (boosting.samme_alpha(0.5, 2), 0.0),
        (boosting.samme_alpha(2 / 3, 3), 0.0),
        (boosting.samme_alpha(1 / 3, 3), math.log(4)),
        (boosting.vc_depth_bound(3, 1), 16 * math.log2(2 * math.e)),
    ]
    err = max(abs(a - b) for a, b in cases)
    h = boosting.sammer_h(np.array([[0.5, 0.25, 0.25]]), 3)[0]
    expected_h = [2 * (math.log(0.5) - (math.log(0.5) + 2 * math.log(0.25)) / 3)]
    expected_h += [2 * (math.log(0.25) - (math.log(0.5) + 2 * math.log(0.25)) / 3)] * 2
    h_err = float(np.abs(h - expected_h).max())
    return CheckResult("formula_units", err < 1e-12 and h_err < 1e-12, max(err, h_err))


def check_prop1(gammas=(0.1, 0.2, 0.5), seeds=(0, 1, 2), n=20) -> CheckResult:
    worst = 0.0
    ok = True
    notes = []
    for g in gammas:
        for s in seeds:
            rep = baselines.verify_prop1(n, g, s)
            worst = max(worst, rep.series_error)
            ok &= rep.passed and rep.gaps[-1] < 1e-6
            notes += rep.notes
    return CheckResult("prop1_ppnp_neumann", ok, worst, "; ".join(notes))


def check_prop2(draws=20, seed=0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    ok = True
    for i in range(draws):
        n = int(rng.integers(2, 11))
        L = int(rng.integers(0, 5))
        adj = sym_normalize(baselines.random_connected_graph(n, rng, 0.3))
        c = int(rng.integers(1, 5))
        X = rng.random((n, c)) if i % 2 == 0 else rng.normal(size=(n, c))
        b = rng.choice([-1.0, 1.0], size=L + 1) * rng.uniform(0.1, 3.0, size=L + 1)
        alphas = rng.uniform(0.1, 3.0, size=L + 1)
        rep = baselines.verify_prop2(adj, X, b, alphas)
        worst = max(worst, rep.max_abs_error)
        ok &= rep.passed
    return CheckResult("prop2_neighborhood_mixing", ok, worst)


def check_gradients(seeds=range(10), tol=1e-5) -> CheckResult:
    worst = max(mlp.gradient_check(s) for s in seeds)
    return CheckResult("mlp_gradients", worst < tol, worst)


def scalar_sammer_round(w, probs, labels, K):
    """One SAMME.R round (scores and reweighting) written with scalar loops only."""
    floor = 1e-10
    h = []
    for row in probs:
        logs = [math.log(min(max(p, floor), 1.0)) for p in row]
        mean = sum(logs) / K
        h.append([(K - 1) * (lp - mean) for lp in logs])
    new_w = []
    for wi, row, y in zip(w, probs, labels):
        p = min(max(row[y], floor), 1.0)
        new_w.append(wi * math.exp(-(K - 1) / K * math.log(p)))
    total = sum(new_w)
    return h, [v / total for v in new_w]


SAMMER_TABLE = np.array(
    [
        [0.7, 0.2, 0.1],
        [0.1, 0.8, 0.1],
        [0.3, 0.3, 0.4],
        [0.05, 0.05, 0.9],
        [0.5, 0.25, 0.25],
        [0.2, 0.6, 0.2],
    ]
)
SAMMER_LABELS = np.array([0, 1, 2, 0, 1, 2])
SAMMER_WEIGHTS = np.array([0.1, 0.2, 0.15, 0.25, 0.2, 0.1])


def check_sammer_bruteforce() -> CheckResult:
    K = 3
    h_ref, w_ref = scalar_sammer_round(SAMMER_WEIGHTS, SAMMER_TABLE, SAMMER_LABELS, K)
    h = boosting.sammer_h(SAMMER_TABLE, K)
    w = boosting.sammer_update_weights(SAMMER_WEIGHTS, SAMMER_TABLE, SAMMER_LABELS, K)
    err = max(float(np.abs(h - h_ref).max()), float(np.abs(w - w_ref).max()))
    row_sum = float(np.abs(h.sum(axis=1)).max())
    return CheckResult("sammer_bruteforce", err < 1e-12 and row_sum < 1e-9, err)


def run_all() -> list[CheckResult]:
    return [
        check_formula_units(),
        check_prop1(),
        check_prop2(),
        check_gradients(),
        check_sammer_bruteforce(),
    ]
