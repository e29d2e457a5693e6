"""Calibration pre-runs for the Monte-Carlo thresholds frozen in tests/frozen.py.

Uses master seed CAL_SEED, which no test uses, so the frozen thresholds are
independent of the runs they gate. Prints one JSON object.

    python scripts/calibrate.py            # ~2 minutes on one core
"""

import json
import math
import sys
import time

import numpy as np

from reluadv.attack import gradient_flow_attack
from reluadv.experiments import sphere_point
from reluadv.linalg import RngState, normalized_gaussian_matrix
from reluadv.relunet import random_network
from reluadv.surjectivity import estimate_c1c2, tail_sum_mc
from reluadv.typicality import example_typicality, weight_typicality

CAL_SEED = 20261016


def tail_sum_mean():
    stats = tail_sum_mc(1000, 0.5, 100_000, RngState(CAL_SEED, 1), chunk=2000)
    return {"mu_star": stats.mean, "std": stats.std, "p01": stats.p01}


def surjectivity_tau(n_seeds=200):
    out = {}
    for d in (200, 400, 800):
        vals = []
        for s in range(n_seeds):
            gen = RngState(CAL_SEED, (2 << 32) | (d << 16) | s).generator()
            W = normalized_gaussian_matrix(d // 20, d, gen)
            vals.append(estimate_c1c2(W, 0.25, 200, gen).min_sigma_k)
        out[d] = {"p01": float(np.percentile(vals, 1)), "median": float(np.median(vals)), "min": min(vals)}
    tau = 0.95 * min(v["p01"] for v in out.values())
    return {"per_d": out, "tau": math.floor(tau * 1000) / 1000}


def weight_tau(n_seeds=200):
    vals = []
    for s in range(n_seeds):
        gen = RngState(CAL_SEED, (3 << 32) | s).generator()
        net = random_network([1000, 100, 10, 1], gen)
        vals.append(weight_typicality(net, 0.2, 200, gen).weights_typical_at)
    p02 = float(np.percentile(vals, 2))
    return {"p02": p02, "median": float(np.median(vals)), "tau_w": math.floor(0.95 * p02 * 1e4) / 1e4}


def gradient_floor_rho(n_trials=300):
    d = 2048
    dims = [d, math.ceil(d**0.7), math.ceil(d**0.4), 1]
    mins, ok = [], 0
    for i in range(n_trials):
        gen = RngState(CAL_SEED, (4 << 32) | i).generator()
        net = random_network(dims, gen)
        res = gradient_flow_attack(net, sphere_point(gen, d))
        ok += res.success
        if res.success:
            mins.append(res.min_gradient_norm)
    p01 = float(np.percentile(mins, 1))
    return {"success_rate": ok / n_trials, "p01": p01, "median": float(np.median(mins)),
            "rho": math.floor(0.9 * p01 * 1e4) / 1e4}


def flow_success_4096(n_trials=100):
    dims = [4096, 256, 16, 1]
    ok = 0
    for i in range(n_trials):
        gen = RngState(CAL_SEED, (5 << 32) | i).generator()
        net = random_network(dims, gen)
        ok += gradient_flow_attack(net, sphere_point(gen, 4096)).success
    return {"success_rate": ok / n_trials}


def typicality_rates(n_pairs=400):
    dims = [1024, 128, 16, 1]
    out = {}
    for c2 in (0.01, 0.02, 0.05, 0.1):
        hits = 0
        for i in range(n_pairs):
            gen = RngState(CAL_SEED, (6 << 32) | i).generator()
            net = random_network(dims, gen)
            hits += example_typicality(net, sphere_point(gen, 1024), 0.2, c2).example_typical
        out[c2] = hits / n_pairs
    return out


def main():
    report = {}
    for name, fn in [
        ("tail_sum", tail_sum_mean),
        ("surjectivity", surjectivity_tau),
        ("weight_typicality", weight_tau),
        ("gradient_floor", gradient_floor_rho),
        ("flow_success_4096", flow_success_4096),
        ("typicality_rates", typicality_rates),
    ]:
        t0 = time.perf_counter()
        report[name] = fn()
        print(f"{name}: {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
