"""Experiment orchestration and result persistence.

Every trial draws from its own substream ``RngState(seed, stream_id)`` with::

    stream_id = (block << 48) | (cell << 32) | trial

``block`` names the kind of draw (see the ``BLOCK_*`` constants), ``cell`` is
the index of the architecture / dimension / depth in the schedule, and
``trial`` the trial index. Trials therefore reproduce in isolation from
``(seed, cell, trial)`` and their results do not depend on the order or the
number of threads they run on. Rows are collected in trial order before
writing.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .attack import AttackConfig, gd_attack, gradient_flow_attack
from .datatrain import (
    Dataset,
    TrainConfig,
    find_mnist,
    load_idx,
    normalize_examples,
    parity_labels,
    synthetic_dataset,
    train_sgd,
)
from .exceptions import DataMissingError, SpecError
from .linalg import RngState, extremal_singular_values, gaussian_matrix, normalized_gaussian_matrix
from .relunet import random_network
from .surjectivity import estimate_c1c2, subset_size, tail_sum_mc, vershynin_bounds
from .typicality import example_typicality, weight_typicality

KINDS = ("scaling", "surjectivity", "tailsum", "typicality", "mnist", "attack-single")
SURJECTIVITY_TESTS = ("c1c2", "vershynin", "tailsum")

BLOCK_NETWORK = 0
BLOCK_SUBSETS = 1
BLOCK_VERSHYNIN = 2
BLOCK_TAILSUM = 3
BLOCK_DATA = 4
BLOCK_TRAIN = 5
BLOCK_ATTACK_SAMPLE = 6


def stream_id(block: int, cell: int, trial: int) -> int:
    if not (0 <= block < 1 << 16 and 0 <= cell < 1 << 16 and 0 <= trial < 1 << 32):
        raise SpecError(f"stream coordinates out of range: {(block, cell, trial)}")
    return (block << 48) | (cell << 32) | trial


@dataclass
class AttackSettings:
    step: float | None = None
    max_arc_length: float | None = None
    length_multiplier: float = 20.0
    gradient_floor: float = 1e-12
    crossing_tolerance: float = 1e-9
    eta: float = 1e-3
    max_steps: int = 20_000

    def config(self) -> AttackConfig:
        return AttackConfig(
            step=self.step,
            max_arc_length=self.max_arc_length,
            gradient_floor=self.gradient_floor,
            crossing_tolerance=self.crossing_tolerance,
            length_multiplier=self.length_multiplier,
        )


@dataclass
class ExperimentSpec:
    """Everything needed to rerun an experiment.

    Architectures come from ``architectures`` when given, otherwise from
    ``d_values`` as ``d -> ceil(d**e1) -> ceil(d**e2) -> ... -> 1`` using
    ``exponents``.
    """

    kind: str
    seed: int = 0
    trials: int = 100
    architectures: list = field(default_factory=list)
    d_values: list = field(default_factory=list)
    exponents: list = field(default_factory=lambda: [0.7, 0.4])
    c1: float = 0.25
    c2: float = 0.1
    budget: int = 200
    k_ratio: float = 0.05
    t: float = 0.1
    tests: list = field(default_factory=lambda: list(SURJECTIVITY_TESTS))
    check_weights: bool = False
    depths: list = field(default_factory=lambda: [2, 3, 4])
    hidden: int = 100
    epochs: int = 10
    learning_rate: float = 0.05
    batch_size: int = 32
    n_train: int | None = 10_000
    n_attack: int = 1000
    data_dir: str | None = None
    synthetic_fallback: bool = False
    synthetic_margin: float = 0.25
    histogram_bins: int = 50
    attack: AttackSettings = field(default_factory=AttackSettings)
    threads: int = 1
    output_path: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise SpecError(f"unknown spec fields: {sorted(unknown)}")
        if "kind" not in data:
            raise SpecError("spec needs a 'kind'")
        attack = data.pop("attack", None) or {}
        if isinstance(attack, dict):
            try:
                attack = AttackSettings(**attack)
            except TypeError as exc:
                raise SpecError(f"bad attack settings: {exc}") from exc
        spec = cls(**data, attack=attack)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "ExperimentSpec":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"cannot read spec {path}: {exc}") from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def resolved_architectures(self) -> list[list[int]]:
        if self.architectures:
            return [[int(v) for v in a] for a in self.architectures]
        return [
            [int(d)] + [math.ceil(d**e) for e in self.exponents] + [1] for d in self.d_values
        ]

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise SpecError(f"unknown experiment kind {self.kind!r}")
        if int(self.trials) < 1:
            raise SpecError("trials must be >= 1")
        if not 0 <= int(self.seed) < 1 << 64:
            raise SpecError("seed must be an unsigned 64-bit integer")
        if int(self.threads) < 1:
            raise SpecError("threads must be >= 1")
        if self.kind in ("scaling", "typicality", "attack-single"):
            archs = self.resolved_architectures()
            if not archs:
                raise SpecError("no architectures given")
            for a in archs:
                if len(a) < 2 or a[-1] != 1 or min(a) < 1:
                    raise SpecError(f"architecture {a} must be a chain of positive widths ending in 1")
                if self.kind == "scaling" and any(a[j + 1] >= a[j] for j in range(len(a) - 1)):
                    raise SpecError(f"architecture {a} must strictly decrease in width")
                if self.kind == "typicality" and self.check_weights:
                    for j in range(len(a) - 1):
                        if subset_size(self.c1, a[j]) < a[j + 1]:
                            raise SpecError(
                                f"c1={self.c1} selects fewer than {a[j + 1]} of the {a[j]} "
                                f"columns of layer {j + 1}; weight typicality is undefined"
                            )
        if self.kind in ("surjectivity", "tailsum"):
            if not self.d_values:
                raise SpecError("d_values required")
            if not 0 < self.c1 <= 1:
                raise SpecError("c1 must lie in (0, 1]")
            bad = set(self.tests) - set(SURJECTIVITY_TESTS)
            if bad:
                raise SpecError(f"unknown surjectivity tests {sorted(bad)}")
        if self.kind == "mnist":
            if not self.depths or min(self.depths) < 1:
                raise SpecError("depths must be positive")
            if self.histogram_bins < 1:
                raise SpecError("histogram_bins must be positive")


@dataclass
class ExperimentResult:
    kind: str
    rows: list
    aggregates: list
    histograms: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)


def _map(fn: Callable, items, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _dims_str(dims) -> str:
    return "-".join(str(int(v)) for v in dims)


def sphere_point(gen: np.random.Generator, d: int) -> np.ndarray:
    """Uniform point on the radius-sqrt(d) sphere."""
    x = gen.standard_normal(d)
    return x * (math.sqrt(d) / np.linalg.norm(x))


def _quantile(values, q) -> float:
    return float(np.quantile(np.asarray(values, dtype=np.float64), q)) if len(values) else float("nan")


# --- scaling ----------------------------------------------------------------


def attack_aggregate(rows: list) -> dict:
    ok = [r for r in rows if r["success"]]
    arcs = [r["arc_len"] for r in ok]
    l2 = [r["l2_disp"] for r in ok]
    return {
        "trials": len(rows),
        "successes": len(ok),
        "success_rate": len(ok) / len(rows) if rows else float("nan"),
        "median_arc": _quantile(arcs, 0.5),
        "p90_arc": _quantile(arcs, 0.9),
        "median_l2": _quantile(l2, 0.5),
        "mean_l2": float(np.mean(l2)) if l2 else float("nan"),
        "min_grad": min((r["min_grad"] for r in rows), default=float("nan")),
    }


def scaling_trial(spec: ExperimentSpec, cell: int, dims: list, trial: int) -> dict:
    gen = RngState(spec.seed, stream_id(BLOCK_NETWORK, cell, trial)).generator()
    net = random_network(dims, gen)
    x0 = sphere_point(gen, dims[0])
    res = gradient_flow_attack(net, x0, spec.attack.config())
    return {
        "d": dims[0],
        "dims": _dims_str(dims),
        "seed": spec.seed,
        "trial": trial,
        **res.to_row(),
        "cause": res.cause,
    }


def run_scaling_study(spec: ExperimentSpec) -> ExperimentResult:
    spec.validate()
    rows, aggs = [], []
    for cell, dims in enumerate(spec.resolved_architectures()):
        cell_rows = _map(
            lambda i: scaling_trial(spec, cell, dims, i), range(spec.trials), spec.threads
        )
        rows.extend(cell_rows)
        aggs.append({"d": dims[0], "dims": _dims_str(dims), **attack_aggregate(cell_rows)})
    return ExperimentResult("scaling", rows, aggs)


def run_single_attack(spec: ExperimentSpec, trial: int = 0, method: str = "flow", net=None) -> ExperimentResult:
    """One attack (CLI ``attack``): on ``net`` if given, else on a random
    network with the first architecture of the spec."""
    spec.validate()
    gen = RngState(spec.seed, stream_id(BLOCK_NETWORK, 0, trial)).generator()
    if net is None:
        net = random_network(spec.resolved_architectures()[0], gen)
    x0 = sphere_point(gen, net.input_dim)
    a = spec.attack
    if method == "gd":
        res = gd_attack(net, x0, a.eta, a.max_steps, a.crossing_tolerance, a.gradient_floor)
    else:
        res = gradient_flow_attack(net, x0, a.config())
    row = {"d": net.input_dim, "dims": _dims_str(net.dims), "seed": spec.seed, "trial": trial,
           **res.to_row(), "cause": res.cause}
    return ExperimentResult("attack-single", [row], [], info={"result": res})


# --- surjectivity / tail sums -----------------------------------------------


def _k_for(spec, d) -> int:
    return max(1, int(round(spec.k_ratio * d)))


def surjectivity_trial(spec: ExperimentSpec, test: str, cell: int, d: int, trial: int) -> dict:
    k = _k_for(spec, d)
    base = {"test": test, "d": d, "k": k, "c1": spec.c1, "seed": spec.seed, "trial": trial}
    if test == "c1c2":
        gen = RngState(spec.seed, stream_id(BLOCK_SUBSETS, cell, trial)).generator()
        W = normalized_gaussian_matrix(k, d, gen)
        rep = estimate_c1c2(W, spec.c1, spec.budget, gen)
        return {**base, "mode": rep.mode, "subset_size": rep.subset_size,
                "subsets_tested": rep.subsets_tested, "min_sigma_k": rep.min_sigma_k,
                "mean_sigma_k": rep.mean_sigma_k}
    if test == "vershynin":
        gen = RngState(spec.seed, stream_id(BLOCK_VERSHYNIN, cell, trial)).generator()
        lo, hi = vershynin_bounds(k, d, d, spec.t)
        smin, smax = extremal_singular_values(gaussian_matrix(k, d, 1.0 / d, gen))
        return {**base, "t": spec.t, "lower": lo, "upper": hi, "s_min": smin, "s_max": smax,
                "passed": int(lo <= smin and smax <= hi)}
    stats = tail_sum_mc(d, spec.c1, 1, RngState(spec.seed, stream_id(BLOCK_TAILSUM, cell, trial)))
    return {**base, "z_over_d": float(stats.samples[0])}


def surjectivity_aggregate(test: str, d: int, rows: list) -> dict:
    agg = {"test": test, "d": d, "trials": len(rows)}
    if test == "c1c2":
        v = [r["min_sigma_k"] for r in rows]
        agg.update(k=rows[0]["k"], min=min(v), p05=_quantile(v, 0.05), median=_quantile(v, 0.5),
                   max=max(v), mode=rows[0]["mode"])
    elif test == "vershynin":
        agg.update(k=rows[0]["k"], pass_fraction=sum(r["passed"] for r in rows) / len(rows),
                   min_s_min=min(r["s_min"] for r in rows), max_s_max=max(r["s_max"] for r in rows))
    else:
        v = [r["z_over_d"] for r in rows]
        agg.update(min=min(v), max=max(v), mean=float(np.mean(v)), std=float(np.std(v)),
                   p01=_quantile(v, 0.01))
    return agg


def run_surjectivity_suite(spec: ExperimentSpec) -> ExperimentResult:
    spec.validate()
    rows, aggs = [], []
    for test in spec.tests:
        for cell, d in enumerate(spec.d_values):
            d = int(d)
            cell_rows = _map(
                lambda i: surjectivity_trial(spec, test, cell, d, i), range(spec.trials), spec.threads
            )
            rows.extend(cell_rows)
            aggs.append(surjectivity_aggregate(test, d, cell_rows))
    return ExperimentResult("surjectivity", rows, aggs)


def run_tailsum(spec: ExperimentSpec) -> ExperimentResult:
    spec = dataclasses.replace(spec, tests=["tailsum"])
    res = run_surjectivity_suite(spec)
    res.kind = "tailsum"
    return res


# --- typicality ---------------------------------------------------------------


def typicality_trial(spec: ExperimentSpec, cell: int, dims: list, trial: int) -> dict:
    gen = RngState(spec.seed, stream_id(BLOCK_NETWORK, cell, trial)).generator()
    net = random_network(dims, gen)
    x = sphere_point(gen, dims[0])
    rep = example_typicality(net, x, spec.c1, spec.c2)
    row = {"dims": _dims_str(dims), "seed": spec.seed, "trial": trial, "c1": spec.c1, "c2": spec.c2,
           "example_typical": int(rep.example_typical), "output_magnitude": rep.output_magnitude,
           "output_bound": rep.output_bound}
    for i, f in enumerate(rep.per_layer_active_fraction, start=1):
        row[f"active_fraction_{i}"] = f
    if spec.check_weights:
        wrep = weight_typicality(net, spec.c1, spec.budget,
                                 RngState(spec.seed, stream_id(BLOCK_SUBSETS, cell, trial)))
        row["weights_typical_at"] = wrep.weights_typical_at
    return row


def run_typicality_suite(spec: ExperimentSpec) -> ExperimentResult:
    spec.validate()
    rows, aggs = [], []
    for cell, dims in enumerate(spec.resolved_architectures()):
        cell_rows = _map(lambda i: typicality_trial(spec, cell, dims, i), range(spec.trials), spec.threads)
        rows.extend(cell_rows)
        agg = {"dims": _dims_str(dims), "trials": len(cell_rows), "c1": spec.c1, "c2": spec.c2,
               "pass_rate": sum(r["example_typical"] for r in cell_rows) / len(cell_rows)}
        if spec.check_weights:
            agg["min_weights_typical_at"] = min(r["weights_typical_at"] for r in cell_rows)
        aggs.append(agg)
    return ExperimentResult("typicality", rows, aggs)


# --- MNIST reproduction -------------------------------------------------------


def _load_mnist_or_fallback(spec: ExperimentSpec):
    try:
        raw_train = load_idx(*find_mnist(spec.data_dir, "train"))
        raw_test = load_idx(*find_mnist(spec.data_dir, "test"))
    except DataMissingError:
        if not spec.synthetic_fallback:
            raise
        n_train = spec.n_train or 10_000
        full = synthetic_dataset(784, n_train + spec.n_attack, spec.synthetic_margin,
                                 RngState(spec.seed, stream_id(BLOCK_DATA, 0, 0)))
        train = full.subset(slice(0, n_train))
        test = full.subset(slice(n_train, None))
        source = "synthetic"
    else:
        train = Dataset(raw_train.examples, parity_labels(raw_train.labels), raw_train.provenance,
                        raw_train.image_shape)
        test = Dataset(raw_test.examples, parity_labels(raw_test.labels), raw_test.provenance,
                       raw_test.image_shape)
        if spec.n_train is not None and spec.n_train < train.n:
            gen = RngState(spec.seed, stream_id(BLOCK_DATA, 0, 0)).generator()
            train = train.subset(np.sort(gen.choice(train.n, spec.n_train, replace=False)))
        source = "mnist"
    d = train.d
    return source, normalize_examples(train, math.sqrt(d)), normalize_examples(test, math.sqrt(d))


def histogram_rows(values, bins: int) -> list:
    """``bins`` equal-width bins over ``[0, max(values)]``."""
    values = np.asarray(values, dtype=np.float64)
    top = float(values.max()) if values.size and values.max() > 0 else 1.0
    counts, edges = np.histogram(values, bins=bins, range=(0.0, top))
    return [{"bin_left": float(edges[i]), "bin_right": float(edges[i + 1]), "count": int(counts[i])}
            for i in range(bins)]


def run_mnist_experiment(spec: ExperimentSpec) -> ExperimentResult:
    spec.validate()
    source, train, test = _load_mnist_or_fallback(spec)
    rows, aggs, hists = [], [], {}
    n_attack = min(spec.n_attack, test.n)
    for cell, depth in enumerate(spec.depths):
        seed_gen = RngState(spec.seed, stream_id(BLOCK_TRAIN, cell, 0)).generator()
        cfg = TrainConfig(hidden_dims=(spec.hidden,) * (depth - 1), epochs=spec.epochs,
                          learning_rate=spec.learning_rate, batch_size=min(spec.batch_size, train.n),
                          seed=int(seed_gen.integers(1 << 63)))
        fit = train_sgd(cfg, train)
        net = fit.network
        pick_gen = RngState(spec.seed, stream_id(BLOCK_ATTACK_SAMPLE, cell, 0)).generator()
        picks = np.sort(pick_gen.choice(test.n, n_attack, replace=False))

        def one(trial):
            idx = int(picks[trial])
            res = gd_attack(net, test.examples[idx], spec.attack.eta, spec.attack.max_steps,
                            spec.attack.crossing_tolerance, spec.attack.gradient_floor)
            return {"depth": depth, "dims": _dims_str(net.dims), "seed": spec.seed, "trial": trial,
                    "example_index": idx, "label": int(test.labels[idx]), **res.to_row(),
                    "cause": res.cause}

        cell_rows = _map(one, range(n_attack), spec.threads)
        rows.extend(cell_rows)
        agg = {"depth": depth, "dims": _dims_str(net.dims), "source": source,
               "train_accuracy": fit.train_accuracy, "final_loss": fit.final_loss,
               **attack_aggregate(cell_rows)}
        aggs.append(agg)
        hists[f"histogram_{depth}.csv"] = histogram_rows(
            [r["l2_disp"] for r in cell_rows if r["success"]], spec.histogram_bins
        )
    return ExperimentResult("mnist", rows, aggs, hists, info={"source": source})


RUNNERS = {
    "scaling": run_scaling_study,
    "surjectivity": run_surjectivity_suite,
    "tailsum": run_tailsum,
    "typicality": run_typicality_suite,
    "mnist": run_mnist_experiment,
    "attack-single": run_single_attack,
}


def run(spec: ExperimentSpec) -> ExperimentResult:
    return RUNNERS[spec.kind](spec)


# --- persistence --------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return "" if v is None else v


def write_csv(path, rows: list) -> None:
    """Write dict rows; columns are the union of keys in first-seen order.

    Floats are written with ``repr`` so values round-trip exactly.
    """
    fields = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with open(path, "x", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, restval="", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})


def read_csv(path) -> list[dict]:
    """Read a results CSV back, converting numeric cells."""
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            out.append({k: _parse(v) for k, v in r.items()})
    return out


def _parse(v: str):
    if v == "":
        return None
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def write_outputs(result: ExperimentResult, spec: ExperimentSpec, out_dir, wall_clock: float | None = None) -> Path:
    """Write ``results.csv``, ``aggregates.csv``, histograms and ``run.json``.

    Refuses to overwrite an existing run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if (out / "results.csv").exists() or (out / "run.json").exists():
        raise SpecError(f"{out} already holds a run; choose a fresh --out directory")
    write_csv(out / "results.csv", result.rows)
    write_csv(out / "aggregates.csv", result.aggregates)
    for name, rows in result.histograms.items():
        write_csv(out / name, rows)
    meta = {
        "toolkit": "reluadv",
        "version": __version__,
        "kind": result.kind,
        "spec": spec.to_dict(),
        "info": {k: v for k, v in result.info.items() if isinstance(v, (str, int, float))},
        "wall_clock_seconds": wall_clock,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    with open(out / "run.json", "x") as fh:
        json.dump(meta, fh, indent=2)
    return out


def run_and_write(spec: ExperimentSpec, out_dir) -> ExperimentResult:
    t0 = time.perf_counter()
    result = run(spec)
    write_outputs(result, spec, out_dir, time.perf_counter() - t0)
    return result
