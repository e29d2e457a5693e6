"""Command-line entry point.

Settings are resolved in three layers: built-in defaults, then the JSON file
given with ``--spec``, then explicit command-line flags.

Exit codes: 0 on success, 2 on a spec/usage error, 3 on a data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from . import __version__
from .exceptions import DataMissingError, FormatError, KinkProximityError, ReluAdvError, SpecError
from .experiments import ExperimentSpec, run, run_single_attack, write_outputs
from .linalg import RngState
from .relunet import NetworkWeights, gradient_check, random_network

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_DATA = 3

def _int_list(text):
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _float_list(text):
    return [float(v) for v in text.replace(" ", "").split(",") if v]


def _dims(text):
    return [int(v) for v in text.replace("->", ",").replace("-", ",").split(",") if v]


def _common(p):
    p.add_argument("--spec", help="JSON experiment spec; flags override its fields")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--out", help="output directory (must not already hold a run)")
    p.add_argument("--trials", type=int)
    p.add_argument("--threads", type=int, help="worker threads; never changes results")


def _attack_flags(p):
    p.add_argument("--step", type=float, help="arc length per gradient-flow step")
    p.add_argument("--max-arc-length", type=float)
    p.add_argument("--length-multiplier", type=float)
    p.add_argument("--eta", type=float, help="gradient-descent learning rate")
    p.add_argument("--max-steps", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reluadv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"reluadv {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scaling", help="flip length vs input dimension on random networks")
    _common(p)
    _attack_flags(p)
    p.add_argument("--dims", action="append", type=_dims, help="architecture, e.g. 512,64,8,1 (repeatable)")
    p.add_argument("--d-values", type=_int_list, help="input dims; widths follow --exponents")
    p.add_argument("--exponents", type=_float_list)

    p = sub.add_parser("surjectivity", help="column-subset surjectivity, singular-value interval and tail sums")
    _common(p)
    p.add_argument("--d-values", type=_int_list)
    p.add_argument("--k-ratio", type=float)
    p.add_argument("--c1", type=float)
    p.add_argument("--budget", type=int)
    p.add_argument("--t", type=float, help="deviation in the singular-value interval")
    p.add_argument("--tests", type=lambda s: s.split(","), help="subset of c1c2,vershynin,tailsum")

    p = sub.add_parser("tailsum", help="sum of the smallest squared Gaussians")
    _common(p)
    p.add_argument("--d-values", type=_int_list)
    p.add_argument("--c1", type=float)

    p = sub.add_parser("typicality", help="typical-example rates on random networks")
    _common(p)
    p.add_argument("--dims", action="append", type=_dims)
    p.add_argument("--d-values", type=_int_list)
    p.add_argument("--exponents", type=_float_list)
    p.add_argument("--c1", type=float)
    p.add_argument("--c2", type=float)
    p.add_argument("--budget", type=int)
    p.add_argument("--check-weights", action="store_true", default=None)

    p = sub.add_parser("mnist", help="train even/odd networks and attack test examples")
    _common(p)
    _attack_flags(p)
    p.add_argument("--data-dir", help="directory with the MNIST IDX files")
    p.add_argument("--synthetic-fallback", action="store_true", default=None)
    p.add_argument("--depths", type=_int_list)
    p.add_argument("--hidden", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-attack", type=int)

    p = sub.add_parser("attack", help="attack one random network at one random point")
    _common(p)
    _attack_flags(p)
    p.add_argument("--dims", type=_dims, help="architecture of the random network")
    p.add_argument("--net", help="network JSON (overrides --dims)")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--method", choices=("flow", "gd"), default="flow")

    p = sub.add_parser("gen-net", help="write a normalized random network as JSON")
    p.add_argument("--dims", type=_dims, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--out", help="output file (stdout if omitted)")

    p = sub.add_parser("check-grad", help="compare input gradients with finite differences")
    p.add_argument("--net", help="network JSON")
    p.add_argument("--dims", type=_dims, default=[50, 20, 5, 1])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--fd-step", type=float, default=1e-6)
    p.add_argument("--tolerance", type=float, default=1e-5)
    return parser


_SPEC_FLAGS = {
    "seed": "seed", "trials": "trials", "threads": "threads", "out": "output_path",
    "d_values": "d_values", "exponents": "exponents", "k_ratio": "k_ratio", "c1": "c1", "c2": "c2",
    "budget": "budget", "t": "t", "tests": "tests", "check_weights": "check_weights",
    "data_dir": "data_dir", "synthetic_fallback": "synthetic_fallback", "depths": "depths",
    "hidden": "hidden", "epochs": "epochs", "learning_rate": "learning_rate",
    "batch_size": "batch_size", "n_train": "n_train", "n_attack": "n_attack",
}
_ATTACK_FLAGS = ("step", "max_arc_length", "length_multiplier", "eta", "max_steps")


def resolve_spec(kind: str, args) -> ExperimentSpec:
    data = {}
    if getattr(args, "spec", None):
        with open(args.spec) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SpecError(f"{args.spec}: {exc}") from exc
        if data.get("kind", kind) != kind:
            raise SpecError(f"spec kind {data['kind']!r} does not match command {kind!r}")
    data["kind"] = kind
    for flag, key in _SPEC_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            data[key] = v
    dims = getattr(args, "dims", None)
    if dims:
        data["architectures"] = dims if isinstance(dims[0], list) else [dims]
    attack = dict(data.get("attack") or {})
    for flag in _ATTACK_FLAGS:
        v = getattr(args, flag, None)
        if v is not None:
            attack[flag] = v
    data["attack"] = attack
    return ExperimentSpec.from_dict(data)


def _cmd_experiment(kind, args) -> int:
    spec = resolve_spec(kind, args)
    t0 = time.perf_counter()
    result = run(spec)
    elapsed = time.perf_counter() - t0
    if spec.output_path:
        write_outputs(result, spec, spec.output_path, elapsed)
    for row in result.aggregates:
        print(json.dumps(row))
    return EXIT_OK


def _cmd_attack(args) -> int:
    net = NetworkWeights.load(args.net) if args.net else None
    if net is not None:
        args.dims = net.dims
    elif not args.dims:
        raise SpecError("attack needs --dims or --net")
    spec = resolve_spec("attack-single", args)
    result = run_single_attack(spec, args.trial, args.method, net)
    if spec.output_path:
        write_outputs(result, spec, spec.output_path)
    print(json.dumps(result.rows[0]))
    return EXIT_OK


def _cmd_gen_net(args) -> int:
    net = random_network(args.dims, RngState(args.seed, args.stream))
    if args.out:
        net.save(args.out)
    else:
        print(net.to_json())
    return EXIT_OK


def _cmd_check_grad(args) -> int:
    gen = RngState(args.seed).generator()
    net = NetworkWeights.load(args.net) if args.net else random_network(args.dims, gen)
    worst, checked, skipped = 0.0, 0, 0
    while checked < args.trials:
        if skipped > 100 * args.trials:
            raise SpecError("could not find kink-free points")
        x = gen.standard_normal(net.input_dim)
        try:
            err = gradient_check(net, x, args.fd_step)
        except KinkProximityError:
            skipped += 1
            continue
        worst = max(worst, err)
        checked += 1
    print(json.dumps({"dims": net.dims, "trials": checked, "skipped": skipped, "max_relative_error": worst}))
    return EXIT_OK if worst <= args.tolerance else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "attack":
            return _cmd_attack(args)
        if args.command == "gen-net":
            return _cmd_gen_net(args)
        if args.command == "check-grad":
            return _cmd_check_grad(args)
        return _cmd_experiment(args.command, args)
    except (DataMissingError, FormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SpecError, ReluAdvError) as exc:
        # other precondition failures stem from the requested parameters
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
