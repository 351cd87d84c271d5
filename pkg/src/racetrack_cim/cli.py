"""Command-line entry point: ``rtcim run|verify|bench|report``.

Seeds and trial counts default from ``RTCIM_SEED`` / ``RTCIM_TRIALS``;
device geometry keys are overridable as described in :mod:`.config`.
All machine output is JSON (layer breakdowns also CSV), written with sorted
keys so identical inputs give byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import jsonschema

from . import costmodel as CM
from .config import ENV_PREFIX, load_config
from .device import DeviceError
from .microprogram import BUILTIN, Interpreter, MicroprogramError, load_program
from .verify import SUITES, run_suites


def _dump(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _env_int(name: str, default: int) -> int:
    return int(os.environ.get(ENV_PREFIX + name, default))


def cmd_run(args, parser) -> int:
    if args.program not in BUILTIN and not Path(args.program).is_file():
        parser.error(f"no such program file or built-in: {args.program}")
    try:
        config = load_config(args.config)
        result = Interpreter(config, seed=args.seed, batch=args.batch).run(load_program(args.program))
    except (DeviceError, MicroprogramError, jsonschema.ValidationError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    trace = {"program": args.program, "seed": args.seed, **result.to_dict()}
    _dump(trace, args.out)
    return 0


def cmd_verify(args, parser) -> int:
    report = run_suites(args.suite, seed=args.seed, trials=args.trials)
    _dump(report, args.out)
    failed = [c for c in report["cases"] if not c["ok"]]
    for c in failed:
        print(f"FAIL {c['suite']}/{c['name']}: {c['passed']}/{c['total']} passed; reproducer: "
              f"{json.dumps(c['reproducer'], sort_keys=True)}", file=sys.stderr)
    return 1 if failed else 0


def _params(path):
    return CM.DeviceParams.from_json(path) if path else CM.DeviceParams()


def cmd_bench(args, parser) -> int:
    if args.net in CM.NETWORKS:
        net, name = CM.NETWORKS[args.net](), args.net
    elif Path(args.net).is_file():
        net, name = CM.load_network(args.net), Path(args.net).stem
    else:
        parser.error(f"unknown network {args.net!r}: use {sorted(CM.NETWORKS)} or a JSON file")
    params = _params(args.params)
    parallel = args.parallel or CM.calibrate_parallelism(params=params)
    try:
        report = CM.map_workload(net, args.mode, parallel, params, name=name)
    except CM.UnsupportedLayer as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if args.out in (None, "-"):
        sys.stdout.write(report.to_json() + "\n")
    else:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}_{args.mode}.json").write_text(report.to_json() + "\n")
        (out / f"{name}_{args.mode}_layers.csv").write_text(report.layers_csv())
    return 0


def cmd_report(args, parser) -> int:
    _dump(CM.calibration_report(_params(args.params), args.parallel), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rtcim", description="Racetrack-memory CIM simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", help="device geometry JSON")
        sp.add_argument("--out", help="output path ('-' for stdout)")
        if seed:
            sp.add_argument("--seed", type=int, default=_env_int("SEED", 0))

    r = sub.add_parser("run", help="execute a microprogram and write its trace")
    r.add_argument("program", help=f"program file or built-in ({', '.join(BUILTIN)})")
    r.add_argument("--batch", type=int, default=1, help="lock-step DBC instances")
    common(r)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="oracle-equivalence suites")
    v.add_argument("--suite", "--mode", dest="suite", choices=SUITES + ("all",), default="all")
    v.add_argument("--trials", type=int, default=_env_int("TRIALS", 1000))
    common(v)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="cost a CNN workload")
    b.add_argument("net", help="lenet5, alexnet, vgg16 or a layer-spec JSON file")
    b.add_argument("--mode", choices=CM.MODES, default="ternary")
    b.add_argument("--params", help="DeviceParams JSON")
    b.add_argument("--parallel", type=int, help="parallel DBCs (default: calibrated value)")
    common(b, seed=False)
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("report", help="calibration report against reference figures")
    c.add_argument("--params", help="DeviceParams JSON")
    c.add_argument("--parallel", type=int)
    common(c, seed=False)
    c.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args, parser)


if __name__ == "__main__":
    sys.exit(main())
