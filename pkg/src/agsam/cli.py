"""Command-line entry point: ``agsam run|compare|verify-theory|slice|spectrum``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import theory
from .runner import (ConfigError, RunFailed, compare, load_config, parse_overrides, run, slice_of_run,
                     spectrum_of_run)


def _base_overrides(args) -> dict:
    overrides = parse_overrides(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["output.dir"] = args.out
    return overrides


def cmd_run(args) -> int:
    cfg = load_config(args.config, _base_overrides(args))
    result = run(cfg)
    last = result.rows[-1]
    print(f"{len(result.rows)} steps; final test_acc={last['test_acc']!r} test_loss={last['test_loss']!r}")
    print(f"outputs in {result.out_dir}")
    return 0


def _expand_sweeps(base: dict, sweeps: list[str]) -> list[tuple[str, dict]]:
    variants = [("", {})]
    for sweep in sweeps:
        if "=" not in sweep:
            raise ConfigError(f"sweep {sweep!r} is not key=v1,v2,...")
        key, values = (p.strip() for p in sweep.split("=", 1))
        variants = [(f"{tag}{'_' if tag else ''}{key.split('.')[-1]}{v}", {**over, key: v})
                    for tag, over in variants for v in values.split(",")]
    return [(tag, {**base, **parse_overrides([f"{k}={v}" for k, v in over.items()])}) for tag, over in variants]


def cmd_compare(args) -> int:
    overrides = parse_overrides(args.set or [])
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    configs = []
    for path in args.config or [None]:
        stem = Path(path).stem if path else "default"
        for tag, over in _expand_sweeps(overrides, args.sweep or []):
            name = f"{stem}_{tag}" if tag else stem
            configs.append((name, load_config(path, over)))
    outcomes, summaries = compare(configs, seeds, args.out)
    for s in summaries:
        std = "n/a" if s.std_test_acc is None else f"{s.std_test_acc:.4f}"
        mean = "n/a" if s.mean_test_acc is None else f"{s.mean_test_acc:.4f}"
        print(f"{s.config}: mean test_acc {mean} std {std} ({s.runs - s.failed}/{s.runs} ok)")
    failed = [o for o in outcomes if o.status != "ok"]
    return 1 if failed else 0


def cmd_verify_theory(args) -> int:
    failures = 0
    results = theory.congruence_suite(args.instances, args.seed)
    ok = sum(r.satisfied for r in results)
    print(f"{ok}/{len(results)} congruence instances satisfied")
    for r in results:
        if not r.satisfied:
            failures += 1
            print(f"  violated: {r.describe()}")
    if not args.skip_monotonicity:
        for m in theory.monotonicity_suite():
            print(f"monotonicity {m.axis}: {'pass' if m.passed else 'FAIL'}")
            failures += not m.passed
        passed, total = theory.monotonicity_cube(args.grid)
        print(f"monotonicity grid {args.grid}x{args.grid}x{args.grid}: {passed}/{total} comparisons pass")
        failures += total - passed
    return 1 if failures else 0


def cmd_slice(args) -> int:
    sl = slice_of_run(args.run, args.extent, args.resolution, args.seed, Path(args.out) if args.out else None)
    print(f"slice {2 * sl.resolution + 1}x{2 * sl.resolution + 1}, center loss {sl.at(0, 0)!r}")
    return 0


def cmd_spectrum(args) -> int:
    rec = spectrum_of_run(args.run, args.k, Path(args.out) if args.out else None)
    for rank, (lam, it) in enumerate(zip(rec.eigenvalues, rec.iterations_used), start=1):
        print(f"{rank}: {lam!r} ({it} iterations)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="agsam", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one configuration")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="run directory")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run configs over seeds and summarize final test accuracy")
    p.add_argument("--config", action="append", help="config file (repeatable)")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--out", default="runs/compare")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--sweep", action="append", metavar="KEY=V1,V2,...", help="expand each config over values")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify-theory", help="congruence-inequality suite and bound monotonicity checks")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid", type=int, default=5)
    p.add_argument("--skip-monotonicity", action="store_true")
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("slice", help="2-D loss landscape slice around a run's checkpoint")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--extent", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("spectrum", help="top Hessian eigenvalues at a run's checkpoint")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RunFailed as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
