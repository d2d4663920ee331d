"""Command line entry point: ``codesign run|bench|gradcheck|scan|demo``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, parse_delta_range
from .harness import run


def _default_out(kind: str) -> Path:
    return Path("results") / kind


def _finish(rec) -> int:
    summary = {"status": rec.status, "out": rec.out_dir}
    if rec.report is not None and "value" in rec.report:
        summary["objective"] = rec.report["value"]
    if rec.timing:
        summary["timing"] = rec.timing
    if rec.error:
        summary["error"] = rec.error
    print(json.dumps(summary, indent=2))
    return 0 if rec.ok else 1


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.steps is not None:
        if args.steps < 0:
            raise ConfigError("--steps must be >= 0")
        cfg = replace(cfg, optimizer=dict(cfg.optimizer, steps=args.steps))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    cfg.validate()
    return _finish(run(cfg, args.out or _default_out(cfg.kind)))


def _cmd_bench(args) -> int:
    bench = {"chain": args.chain, "repeats": args.repeats, "check": not args.no_check}
    if args.levels is not None:
        bench["levels"] = args.levels
    cfg = ExperimentConfig.from_dict({"run": {"kind": "bench", "seed": args.seed}, "bench": bench})
    rec = run(cfg, args.out or _default_out("bench"))
    for r in rec.extra.get("bench", []):
        print(f"n_fm={r['n_fm']} levels={r['levels']} dim={r['dim']}  value {r['value_median']:.4f}s  "
              f"value+grad {r['grad_median']:.4f}s  ratio {r['ratio']:.2f}  speedup vs FD {r['speedup_vs_fd']:.1f}")
    return _finish(rec)


def _cmd_gradcheck(args) -> int:
    cfg = load_config(args.config)
    target = cfg.target or {"iswap-robust": "robust", "cphase-chip": "chip"}.get(cfg.kind)
    raw = cfg.to_dict()
    raw["run"]["kind"] = "gradcheck"
    if target:
        raw["run"]["target"] = target
    cfg = ExperimentConfig.from_dict(raw)
    rec = run(cfg, args.out or _default_out("gradcheck"))
    for n, c in rec.extra.get("gradcheck", {}).get("components", {}).items():
        print(f"{n:>10s}  rev={c['reverse']: .8e}  fd={c['finite_diff']: .8e}  rel={c['rel_error']:.1e}  {'PASS' if c['passed'] else 'FAIL'}")
    return _finish(rec)


def _cmd_scan(args) -> int:
    cfg = load_config(args.config)
    parse_delta_range(args.delta_range)
    raw = cfg.to_dict()
    raw["run"]["kind"] = "scan"
    if cfg.kind == "iswap-robust" and cfg.target is None:
        raw["run"]["target"] = "robust"
    raw["scan"] = dict(raw.get("scan", {}), delta_range=args.delta_range)
    rec = run(ExperimentConfig.from_dict(raw), args.out or _default_out("scan"))
    for p in rec.extra.get("scan", []):
        print(f"delta={p['delta']: .5f}  O={p['value'] if p['value'] is not None else 'error: ' + p['error']}")
    if "second_difference" in rec.extra:
        print(f"second difference: {rec.extra['second_difference']:.6e}")
    return _finish(rec)


def _cmd_demo(args) -> int:
    cfg = ExperimentConfig.from_dict({"run": {"kind": "demo"}})
    rec = run(cfg, args.out or _default_out("demo"))
    if rec.report:
        r = rec.report
        print(f"simultaneous: f={r['simultaneous_value']:.3e} after {r['simultaneous_evaluations']} evaluations")
        print(f"alternating:  f={r['alternating_value']:.3e} after {r['alternating_solves']} coordinate solves")
        print(f"advantage:    {r['advantage']:.3e}x")
    return _finish(rec)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="codesign", description="Differentiable co-design of superconducting qubit devices and pulses.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a config file")
    r.add_argument("config")
    r.add_argument("--out", type=Path)
    r.add_argument("--steps", type=int, help="override optimizer.steps")
    r.add_argument("--seed", type=int)
    r.set_defaults(fn=_cmd_run)

    b = sub.add_parser("bench", help="value vs gradient timing on a fluxonium chain")
    b.add_argument("--chain", type=int, nargs="+", required=True, metavar="N", help="chain length(s), 3..6")
    b.add_argument("--levels", type=int, help="levels per site (default 5, or 4 for six sites)")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--no-check", action="store_true", help="skip the finite-difference check")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", type=Path)
    b.set_defaults(fn=_cmd_bench)

    g = sub.add_parser("gradcheck", help="reverse-mode gradient vs central differences")
    g.add_argument("config")
    g.add_argument("--out", type=Path)
    g.set_defaults(fn=_cmd_gradcheck)

    s = sub.add_parser("scan", help="objective along shifted phi_p")
    s.add_argument("config")
    s.add_argument("--delta-range", required=True, help="a:b:n")
    s.add_argument("--out", type=Path)
    s.set_defaults(fn=_cmd_scan)

    d = sub.add_parser("demo", help="simultaneous vs alternating optimization on a quadratic")
    d.add_argument("name", choices=["appendix-a", "quadratic"])
    d.add_argument("--out", type=Path)
    d.set_defaults(fn=_cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
