"""Dispatch a validated config to its pipeline and persist trace CSV + result JSON."""

from __future__ import annotations

import csv
import json
import logging
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .bench import bench_diag_chain
from .config import ExperimentConfig, parse_delta_range
from .diffkit import _worker_count, check_gradient
from .objectives import chip_objective, default_deltas, iswap_objective, robust_objective
from .optimize import (
    OptimizationAborted,
    adam_run,
    alternating_vs_simultaneous_demo,
    lr_schedule,
    robustness_scan,
    second_difference,
)

log = logging.getLogger(__name__)

# per-kind trace columns after step, loss, lr
TRACE_TERMS = {
    "iswap": ("fidelity", "p_decoh", "p_fdiff", "p_fm"),
    "iswap-robust": ("fidelity", "p_decoh", "p_fdiff", "p_fm"),
    "cphase-chip": ("o_hm", "o_ml", "p_tm_m", "p_ah_m"),
}


class RunFailed(RuntimeError):
    pass


@dataclass
class RunRecord:
    config: dict
    kind: str
    status: str
    out_dir: str
    trace_path: str | None = None
    final_params: dict | None = None
    report: dict | None = None
    timing: dict | None = None
    extra: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "kind": self.kind,
            "status": self.status,
            "trace": self.trace_path,
            "final_params": self.final_params,
            "report": self.report,
            "timing": self.timing,
            "extra": self.extra,
            "error": self.error,
        }


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, default=_jsonable) + "\n", encoding="utf-8")


def _timing(t_value: float, t_grad: float) -> dict:
    if not (t_value > 0 and t_grad > 0):
        raise RunFailed("non-positive timing measurement")
    return {"value_s": t_value, "gradient_s": t_grad, "ratio": t_grad / t_value}


def _objective_for(cfg: ExperimentConfig, target: str):
    """(fg, value_only) for the requested objective."""
    if target == "chip":
        problem = cfg.cphase_problem()
        return (lambda x: chip_objective(x, problem)), (lambda x: chip_objective(x, problem, grad=False).value)
    problem = cfg.iswap_problem()
    if target == "robust":
        deltas = default_deltas(cfg.robust["delta_phi_p"]) if "delta_phi_p" in cfg.robust else None
        return (lambda x: robust_objective(x, deltas, problem)), (lambda x: robust_objective(x, deltas, problem, grad=False).value)
    return (lambda x: iswap_objective(x, problem)), (lambda x: iswap_objective(x, problem, grad=False).value)


def _default_target(kind: str) -> str:
    return {"iswap-robust": "robust", "cphase-chip": "chip"}.get(kind, "iswap")


def _run_optimization(cfg: ExperimentConfig, out: Path, rec: RunRecord) -> None:
    fg, value_only = _objective_for(cfg, _default_target(cfg.kind))
    adam = cfg.adam_config()
    terms = TRACE_TERMS[cfg.kind]
    trace_path = out / "trace.csv"
    rec.trace_path = trace_path.name
    last = {}

    def fg_keep(x):
        t0 = time.perf_counter()
        r = fg(x)
        last["report"], last["seconds"] = r, time.perf_counter() - t0
        return r

    with open(trace_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("step", "loss", "lr") + terms)

        def callback(step, x, value):
            r = last["report"]
            writer.writerow([step, repr(value), repr(lr_schedule(adam, step))] + [repr(float(r.terms[t])) for t in terms])
            fh.flush()
            if step % 50 == 0:
                log.info("step %d  loss %.6f", step, value)

        try:
            x_final, trace = adam_run(fg_keep, cfg.params(), adam, callback)
        except OptimizationAborted as exc:
            rec.final_params = exc.params.as_dict()
            rec.extra["snapshots"] = {str(k): v for k, v in exc.trace.snapshots.items()}
            raise
    report = last["report"]
    t_grad = last["seconds"]
    t0 = time.perf_counter()
    value_only(x_final)
    t_value = time.perf_counter() - t0
    rec.final_params = x_final.as_dict()
    rec.report = report.to_dict()
    rec.timing = _timing(t_value, t_grad)
    rec.extra["initial_loss"] = float(trace.values[0])
    rec.extra["steps"] = adam.steps
    rec.extra["snapshots"] = {str(k): v for k, v in trace.snapshots.items()}


def _run_gradcheck(cfg: ExperimentConfig, out: Path, rec: RunRecord) -> None:
    target = cfg.target or "iswap"
    fg, value_only = _objective_for(cfg, target)
    x = cfg.params()
    t0 = time.perf_counter()
    report = fg(x)
    t_grad = time.perf_counter() - t0
    t0 = time.perf_counter()
    value_only(x)
    t_value = time.perf_counter() - t0
    chk = check_gradient(
        value_only,
        None,
        x,
        rel_tol=cfg.gradcheck.get("rel_tol", 1e-4),
        abs_floor=cfg.gradcheck.get("abs_floor", 1e-8),
        reverse=report.gradient,
    )
    path = out / "gradcheck.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("name", "reverse", "finite_diff", "rel_error", "passed"))
        for n, g, fd, e, ok in zip(chk.names, chk.reverse, chk.finite_diff, chk.rel_errors, chk.passed):
            w.writerow([n, repr(float(g)), repr(float(fd)), repr(float(e)), int(bool(ok))])
    for line in chk.lines():
        log.info(line)
    rec.trace_path = path.name
    rec.final_params = x.as_dict()
    rec.report = report.to_dict()
    rec.timing = _timing(t_value, t_grad)
    rec.extra["gradcheck"] = chk.to_dict()
    if not chk.all_passed:
        bad = [n for n, ok in zip(chk.names, chk.passed) if not ok]
        raise RunFailed(f"gradient check failed for {bad}")


def _run_scan(cfg: ExperimentConfig, out: Path, rec: RunRecord) -> None:
    target = cfg.target or "iswap"
    _, value_only = _objective_for(cfg, target)
    deltas = parse_delta_range(cfg.scan.get("delta_range", "-0.01:0.01:3"))
    param = cfg.scan.get("param", "phi_p")
    x = cfg.params()
    if param not in x.names:
        raise RunFailed(f"scan.param {param!r} is not a parameter of this objective")
    points = robustness_scan(value_only, x, deltas, param)
    path = out / "scan.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("index", "delta", "loss", "error"))
        for i, p in enumerate(points):
            w.writerow([i, repr(p.delta), "" if p.value is None else repr(p.value), p.error or ""])
    rec.trace_path = path.name
    rec.final_params = x.as_dict()
    rec.extra["scan"] = [p.__dict__ for p in points]
    if len(points) == 3 and np.isclose(points[0].delta, -points[2].delta) and points[1].delta == 0:
        try:
            rec.extra["second_difference"] = second_difference(points)
        except ValueError:
            pass
    failed = [p for p in points if p.error]
    if failed:
        raise RunFailed(f"{len(failed)} of {len(points)} scan points failed")


def _run_bench(cfg: ExperimentConfig, out: Path, rec: RunRecord) -> None:
    chain = cfg.bench.get("chain", [3, 4, 5, 6])
    reports = []
    for n in chain:
        levels = cfg.bench.get("levels")
        r = bench_diag_chain(
            n,
            levels,
            repeats=cfg.bench.get("repeats", 5),
            check=cfg.bench.get("check", True) and n == min(chain),
            seed=cfg.seed,
        )
        log.info("chain %d: value %.4fs  gradient %.4fs  ratio %.2f", n, r.value_median, r.grad_median, r.ratio)
        reports.append(r)
    path = out / "bench.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("n_fm", "levels", "dim", "n_params", "value_median_s", "grad_median_s", "ratio", "speedup_vs_fd"))
        for r in reports:
            w.writerow([r.n_fm, r.levels, r.dim, r.n_params, repr(r.value_median), repr(r.grad_median), repr(r.ratio), repr(r.speedup_vs_fd)])
    rec.trace_path = path.name
    rec.extra["bench"] = [r.to_dict() for r in reports]
    last = reports[-1]
    rec.timing = _timing(last.value_median, last.grad_median)


def _run_demo(cfg: ExperimentConfig, out: Path, rec: RunRecord) -> None:
    report = alternating_vs_simultaneous_demo()
    path = out / "demo.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("solve", "alternating_value"))
        for i, v in enumerate(report.alternating_values, start=1):
            w.writerow([i, repr(float(v))])
    rec.trace_path = path.name
    rec.report = report.to_dict()


_DISPATCH = {
    "iswap": _run_optimization,
    "iswap-robust": _run_optimization,
    "cphase-chip": _run_optimization,
    "gradcheck": _run_gradcheck,
    "scan": _run_scan,
    "bench": _run_bench,
    "demo": _run_demo,
}


def run(cfg: ExperimentConfig, out) -> RunRecord:
    """Run one experiment; result.json is always written, status tells success."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rec = RunRecord(cfg.to_dict(), cfg.kind, "ok", str(out))
    try:
        with threadpool_limits(limits=_worker_count()):
            _DISPATCH[cfg.kind](cfg, out, rec)
    except Exception as exc:  # noqa: BLE001 - persisted, then reported through the status
        rec.status = "failed"
        rec.error = f"{type(exc).__name__}: {exc}"
        rec.extra["traceback"] = traceback.format_exc()
        log.error("run failed: %s", rec.error)
    write_json(out / "result.json", rec.to_dict())
    return rec
