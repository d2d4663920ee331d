"""Adam with an exponentially decaying rate, robustness scans, and the
alternating-versus-simultaneous comparison on an ill-conditioned quadratic."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .diffkit import EvaluationError, Gradient, ParamVector


@dataclass(frozen=True)
class AdamConfig:
    r_init: float = 0.003
    decay_halflife_steps: float | None = 5000
    b1: float = 0.9
    b2: float = 0.999
    eps: float = 1e-8
    steps: int = 2000
    snapshot_every: int = 100

    def __post_init__(self):
        if not self.r_init > 0:
            raise ValueError("r_init must be positive")
        if not (0 < self.b1 < 1 and 0 < self.b2 < 1):
            raise ValueError("b1 and b2 must lie in (0, 1)")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.decay_halflife_steps is not None and not self.decay_halflife_steps > 0:
            raise ValueError("decay_halflife_steps must be positive or None")


def lr_schedule(cfg: AdamConfig, step: int) -> float:
    """r_init * 2^(-step / halflife); constant when the half-life is None."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if cfg.decay_halflife_steps is None:
        return cfg.r_init
    return cfg.r_init * 2.0 ** (-step / cfg.decay_halflife_steps)


@dataclass
class StepRecord:
    step: int
    value: float
    lr: float
    terms: dict = field(default_factory=dict)


@dataclass
class OptTrace:
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)
    names: tuple = ()

    def append(self, rec: StepRecord):
        if self.records and rec.step <= self.records[-1].step:
            raise ValueError("trace steps must be strictly increasing")
        self.records.append(rec)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.records])

    @property
    def steps(self) -> np.ndarray:
        return np.array([r.step for r in self.records])


class OptimizationAborted(RuntimeError):
    """Raised on a non-finite value or gradient; carries the trace so far."""

    def __init__(self, message, trace: OptTrace, params: ParamVector):
        super().__init__(message)
        self.trace = trace
        self.params = params


def _evaluate(fg, x):
    out = fg(x)
    if hasattr(out, "gradient"):
        return float(out.value), out.gradient, dict(out.terms)
    value, grad = out[0], out[1]
    terms = out[2] if len(out) > 2 else {}
    return float(value), grad, dict(terms)


def adam_run(fg: Callable, init: ParamVector, cfg: AdamConfig, callback=None):
    """Minimize with Adam.

    ``fg(x)`` returns an ObjectiveReport or a (value, Gradient[, terms]) tuple.
    The trace holds the value before every update plus the final value.
    """
    x = init
    m = np.zeros(len(x))
    v = np.zeros(len(x))
    trace = OptTrace(names=tuple(x.names))
    for step in range(cfg.steps + 1):
        try:
            value, grad, terms = _evaluate(fg, x)
        except EvaluationError as exc:
            raise OptimizationAborted(f"evaluation failed at step {step}: {exc}", trace, x) from exc
        g = grad.values if isinstance(grad, Gradient) else np.asarray(grad, dtype=float)
        if not (np.isfinite(value) and np.all(np.isfinite(g))):
            raise OptimizationAborted(f"non-finite objective or gradient at step {step}", trace, x)
        lr = lr_schedule(cfg, step)
        trace.append(StepRecord(step, value, lr, terms))
        if step % cfg.snapshot_every == 0 or step == cfg.steps:
            trace.snapshots[step] = x.values.copy()
        if callback is not None:
            callback(step, x, value)
        if step == cfg.steps:
            break
        t = step + 1
        m = cfg.b1 * m + (1.0 - cfg.b1) * g
        v = cfg.b2 * v + (1.0 - cfg.b2) * g * g
        m_hat = m / (1.0 - cfg.b1**t)
        v_hat = v / (1.0 - cfg.b2**t)
        x = x.with_values(x.values - lr * m_hat / (np.sqrt(v_hat) + cfg.eps))
    return x, trace


@dataclass
class ScanPoint:
    delta: float
    value: float | None
    error: str | None = None


def robustness_scan(objective: Callable[[ParamVector], float], x: ParamVector, deltas, param: str = "phi_p"):
    """Objective at x with ``param`` shifted by each delta; failures are recorded, not raised."""
    out = []
    for d in deltas:
        try:
            val = float(objective(x.replace(**{param: x[param] + float(d)})))
            out.append(ScanPoint(float(d), val))
        except Exception as exc:  # noqa: BLE001 - the scan reports and continues
            out.append(ScanPoint(float(d), None, f"{type(exc).__name__}: {exc}"))
    return out


def second_difference(scan) -> float:
    """Central second difference from a three-point symmetric scan."""
    if len(scan) != 3 or any(p.value is None for p in scan):
        raise ValueError("need three successful scan points")
    return scan[0].value - 2.0 * scan[1].value + scan[2].value


# ---------------------------------------------------------------------------
# alternating vs simultaneous


def toy_quadratic(p) -> float:
    x, y = p
    return 100.0 * (x - y) ** 2 + (x + y) ** 2


def toy_quadratic_grad(p) -> np.ndarray:
    x, y = p
    return np.array([200.0 * (x - y) + 2.0 * (x + y), -200.0 * (x - y) + 2.0 * (x + y)])


# exact minimizer of one coordinate given the other: x = K y (and y = K x)
COORDINATE_RATIO = 198.0 / 202.0


@dataclass
class DemoReport:
    start: tuple
    simultaneous_value: float
    simultaneous_evaluations: int
    simultaneous_first_step: tuple
    alternating_value: float
    alternating_solves: int
    alternating_values: list
    alternating_first_step: tuple
    sweep_ratios: list
    predicted_sweep_ratio: float

    @property
    def advantage(self) -> float:
        return self.alternating_value / max(self.simultaneous_value, 1e-300)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["advantage"] = self.advantage
        return d


def alternating_vs_simultaneous_demo(start=(1.0, -0.3), sweeps: int = 30, budget: int = 200) -> DemoReport:
    """Joint quasi-Newton minimization against exact coordinate-wise minimization."""
    start = np.asarray(start, dtype=float)
    count = {"n": 0}

    def f(p):
        count["n"] += 1
        return toy_quadratic(p)

    def g(p):
        count["n"] += 1
        return toy_quadratic_grad(p)

    res = minimize(f, start, jac=g, method="BFGS", options={"gtol": 1e-14, "maxiter": budget})
    g0 = toy_quadratic_grad(start)
    sim_first = tuple(-g0 / np.linalg.norm(g0)) if np.any(g0) else (0.0, 0.0)

    x, y = start
    values = []
    first = None
    for _ in range(sweeps):
        nx = COORDINATE_RATIO * y
        if first is None:
            step = np.array([nx - x, 0.0])
            first = tuple(step / np.linalg.norm(step)) if np.any(step) else (0.0, 0.0)
        x = nx
        values.append(toy_quadratic((x, y)))
        y = COORDINATE_RATIO * x
        values.append(toy_quadratic((x, y)))
    # value after each x-solve; consecutive ratios are one full sweep
    after_x = values[0::2]
    ratios = [b / a for a, b in zip(after_x[:-1], after_x[1:]) if a > 0]
    return DemoReport(
        start=tuple(start),
        simultaneous_value=float(res.fun),
        simultaneous_evaluations=int(count["n"]),
        simultaneous_first_step=sim_first,
        alternating_value=float(values[-1]),
        alternating_solves=2 * sweeps,
        alternating_values=values,
        alternating_first_step=first,
        sweep_ratios=ratios,
        predicted_sweep_ratio=COORDINATE_RATIO**4,
    )


def sweep_ratio_bruteforce(start, sweeps: int = 5):
    """Per-sweep decrease from a brute-force 1-D minimizer (independent of the closed form)."""
    from scipy.optimize import minimize_scalar

    x, y = map(float, start)
    vals = []
    for _ in range(sweeps):
        x = minimize_scalar(lambda s: toy_quadratic((s, y)), tol=1e-14).x
        vals.append(toy_quadratic((x, y)))
        y = minimize_scalar(lambda s: toy_quadratic((x, s)), tol=1e-14).x
    return [b / a for a, b in zip(vals[:-1], vals[1:])]
