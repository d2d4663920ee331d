"""Reverse-mode building blocks shared by every pipeline in the package.

Cotangent convention: for a complex array ``X`` feeding a real loss ``L`` the
cotangent ``X_bar`` satisfies ``dL = Re sum(conj(X_bar) * dX)``.  Real arrays
use the same rule with the conjugate dropped.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

# Derivative assigned to ReLU at exactly zero.
RELU_GRAD_AT_ZERO = 0.0

# Eigenvalue gaps below this (GHz) make the eigenvector adjoint undefined.
DEGENERACY_TOL = 1e-9

UNITS = ("GHz", "ns", "radian", "dimensionless")


class DegenerateEigenvalueError(ValueError):
    pass


class EvaluationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ParamVector:
    """Ordered, named parameter vector with a unit tag per entry."""

    names: tuple[str, ...]
    values: np.ndarray
    units: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "units", tuple(self.units))
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate parameter names in {self.names}")
        if not (len(self.names) == len(self.units) == values.size):
            raise ValueError("names, units and values must have equal length")
        for u in self.units:
            if u not in UNITS:
                raise ValueError(f"unknown unit {u!r}")

    @classmethod
    def from_items(cls, items: Iterable[tuple[str, float, str]]) -> "ParamVector":
        items = list(items)
        return cls(
            tuple(n for n, _, _ in items),
            np.array([v for _, v, _ in items], dtype=float),
            tuple(u for _, _, u in items),
        )

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}

    def with_values(self, values) -> "ParamVector":
        return ParamVector(self.names, np.array(values, dtype=float), self.units)

    def replace(self, **updates: float) -> "ParamVector":
        values = self.values.copy()
        for name, value in updates.items():
            values[self.names.index(name)] = value
        return self.with_values(values)


@dataclass(frozen=True)
class Gradient:
    names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))
        if values.size != len(self.names):
            raise ValueError("one gradient entry per parameter required")
        if not np.all(np.isfinite(values)):
            bad = [n for n, v in zip(self.names, values) if not np.isfinite(v)]
            raise EvaluationError(f"non-finite gradient entries: {bad}")

    @classmethod
    def from_dict(cls, names: Sequence[str], d: dict[str, float]) -> "Gradient":
        return cls(tuple(names), np.array([d.get(n, 0.0) for n in names]))

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    """Derivative of :func:`relu`; 1 for x > 0 and 0 otherwise."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 1.0, np.where(x == 0, RELU_GRAD_AT_ZERO, 0.0))


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenvalues and gauge-fixed eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    gauge_rows: np.ndarray = field(repr=False)


@dataclass
class SpectrumAdjoint:
    adjoint_eigenvalues: np.ndarray
    adjoint_eigenvectors: np.ndarray

    @classmethod
    def zeros(cls, spectrum: Spectrum) -> "SpectrumAdjoint":
        return cls(
            np.zeros_like(spectrum.eigenvalues),
            np.zeros_like(spectrum.eigenvectors),
        )


def eigh_vjp(spectrum: Spectrum, adjoint: SpectrumAdjoint) -> np.ndarray:
    """Cotangent of the Hermitian input of a gauge-fixed eigendecomposition.

    Uses dD = diag(U^-1 dA U) and dU = U (F o U^-1 dA U) with
    F_ij = 1 / (D_jj - D_ii), plus the phase correction that keeps the
    largest entry of each eigenvector real and positive.
    """
    lam = spectrum.eigenvalues
    u = spectrum.eigenvectors
    lam_bar = np.asarray(adjoint.adjoint_eigenvalues, dtype=float)
    u_bar = np.asarray(adjoint.adjoint_eigenvectors)
    n = lam.size

    if np.iscomplexobj(u) or np.iscomplexobj(u_bar):
        u_bar = u_bar.astype(complex, copy=True)
        cols = np.arange(n)
        rows = spectrum.gauge_rows
        pivot = u[rows, cols].real
        # phase gauge: keeps u[rows[k], k] real, couples in one imaginary direction
        twist = np.imag(np.einsum("ik,ik->k", u_bar.conj(), u))
        u_bar[rows, cols] += 1j * twist / pivot

    # only columns with a nonzero cotangent contribute: U core[:, act] U[:, act]^H
    act = np.flatnonzero(np.any(u_bar != 0, axis=0) | (lam_bar != 0))
    inner = u.conj().T @ u_bar[:, act]
    gap = lam[None, act] - lam[:, None]
    off = np.arange(n)[:, None] != act[None, :]
    degenerate = off & (np.abs(gap) < DEGENERACY_TOL)
    if np.any(degenerate):
        mag = np.abs(inner)
        significant = mag > 1e-12 * max(mag.max(), 1e-300)
        # the (j, i) partner of an active pair may be active too
        pos = {int(a): k for k, a in enumerate(act)}
        for i, k in np.argwhere(degenerate):
            j = int(act[k])
            partner = significant[j, pos[i]] if i in pos else False
            if significant[i, k] or partner:
                raise DegenerateEigenvalueError(
                    f"eigenvalues {i} and {j} closer than {DEGENERACY_TOL:g} with nonzero eigenvector adjoint"
                )
    ok = off & ~degenerate
    f = np.zeros_like(gap)
    f[ok] = 1.0 / gap[ok]
    core = f * inner
    core[act, np.arange(act.size)] = lam_bar[act]
    a_bar = (u @ core) @ u[:, act].conj().T
    a_bar = 0.5 * (a_bar + a_bar.conj().T)
    return a_bar if np.iscomplexobj(a_bar) else a_bar.real


def default_eps(x: np.ndarray) -> np.ndarray:
    return 1e-6 * np.maximum(1.0, np.abs(x))


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("CODESIGN_THREADS", "1")))
    except ValueError:
        return 1


def finite_diff_grad(
    f: Callable[[ParamVector], float],
    x: ParamVector,
    eps=None,
    workers: int | None = None,
) -> Gradient:
    """Central-difference gradient, one pair of probes per parameter."""
    eps = default_eps(x.values) if eps is None else np.broadcast_to(np.asarray(eps, float), x.values.shape)
    probes = []
    for i in range(len(x)):
        for sign in (1.0, -1.0):
            v = x.values.copy()
            v[i] += sign * eps[i]
            probes.append(x.with_values(v))

    def evaluate(p: ParamVector) -> float:
        val = float(f(p))
        if not np.isfinite(val):
            raise EvaluationError(f"objective not finite at {p.as_dict()}")
        return val

    workers = _worker_count() if workers is None else workers
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(evaluate, probes))
    else:
        vals = [evaluate(p) for p in probes]
    vals = np.array(vals).reshape(len(x), 2)
    return Gradient(x.names, (vals[:, 0] - vals[:, 1]) / (2.0 * np.asarray(eps)))


@dataclass
class GradientCheckReport:
    names: tuple[str, ...]
    reverse: np.ndarray
    finite_diff: np.ndarray
    passed: np.ndarray
    rel_errors: np.ndarray

    @property
    def all_passed(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def max_rel_error(self) -> float:
        return float(np.max(self.rel_errors)) if self.rel_errors.size else 0.0

    def lines(self) -> list[str]:
        out = []
        for n, g, fd, ok, err in zip(self.names, self.reverse, self.finite_diff, self.passed, self.rel_errors):
            out.append(f"{n:>12s}  rev={g: .10e}  fd={fd: .10e}  rel={err:.2e}  {'PASS' if ok else 'FAIL'}")
        return out

    def to_dict(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "max_rel_error": self.max_rel_error,
            "components": {
                n: {"reverse": float(g), "finite_diff": float(fd), "rel_error": float(e), "passed": bool(ok)}
                for n, g, fd, ok, e in zip(self.names, self.reverse, self.finite_diff, self.passed, self.rel_errors)
            },
        }


def check_gradient(
    f: Callable[[ParamVector], float],
    grad_f: Callable[[ParamVector], Gradient],
    x: ParamVector,
    rel_tol: float = 1e-4,
    abs_floor: float = 1e-8,
    eps=None,
    reverse: Gradient | None = None,
) -> GradientCheckReport:
    """Compare a reverse-mode gradient against central differences.

    A component passes when ``|g_rev - g_fd| <= rel_tol * max(|g_rev|, |g_fd|) + abs_floor``.
    """
    g = (reverse if reverse is not None else grad_f(x)).values
    fd = finite_diff_grad(f, x, eps).values
    scale = np.maximum(np.abs(g), np.abs(fd))
    diff = np.abs(g - fd)
    passed = diff <= rel_tol * scale + abs_floor
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)
    return GradientCheckReport(tuple(x.names), g, fd, passed, rel)
