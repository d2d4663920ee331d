"""Gauge-fixed diagonalization, ZZ extraction and the operating-point search.

The pair routines accept any object exposing ``build(phi_ext) -> TruncatedSystem``
whose first two subsystems are the flux-tuned qubit and the static qubit (see
:class:`codesign.circuits.TransmonPair`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .diffkit import Gradient, Spectrum, SpectrumAdjoint, eigh_vjp

HERMITIAN_RTOL = 1e-12
TIE_TOL = 1e-9
COMPUTATIONAL = ((0, 0), (0, 1), (1, 0), (1, 1))


class NotHermitianError(ValueError):
    pass


class AssignmentTieError(ValueError):
    pass


class NoCrossingError(RuntimeError):
    pass


class IllConditionedRootError(RuntimeError):
    pass


def check_hermitian(h: np.ndarray, rtol: float = HERMITIAN_RTOL) -> None:
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NotHermitianError(f"expected a square matrix, got shape {h.shape}")
    scale = max(np.max(np.abs(h)), 1e-300)
    dev = np.max(np.abs(h - h.conj().T))
    if dev > rtol * scale:
        raise NotHermitianError(f"Hermiticity deviation {dev:.3e} exceeds {rtol:g} relative")


def eigh(h: np.ndarray) -> Spectrum:
    """Eigendecomposition with each eigenvector's largest entry made real and positive."""
    check_hermitian(h)
    h = np.asarray(h)
    lam, u = np.linalg.eigh(0.5 * (h + h.conj().T))
    rows = np.argmax(np.abs(u), axis=0)
    cols = np.arange(u.shape[1])
    pivot = u[rows, cols]
    if np.iscomplexobj(u):
        u = u * (np.abs(pivot) / pivot)[None, :]
        u[rows, cols] = u[rows, cols].real
    else:
        u = u * np.sign(pivot)[None, :]
    return Spectrum(lam, u, rows)


# ---------------------------------------------------------------------------
# transmon pair: overlaps, E_ZZ, operating point


@dataclass(frozen=True)
class BareOverlapMetric:
    value: float
    argmin_index: int
    assignment: dict = field(default_factory=dict)


@dataclass(frozen=True)
class OperatingPoint:
    phi_ext_stop: float
    metric_at_stop: float
    computational_assignment: dict


@dataclass(frozen=True)
class SearchConfig:
    step: float = 0.01
    metric_tol: float = 1e-9
    bound: float = math.pi


def _comp_indices(system) -> list[int]:
    return [system.labels[jk] for jk in COMPUTATIONAL]


def max_overlap_assignment(spectrum: Spectrum, bare_indices) -> dict:
    """Dressed eigenindex with the largest overlap for each computational bare state."""
    weights = np.abs(spectrum.eigenvectors[bare_indices, :]) ** 2
    assignment = {}
    for jk, row in zip(COMPUTATIONAL, weights):
        order = np.argsort(row)[::-1]
        if row[order[0]] - row[order[1]] < TIE_TOL:
            raise AssignmentTieError(f"bare state {jk} overlaps two dressed states equally")
        assignment[jk] = int(order[0])
    if len(set(assignment.values())) != len(assignment):
        raise AssignmentTieError(f"max-overlap assignment is not a bijection: {assignment}")
    return assignment


def _metric_parts(system, spectrum: Spectrum):
    comp = _comp_indices(system)
    assignment = max_overlap_assignment(spectrum, comp)
    cols = [assignment[jk] for jk in COMPUTATIONAL]
    sums = np.sum(np.abs(spectrum.eigenvectors[np.ix_(comp, cols)]) ** 2, axis=0)
    k = int(np.argmin(sums))
    return comp, assignment, cols, sums, k


def bare_overlap_metric(pair, phi_ext: float) -> BareOverlapMetric:
    system = pair.build(phi_ext)
    spectrum = eigh(system.drift)
    _, assignment, cols, sums, k = _metric_parts(system, spectrum)
    return BareOverlapMetric(float(sums[k]), cols[k], assignment)


def metric_value_and_grad(pair, phi_ext: float):
    """Metric value and its gradient over the pair parameters plus ``phi_ext``."""
    system = pair.build(phi_ext)
    spectrum = eigh(system.drift)
    comp, _, cols, sums, k = _metric_parts(system, spectrum)
    adj = SpectrumAdjoint.zeros(spectrum)
    adj.adjoint_eigenvectors = adj.adjoint_eigenvectors.astype(spectrum.eigenvectors.dtype)
    adj.adjoint_eigenvectors[comp, cols[k]] = 2.0 * spectrum.eigenvectors[comp, cols[k]]
    grads = system.backward(eigh_vjp(spectrum, adj))
    return float(sums[k]), grads


def _zz_from(spectrum: Spectrum, assignment: dict) -> float:
    e = spectrum.eigenvalues
    return float(e[assignment[(0, 0)]] + e[assignment[(1, 1)]] - e[assignment[(0, 1)]] - e[assignment[(1, 0)]])


def e_zz(pair, phi_ext: float) -> float:
    """|E00 + E11 - E01 - E10| with levels assigned by maximum bare overlap (GHz)."""
    system = pair.build(phi_ext)
    spectrum = eigh(system.drift)
    return abs(_zz_from(spectrum, max_overlap_assignment(spectrum, _comp_indices(system))))


def e_zz_value_and_grad(pair, phi_ext: float):
    system = pair.build(phi_ext)
    spectrum = eigh(system.drift)
    assignment = max_overlap_assignment(spectrum, _comp_indices(system))
    signed = _zz_from(spectrum, assignment)
    sign = 1.0 if signed >= 0 else -1.0
    adj = SpectrumAdjoint.zeros(spectrum)
    for jk, w in zip(COMPUTATIONAL, (1.0, -1.0, -1.0, 1.0)):
        adj.adjoint_eigenvalues[assignment[jk]] += sign * w
    grads = system.backward(eigh_vjp(spectrum, adj))
    return abs(signed), grads


def find_operating_point(pair, m: float = 0.8, search: SearchConfig = SearchConfig()) -> OperatingPoint:
    """March the flux up from the idle point until the metric drops below ``m``.

    The bracket found by the coarse march is then refined until the implicit
    equation metric = m holds to ``search.metric_tol``.
    """

    from .circuits import GaugeAmbiguityError

    def g(phi):
        return bare_overlap_metric(pair, phi).value - m

    lo = 0.0
    g_lo = g(lo)
    if g_lo <= 0:
        raise ValueError(f"metric at the idle point ({g_lo + m:.6f}) is already below M={m}")
    hi = None
    # the bound itself is excluded: E_J,eff vanishes there and charge states degenerate
    for i in range(1, int(math.ceil(search.bound / search.step))):
        phi = i * search.step
        try:
            below = g(phi) < 0
        except (GaugeAmbiguityError, AssignmentTieError) as exc:
            # charge states degenerate as E_J,eff -> 0 before any crossing showed up
            raise NoCrossingError(f"metric stayed above M={m} until the spectrum degenerated at phi_ext={phi:.3f}") from exc
        if below:
            hi = phi
            break
        lo = phi
    if hi is None:
        raise NoCrossingError(f"metric stayed above M={m} up to phi_ext={search.bound}")
    root = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    metric = bare_overlap_metric(pair, root)
    if abs(metric.value - m) > search.metric_tol:
        raise IllConditionedRootError(f"root refinement stalled at residual {metric.value - m:.3e}")
    return OperatingPoint(float(root), metric.value, metric.assignment)


def operating_point_gradient(pair, op_point: OperatingPoint, names=None) -> Gradient:
    """Implicit derivative d(phi_stop)/dp = -(dg/dp) / (dg/dphi) with the argmin frozen."""
    _, grads = metric_value_and_grad(pair, op_point.phi_ext_stop)
    g_phi = grads.pop("phi_ext", 0.0)
    if abs(g_phi) < 1e-12:
        raise IllConditionedRootError(f"d(metric)/d(phi_ext) = {g_phi:.3e} at the operating point")
    names = tuple(names) if names is not None else tuple(pair.param_names)
    return Gradient(names, np.array([-grads.get(n, 0.0) / g_phi for n in names]))
