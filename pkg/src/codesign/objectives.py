"""Figures of merit: compensated fidelity, decoherence penalties, the iSWAP
objective, its robustness average, and the adiabatic CPhase pair/chip objectives.

Every objective returns an :class:`ObjectiveReport` with the scalar value, the
named term breakdown and (optionally) the gradient over all its parameters.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import ClassVar, Sequence

import numpy as np
from scipy.optimize import brentq

from .circuits import (
    ISWAP_DEVICE_NAMES,
    ControlParams,
    FluxoniumPair,
    PhaseGrid,
    PhysicalConstants,
    TransmonPair,
    TransmonParams,
    TrapezoidPulse,
    contract_partial,
    fluxonium_hamiltonian,
    fluxonium_partials,
)
from .diffkit import Gradient, ParamVector, SpectrumAdjoint, _worker_count, eigh_vjp, relu, relu_grad
from .evolution import SolverConfig, backward, propagate_tape
from .spectral import (
    SearchConfig,
    e_zz,
    e_zz_value_and_grad,
    eigh,
    find_operating_point,
    operating_point_gradient,
)

ISWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]],
    dtype=complex,
)
PULSE = TrapezoidPulse()
ISWAP_NAMES = ISWAP_DEVICE_NAMES + PULSE.names
ISWAP_UNITS = ("GHz",) * len(ISWAP_DEVICE_NAMES) + PULSE.units
PHASE_FLOOR = 1e-12


class UndefinedPhaseError(ValueError):
    pass


class ObjectiveDomainError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyConstants:
    """Penalty coefficients. Hz-valued CPhase constants are kept in Hz as printed."""

    # iSWAP
    delta: float = 0.1
    c_fdiff: float = 1.0
    c_fm1: float = 0.2
    c_fm2: float = 2.1
    physical: PhysicalConstants = PhysicalConstants()
    # CPhase
    c_zz1: float = 8e-6
    c_zz2: float = 1e5
    c_tm: float = 50.0
    c_ah1: float = 300.0
    c_ah2: float = 0.3
    c_fdiff1: float = 5e-16
    c_fdiff2: float = 2e8
    c_scale: float = 3000.0

    units: ClassVar[dict] = {
        "delta": "GHz", "c_fdiff": "1/GHz", "c_fm1": "1/GHz^2", "c_fm2": "GHz",
        "c_zz1": "1/Hz", "c_zz2": "Hz", "c_tm": "dimensionless", "c_ah1": "1/GHz^2",
        "c_ah2": "GHz", "c_fdiff1": "1/Hz^2", "c_fdiff2": "Hz", "c_scale": "dimensionless",
    }

    def __post_init__(self):
        for name in self.units:
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"penalty constant {name} must be positive, got {v}")


@dataclass
class ObjectiveReport:
    value: float
    terms: dict
    gradient: Gradient | None
    kind: str
    info: dict = field(default_factory=dict)
    samples: list = field(default_factory=list, repr=False)

    def recompute(self) -> float:
        """Value rebuilt from the term breakdown."""
        t = self.terms
        if self.kind == "iswap":
            return math.log(1.0 - t["fidelity"] + t["p_decoh"] + t["p_fdiff"] + t["p_fm"])
        if self.kind == "robust":
            return float(np.mean([s.recompute() for s in self.samples]))
        if self.kind == "cphase":
            return t["gate_term"] + t["p_zz_idle"] + t["p_tm_1"] + t["p_tm_2"] + t["p_ah_1"] + t["p_ah_2"] + t["p_fdiff"]
        if self.kind == "chip":
            return t["o_hm"] + t["o_ml"] - t["p_tm_m"] - t["p_ah_m"]
        raise ValueError(f"unknown report kind {self.kind!r}")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "value": self.value, "terms": dict(self.terms), "info": dict(self.info)}
        if self.gradient is not None:
            out["gradient"] = self.gradient.as_dict()
        return out


# ---------------------------------------------------------------------------
# fidelity


def _compensation(u: np.ndarray):
    for j, k in ((0, 0), (2, 1), (1, 2)):
        if abs(u[j, k]) < PHASE_FLOOR:
            raise UndefinedPhaseError(f"|u_comp[{j},{k}]| < {PHASE_FLOOR:g}; compensation phase undefined")
    p00, p21, p12 = np.angle(u[0, 0]), np.angle(u[2, 1]), np.angle(u[1, 2])
    theta = np.array([p00, p21, p12, p12 + p21 - p00])
    d = np.array([1.0, 1j, 1j, -1.0]) * np.exp(-1j * theta)
    return d


def compensated_fidelity(u_comp, target=ISWAP) -> float:
    """Average gate fidelity after removing single-qubit Z phases from ``u_comp``.

    F = (|tr(U D T^dagger)|^2 + d) / (d (d + 1)), d = 4, with
    D = diag(e^{-i p00}, i e^{-i p21}, i e^{-i p12}, -e^{-i(p12 + p21 - p00)})
    and p_jk = arg U[j, k].
    """
    u = np.asarray(u_comp, dtype=complex)
    d = _compensation(u)
    tr = np.trace(u @ np.diag(d) @ np.asarray(target).conj().T)
    return float((abs(tr) ** 2 + 4.0) / 20.0)


def compensated_fidelity_and_grad(u_comp, target=ISWAP):
    """Fidelity and its cotangent w.r.t. ``u_comp`` (dF = Re sum conj(G) dU)."""
    u = np.asarray(u_comp, dtype=complex)
    t_mat = np.asarray(target, dtype=complex)
    d = _compensation(u)
    s = np.einsum("jk,jk->k", u, t_mat.conj())
    tr = np.sum(d * s)
    fid = float((abs(tr) ** 2 + 4.0) / 20.0)

    t_bar = 0.1 * tr
    g = t_bar * np.conj(d)[None, :] * t_mat
    d_bar = t_bar * np.conj(s)
    th = np.imag(np.conj(d_bar) * d)
    phase_bar = {(0, 0): th[0] - th[3], (2, 1): th[1] + th[3], (1, 2): th[2] + th[3]}
    for (j, k), pb in phase_bar.items():
        g[j, k] += pb * 1j * u[j, k] / abs(u[j, k]) ** 2
    return fid, g


# ---------------------------------------------------------------------------
# decoherence


def dielectric_rate(f01: float, phi01: float, e_c: float, phys: PhysicalConstants = PhysicalConstants()) -> float:
    """Dielectric-loss relaxation rate in 1/ns (f01 and e_c in GHz)."""
    x = f01 / (2.0 * phys.kT_over_h)
    return math.pi * f01**2 / (2.0 * e_c) * phi01**2 * phys.tan_delta_c / math.tanh(x)


def _dielectric_partials(f01, phi01, e_c, phys):
    kt2 = 2.0 * phys.kT_over_h
    x = f01 / kt2
    base = math.pi * phi01**2 * phys.tan_delta_c / (2.0 * e_c)
    coth = 1.0 / math.tanh(x)
    rate = base * f01**2 * coth
    d_f = base * (2.0 * f01 * coth - f01**2 / math.sinh(x) ** 2 / kt2)
    d_phi = 2.0 * rate / phi01 if phi01 != 0 else 0.0
    d_ec = -rate / e_c
    return rate, d_f, d_phi, d_ec


def flux_noise_coefficient(phys: PhysicalConstants = PhysicalConstants()) -> float:
    """Gamma_f [1/ns] = coefficient * slope^2 with slope = dE01/dphi_ext in GHz/rad."""
    return phys.c_f * (2.0 * math.pi * 1e9) ** 2 * 1e-9


def flux_noise_rate(slope: float, phys: PhysicalConstants = PhysicalConstants()) -> float:
    return flux_noise_coefficient(phys) * slope**2


def decoherence_penalty(qubits, flux_slope: float, gate_time: float, phys: PhysicalConstants = PhysicalConstants()) -> float:
    """T_gate (sum_i Gamma_d,i / 2 + Gamma_f).

    ``qubits`` is a sequence of (E01 [GHz], <0|phi|1>, E_C [GHz]) at idle.
    """
    for f01, _, _ in qubits:
        if not f01 > 0:
            raise ValueError(f"E01 must be positive, got {f01}")
    gamma_d = sum(dielectric_rate(f, m, ec, phys) for f, m, ec in qubits)
    return gate_time * (0.5 * gamma_d + flux_noise_rate(flux_slope, phys))


# ---------------------------------------------------------------------------
# iSWAP objective


@dataclass(frozen=True)
class IswapProblem:
    penalties: PenaltyConstants = PenaltyConstants()
    solver: SolverConfig = SolverConfig()
    grid: PhaseGrid = PhaseGrid()
    levels: int = 5
    frame: str = "dressed"


def iswap_param_vector(values) -> ParamVector:
    """ParamVector over the ten iSWAP parameters from a dict or a sequence."""
    if isinstance(values, dict):
        missing = [n for n in ISWAP_NAMES if n not in values]
        if missing:
            raise KeyError(f"missing iSWAP parameters: {missing}")
        values = [values[n] for n in ISWAP_NAMES]
    return ParamVector(ISWAP_NAMES, np.asarray(values, dtype=float), ISWAP_UNITS)


def _idle_qubit(spec, grid):
    u0, u1 = spec.eigenvectors[:, 0], spec.eigenvectors[:, 1]
    f01 = float(spec.eigenvalues[1] - spec.eigenvalues[0])
    phi01 = float(np.real(np.sum(np.conj(u0) * grid.points * u1)))
    return f01, phi01


def iswap_objective(x: ParamVector, problem: IswapProblem = IswapProblem(), grad: bool = True) -> ObjectiveReport:
    """O = ln(1 - F + P_decoh + P_fDiff + P_fm) for the flux-driven fluxonium pair."""
    pc = problem.penalties
    phys = pc.physical
    grid = problem.grid
    d = x.as_dict()
    ctrl = ControlParams(d["t_ramp"], d["t_plateau"], d["phi_p"])
    c = ctrl.as_array()
    pair = FluxoniumPair.from_dict(d, grid, problem.levels)
    system = pair.build()
    tape = propagate_tape(system, PULSE, c, None, problem.solver, problem.frame)
    res = tape.result
    fid, fid_bar = compensated_fidelity_and_grad(res.u_comp, ISWAP)

    qubits = [pair.q1, pair.q2]
    idle = [_idle_qubit(s, grid) for s in system.spectra]
    dielectric = [_dielectric_partials(f, m, q.e_c, phys) for (f, m), q in zip(idle, qubits)]

    phi_plat = math.pi + ctrl.phi_p
    spec_p = eigh(fluxonium_hamiltonian(pair.q2, phi_plat, grid))
    a_op = pair.q2.e_l * (grid.points + phi_plat)
    w0, w1 = np.abs(spec_p.eigenvectors[:, 0]) ** 2, np.abs(spec_p.eigenvectors[:, 1]) ** 2
    slope = float(np.sum((w1 - w0) * a_op))
    coef = flux_noise_coefficient(phys)
    gamma_f = coef * slope**2

    tau = res.gate_time
    gamma_d = [r[0] for r in dielectric]
    p_decoh = tau * (0.5 * sum(gamma_d) + gamma_f)
    detune = idle[0][0] - idle[1][0]
    p_fdiff = pc.c_fdiff * float(relu(pc.delta - abs(detune)))
    ej = np.array([pair.q1.e_j, pair.q2.e_j])
    p_fm = pc.c_fm1 * float(np.sum(relu(pc.c_fm2 - ej) ** 2))

    arg = 1.0 - fid + p_decoh + p_fdiff + p_fm
    if not arg > 0:
        raise ObjectiveDomainError(f"log argument {arg:.3e} is not positive")
    value = math.log(arg)
    terms = {"fidelity": fid, "p_decoh": p_decoh, "p_fdiff": p_fdiff, "p_fm": p_fm}
    info = {
        "leakage": res.leakage,
        "gate_time": tau,
        "gamma_d1": gamma_d[0],
        "gamma_d2": gamma_d[1],
        "gamma_f": gamma_f,
        "flux_slope": slope,
        "e01_1": idle[0][0],
        "e01_2": idle[1][0],
    }
    if not grad:
        return ObjectiveReport(value, terms, None, "iswap", info)

    o_bar = 1.0 / arg
    cot = backward(tape, -o_bar * fid_bar, problem.solver)

    # idle single-qubit spectra: E01 and <0|phi|1>
    adjs = []
    extra = {n: 0.0 for n in x.names}
    det_bar = -o_bar * pc.c_fdiff * float(relu_grad(pc.delta - abs(detune))) * np.sign(detune)
    for k, (spec, (f01, phi01), (_, d_f, d_phi, d_ec)) in enumerate(zip(system.spectra, idle, dielectric)):
        g_bar = o_bar * tau * 0.5
        f_bar = g_bar * d_f + (det_bar if k == 0 else -det_bar)
        m_bar = g_bar * d_phi
        adj = SpectrumAdjoint.zeros(spec)
        adj.adjoint_eigenvalues[1] += f_bar
        adj.adjoint_eigenvalues[0] -= f_bar
        u0, u1 = spec.eigenvectors[:, 0], spec.eigenvectors[:, 1]
        adj.adjoint_eigenvectors[:, 0] += m_bar * grid.points * u1
        adj.adjoint_eigenvectors[:, 1] += m_bar * grid.points * u0
        adjs.append(adj)
        extra[f"E_C{k + 1}"] += g_bar * d_ec
        extra[f"E_J{k + 1}"] += -2.0 * o_bar * pc.c_fm1 * float(relu(pc.c_fm2 - ej[k]))

    drift_bar = cot.drift
    if cot.frame_adjoint is not None:
        drift_bar = drift_bar + eigh_vjp(cot.frame_spectrum, cot.frame_adjoint)
    dev = system.backward(drift_bar, [cot.control], adjs)

    # flux-noise slope at the plateau flux (Hellmann-Feynman expectation values)
    s_bar = o_bar * tau * 2.0 * coef * slope
    u0, u1 = spec_p.eigenvectors[:, 0], spec_p.eigenvectors[:, 1]
    adj_p = SpectrumAdjoint.zeros(spec_p)
    adj_p.adjoint_eigenvectors[:, 1] += 2.0 * s_bar * a_op * u1
    adj_p.adjoint_eigenvectors[:, 0] -= 2.0 * s_bar * a_op * u0
    h_bar = eigh_vjp(spec_p, adj_p)
    parts = fluxonium_partials(pair.q2, phi_plat, grid)
    a_bar = s_bar * (w1 - w0)
    extra["E_C2"] += contract_partial(h_bar, parts["e_c"])
    extra["E_J2"] += contract_partial(h_bar, parts["e_j"])
    extra["E_L2"] += contract_partial(h_bar, parts["e_l"]) + float(np.sum(a_bar * (grid.points + phi_plat)))
    extra["phi_p"] += contract_partial(h_bar, parts["phi_ext"]) + float(np.sum(a_bar)) * pair.q2.e_l

    tau_bar = o_bar * (0.5 * sum(gamma_d) + gamma_f)
    extra["t_ramp"] += 2.0 * tau_bar
    extra["t_plateau"] += tau_bar
    for name, g in zip(PULSE.names, cot.c):
        extra[name] += float(g)
    for name, g in dev.items():
        extra[name] += g
    gradient = Gradient(x.names, np.array([extra[n] for n in x.names]))
    return ObjectiveReport(value, terms, gradient, "iswap", info)


DEFAULT_ROBUST_DELTA = 0.005


def default_deltas(delta_phi_p: float = DEFAULT_ROBUST_DELTA):
    return [np.array([0.0, 0.0, delta_phi_p]), np.array([0.0, 0.0, -delta_phi_p])]


def _shift(x: ParamVector, delta) -> ParamVector:
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (len(PULSE.names),):
        raise ValueError(f"control offsets need {len(PULSE.names)} entries (t_ramp, t_plateau, phi_p)")
    return x.replace(**{n: x[n] + dv for n, dv in zip(PULSE.names, delta)})


def _map(fn, items):
    workers = _worker_count()
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def robust_objective(x: ParamVector, deltas=None, problem: IswapProblem = IswapProblem(), grad: bool = True) -> ObjectiveReport:
    """Mean of the iSWAP objective over control offsets; gradient is the mean of sample gradients."""
    deltas = default_deltas() if deltas is None else list(deltas)
    if not deltas:
        raise ValueError("robust_objective needs at least one control offset")
    samples = _map(lambda dlt: iswap_objective(_shift(x, dlt), problem, grad), deltas)
    value = float(np.mean([s.value for s in samples]))
    terms = {k: float(np.mean([s.terms[k] for s in samples])) for k in samples[0].terms}
    gradient = None
    if grad:
        gradient = Gradient(x.names, np.mean([s.gradient.values for s in samples], axis=0))
    info = {"n_samples": len(samples), "sample_values": [s.value for s in samples]}
    return ObjectiveReport(value, terms, gradient, "robust", info, samples)


# ---------------------------------------------------------------------------
# adiabatic CPhase


@dataclass(frozen=True)
class CphaseProblem:
    penalties: PenaltyConstants = PenaltyConstants()
    search: SearchConfig = SearchConfig()
    m: float = 0.8
    gate_form: str = "reciprocal"

    def __post_init__(self):
        if self.gate_form not in ("reciprocal", "literal"):
            raise ValueError(f"gate_form must be 'reciprocal' or 'literal', got {self.gate_form!r}")


def _qubit_penalties(p: TransmonParams, pc: PenaltyConstants):
    """(P_tm, P_ah) and their partials w.r.t. (E_C, E_J)."""
    r = p.e_j / p.e_c
    tm = float(relu(pc.c_tm - r))
    tm_g = float(relu_grad(pc.c_tm - r))
    ah_in = pc.c_ah2 - p.e_c
    ah = pc.c_ah1 * float(relu(ah_in)) ** 2
    d_tm = (tm_g * p.e_j / p.e_c**2, -tm_g / p.e_c)
    d_ah = (-2.0 * pc.c_ah1 * float(relu(ah_in)), 0.0)
    return tm, ah, d_tm, d_ah


def cphase_pair_objective(pair: TransmonPair, problem: CphaseProblem = CphaseProblem(), grad: bool = True) -> ObjectiveReport:
    """Gate term + P_ZZ,idle + sum_i (P_tm,i + P_ah,i) + P_fDiff for one transmon pair.

    The gate term is c_scale P_decoh / E_ZZ(phi_stop) by default, or the
    printed E_ZZ(phi_stop) / P_decoh c_scale with ``gate_form='literal'``.
    """
    pc = problem.penalties
    names = pair.param_names
    op = find_operating_point(pair, problem.m, problem.search)
    zz_gate, g_gate = e_zz_value_and_grad(pair, op.phi_ext_stop)
    zz_idle, g_idle = e_zz_value_and_grad(pair, 0.0)

    idle = pair.build(0.0)
    e01 = [float(s.eigenvalues[1] - s.eigenvalues[0]) for s in idle.spectra]
    p_decoh = e01[0] + e01[1]
    c_s = pc.c_scale
    if problem.gate_form == "reciprocal":
        gate = c_s * p_decoh / zz_gate
        d_gate_p, d_gate_zz = c_s / zz_gate, -gate / zz_gate
    else:
        gate = zz_gate / p_decoh * c_s
        d_gate_p, d_gate_zz = -gate / p_decoh, c_s / p_decoh
    zz_hz = zz_idle * 1e9
    p_zz = pc.c_zz1 * float(relu(zz_hz - pc.c_zz2))
    qp = [_qubit_penalties(q, pc) for q in (pair.tuned, pair.fixed)]
    det_hz = (e01[0] - e01[1]) * 1e9
    fd_in = pc.c_fdiff2 - abs(det_hz)
    p_fd = pc.c_fdiff1 * float(relu(fd_in)) ** 2

    terms = {
        "gate_term": gate,
        "p_zz_idle": p_zz,
        "p_tm_1": qp[0][0],
        "p_tm_2": qp[1][0],
        "p_ah_1": qp[0][1],
        "p_ah_2": qp[1][1],
        "p_fdiff": p_fd,
    }
    value = gate + p_zz + qp[0][0] + qp[1][0] + qp[0][1] + qp[1][1] + p_fd
    info = {
        "phi_ext_stop": op.phi_ext_stop,
        "e_zz_gate": zz_gate,
        "e_zz_idle": zz_idle,
        "p_decoh": p_decoh,
        "e01_1": e01[0],
        "e01_2": e01[1],
        "gate_form": problem.gate_form,
    }
    if not grad:
        return ObjectiveReport(value, terms, None, "cphase", info)

    g = {n: 0.0 for n in names}
    g_phi = g_gate.pop("phi_ext")
    g_idle.pop("phi_ext", None)
    dphi = operating_point_gradient(pair, op, names).as_dict()
    for n in names:
        g[n] += d_gate_zz * (g_gate.get(n, 0.0) + g_phi * dphi[n])
        g[n] += pc.c_zz1 * 1e9 * float(relu_grad(zz_hz - pc.c_zz2)) * g_idle.get(n, 0.0)

    # E01 of each transmon through its idle spectrum
    fd_bar = -2.0 * pc.c_fdiff1 * float(relu(fd_in)) * 1e9 * np.sign(det_hz)
    adjs = []
    for k, spec in enumerate(idle.spectra):
        e_bar = d_gate_p + (fd_bar if k == 0 else -fd_bar)
        adj = SpectrumAdjoint.zeros(spec)
        adj.adjoint_eigenvalues[1] += e_bar
        adj.adjoint_eigenvalues[0] -= e_bar
        adjs.append(adj)
    e_grads = idle.backward(np.zeros_like(idle.drift), None, adjs)
    for n in names:
        g[n] += e_grads.get(n, 0.0)

    for (_, _, d_tm, d_ah), (n_ec, n_ej) in zip(qp, ((names[0], names[1]), (names[2], names[3]))):
        g[n_ec] += d_tm[0] + d_ah[0]
        g[n_ej] += d_tm[1] + d_ah[1]
    return ObjectiveReport(value, terms, Gradient.from_dict(names, g), "cphase", info)


def calibrate_coupling(tuned: TransmonParams, fixed: TransmonParams, target_idle: float, bracket=(1e-4, 0.5), **pair_kw) -> float:
    """J_C at which the idle E_ZZ of the pair equals ``target_idle`` (GHz).

    Idle E_ZZ grows monotonically with J_C well below the qubit detuning, so a
    bracketed root is unique.
    """

    def resid(j):
        return e_zz(TransmonPair(tuned, fixed, j, **pair_kw), 0.0) - target_idle

    return float(brentq(resid, *bracket, xtol=1e-14, rtol=4 * np.finfo(float).eps))


CHIP_NAMES = ("E_CH", "E_JH", "E_CM", "E_JM", "E_CL", "E_JL", "J_HM", "J_ML")
CHIP_UNITS = ("GHz",) * len(CHIP_NAMES)


def _transmon_e01(p: TransmonParams) -> float:
    return math.sqrt(8.0 * p.e_c * p.e_j) - p.e_c


def _pair(a, b, j, n_cut, levels, na, nb, nj):
    """Pair with the higher-frequency transmon as the flux-tuned one."""
    if _transmon_e01(b) > _transmon_e01(a):
        a, b, na, nb = b, a, nb, na
    return TransmonPair(a, b, j, n_cut, levels, na + nb + (nj,))


def chip_pairs(x: ParamVector, n_cut: int = 10, levels: int = 6):
    d = x.as_dict()
    h = TransmonParams(d["E_CH"], d["E_JH"])
    m = TransmonParams(d["E_CM"], d["E_JM"])
    low = TransmonParams(d["E_CL"], d["E_JL"])
    hm = _pair(h, m, d["J_HM"], n_cut, levels, ("E_CH", "E_JH"), ("E_CM", "E_JM"), "J_HM")
    ml = _pair(m, low, d["J_ML"], n_cut, levels, ("E_CM", "E_JM"), ("E_CL", "E_JL"), "J_ML")
    return hm, ml


def chip_param_vector(values) -> ParamVector:
    if isinstance(values, dict):
        values = [values[n] for n in CHIP_NAMES]
    return ParamVector(CHIP_NAMES, np.asarray(values, dtype=float), CHIP_UNITS)


def chip_objective(x: ParamVector, problem: CphaseProblem = CphaseProblem(), grad: bool = True) -> ObjectiveReport:
    """O_H-M + O_M-L minus the M-qubit penalties counted in both pairs."""
    hm, ml = chip_pairs(x)
    r_hm, r_ml = _map(lambda p: cphase_pair_objective(p, problem, grad), [hm, ml])
    d = x.as_dict()
    tm_m, ah_m, d_tm, d_ah = _qubit_penalties(TransmonParams(d["E_CM"], d["E_JM"]), problem.penalties)
    value = r_hm.value + r_ml.value - tm_m - ah_m
    terms = {"o_hm": r_hm.value, "o_ml": r_ml.value, "p_tm_m": tm_m, "p_ah_m": ah_m}
    info = {"hm": r_hm.to_dict(), "ml": r_ml.to_dict()}
    gradient = None
    if grad:
        g = dict.fromkeys(x.names, 0.0)
        for r in (r_hm, r_ml):
            for n, v in r.gradient.as_dict().items():
                g[n] += v
        g["E_CM"] -= d_tm[0] + d_ah[0]
        g["E_JM"] -= d_tm[1] + d_ah[1]
        gradient = Gradient.from_dict(x.names, g)
    return ObjectiveReport(value, terms, gradient, "chip", info, [r_hm, r_ml])


def objective_value(x: ParamVector, problem=None) -> float:
    """Plain value for finite-difference probes; dispatches on the parameter names."""
    if x.names == ISWAP_NAMES:
        return iswap_objective(x, problem or IswapProblem(), grad=False).value
    if x.names == CHIP_NAMES:
        return chip_objective(x, problem or CphaseProblem(), grad=False).value
    raise ValueError(f"no objective registered for parameters {x.names}")


def names_for(kind: str) -> Sequence[str]:
    return {"iswap": ISWAP_NAMES, "chip": CHIP_NAMES}[kind]
