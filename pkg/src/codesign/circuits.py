"""Circuit Hamiltonians, control waveforms and truncated coupled systems.

Energies are frequencies in GHz (E/h), times in ns, fluxes in radians.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
import numpy as np
from scipy import constants as sc

from .diffkit import Spectrum, SpectrumAdjoint, eigh_vjp, relu
from .spectral import eigh


class InvalidGridError(ValueError):
    pass


class GaugeAmbiguityError(ValueError):
    pass


def _positive(obj, *names):
    for n in names:
        v = getattr(obj, n)
        if not (np.isfinite(v) and v > 0):
            raise ValueError(f"{type(obj).__name__}.{n} must be strictly positive, got {v}")


@dataclass(frozen=True)
class FluxoniumParams:
    e_c: float
    e_j: float
    e_l: float

    def __post_init__(self):
        _positive(self, "e_c", "e_j", "e_l")


@dataclass(frozen=True)
class TransmonParams:
    e_c: float
    e_j: float

    def __post_init__(self):
        _positive(self, "e_c", "e_j")


@dataclass(frozen=True)
class ControlParams:
    t_ramp: float
    t_plateau: float
    phi_p: float

    def __post_init__(self):
        if not self.t_ramp > 0:
            raise ValueError(f"t_ramp must be > 0, got {self.t_ramp}")
        if not self.t_plateau >= 0:
            raise ValueError(f"t_plateau must be >= 0, got {self.t_plateau}")

    @property
    def gate_time(self) -> float:
        return 2.0 * self.t_ramp + self.t_plateau

    def as_array(self) -> np.ndarray:
        return np.array([self.t_ramp, self.t_plateau, self.phi_p])


@dataclass(frozen=True)
class PhysicalConstants:
    """Loss tangent, temperature (K) and flux-noise constant c_f (s)."""

    tan_delta_c: float = 2e-6
    temperature: float = 0.050
    c_f: float = 3.95e-15

    def __post_init__(self):
        _positive(self, "tan_delta_c", "temperature", "c_f")

    @property
    def kT_over_h(self) -> float:
        """k_B T / h in GHz."""
        return sc.k * self.temperature / sc.h / 1e9


@dataclass(frozen=True)
class PhaseGrid:
    phi_min: float = -5 * math.pi
    phi_max: float = 5 * math.pi
    n_basis: int = 400

    def __post_init__(self):
        if self.n_basis < 3:
            raise InvalidGridError(f"n_basis must be >= 3, got {self.n_basis}")
        if not self.phi_min < self.phi_max:
            raise InvalidGridError("phi_min must be below phi_max")

    @property
    def spacing(self) -> float:
        return (self.phi_max - self.phi_min) / (self.n_basis - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.phi_min, self.phi_max, self.n_basis)


@functools.lru_cache(maxsize=16)
def _sinc_derivatives(grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray]:
    # sinc discrete-variable representation: first and (negative) second derivative
    k = np.subtract.outer(np.arange(grid.n_basis), np.arange(grid.n_basis)).astype(float)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    safe = np.where(k == 0, 1.0, k)
    d1 = np.where(k == 0, 0.0, sign / safe) / grid.spacing
    neg_d2 = np.where(k == 0, math.pi**2 / 3.0, 2.0 * sign / safe**2) / grid.spacing**2
    d1.setflags(write=False)
    neg_d2.setflags(write=False)
    return d1, neg_d2


def fluxonium_operators(grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray]:
    """Phase operator (diagonal) and charge operator n = -i d/dphi on the grid."""
    d1, _ = _sinc_derivatives(grid)
    return np.diag(grid.points), -1j * d1


def charge_squared(grid: PhaseGrid) -> np.ndarray:
    """n^2 = -d^2/dphi^2 on the grid (real symmetric)."""
    return _sinc_derivatives(grid)[1]


def fluxonium_hamiltonian(p: FluxoniumParams, phi_ext: float, grid: PhaseGrid) -> np.ndarray:
    phi = grid.points
    h = 4.0 * p.e_c * charge_squared(grid)
    h = h + np.diag(0.5 * p.e_l * (phi + phi_ext) ** 2 - p.e_j * np.cos(phi))
    return h


def fluxonium_partials(p: FluxoniumParams, phi_ext: float, grid: PhaseGrid) -> dict:
    """dH/d(param); diagonal partials are stored as 1-D arrays."""
    phi = grid.points
    return {
        "e_c": 4.0 * charge_squared(grid),
        "e_j": -np.cos(phi),
        "e_l": 0.5 * (phi + phi_ext) ** 2,
        "phi_ext": p.e_l * (phi + phi_ext),
    }


def transmon_charge_operator(n_cut: int) -> np.ndarray:
    return np.diag(np.arange(-n_cut, n_cut + 1, dtype=float))


def _hopping(n_cut: int) -> np.ndarray:
    dim = 2 * n_cut + 1
    return np.eye(dim, k=1) + np.eye(dim, k=-1)


def transmon_hamiltonian(p: TransmonParams, phi_ext: float, n_cut: int = 10) -> np.ndarray:
    """Charge-basis transmon, n in {-n_cut..n_cut}, offset charge zero."""
    if n_cut < 1:
        raise ValueError("n_cut must be >= 1 (at least 3 charge states)")
    n = np.arange(-n_cut, n_cut + 1, dtype=float)
    e_j_eff = p.e_j * abs(math.cos(phi_ext / 2.0))
    return np.diag(4.0 * p.e_c * n**2) - 0.5 * e_j_eff * _hopping(n_cut)


def transmon_partials(p: TransmonParams, phi_ext: float, n_cut: int = 10) -> dict:
    n = np.arange(-n_cut, n_cut + 1, dtype=float)
    c = math.cos(phi_ext / 2.0)
    d_abs_cos = -0.5 * math.sin(phi_ext / 2.0) * (1.0 if c >= 0 else -1.0)
    hop = _hopping(n_cut)
    return {
        "e_c": 4.0 * n**2,
        "e_j": -0.5 * abs(c) * hop,
        "phi_ext": -0.5 * p.e_j * d_abs_cos * hop,
    }


# ---------------------------------------------------------------------------
# control waveform


def trapezoid_flux(c: ControlParams, t: float) -> float:
    """External flux of the driven qubit: pi plus a trapezoid of height phi_p."""
    r = c.t_ramp
    shape = min(relu(t / r), 1.0, relu((2.0 * r + c.t_plateau - t) / r))
    return math.pi + c.phi_p * float(shape)


class TrapezoidPulse:
    """Flux offset delta(t) = phi_ext,2(t) - pi as a function of (t_ramp, t_plateau, phi_p)."""

    names = ("t_ramp", "t_plateau", "phi_p")
    units = ("ns", "ns", "radian")

    def offset(self, c, t):
        tr, tp, pp = c
        t = np.asarray(t, dtype=float)
        up = relu(t / tr)
        down = relu((2.0 * tr + tp - t) / tr)
        return pp * np.minimum(np.minimum(up, 1.0), down)

    def partials(self, c, t):
        """(d offset / d c) with shape (len(t), 3) and d offset / dt."""
        tr, tp, pp = c
        t = np.atleast_1d(np.asarray(t, dtype=float))
        up = t / tr
        down = (2.0 * tr + tp - t) / tr
        branches = np.stack([np.ones_like(t), relu(up), relu(down)])
        pick = np.argmin(branches, axis=0)  # ties resolve to the plateau branch
        shape = branches[pick, np.arange(t.size)]
        dc = np.zeros((t.size, 3))
        dt = np.zeros(t.size)
        on_up = (pick == 1) & (up > 0)
        on_down = (pick == 2) & (down > 0)
        dc[on_up, 0] = pp * (-t[on_up] / tr**2)
        dt[on_up] = pp / tr
        dc[on_down, 0] = pp * (2.0 / tr - (2.0 * tr + tp - t[on_down]) / tr**2)
        dc[on_down, 1] = pp / tr
        dt[on_down] = -pp / tr
        dc[:, 2] = shape
        return dc, dt

    def breakpoints(self, c):
        """Times where the waveform has kinks, and their Jacobian wrt c."""
        tr, tp, _ = c
        times = np.array([0.0, tr, tr + tp, 2.0 * tr + tp])
        jac = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [2, 1, 0]], dtype=float)
        return times, jac

    def constant_segments(self, c):
        """Which inter-breakpoint segments carry a constant offset (the plateau)."""
        return [False, True, False]


# ---------------------------------------------------------------------------
# truncated coupled systems


@dataclass
class Subsystem:
    """One circuit at its idle bias, with linear parameter partials.

    ``hamiltonian_partials`` / ``control_partials`` map a global parameter name
    to dH/dp and dC/dp (1-D arrays mean diagonal matrices).
    """

    hamiltonian: np.ndarray
    coupling_op: np.ndarray
    control_op: np.ndarray | None = None
    hamiltonian_partials: dict = field(default_factory=dict)
    control_partials: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Coupling:
    i: int
    j: int
    name: str
    value: float
    sign: float = 1.0


def contract_partial(bar: np.ndarray, partial: np.ndarray) -> float:
    """Re tr(bar^dagger partial) for full or diagonal ``partial``."""
    if partial.ndim == 1:
        return float(np.real(np.sum(np.conj(np.diagonal(bar)) * partial)))
    return float(np.real(np.vdot(bar, partial)))


def _embed(ops: list[np.ndarray], dims: list[int]) -> np.ndarray:
    out = np.ones((1, 1))
    for op in ops:
        out = np.kron(out, op)
    return out


def _letters(n):
    return "abcdefghijklmnopqrstuvwxyz"[:n], "ABCDEFGHIJKLMNOPQRSTUVWXYZ"[:n]


def _partial_trace_cotangent(bar: np.ndarray, dims: list[int], fixed: dict[int, np.ndarray], free: int) -> np.ndarray:
    """Cotangent of the ``free`` factor of a kron product whose other factors are ``fixed``.

    Factors absent from ``fixed`` are identities.
    """
    n = len(dims)
    lo, up = _letters(n)
    t = bar.reshape(dims + dims)
    operands = [t]
    spec_in = [lo + up]
    for k in range(n):
        if k == free:
            continue
        if k in fixed:
            operands.append(np.conj(fixed[k]))
            spec_in.append(lo[k] + up[k])
    # identities tie row and column letters together
    sub = lo + up
    for k in range(n):
        if k != free and k not in fixed:
            sub = sub.replace(up[k], lo[k])
    spec_in[0] = sub
    expr = ",".join(spec_in) + "->" + lo[free] + up[free]
    return np.einsum(expr, *operands)


@dataclass
class TruncatedSystem:
    """Drift and control operators projected onto the low-energy product subspace."""

    drift: np.ndarray
    controls: list
    labels: dict
    levels_per_subsystem: int
    param_names: tuple
    spectra: list
    projected: list = field(repr=False, default_factory=list)
    _subsystems: list = field(repr=False, default_factory=list)
    _couplings: list = field(repr=False, default_factory=list)

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    def backward(self, drift_bar, control_bars=None, spectrum_adjoints=None) -> dict:
        """Map cotangents of drift/controls (and extra spectrum cotangents) to parameters."""
        L = self.levels_per_subsystem
        n_sub = len(self._subsystems)
        dims = [L] * n_sub
        control_bars = control_bars or [None] * len(self.controls)
        grads: dict[str, float] = {}
        h_bars = [np.zeros((L, L), dtype=complex) for _ in range(n_sub)]
        s_bars = [np.zeros((L, L), dtype=complex) for _ in range(n_sub)]
        c_bars = [np.zeros((L, L), dtype=complex) for _ in range(n_sub)]

        drift_bar = np.asarray(drift_bar)
        for k in range(n_sub):
            h_bars[k] += _partial_trace_cotangent(drift_bar, dims, {}, k)
        for cp in self._couplings:
            s_i, s_j = self.projected[cp.i]["coupling"], self.projected[cp.j]["coupling"]
            term = _embed([s_i if k == cp.i else s_j if k == cp.j else np.eye(L) for k in range(n_sub)], dims)
            grads[cp.name] = grads.get(cp.name, 0.0) + cp.sign * float(np.real(np.vdot(drift_bar, term)))
            s_bars[cp.i] += cp.sign * cp.value * _partial_trace_cotangent(drift_bar, dims, {cp.j: s_j}, cp.i)
            s_bars[cp.j] += cp.sign * cp.value * _partial_trace_cotangent(drift_bar, dims, {cp.i: s_i}, cp.j)
        ctrl_owner = [k for k, sub in enumerate(self._subsystems) if sub.control_op is not None]
        for owner, bar in zip(ctrl_owner, control_bars):
            if bar is not None:
                c_bars[owner] += _partial_trace_cotangent(np.asarray(bar), dims, {}, owner)

        for k, sub in enumerate(self._subsystems):
            spec = self.spectra[k]
            w = spec.eigenvectors[:, :L]
            adj = spectrum_adjoints[k] if spectrum_adjoints and spectrum_adjoints[k] is not None else None
            lam_bar = np.zeros_like(spec.eigenvalues)
            u_bar = np.zeros(spec.eigenvectors.shape, dtype=complex)
            if adj is not None:
                lam_bar += adj.adjoint_eigenvalues
                u_bar += adj.adjoint_eigenvectors
            lam_bar[:L] += np.real(np.diagonal(h_bars[k]))
            u_bar[:, :L] += _projection_vjp(sub.coupling_op, w, s_bars[k])
            c_full_bar = None
            if sub.control_op is not None:
                c_full_bar = w @ c_bars[k] @ w.conj().T
                u_bar[:, :L] += _projection_vjp(sub.control_op, w, c_bars[k])
            if not np.iscomplexobj(spec.eigenvectors):
                u_bar = u_bar.real
            h_full_bar = eigh_vjp(spec, SpectrumAdjoint(lam_bar, u_bar))
            for name, partial in sub.hamiltonian_partials.items():
                grads[name] = grads.get(name, 0.0) + contract_partial(h_full_bar, partial)
            if c_full_bar is not None:
                for name, partial in sub.control_partials.items():
                    grads[name] = grads.get(name, 0.0) + contract_partial(c_full_bar, partial)
        return grads


def _projection_vjp(op: np.ndarray, w: np.ndarray, proj_bar: np.ndarray) -> np.ndarray:
    """Cotangent of W for proj = W^dagger op W."""
    if op.ndim == 1:
        ow = op[:, None] * w
        ohw = np.conj(op)[:, None] * w
    else:
        ow = op @ w
        ohw = op.conj().T @ w
    return ow @ proj_bar.conj().T + ohw @ proj_bar


def _project(op: np.ndarray, w: np.ndarray) -> np.ndarray:
    if op.ndim == 1:
        return w.conj().T @ (op[:, None] * w)
    return w.conj().T @ op @ w


def coupled_system(subsystems: list[Subsystem], couplings: list[Coupling], levels: int) -> TruncatedSystem:
    """Diagonalize each circuit, keep ``levels`` states each and assemble the drift.

    drift = sum_i H_i' + sum_c sign_c J_c S_i' (x) S_j'; controls are the projected C_i'.
    """
    spectra: list[Spectrum] = []
    projected = []
    for k, sub in enumerate(subsystems):
        if levels > sub.hamiltonian.shape[0]:
            raise ValueError(f"levels={levels} exceeds basis size of subsystem {k}")
        spec = eigh(sub.hamiltonian)
        if levels < spec.eigenvalues.size:
            gap = spec.eigenvalues[levels] - spec.eigenvalues[levels - 1]
            if gap < 1e-9:
                raise GaugeAmbiguityError(f"subsystem {k}: truncation cuts a degenerate pair (gap {gap:.2e} GHz)")
        w = spec.eigenvectors[:, :levels]
        entry = {
            "energies": spec.eigenvalues[:levels].copy(),
            "coupling": _project(sub.coupling_op, w),
        }
        if sub.control_op is not None:
            entry["control"] = _project(sub.control_op, w)
        spectra.append(spec)
        projected.append(entry)

    n_sub = len(subsystems)
    dims = [levels] * n_sub
    eye = np.eye(levels)
    dtype = complex if any(np.iscomplexobj(p["coupling"]) for p in projected) else float
    drift = np.zeros((levels**n_sub,) * 2, dtype=dtype)
    for k in range(n_sub):
        drift = drift + _embed([np.diag(projected[k]["energies"]) if m == k else eye for m in range(n_sub)], dims)
    for cp in couplings:
        ops = [
            projected[cp.i]["coupling"] if m == cp.i else projected[cp.j]["coupling"] if m == cp.j else eye
            for m in range(n_sub)
        ]
        drift = drift + cp.sign * cp.value * _embed(ops, dims)
    controls = [
        _embed([projected[k]["control"] if m == k else eye for m in range(n_sub)], dims)
        for k in range(n_sub)
        if subsystems[k].control_op is not None
    ]
    labels = {idx: int(np.ravel_multi_index(idx, dims)) for idx in np.ndindex(*dims)}
    names: list[str] = []
    for sub in subsystems:
        for n in list(sub.hamiltonian_partials) + list(sub.control_partials):
            if n not in names:
                names.append(n)
    names += [cp.name for cp in couplings if cp.name not in names]
    return TruncatedSystem(
        drift=drift,
        controls=controls,
        labels=labels,
        levels_per_subsystem=levels,
        param_names=tuple(names),
        spectra=spectra,
        projected=projected,
        _subsystems=list(subsystems),
        _couplings=list(couplings),
    )


# ---------------------------------------------------------------------------
# concrete devices

ISWAP_DEVICE_NAMES = ("E_C1", "E_J1", "E_L1", "E_C2", "E_J2", "E_L2", "J_C")


@dataclass(frozen=True)
class FluxoniumPair:
    """Two capacitively coupled fluxonium qubits; qubit 2 carries the flux drive."""

    q1: FluxoniumParams
    q2: FluxoniumParams
    j_c: float
    grid: PhaseGrid = PhaseGrid()
    levels: int = 5

    @classmethod
    def from_dict(cls, d: dict, grid: PhaseGrid = PhaseGrid(), levels: int = 5) -> "FluxoniumPair":
        return cls(
            FluxoniumParams(d["E_C1"], d["E_J1"], d["E_L1"]),
            FluxoniumParams(d["E_C2"], d["E_J2"], d["E_L2"]),
            d["J_C"],
            grid,
            levels,
        )

    def as_dict(self) -> dict:
        return {
            "E_C1": self.q1.e_c, "E_J1": self.q1.e_j, "E_L1": self.q1.e_l,
            "E_C2": self.q2.e_c, "E_J2": self.q2.e_j, "E_L2": self.q2.e_l,
            "J_C": self.j_c,
        }

    def subsystems(self) -> list[Subsystem]:
        d1 = _sinc_derivatives(self.grid)[0]
        phi = self.grid.points
        subs = []
        for idx, q in ((1, self.q1), (2, self.q2)):
            partials = fluxonium_partials(q, math.pi, self.grid)
            sub = Subsystem(
                hamiltonian=fluxonium_hamiltonian(q, math.pi, self.grid),
                coupling_op=d1,
                hamiltonian_partials={
                    f"E_C{idx}": partials["e_c"],
                    f"E_J{idx}": partials["e_j"],
                    f"E_L{idx}": partials["e_l"],
                },
            )
            if idx == 2:
                # phi_ext = pi + delta: H(pi) + E_L * delta * (phi + pi) + const
                sub.control_op = q.e_l * (phi + math.pi)
                sub.control_partials = {"E_L2": phi + math.pi}
            subs.append(sub)
        return subs

    def build(self) -> TruncatedSystem:
        # n1 n2 = (-i D1)(-i D2) = -D1 D2 keeps everything real
        return coupled_system(self.subsystems(), [Coupling(0, 1, "J_C", self.j_c, sign=-1.0)], self.levels)


@dataclass(frozen=True)
class TransmonPair:
    """Capacitively coupled transmons; the first one is flux tuned, the second idles at 0."""

    tuned: TransmonParams
    fixed: TransmonParams
    j_c: float
    n_cut: int = 10
    levels: int = 6
    param_names: tuple = ("E_C1", "E_J1", "E_C2", "E_J2", "J_C")

    def subsystems(self, phi_ext: float) -> list[Subsystem]:
        n1, n2 = self.param_names[0], self.param_names[1]
        m1, m2 = self.param_names[2], self.param_names[3]
        charge = np.arange(-self.n_cut, self.n_cut + 1, dtype=float)
        p1 = transmon_partials(self.tuned, phi_ext, self.n_cut)
        p2 = transmon_partials(self.fixed, 0.0, self.n_cut)
        return [
            Subsystem(
                transmon_hamiltonian(self.tuned, phi_ext, self.n_cut),
                charge,
                hamiltonian_partials={n1: p1["e_c"], n2: p1["e_j"], "phi_ext": p1["phi_ext"]},
            ),
            Subsystem(
                transmon_hamiltonian(self.fixed, 0.0, self.n_cut),
                charge,
                hamiltonian_partials={m1: p2["e_c"], m2: p2["e_j"]},
            ),
        ]

    def build(self, phi_ext: float) -> TruncatedSystem:
        return coupled_system(
            self.subsystems(phi_ext), [Coupling(0, 1, self.param_names[4], self.j_c)], self.levels
        )

    def with_values(self, values: dict) -> "TransmonPair":
        n = self.param_names
        return TransmonPair(
            TransmonParams(values.get(n[0], self.tuned.e_c), values.get(n[1], self.tuned.e_j)),
            TransmonParams(values.get(n[2], self.fixed.e_c), values.get(n[3], self.fixed.e_j)),
            values.get(n[4], self.j_c),
            self.n_cut,
            self.levels,
            self.param_names,
        )

    def values(self) -> dict:
        n = self.param_names
        return {n[0]: self.tuned.e_c, n[1]: self.tuned.e_j, n[2]: self.fixed.e_c, n[3]: self.fixed.e_j, n[4]: self.j_c}
