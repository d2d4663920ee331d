"""Ground-state energy of a chain of capacitively coupled fluxonium qubits,
its reverse-mode gradient, and the value/gradient timing benchmark."""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .circuits import (
    FluxoniumParams,
    PhaseGrid,
    _projection_vjp,
    _sinc_derivatives,
    contract_partial,
    fluxonium_hamiltonian,
    fluxonium_partials,
)
from .diffkit import Gradient, ParamVector, SpectrumAdjoint, check_gradient, eigh_vjp
from .spectral import eigh

DENSE_LIMIT = 1000
DEFAULT_SITE = FluxoniumParams(1.483, 2.082, 0.626)
DEFAULT_J = 0.143


def default_levels(n_fm: int) -> int:
    return 4 if n_fm == 6 else 5


def chain_names(n_fm: int) -> tuple:
    names = []
    for i in range(1, n_fm + 1):
        names += [f"E_C{i}", f"E_J{i}", f"E_L{i}"]
    names += [f"J_{i}" for i in range(1, n_fm)]
    return tuple(names)


def chain_params(n_fm: int, site: FluxoniumParams = DEFAULT_SITE, j_c: float = DEFAULT_J) -> ParamVector:
    if not 3 <= n_fm <= 6:
        raise ValueError(f"n_fm must be in 3..6, got {n_fm}")
    vals = [site.e_c, site.e_j, site.e_l] * n_fm + [j_c] * (n_fm - 1)
    return ParamVector(chain_names(n_fm), np.array(vals), ("GHz",) * len(vals))


@dataclass
class _Site:
    spectrum: object
    energies: np.ndarray
    d_proj: np.ndarray
    params: FluxoniumParams


class FluxoniumChain:
    """H = sum_i H_f,i + sum_i J_i n_i n_(i+1), each site truncated to ``levels`` states at phi_ext = pi."""

    def __init__(self, x: ParamVector, levels: int | None = None, grid: PhaseGrid = PhaseGrid(), seed: int = 0):
        n = (len(x) + 1) // 4
        if 4 * n - 1 != len(x) or not 3 <= n <= 6:
            raise ValueError(f"parameter vector does not describe a 3..6 site chain: {len(x)} entries")
        self.n = n
        self.levels = levels or default_levels(n)
        self.grid = grid
        self.x = x
        self.seed = seed
        self.d1 = _sinc_derivatives(grid)[0]
        self.sites = []
        for i in range(1, n + 1):
            p = FluxoniumParams(x[f"E_C{i}"], x[f"E_J{i}"], x[f"E_L{i}"])
            spec = eigh(fluxonium_hamiltonian(p, math.pi, grid))
            w = spec.eigenvectors[:, : self.levels]
            self.sites.append(_Site(spec, spec.eigenvalues[: self.levels].copy(), w.T @ self.d1 @ w, p))
        self.j = np.array([x[f"J_{i}"] for i in range(1, n)])

    @property
    def dim(self) -> int:
        return self.levels**self.n

    def hamiltonian(self):
        L, n = self.levels, self.n
        eye = sp.identity(L, format="csr")

        def embed(ops):
            out = sp.identity(1, format="csr")
            for op in ops:
                out = sp.kron(out, op, format="csr")
            return out

        h = sp.csr_matrix((self.dim, self.dim))
        for k, s in enumerate(self.sites):
            h = h + embed([sp.diags(s.energies) if m == k else eye for m in range(n)])
        for k in range(n - 1):
            ops = [
                sp.csr_matrix(self.sites[m].d_proj) if m in (k, k + 1) else eye
                for m in range(n)
            ]
            # n_k n_(k+1) = -D_k D_(k+1)
            h = h - self.j[k] * embed(ops)
        return h

    def ground_state(self):
        h = self.hamiltonian()
        if self.dim <= DENSE_LIMIT:
            lam, vec = np.linalg.eigh(h.toarray())
            return float(lam[0]), vec[:, 0]
        v0 = np.random.default_rng(self.seed).standard_normal(self.dim)
        lam, vec = eigsh(h, k=1, which="SA", v0=v0, tol=0.0)
        return float(lam[0]), vec[:, 0]

    def value(self) -> float:
        return self.ground_state()[0]

    def value_and_grad(self):
        """Lowest eigenvalue and its gradient (Hellmann-Feynman with H_bar = |g><g|)."""
        e0, g = self.ground_state()
        L, n = self.levels, self.n
        t = g.reshape((L,) * n)
        grads = {}
        s_bars = [np.zeros((L, L)) for _ in range(n)]
        for k in range(n - 1):
            a, b = self.sites[k].d_proj, self.sites[k + 1].d_proj
            tb = np.moveaxis(np.tensordot(b, t, axes=([1], [k + 1])), 0, k + 1)  # D_(k+1) applied
            expect = float(np.tensordot(t, np.moveaxis(np.tensordot(a, tb, axes=([1], [k])), 0, k), axes=n))
            grads[f"J_{k + 1}"] = -expect
            # cotangent of D_k with D_(k+1) fixed and vice versa
            ta = np.moveaxis(np.tensordot(a, t, axes=([1], [k])), 0, k)
            s_bars[k] += -self.j[k] * _pair_contract(t, tb, k)
            s_bars[k + 1] += -self.j[k] * _pair_contract(t, ta, k + 1)
        for k, site in enumerate(self.sites):
            rho_diag = np.diagonal(_pair_contract(t, t, k)).copy()
            spec = site.spectrum
            w = spec.eigenvectors[:, :L]
            adj = SpectrumAdjoint.zeros(spec)
            adj.adjoint_eigenvalues[:L] += rho_diag
            adj.adjoint_eigenvectors[:, :L] += _projection_vjp(self.d1, w, s_bars[k])
            h_bar = eigh_vjp(spec, adj)
            parts = fluxonium_partials(site.params, math.pi, self.grid)
            i = k + 1
            grads[f"E_C{i}"] = contract_partial(h_bar, parts["e_c"])
            grads[f"E_J{i}"] = contract_partial(h_bar, parts["e_j"])
            grads[f"E_L{i}"] = contract_partial(h_bar, parts["e_l"])
        return e0, Gradient.from_dict(self.x.names, grads)


def _pair_contract(t, other, axis):
    """M[a, b] = sum over all other axes of t[.., a, ..] other[.., b, ..]."""
    n = t.ndim
    axes = [i for i in range(n) if i != axis]
    return np.tensordot(t, other, axes=(axes, axes))


def chain_energy(x: ParamVector, levels=None, seed: int = 0) -> float:
    return FluxoniumChain(x, levels, seed=seed).value()


def chain_energy_and_grad(x: ParamVector, levels=None, seed: int = 0):
    return FluxoniumChain(x, levels, seed=seed).value_and_grad()


@dataclass
class BenchReport:
    n_fm: int
    levels: int
    dim: int
    n_params: int
    value_seconds: list
    grad_seconds: list
    gradient_check: dict | None = None
    chain_defaults: dict = field(default_factory=dict)

    @property
    def value_median(self) -> float:
        return statistics.median(self.value_seconds)

    @property
    def grad_median(self) -> float:
        return statistics.median(self.grad_seconds)

    @property
    def ratio(self) -> float:
        return self.grad_median / self.value_median

    @property
    def speedup_vs_fd(self) -> float:
        return (self.n_params + 1) / self.ratio

    def to_dict(self) -> dict:
        return {
            "n_fm": self.n_fm,
            "levels": self.levels,
            "dim": self.dim,
            "n_params": self.n_params,
            "value_seconds": self.value_seconds,
            "grad_seconds": self.grad_seconds,
            "value_median": self.value_median,
            "grad_median": self.grad_median,
            "value_spread": float(np.ptp(self.value_seconds)),
            "grad_spread": float(np.ptp(self.grad_seconds)),
            "ratio": self.ratio,
            "speedup_vs_fd": self.speedup_vs_fd,
            "gradient_check": self.gradient_check,
            "chain_defaults": self.chain_defaults,
        }


def _time(fn, repeats, warmup=1):
    for _ in range(warmup):
        fn()
    out = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return out


def bench_diag_chain(
    n_fm: int,
    levels: int | None = None,
    x: ParamVector | None = None,
    repeats: int = 5,
    check: bool = True,
    seed: int = 0,
) -> BenchReport:
    """Time value-only versus value+gradient of the chain ground-state energy.

    Each timed call rebuilds the chain from its parameters (site diagonalizations
    included), so both sides pay the full forward cost.  With ``check`` the
    gradient is first verified against central finite differences.
    """
    if not 3 <= n_fm <= 6:
        raise ValueError(f"n_fm must be in 3..6, got {n_fm}")
    x = x if x is not None else chain_params(n_fm)
    levels = levels or default_levels(n_fm)
    report_check = None
    if check:
        rep = check_gradient(
            lambda p: chain_energy(p, levels, seed),
            lambda p: chain_energy_and_grad(p, levels, seed)[1],
            x,
            rel_tol=1e-5,
            abs_floor=1e-8,
        )
        report_check = rep.to_dict()
        if not rep.all_passed:
            raise RuntimeError("chain gradient failed the finite-difference check:\n" + "\n".join(rep.lines()))
    value_t = _time(lambda: chain_energy(x, levels, seed), repeats)
    grad_t = _time(lambda: chain_energy_and_grad(x, levels, seed), repeats)
    return BenchReport(
        n_fm,
        levels,
        levels**n_fm,
        len(x),
        value_t,
        grad_t,
        report_check,
        {"site": [DEFAULT_SITE.e_c, DEFAULT_SITE.e_j, DEFAULT_SITE.e_l], "J_C": DEFAULT_J, "phi_ext": math.pi},
    )
