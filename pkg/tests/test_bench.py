import math

import numpy as np
import pytest

from codesign.bench import (
    DENSE_LIMIT,
    FluxoniumChain,
    bench_diag_chain,
    chain_energy,
    chain_energy_and_grad,
    chain_names,
    chain_params,
    default_levels,
)
from codesign.circuits import PhaseGrid
from codesign.diffkit import check_gradient

SMALL = PhaseGrid(n_basis=120)


def test_names_and_levels():
    assert chain_names(3) == ("E_C1", "E_J1", "E_L1", "E_C2", "E_J2", "E_L2", "E_C3", "E_J3", "E_L3", "J_1", "J_2")
    assert [default_levels(n) for n in (3, 4, 5, 6)] == [5, 5, 5, 4]


@pytest.mark.parametrize("n", [2, 7])
def test_out_of_range_chain(n):
    with pytest.raises(ValueError):
        chain_params(n)
    with pytest.raises(ValueError):
        bench_diag_chain(n, check=False)


def test_coupling_gradient_at_zero_coupling_is_expectation():
    x = chain_params(3, j_c=0.0)
    chain = FluxoniumChain(x, grid=SMALL)
    e0, g = chain.value_and_grad()
    # uncoupled ground state is the product of site ground states
    psi = [s.spectrum.eigenvectors[:, 0] for s in chain.sites]
    n_op = -1j * chain.d1
    for k in range(2):
        a = (psi[k].conj() @ n_op @ psi[k]).real
        b = (psi[k + 1].conj() @ n_op @ psi[k + 1]).real
        assert g[f"J_{k + 1}"] == pytest.approx(a * b, abs=1e-8)
    assert e0 == pytest.approx(sum(s.energies[0] for s in chain.sites), abs=1e-10)


def test_coupling_gradient_is_hellmann_feynman_expectation():
    # off-diagonal n terms: compare J derivative against <g| n_k n_(k+1) |g> built densely
    chain = FluxoniumChain(chain_params(3), grid=SMALL)
    e0, g = chain.value_and_grad()
    h = chain.hamiltonian().toarray()
    lam, vec = np.linalg.eigh(h)
    gs = vec[:, 0]
    L = chain.levels
    eye = np.eye(L)
    for k in range(2):
        ops = [eye] * 3
        ops[k], ops[k + 1] = chain.sites[k].d_proj, chain.sites[k + 1].d_proj
        m = np.kron(np.kron(ops[0], ops[1]), ops[2])
        assert g[f"J_{k + 1}"] == pytest.approx(-(gs @ m @ gs), rel=1e-10)
    assert e0 == pytest.approx(lam[0], abs=1e-12)


def test_chain_gradient_matches_finite_differences():
    x = chain_params(3)
    rep = check_gradient(lambda p: chain_energy(p), lambda p: chain_energy_and_grad(p)[1], x, rel_tol=1e-5, abs_floor=1e-8)
    assert rep.all_passed, "\n".join(rep.lines())


def test_sparse_path_agrees_with_dense(monkeypatch):
    x = chain_params(5)
    dense = FluxoniumChain(x, levels=3, grid=SMALL)
    assert dense.dim < DENSE_LIMIT
    e_dense, g_dense = dense.value_and_grad()
    monkeypatch.setattr("codesign.bench.DENSE_LIMIT", 10)
    e_sparse, g_sparse = FluxoniumChain(x, levels=3, grid=SMALL).value_and_grad()
    assert e_sparse == pytest.approx(e_dense, abs=1e-10)
    np.testing.assert_allclose(g_sparse.values, g_dense.values, rtol=1e-7, atol=1e-9)


def test_bench_report_fields():
    r = bench_diag_chain(3, repeats=2, check=False)
    assert r.dim == 125 and r.n_params == 11
    assert r.value_median > 0 and r.grad_median > 0
    assert r.ratio == pytest.approx(r.grad_median / r.value_median)
    assert r.speedup_vs_fd == pytest.approx(12 / r.ratio)
    d = r.to_dict()
    assert d["chain_defaults"]["phi_ext"] == math.pi
    assert len(d["value_seconds"]) == 2


def test_failed_check_blocks_timing(monkeypatch):
    from codesign import bench

    def broken(x, levels=None, seed=0):
        e, g = FluxoniumChain(x, levels, seed=seed).value_and_grad()
        return e, g.__class__(g.names, g.values * 1.01)

    monkeypatch.setattr(bench, "chain_energy_and_grad", broken)
    with pytest.raises(RuntimeError, match="finite-difference"):
        bench.bench_diag_chain(3, repeats=1)
