import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codesign.circuits import Coupling, FluxoniumPair, PhaseGrid, Subsystem, TrapezoidPulse, coupled_system
from codesign.evolution import SolverConfig, propagate, propagate_grad
from codesign.tables import ISWAP_INITIAL

PULSE = TrapezoidPulse()
COARSE = PhaseGrid(n_basis=150)


def diag_system(f1, f2):
    subs = [Subsystem(np.diag(f1), np.zeros((len(f1),) * 2)), Subsystem(np.diag(f2), np.zeros((len(f2),) * 2))]
    return coupled_system(subs, [Coupling(0, 1, "J", 0.0)], len(f1))


def test_zero_hamiltonian_is_identity():
    res = propagate(diag_system([0.0, 0.0], [0.0, 0.0]), tau=7.0, frame="bare")
    np.testing.assert_array_equal(res.u_full, np.eye(4))
    assert res.leakage == 0.0


@given(
    st.lists(st.floats(-3, 3), min_size=3, max_size=3, unique=True),
    st.lists(st.floats(-3, 3), min_size=3, max_size=3, unique=True),
    st.floats(0.01, 20.0),
)
def test_diagonal_drift_gives_phases(f1, f2, tau):
    sysm = diag_system(sorted(f1), sorted(f2))
    res = propagate(sysm, tau=tau, frame="bare")
    want = np.exp(-2j * np.pi * np.diag(sysm.drift) * tau)
    np.testing.assert_allclose(res.u_full, np.diag(want), atol=1e-10)
    assert res.leakage < 1e-14


def test_rejects_missing_duration():
    with pytest.raises(ValueError):
        propagate(diag_system([0.0, 1.0], [0.0, 2.0]))


@pytest.fixture(scope="module")
def initial():
    pair = FluxoniumPair.from_dict(ISWAP_INITIAL)
    c = np.array([ISWAP_INITIAL[n] for n in PULSE.names])
    return pair.build(), c


def test_unitarity_and_step_convergence(initial):
    sysm, c = initial
    res = propagate(sysm, PULSE, c)
    assert res.unitarity_deviation < 1e-8
    assert res.gate_time == pytest.approx(2 * c[0] + c[1])
    assert 0.0 <= res.leakage <= 1.0
    half = propagate(sysm, PULSE, c, cfg=SolverConfig(dt=0.001))
    assert np.max(np.abs(half.u_comp - res.u_comp)) < 1e-8


def test_leakage_formula(initial):
    sysm, c = initial
    res = propagate(sysm, PULSE, c)
    v = res.u_comp
    assert res.leakage == pytest.approx(1 - np.trace(v.conj().T @ v).real / 4, abs=1e-15)


def test_adjoint_is_linear_in_cotangent(initial):
    sysm, c = initial
    rng = np.random.default_rng(2)
    cot = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    g1 = propagate_grad(sysm, PULSE, c, cot)
    g2 = propagate_grad(sysm, PULSE, c, 2 * cot)
    for k in g1:
        assert g2[k] == 2 * g1[k]


def test_decoupled_qubit1_parameters_do_not_matter():
    # |u[01,01]|^2 only involves qubit 2 when J_C = 0
    pair = FluxoniumPair.from_dict(dict(ISWAP_INITIAL, J_C=0.0), COARSE)
    sysm = pair.build()
    c = np.array([1.0, 4.0, 0.25])
    u = propagate(sysm, PULSE, c).u_comp
    cot = np.zeros((4, 4), complex)
    cot[1, 1] = 2 * u[1, 1]
    g = propagate_grad(sysm, PULSE, c, cot)
    for name in ("E_C1", "E_J1", "E_L1"):
        assert abs(g[name]) < 1e-10
    assert abs(g["E_L2"]) > 1e-6


def test_gradient_matches_finite_differences_short_pulse():
    base = dict(ISWAP_INITIAL)
    c0 = np.array([1.0, 4.0, 0.25])
    rng = np.random.default_rng(9)
    cot = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))

    def loss(d, c):
        u = propagate(FluxoniumPair.from_dict(d, COARSE).build(), PULSE, c).u_comp
        return float(np.real(np.sum(np.conj(cot) * u)))

    g = propagate_grad(FluxoniumPair.from_dict(base, COARSE).build(), PULSE, c0, cot)
    for name, v in base.items():
        if name in PULSE.names:
            continue
        h = 1e-6 * max(1, abs(v))
        fd = (loss(dict(base, **{name: v + h}), c0) - loss(dict(base, **{name: v - h}), c0)) / (2 * h)
        assert g[name] == pytest.approx(fd, rel=1e-4, abs=1e-8), name
    for k, name in enumerate(PULSE.names):
        e = np.zeros(3)
        e[k] = 1e-6
        fd = (loss(base, c0 + e) - loss(base, c0 - e)) / 2e-6
        assert g[name] == pytest.approx(fd, rel=1e-4, abs=1e-8), name
