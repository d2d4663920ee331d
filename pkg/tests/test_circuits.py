import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from codesign.circuits import (
    ControlParams,
    Coupling,
    FluxoniumPair,
    FluxoniumParams,
    GaugeAmbiguityError,
    InvalidGridError,
    PhaseGrid,
    PhysicalConstants,
    Subsystem,
    TransmonParams,
    TrapezoidPulse,
    charge_squared,
    coupled_system,
    fluxonium_hamiltonian,
    fluxonium_operators,
    transmon_hamiltonian,
    trapezoid_flux,
)
from codesign.tables import ISWAP_INITIAL, ISWAP_TABLES

Q1 = FluxoniumParams(1.483, 2.082, 0.626)


def low_levels(p, phi_ext, n, k=6):
    h = fluxonium_hamiltonian(p, phi_ext, PhaseGrid(-5 * math.pi, 5 * math.pi, n))
    return np.linalg.eigvalsh(h)[:k]


# -- grid and operators -----------------------------------------------------------


def test_grid_validation():
    with pytest.raises(InvalidGridError):
        PhaseGrid(0.0, 1.0, 2)
    with pytest.raises(InvalidGridError):
        PhaseGrid(1.0, 1.0, 10)
    assert PhaseGrid(-1.0, 1.0, 5).spacing == pytest.approx(0.5)


def test_phase_operator_three_points():
    phi, n = fluxonium_operators(PhaseGrid(-math.pi, math.pi, 3))
    np.testing.assert_array_equal(phi, np.diag([-math.pi, 0.0, math.pi]))
    assert np.array_equal(phi, phi.conj().T)
    np.testing.assert_allclose(n, n.conj().T, atol=0)


def test_charge_squared_is_square_of_charge():
    # n^2 from the sinc basis is a negative Laplacian: symmetric, positive definite
    n2 = charge_squared(PhaseGrid())
    assert np.allclose(n2, n2.T)
    assert np.linalg.eigvalsh(n2)[0] > 0


def test_harmonic_ground_state_charge_fluctuation():
    # 4 E_C n^2 + E_L phi^2 / 2 has <n^2> = sqrt(E_L / (8 E_C)) / 2 in its ground state
    p = FluxoniumParams(1.0, 1e-300, 0.5)
    grid = PhaseGrid()
    h = 4 * p.e_c * charge_squared(grid) + np.diag(0.5 * p.e_l * grid.points**2)
    psi = np.linalg.eigh(h)[1][:, 0]
    expect = float(psi @ charge_squared(grid) @ psi)
    assert expect == pytest.approx(0.5 * math.sqrt(p.e_l / (8 * p.e_c)), rel=1e-4)


def test_harmonic_level_spacing():
    lam = low_levels(FluxoniumParams(1.0, 1e-300, 0.5), 0.0, 400, 4)
    np.testing.assert_allclose(np.diff(lam), 2.0, atol=1e-4)


def test_qubit1_e01_matches_fine_grid():
    coarse = low_levels(Q1, math.pi, 400, 2)
    fine = low_levels(Q1, math.pi, 1600, 2)
    assert abs((coarse[1] - coarse[0]) - (fine[1] - fine[0])) < 1e-5


def test_parity_at_half_flux():
    # the five states kept by the truncation; higher box states feel the
    # asymmetric walls of [-5pi, 5pi] about the potential minimum at -pi
    grid = PhaseGrid()
    _, vecs = np.linalg.eigh(fluxonium_hamiltonian(Q1, math.pi, grid))
    shifted = grid.points + math.pi
    for k in range(5):
        assert abs(np.sum(vecs[:, k] ** 2 * shifted)) < 1e-8


@pytest.mark.parametrize("table", ["initial", "normal", "robust"])
def test_grid_convergence_at_table_points(table):
    t = ISWAP_TABLES[table]
    for q in (1, 2):
        p = FluxoniumParams(t[f"E_C{q}"], t[f"E_J{q}"], t[f"E_L{q}"])
        for phi_ext in (math.pi, math.pi + t["phi_p"]):
            a = low_levels(p, phi_ext, 400, 5)
            b = low_levels(p, phi_ext, 800, 5)
            assert np.max(np.abs(a - b)) < 1e-6


@settings(max_examples=8)
@example(2.0, 8.0, 0.5)
@given(st.floats(0.5, 2.0), st.floats(2.0, 8.0), st.floats(0.5, 1.5))
def test_grid_convergence_within_bounds(e_c, e_j, e_l):
    """Lowest six levels at the idle bias move < 1e-6 GHz from 400 to 800 points."""
    p = FluxoniumParams(e_c, e_j, e_l)
    a = low_levels(p, math.pi, 400)
    b = low_levels(p, math.pi, 800)
    assert np.max(np.abs(a - b)) < 1e-6


@given(st.floats(0.3, 3.0), st.floats(0.5, 8.0), st.floats(0.2, 2.0), st.floats(-4, 4))
def test_fluxonium_hamiltonian_hermitian(e_c, e_j, e_l, phi_ext):
    h = fluxonium_hamiltonian(FluxoniumParams(e_c, e_j, e_l), phi_ext, PhaseGrid(n_basis=60))
    assert np.array_equal(h, h.T)


def test_params_must_be_positive():
    with pytest.raises(ValueError):
        FluxoniumParams(1.0, -2.0, 0.5)
    with pytest.raises(ValueError):
        TransmonParams(0.0, 10.0)
    with pytest.raises(ValueError):
        ControlParams(0.0, 10.0, 0.2)


def test_kt_over_h_from_temperature():
    assert PhysicalConstants().kT_over_h == pytest.approx(1.0418, abs=5e-4)


# -- transmon -----------------------------------------------------------------------


def test_transmon_effective_josephson_energy():
    p = TransmonParams(0.28, 16.5)
    h0 = transmon_hamiltonian(p, 0.0)
    assert h0[0, 1] == -0.5 * p.e_j
    hpi = transmon_hamiltonian(p, math.pi)
    np.testing.assert_allclose(hpi - np.diag(np.diag(hpi)), 0.0, atol=1e-15)
    n = np.arange(-10, 11)
    np.testing.assert_allclose(np.linalg.eigvalsh(hpi), np.sort(4 * p.e_c * n**2), atol=1e-12)


def test_transmon_m_type_frequency():
    lam = np.linalg.eigvalsh(transmon_hamiltonian(TransmonParams(0.28, 16.5), 0.0))
    assert lam[1] - lam[0] == pytest.approx(math.sqrt(8 * 0.28 * 16.5) - 0.28, rel=0.015)


# -- pulse ----------------------------------------------------------------------------


C = ControlParams(2.31, 32.0, 0.254)


def test_trapezoid_examples():
    assert trapezoid_flux(C, 0.0) == math.pi
    for t in (C.t_ramp, 10.0, C.t_ramp + C.t_plateau):
        assert trapezoid_flux(C, t) == pytest.approx(math.pi + C.phi_p, abs=1e-15)
    assert trapezoid_flux(C, C.gate_time) == pytest.approx(math.pi, abs=1e-15)
    assert C.gate_time == pytest.approx(2 * 2.31 + 32.0)


@given(
    st.floats(0.1, 5.0),
    st.floats(0.0, 40.0),
    st.floats(-1.0, 1.0),
    st.floats(0.0, 1.0),
    st.floats(1e-6, 1e-2),
)
def test_trapezoid_lipschitz(t_ramp, t_plateau, phi_p, frac, delta):
    c = ControlParams(t_ramp, t_plateau, phi_p)
    t = frac * c.gate_time
    jump = abs(trapezoid_flux(c, t + delta) - trapezoid_flux(c, t))
    assert jump <= abs(phi_p) * delta / t_ramp * (1 + 1e-9) + 1e-15


@given(st.floats(0.5, 4.0), st.floats(0.0, 30.0), st.floats(-0.5, 0.5), st.lists(st.floats(0, 1), min_size=1, max_size=20))
def test_pulse_class_matches_function(t_ramp, t_plateau, phi_p, fracs):
    c = ControlParams(t_ramp, t_plateau, phi_p)
    ts = np.array(fracs) * c.gate_time
    got = TrapezoidPulse().offset(c.as_array(), ts)
    want = [trapezoid_flux(c, t) - math.pi for t in ts]
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_pulse_partials_finite_difference():
    pulse = TrapezoidPulse()
    c = np.array([2.0, 10.0, 0.3])
    ts = np.array([0.7, 1.5, 5.0, 12.5, 13.9])
    dc, dt = pulse.partials(c, ts)
    h = 1e-7
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (pulse.offset(c + e, ts) - pulse.offset(c - e, ts)) / (2 * h)
        np.testing.assert_allclose(dc[:, k], fd, atol=1e-7)
    fd_t = (pulse.offset(c, ts + h) - pulse.offset(c, ts - h)) / (2 * h)
    np.testing.assert_allclose(dt, fd_t, atol=1e-7)


# -- coupled systems -------------------------------------------------------------------


def pair(j_c=0.143, levels=5, grid=PhaseGrid()):
    d = dict(ISWAP_INITIAL, J_C=j_c)
    return FluxoniumPair.from_dict(d, grid, levels)


def test_uncoupled_drift_is_sum_of_levels():
    sysm = pair(j_c=0.0).build()
    d = sysm.drift
    assert np.all(d - np.diag(np.diag(d)) == 0)
    e1, e2 = (s.eigenvalues[:5] for s in sysm.spectra)
    want = np.add.outer(e1, e2).ravel()
    np.testing.assert_allclose(np.diag(d), want, atol=1e-10)


def test_truncation_converged_against_twelve_levels():
    a = np.linalg.eigvalsh(pair(levels=5).build().drift)[:4]
    b = np.linalg.eigvalsh(pair(levels=12).build().drift)[:4]
    np.testing.assert_allclose(a, b, atol=1e-4)


def test_control_operator_acts_on_qubit2_only():
    sysm = pair().build()
    (c2,) = sysm.controls
    assert np.allclose(c2, c2.conj().T) and np.any(c2 != 0)
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 5))
    op1 = np.kron(a + a.T, np.eye(5))
    np.testing.assert_allclose(c2 @ op1, op1 @ c2, atol=1e-12)


def test_labels_are_a_bijection():
    sysm = pair().build()
    assert sorted(sysm.labels.values()) == list(range(25))
    assert sysm.labels[(0, 1)] == 1 and sysm.labels[(1, 0)] == 5


def test_degenerate_truncation_raises():
    sub = Subsystem(np.diag([0.0, 1.0, 1.0, 2.0]), np.eye(4))
    with pytest.raises(GaugeAmbiguityError):
        coupled_system([sub, sub], [Coupling(0, 1, "J", 0.1)], 2)


def test_backward_matches_finite_differences():
    """Random linear functional of drift and control, differentiated through truncation."""
    grid = PhaseGrid(n_basis=120)
    base = pair(grid=grid)
    rng = np.random.default_rng(5)
    n = 25
    wd = rng.standard_normal((n, n))
    wd = wd + wd.T
    wc = rng.standard_normal((n, n))
    wc = wc + wc.T

    def loss(d):
        s = FluxoniumPair.from_dict(d, grid, 5).build()
        return float(np.sum(wd * s.drift) + np.sum(wc * s.controls[0]))

    sysm = base.build()
    grads = sysm.backward(wd, [wc])
    d0 = base.as_dict()
    for name, v in d0.items():
        h = 1e-6 * max(1.0, abs(v))
        fd = (loss(dict(d0, **{name: v + h})) - loss(dict(d0, **{name: v - h}))) / (2 * h)
        assert grads[name] == pytest.approx(fd, rel=1e-5, abs=1e-7), name
