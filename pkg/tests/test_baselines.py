import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from rodeo.baselines import (
    AdiabaticConfig,
    QpeConfig,
    _integrate,
    adiabatic_evolve,
    compare_methods,
    eigenphases,
    outcome_distribution,
    precondition_then_rodeo,
    qpe_circuit_reference,
    qpe_filter,
    qpe_kernel,
)
from rodeo.errors import ConvergenceError, DimensionError, ValidationError
from rodeo.hamiltonians import (
    HeisenbergParams,
    alternating_bits,
    build_heisenberg,
    build_product_state,
    build_staggered_field,
)
from rodeo.spectral import (
    EigenDecomposition,
    HermitianOperator,
    SpectralState,
    eigendecompose,
    project_to_eigenbasis,
    reconstruct,
)


def small_chain(L=4):
    H = build_heisenberg(HeisenbergParams(L, 1.0, 3.0))
    return H, build_staggered_field(L), build_product_state(alternating_bits(L))


def random_hermitian(seed, d):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


# adiabatic evolution


def test_adiabatic_matches_ode_solver():
    H, HI, psi = small_chain()
    T = 3.0
    A, B = HI.matrix.astype(complex), H.matrix.astype(complex)

    def rhs(t, y):
        s = math.sin(math.pi * t / (2 * T)) ** 2
        return -1j * ((1 - s) * A + s * B) @ y

    ref = solve_ivp(rhs, (0, T), psi.astype(complex), rtol=1e-11, atol=1e-12, method="DOP853").y[:, -1]
    run = adiabatic_evolve(psi, HI, H, AdiabaticConfig(T, steps=32, convergence_tol=1e-8))
    assert np.linalg.norm(run.state - ref) < 1e-6


def test_adiabatic_tiny_time_is_identity():
    H, HI, psi = small_chain()
    run = adiabatic_evolve(psi, HI, H, AdiabaticConfig(1e-12))
    assert np.linalg.norm(run.state - psi) < 1e-10


def test_adiabatic_keeps_common_eigenvector():
    H, HI, _ = small_chain()
    # all-up state is an eigenvector of both endpoints
    up = np.zeros(16)
    up[0] = 1
    run = adiabatic_evolve(up, HI, H, AdiabaticConfig(5.0), target=up)
    assert abs(run.overlap - 1) < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.1, 5.0))
def test_adiabatic_preserves_norm(seed, T):
    A, B = random_hermitian(seed, 6), random_hermitian(seed + 1, 6)
    v = np.random.default_rng(seed).normal(size=6) + 0j
    v /= np.linalg.norm(v)
    run = adiabatic_evolve(v, A, B, AdiabaticConfig(T, convergence_tol=1e-5))
    assert abs(np.linalg.norm(run.state) - 1) < 1e-10


def test_midpoint_rule_is_second_order():
    import scipy.sparse as sp

    H, HI, psi = small_chain()
    A, B = sp.csr_matrix(HI.matrix), sp.csr_matrix(H.matrix)
    x = [_integrate(psi.astype(complex), A, B, 4.0, n) for n in (16, 32, 64)]
    ratio = np.linalg.norm(x[0] - x[1]) / np.linalg.norm(x[1] - x[2])
    assert 3.5 < ratio < 4.5


def test_adiabatic_validation():
    H, HI, psi = small_chain()
    with pytest.raises(ValidationError):
        AdiabaticConfig(0.0)
    with pytest.raises(ValidationError):
        AdiabaticConfig(1.0, steps=1)
    with pytest.raises(DimensionError):
        adiabatic_evolve(psi[:8] * math.sqrt(1), HI, H, AdiabaticConfig(1.0))
    with pytest.raises(ValidationError):
        adiabatic_evolve(2 * psi, HI, H, AdiabaticConfig(1.0))
    with pytest.raises(ConvergenceError):
        adiabatic_evolve(psi, HI, H, AdiabaticConfig(50.0, steps=2, convergence_tol=1e-14, max_doublings=2))


# preconditioning


def test_precondition_without_evolution_gives_bare_overlap(heisenberg):
    H, psi, eig, w, HI = heisenberg
    row = precondition_then_rodeo(psi, HI, H, 0.0, -18.06, 5.0, cycles=(0,), samples=2, eig=eig)
    assert abs(row.mean_overlap[0] - 0.110) < 5e-4
    assert abs(row.target_energy + 18.0618) < 1e-4


def test_precondition_rodeo_overlaps_increase(heisenberg):
    H, psi, eig, _, HI = heisenberg
    row = precondition_then_rodeo(psi, HI, H, 0.0, -18.06, 5.0, cycles=(0, 3, 6, 9), samples=50, eig=eig)
    assert np.all(np.diff(row.mean_overlap) > 0)


# phase estimation


def two_level(e, amps):
    eig = EigenDecomposition(np.asarray(e, float), np.eye(len(e)))
    a = np.asarray(amps, complex)
    return eig, SpectralState(a / np.linalg.norm(a))


def test_exact_phase_gives_certain_readout():
    eig, s = two_level([0.25], [1])
    cfg = QpeConfig(3, energy_window=(0.0, 1.0))
    dist = outcome_distribution(s, eig, cfg)
    assert abs(dist[2] - 1) < 1e-14
    assert dist.sum() == pytest.approx(1)


def test_two_phase_distribution():
    eig, s = two_level([0.125, 0.625], [math.sqrt(0.3), math.sqrt(0.7)])
    dist = outcome_distribution(s, eig, QpeConfig(3, energy_window=(0.0, 1.0)))
    expected = np.zeros(8)
    expected[1], expected[5] = 0.3, 0.7
    np.testing.assert_allclose(dist, expected, atol=1e-14)
    res = qpe_filter(s, eig, QpeConfig(3, energy_window=(0.0, 1.0)), outcome=5)
    assert res.probability == pytest.approx(0.7)
    np.testing.assert_allclose(np.abs(res.state.amplitudes), [0, 1], atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 7))
def test_outcomes_sum_to_one(seed, bits):
    rng = np.random.default_rng(seed)
    e = np.sort(rng.uniform(-3, 3, 5))
    eig, s = two_level(e, rng.normal(size=5) + 1j * rng.normal(size=5))
    assert abs(outcome_distribution(s, eig, QpeConfig(bits)).sum() - 1) < 1e-12


def test_zero_bits_is_identity():
    eig, s = two_level([-1.0, 2.0], [0.6, 0.8])
    res = qpe_filter(s, eig, QpeConfig(0), outcome=0)
    assert res.probability == pytest.approx(1)
    assert res.total_time == 0
    np.testing.assert_allclose(np.abs(res.state.amplitudes), [0.6, 0.8])


def test_window_must_contain_spectrum():
    eig, s = two_level([-1.0, 2.0], [0.6, 0.8])
    with pytest.raises(ValidationError, match="outside window"):
        qpe_filter(s, eig, QpeConfig(3, energy_window=(0.0, 3.0)), outcome=0)
    with pytest.raises(ValidationError):
        QpeConfig(-1)


def test_kernel_limits():
    assert qpe_kernel(0.0, 0, 5) == 1
    # near-zero argument agrees with the explicit sum
    x = 1e-9
    direct = np.mean(np.exp(1j * np.arange(32) * x))
    assert abs(qpe_kernel(x, 0, 5) - direct) < 1e-14
    for phi in (0.3, 2.0, 6.1):
        for m in range(8):
            direct = np.mean(np.exp(1j * np.arange(8) * (phi - 2 * np.pi * m / 8)))
            assert abs(qpe_kernel(phi, m, 3) - direct) < 1e-13


def test_kernel_matches_gate_level_circuit():
    H = random_hermitian(7, 4)
    psi = np.random.default_rng(7).normal(size=4) + 0j
    psi /= np.linalg.norm(psi)
    cfg = QpeConfig(4, energy_window=(-8.0, 8.0))
    eig = eigendecompose(HermitianOperator(H))
    s = project_to_eigenbasis(psi, eig)
    probs, posts = qpe_circuit_reference(H, psi, cfg)
    np.testing.assert_allclose(probs, outcome_distribution(s, eig, cfg), atol=1e-12)
    m = int(np.argmax(probs))
    mine = reconstruct(qpe_filter(s, eig, cfg, outcome=m).state, eig)
    assert abs(abs(np.vdot(mine, posts[m])) - 1) < 1e-10


def test_default_window_and_time():
    cfg = QpeConfig(3).resolve([-2.0, 4.0])
    assert cfg.energy_window == (-3.0, 5.0)
    assert cfg.base_time == pytest.approx(2 * math.pi / 8)
    assert cfg.total_time == pytest.approx(7 * 2 * math.pi / 8)
    np.testing.assert_allclose(eigenphases([-3.0, 1.0], cfg.energy_window), [0, math.pi])


# method comparison


def test_comparison_at_zero_time_is_bare_residual():
    H, HI, psi = small_chain()
    eig = eigendecompose(H)
    s = project_to_eigenbasis(psi, eig)
    E = float(eig.energies[np.argmax(np.abs(s.amplitudes))])
    p = float(np.sum(np.abs(s.amplitudes[np.abs(eig.energies - E) < 1e-9]) ** 2))
    rows = compare_methods(psi, HI, H, E, [1e-9], replicas=3, eig=eig)
    methods = {r.method: r for r in rows}
    assert set(methods) == {"rodeo", "FA", "FG", "qpe", "adiabatic"}
    for name in ("rodeo", "FA", "FG", "qpe"):
        assert methods[name].log_delta == pytest.approx(math.log10(math.sqrt(1 - p)), abs=1e-6)
    assert methods["adiabatic"].log_delta == pytest.approx(math.log10(math.sqrt(1 - p)), abs=1e-4)


def test_comparison_rejects_bad_budget():
    H, HI, psi = small_chain()
    with pytest.raises(ValidationError):
        compare_methods(psi, HI, H, 0.0, [0.0])
