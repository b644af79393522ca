import functools
import json

import numpy as np
import pytest

from rodeo.errors import DimensionError, HermiticityError, ValidationError
from rodeo.hamiltonians import (
    AndersonParams,
    HeisenbergParams,
    alternating_bits,
    build_anderson,
    build_heisenberg,
    build_product_state,
    build_staggered_field,
    find_kmin,
    load_hamiltonian,
    product_state_index,
    save_hamiltonian,
    site_state,
    total_sz,
)

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]]),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def kron_site(op, j, L):
    """Pauli ``op`` on site j (1-based, site 1 leftmost) via explicit Kronecker products."""
    mats = [np.eye(2)] * L
    mats[j - 1] = PAULI[op]
    return functools.reduce(np.kron, mats)


def kron_heisenberg(L, J, h):
    H = np.zeros((2**L, 2**L), dtype=complex)
    for j in range(1, L + 1):
        k = j % L + 1
        for a in "xyz":
            H += J * kron_site(a, j, L) @ kron_site(a, k, L)
        H += h * kron_site("z", j, L)
    return H


@pytest.mark.parametrize("L,J,h", [(3, 1.0, 0.0), (4, 1.0, 3.0), (5, -0.7, 1.3)])
def test_heisenberg_matches_pauli_products(L, J, h):
    H = build_heisenberg(HeisenbergParams(L, J, h)).matrix
    np.testing.assert_allclose(H, kron_heisenberg(L, J, h).real, atol=1e-12)


def test_two_site_chain_counts_bond_once():
    H = build_heisenberg(HeisenbergParams(2, 1.0, 0.0))
    np.testing.assert_allclose(np.linalg.eigvalsh(H.matrix), [-3, 1, 1, 1])


def test_open_chain_drops_wraparound_bond():
    H = build_heisenberg(HeisenbergParams(3, 1.0, 0.0, periodic=False)).matrix
    ref = sum(kron_site(a, 1, 3) @ kron_site(a, 2, 3) + kron_site(a, 2, 3) @ kron_site(a, 3, 3) for a in "xyz")
    np.testing.assert_allclose(H, ref.real, atol=1e-12)


def test_spectrum_invariant_under_cyclic_relabel():
    L = 8
    H = build_heisenberg(HeisenbergParams(L, 1.0, 3.0)).matrix
    idx = np.arange(2**L)
    rotated = ((idx << 1) | (idx >> (L - 1))) & (2**L - 1)
    P = np.zeros((2**L, 2**L))
    P[rotated, idx] = 1
    np.testing.assert_allclose(P @ H @ P.T, H, atol=1e-12)
    np.testing.assert_allclose(np.linalg.eigvalsh(P @ H @ P.T), np.linalg.eigvalsh(H), atol=1e-9)


def test_magnetization_is_conserved():
    H = build_heisenberg(HeisenbergParams(6, 1.0, 2.0)).matrix
    S = total_sz(6)
    np.testing.assert_allclose(H @ S - S @ H, 0, atol=1e-12)


def test_product_state_ordering():
    assert product_state_index("0101010101") == 341
    psi = build_product_state("0101010101")
    assert psi[341] == 1 and np.count_nonzero(psi) == 1
    assert alternating_bits(5) == "01010"
    with pytest.raises(ValidationError):
        product_state_index("012")
    with pytest.raises(DimensionError):
        build_product_state("01", sites=3)


def test_staggered_field_ground_state():
    for L in (2, 5, 10):
        HI = np.diag(build_staggered_field(L).matrix)
        assert HI.min() == -L
        assert np.argmin(HI) == product_state_index(alternating_bits(L))
        assert np.count_nonzero(HI == -L) == 1


def test_heisenberg_limits():
    with pytest.raises(DimensionError):
        HeisenbergParams(13)
    with pytest.raises(ValidationError):
        HeisenbergParams(1)


def test_clean_ring_spectrum():
    for L in (4, 7, 100):
        H = build_anderson(AndersonParams(L, coefficients=(0.0,) * L))
        exact = np.sort(-2 * np.cos(2 * np.pi * np.arange(L) / L))
        np.testing.assert_allclose(np.linalg.eigvalsh(H.matrix), exact, atol=1e-10)


def test_ring_corners_and_diagonal():
    H = build_anderson(AndersonParams(5, coefficients=(1, 2, 3, 4, 5))).matrix
    assert H[0, 4] == H[4, 0] == -1
    np.testing.assert_array_equal(np.diag(H), [1, 2, 3, 4, 5])
    assert np.count_nonzero(H) == 5 + 10


def test_disorder_is_reproducible():
    p = AndersonParams(100, rms=0.5, seed=4)
    np.testing.assert_array_equal(p.disorder(), AndersonParams(100, rms=0.5, seed=4).disorder())
    np.testing.assert_array_equal(p.disorder(), np.random.default_rng(4).normal(0, 0.5, 100))
    assert find_kmin(p) == int(np.argmin(p.disorder()))
    meta = p.metadata()
    assert abs(meta["sample_rms"] - 0.5) < 0.15


def test_anderson_validation():
    with pytest.raises(DimensionError):
        AndersonParams(4, coefficients=(0, 0, 0))
    with pytest.raises(ValidationError):
        AndersonParams(4)
    with pytest.raises(ValidationError):
        site_state(4, 4)


def test_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    from rodeo.spectral import HermitianOperator

    H = HermitianOperator((a + a.conj().T) / 2)
    path = tmp_path / "h.json"
    save_hamiltonian(H, path)
    np.testing.assert_array_equal(load_hamiltonian(path).matrix, H.matrix)


def test_file_fills_missing_triangle(tmp_path):
    path = tmp_path / "h.json"
    path.write_text(json.dumps({"dim": 2, "entries": [[0, 0, 1, 0], [0, 1, 0, 2], [1, 1, -1, 0]]}))
    np.testing.assert_allclose(load_hamiltonian(path).matrix, [[1, 2j], [-2j, -1]])


def test_file_errors(tmp_path):
    path = tmp_path / "h.json"
    path.write_text(json.dumps({"dim": 2, "entries": [[0, 1, 1, 0], [1, 0, 2, 0]]}))
    with pytest.raises(HermiticityError):
        load_hamiltonian(path)
    path.write_text(json.dumps({"dim": 2, "entries": [[0, 0, 1, 0], [0, 0, 1, 0]]}))
    with pytest.raises(ValidationError, match="duplicate"):
        load_hamiltonian(path)
    path.write_text(json.dumps({"dim": 2, "entries": [[0, 2, 1, 0]]}))
    with pytest.raises(DimensionError):
        load_hamiltonian(path)
    path.write_text("{")
    with pytest.raises(ValidationError):
        load_hamiltonian(path)
