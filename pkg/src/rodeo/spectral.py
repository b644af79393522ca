"""Dense Hermitian linear algebra and eigenbasis state bookkeeping.

Every state handled by the rodeo engine lives in the eigenbasis of the object
Hamiltonian, where time evolution and the cycle filters are diagonal. This
module owns that basis: the eigendecomposition, the projection of
computational-basis vectors onto it, phase evolution and spectral weights.

Arrays stored on the dataclasses are made read-only so values can be shared
between threads without copying.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, HermiticityError, ValidationError

HERMITIAN_ATOL = 1e-12
NORM_ATOL = 1e-10
DEGENERACY_RTOL = 1e-9
MAX_DIM = 4096


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def check_hermitian(matrix: np.ndarray, atol: float = HERMITIAN_ATOL) -> None:
    """Raise HermiticityError naming the worst offending (i, j) pair."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix has non-finite entries")
    diff = np.abs(m - m.conj().T)
    worst = np.unravel_index(np.argmax(diff), diff.shape)
    if diff[worst] > atol:
        i, j = (int(x) for x in worst)
        raise HermiticityError(
            f"matrix is not Hermitian: |H[{i},{j}] - conj(H[{j},{i}])| = "
            f"{diff[worst]:.3e} exceeds {atol:.1e}"
        )


@dataclass(frozen=True)
class HermitianOperator:
    """A dense d x d Hermitian matrix.

    Real symmetric input keeps a float64 dtype, which makes the
    eigendecomposition several times cheaper than the complex path.
    """

    matrix: np.ndarray
    atol: float = field(default=HERMITIAN_ATOL, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if not (np.isrealobj(m) or np.iscomplexobj(m)) or m.dtype == object:
            raise ValidationError("matrix must be numeric")
        if np.iscomplexobj(m):
            m = m.astype(np.complex128)
        else:
            m = m.astype(np.float64)
        check_hermitian(m, self.atol)
        if m.shape[0] < 1:
            raise DimensionError("dimension must be at least 1")
        if m.shape[0] > MAX_DIM:
            raise DimensionError(f"dimension {m.shape[0]} exceeds dense limit {MAX_DIM}")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


@dataclass(frozen=True)
class EigenDecomposition:
    """Ascending eigenvalues with orthonormal eigenvectors stored as columns."""

    energies: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "energies", _frozen(np.asarray(self.energies, dtype=float)))
        object.__setattr__(self, "vectors", _frozen(self.vectors))

    @property
    def source_dim(self) -> int:
        return self.vectors.shape[0]

    def __len__(self) -> int:
        return self.energies.shape[0]


@dataclass(frozen=True)
class SpectralState:
    """Amplitudes over the eigenbasis plus the probability of the record so far."""

    amplitudes: np.ndarray
    survival_probability: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.complex128)
        if a.ndim != 1:
            raise DimensionError("amplitudes must be one-dimensional")
        norm = np.linalg.norm(a)
        if abs(norm - 1.0) > NORM_ATOL:
            raise ValidationError(f"state is not normalized (norm {norm!r})")
        p = float(self.survival_probability)
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"survival probability {p!r} outside [0, 1]")
        object.__setattr__(self, "amplitudes", _frozen(a))
        object.__setattr__(self, "survival_probability", p)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]


@dataclass(frozen=True)
class SpectralWeights:
    """Raw per-eigenvector weights and the same weights merged by level.

    ``level_energies``/``level_weights`` sum the contributions of exactly
    degenerate eigenvectors, which is what an energy scan can observe.
    """

    weights: np.ndarray
    energies: np.ndarray
    level_energies: np.ndarray = None
    level_weights: np.ndarray = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        e = np.asarray(self.energies, dtype=float)
        if w.shape != e.shape or w.ndim != 1:
            raise DimensionError("weights and energies must be matching 1-D arrays")
        if np.any(w < 0):
            raise ValidationError("weights must be non-negative")
        if abs(w.sum() - 1.0) > NORM_ATOL:
            raise ValidationError(f"weights sum to {w.sum()!r}, expected 1")
        if self.level_energies is None:
            le, lw = merge_levels(e, w)
        else:
            le, lw = self.level_energies, self.level_weights
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "energies", _frozen(e))
        object.__setattr__(self, "level_energies", _frozen(np.asarray(le, dtype=float)))
        object.__setattr__(self, "level_weights", _frozen(np.asarray(lw, dtype=float)))

    def occupied(self, floor: float = 0.0):
        """Merged levels whose weight exceeds ``floor``."""
        keep = self.level_weights > floor
        return self.level_energies[keep], self.level_weights[keep]


def merge_levels(energies, weights, rtol: float = DEGENERACY_RTOL):
    """Sum weights of consecutive sorted energies closer than rtol*max(1, |E|).

    Merged level energy is the mean of its members.
    """
    energies = np.asarray(energies, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(energies, kind="stable")
    energies, weights = energies[order], weights[order]
    out_e, out_w = [], []
    start = 0
    for i in range(1, len(energies) + 1):
        if i == len(energies) or (
            energies[i] - energies[i - 1] > rtol * max(1.0, abs(energies[i - 1]))
        ):
            out_e.append(float(energies[start:i].mean()))
            out_w.append(float(weights[start:i].sum()))
            start = i
    return np.array(out_e), np.array(out_w)


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    # Largest-magnitude entry of each column made real positive; first index wins ties.
    idx = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[idx, np.arange(vectors.shape[1])]
    phases = pivots / np.abs(pivots)
    return vectors / phases if np.iscomplexobj(vectors) else vectors * np.sign(pivots)


def eigendecompose(H: HermitianOperator) -> EigenDecomposition:
    if not isinstance(H, HermitianOperator):
        H = HermitianOperator(H)
    energies, vectors = np.linalg.eigh(H.matrix)
    return EigenDecomposition(energies, _fix_phases(vectors))


def _as_vector(psi) -> np.ndarray:
    v = np.asarray(psi, dtype=np.complex128)
    if v.ndim != 1:
        raise DimensionError("state vector must be one-dimensional")
    if not np.all(np.isfinite(v)):
        raise ValidationError("state vector has non-finite entries")
    return v


def project_to_eigenbasis(psi, eig: EigenDecomposition) -> SpectralState:
    v = _as_vector(psi)
    if v.shape[0] != eig.source_dim:
        raise DimensionError(
            f"state has dimension {v.shape[0]}, eigenbasis has {eig.source_dim}"
        )
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > NORM_ATOL:
        raise ValidationError(f"input state is not normalized (norm {norm!r})")
    a = eig.vectors.conj().T @ v
    # Absorb the O(eps) drift of the unitary transform.
    return SpectralState(a / np.linalg.norm(a))


def reconstruct(state: SpectralState, eig: EigenDecomposition) -> np.ndarray:
    """Map eigenbasis amplitudes back to the computational basis."""
    return eig.vectors @ state.amplitudes


def evolve_phase(state: SpectralState, eig: EigenDecomposition, t: float) -> SpectralState:
    t = float(t)
    if not np.isfinite(t):
        raise ValidationError("evolution time must be finite")
    a = np.exp(-1j * eig.energies * t) * state.amplitudes
    return SpectralState(a, state.survival_probability)


def weights_of(state: SpectralState, eig: EigenDecomposition) -> SpectralWeights:
    w = np.abs(state.amplitudes) ** 2
    return SpectralWeights(w / w.sum(), eig.energies)


def initial_weights(psi, eig: EigenDecomposition) -> SpectralWeights:
    """Initial-state spectral function of a computational-basis vector."""
    return weights_of(project_to_eigenbasis(psi, eig), eig)
