"""Model Hamiltonians, product initial states and the JSON COO file format.

Spin conventions: sigma^z|0> = +|0>, sigma^z|1> = -|1>. Spin sites are
numbered from 1 and site 1 is the most significant bit of the basis index, so
the bit string "0101" is basis state 0b0101 = 5. Lattice sites of the
single-particle Anderson model are numbered from 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, HermiticityError, ValidationError
from .spectral import HermitianOperator

MAX_SITES = 12
FILE_HERMITIAN_ATOL = 1e-9


@dataclass(frozen=True)
class HeisenbergParams:
    sites: int
    J: float = 1.0
    h: float = 0.0
    periodic: bool = True

    def __post_init__(self):
        if int(self.sites) != self.sites or self.sites < 2:
            raise ValidationError("Heisenberg chain needs at least 2 sites")
        if self.sites > MAX_SITES:
            raise DimensionError(f"{self.sites} sites exceeds the {MAX_SITES}-site dense limit")


@dataclass(frozen=True)
class AndersonParams:
    """Ring of ``sites`` lattice sites with diagonal disorder.

    Give either explicit ``coefficients`` or a Gaussian ``rms`` and ``seed``.
    """

    sites: int
    coefficients: tuple | None = None
    rms: float | None = None
    seed: int = 0

    def __post_init__(self):
        if int(self.sites) != self.sites or self.sites < 2:
            raise ValidationError("Anderson ring needs at least 2 sites")
        if self.coefficients is not None:
            c = tuple(float(x) for x in self.coefficients)
            if len(c) != self.sites:
                raise DimensionError(
                    f"{len(c)} disorder coefficients given for {self.sites} sites"
                )
            object.__setattr__(self, "coefficients", c)
        elif self.rms is None or not self.rms > 0:
            raise ValidationError("disorder needs explicit coefficients or rms > 0")

    def disorder(self) -> np.ndarray:
        """The diagonal c_k; Gaussian draws are bit-reproducible for a given seed."""
        if self.coefficients is not None:
            return np.array(self.coefficients, dtype=float)
        rng = np.random.default_rng(self.seed)
        return rng.normal(0.0, self.rms, self.sites)

    def metadata(self) -> dict:
        c = self.disorder()
        return {
            "sites": self.sites,
            "rms": self.rms,
            "seed": self.seed if self.coefficients is None else None,
            "sample_mean": float(c.mean()),
            "sample_rms": float(np.sqrt(np.mean(c**2))),
        }


def _bits(sites: int) -> np.ndarray:
    """(sites, 2**sites) array of occupation bits, row j-1 for spin site j."""
    idx = np.arange(2**sites)
    shifts = np.arange(sites - 1, -1, -1)
    return (idx[None, :] >> shifts[:, None]) & 1


def _bonds(sites: int, periodic: bool):
    pairs = {tuple(sorted((j, (j + 1) % sites))) for j in range(sites if periodic else sites - 1)}
    return sorted(pairs)


def build_heisenberg(p: HeisenbergParams) -> HermitianOperator:
    """J sum_<jk> sigma_j . sigma_k + h sum_j sigma^z_j on a chain of spins."""
    L, d = p.sites, 2**p.sites
    bits = _bits(L)
    z = 1 - 2 * bits
    idx = np.arange(d)
    H = np.zeros((d, d))
    diag = p.h * z.sum(axis=0).astype(float)
    for j, k in _bonds(L, p.periodic):
        diag += p.J * z[j] * z[k]
        # XX + YY = 2 (s+ s- + s- s+) swaps antiparallel neighbours.
        anti = bits[j] != bits[k]
        flipped = idx ^ ((1 << (L - 1 - j)) | (1 << (L - 1 - k)))
        H[idx[anti], flipped[anti]] += 2.0 * p.J
    H[idx, idx] += diag
    return HermitianOperator(H)


def build_staggered_field(sites: int) -> HermitianOperator:
    """Diagonal sum_{j=1}^{L} (-1)^j sigma^z_j; ground state is |0101...>."""
    if sites < 1:
        raise ValidationError("need at least one site")
    if sites > MAX_SITES:
        raise DimensionError(f"{sites} sites exceeds the {MAX_SITES}-site dense limit")
    z = 1 - 2 * _bits(sites)
    signs = np.array([(-1) ** j for j in range(1, sites + 1)])
    return HermitianOperator(np.diag((signs[:, None] * z).sum(axis=0).astype(float)))


def product_state_index(bits: str) -> int:
    if not bits or set(bits) - {"0", "1"}:
        raise ValidationError(f"product state must be a non-empty 0/1 string, got {bits!r}")
    return int(bits, 2)


def build_product_state(bits: str, sites: int | None = None) -> np.ndarray:
    """Unit computational basis vector; the leftmost character is site 1."""
    index = product_state_index(bits)
    if sites is not None and len(bits) != sites:
        raise DimensionError(f"bit string has length {len(bits)}, system has {sites} sites")
    psi = np.zeros(2 ** len(bits), dtype=np.complex128)
    psi[index] = 1.0
    return psi


def alternating_bits(sites: int) -> str:
    return ("01" * sites)[:sites]


def build_anderson(p: AndersonParams) -> HermitianOperator:
    L = p.sites
    H = np.diag(p.disorder())
    k = np.arange(L)
    H[k, (k + 1) % L] = -1.0
    H[(k + 1) % L, k] = -1.0
    return HermitianOperator(H)


def find_kmin(p: AndersonParams) -> int:
    """Site of the lowest diagonal element; np.argmin already breaks ties low."""
    return int(np.argmin(p.disorder()))


def site_state(sites: int, k: int) -> np.ndarray:
    if not 0 <= k < sites:
        raise ValidationError(f"site {k} outside 0..{sites - 1}")
    psi = np.zeros(sites, dtype=np.complex128)
    psi[k] = 1.0
    return psi


def load_hamiltonian(path) -> HermitianOperator:
    """Read {"dim": d, "entries": [[row, col, re, im], ...]} (0-based).

    Entries may cover one triangle only; the other is filled by conjugate
    symmetry. Entries given on both sides must agree within 1e-9.
    """
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict) or "dim" not in doc or "entries" not in doc:
        raise ValidationError(f"{path}: expected an object with 'dim' and 'entries'")
    d = doc["dim"]
    if not isinstance(d, int) or d < 1:
        raise ValidationError(f"{path}: 'dim' must be a positive integer")
    H = np.zeros((d, d), dtype=np.complex128)
    given = np.zeros((d, d), dtype=bool)
    for n, entry in enumerate(doc["entries"]):
        if not isinstance(entry, (list, tuple)) or len(entry) != 4:
            raise ValidationError(f"{path}: entry {n} must be [row, col, re, im]")
        r, c, re, im = entry
        if not (isinstance(r, int) and isinstance(c, int)):
            raise ValidationError(f"{path}: entry {n} has non-integer indices")
        if not (0 <= r < d and 0 <= c < d):
            raise DimensionError(f"{path}: entry {n} index ({r}, {c}) outside dim {d}")
        if given[r, c]:
            raise ValidationError(f"{path}: duplicate entry ({r}, {c})")
        given[r, c] = True
        H[r, c] = complex(float(re), float(im))
    only_one = given & ~given.T
    H[only_one.T] = H.T.conj()[only_one.T]
    diff = np.abs(H - H.conj().T)
    if diff.max() > FILE_HERMITIAN_ATOL:
        i, j = np.unravel_index(np.argmax(diff), diff.shape)
        raise HermiticityError(
            f"{path}: entries ({i}, {j}) and ({j}, {i}) are not conjugate "
            f"(difference {diff[i, j]:.3e})"
        )
    H = (H + H.conj().T) / 2
    if not np.any(H.imag):
        H = H.real
    return HermitianOperator(H)


def save_hamiltonian(H: HermitianOperator, path) -> None:
    """Write the upper triangle (including the diagonal) in JSON COO form."""
    m = np.asarray(H.matrix)
    rows, cols = np.nonzero(np.triu(m))
    entries = [
        [int(r), int(c), float(m[r, c].real), float(np.imag(m[r, c]))]
        for r, c in zip(rows, cols)
    ]
    Path(path).write_text(json.dumps({"dim": int(m.shape[0]), "entries": entries}))


def total_sz(sites: int) -> np.ndarray:
    return np.diag((1 - 2 * _bits(sites)).sum(axis=0).astype(float))


__all__ = [
    "AndersonParams",
    "HeisenbergParams",
    "alternating_bits",
    "build_anderson",
    "build_heisenberg",
    "build_product_state",
    "build_staggered_field",
    "find_kmin",
    "load_hamiltonian",
    "product_state_index",
    "save_hamiltonian",
    "site_state",
    "total_sz",
]
