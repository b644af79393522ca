"""Rodeo cycles in the eigenbasis of the object Hamiltonian.

One cycle with evolution time t and filter energy E multiplies each
eigencomponent a_j by

    success (ancilla read as |1>):  (1 + exp(-i (E_j - E) t)) / 2
    failure (ancilla read as |0>):  (1 - exp(-i (E_j - E) t)) / 2

so |success|^2 = cos^2[(E_j - E) t / 2]. Times are Gaussian with mean zero
and a chosen RMS. Post-selected runs keep only the success branch and track
its joint probability; sampled runs draw every ancilla outcome.

``full_statevector_reference`` simulates the ancilla + object register
explicitly, gate by gate, and serves as the independent check of the
eigenbasis arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import (
    AmbiguousTargetError,
    DegenerateBranchError,
    DimensionError,
    UnderflowError,
    ValidationError,
)
from .spectral import (
    DEGENERACY_RTOL,
    EigenDecomposition,
    HermitianOperator,
    SpectralState,
    SpectralWeights,
)

UNDERFLOW_FLOOR = 1e-300
REFERENCE_MAX_DIM = 64
TIME_ACCOUNTING = ("sum-abs", "n-times-trms")


def _rng(seed, key=()) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class CycleSchedule:
    times: np.ndarray
    t_rms: float
    seed: int
    key: tuple = ()

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.shape[0]

    def evolution_time(self, accounting: str = "sum-abs") -> float:
        return evolution_time(self.times, self.t_rms, accounting)


def evolution_time(times, t_rms: float, accounting: str = "sum-abs") -> float:
    """Total controlled-evolution time spent by a schedule."""
    if accounting == "sum-abs":
        return float(np.abs(times).sum())
    if accounting == "n-times-trms":
        return float(len(times) * t_rms)
    raise ValidationError(f"unknown time accounting {accounting!r}")


def draw_schedule(cycles: int, t_rms: float, seed: int, key: Sequence[int] = ()) -> CycleSchedule:
    """Gaussian times with mean 0 and standard deviation ``t_rms``.

    ``key`` selects an independent stream below the master seed, so a grid
    point or replica can draw its own schedule without coordinating with any
    other. Draws scale linearly in ``t_rms`` for a fixed seed.
    """
    if int(cycles) != cycles or cycles < 1:
        raise ValidationError(f"cycles must be a positive integer, got {cycles!r}")
    if not t_rms > 0:
        raise ValidationError(f"t_rms must be positive, got {t_rms!r}")
    times = t_rms * _rng(seed, key).standard_normal(int(cycles))
    return CycleSchedule(times, float(t_rms), seed, tuple(key))


@dataclass(frozen=True)
class RodeoConfig:
    cycles: int
    t_rms: float
    filter_energy: float
    seed: int = 0
    recenter: bool = False
    time_accounting: str = "sum-abs"

    def __post_init__(self):
        if int(self.cycles) != self.cycles or self.cycles < 1:
            raise ValidationError("cycles must be a positive integer")
        if not self.t_rms > 0:
            raise ValidationError("t_rms must be positive")
        if not np.isfinite(self.filter_energy):
            raise ValidationError("filter energy must be finite")
        if self.time_accounting not in TIME_ACCOUNTING:
            raise ValidationError(f"time_accounting must be one of {TIME_ACCOUNTING}")

    def schedule(self) -> CycleSchedule:
        return draw_schedule(self.cycles, self.t_rms, self.seed)


@dataclass(frozen=True)
class CycleOutcome:
    bit: int
    probability: float


@dataclass(frozen=True)
class TraceEntry:
    cycle: int
    delta: float
    filter_energy: float
    survival_probability: float
    elapsed_time: float


@dataclass(frozen=True)
class ResidualReport:
    """Size of the component orthogonal to the target eigenvector(s)."""

    target_index: int | tuple
    delta: float
    overlap: float
    per_cycle_trace: tuple = field(default=())


def _energies(eig) -> np.ndarray:
    if isinstance(eig, EigenDecomposition):
        return eig.energies
    if isinstance(eig, SpectralWeights):
        return eig.energies
    return np.asarray(eig, dtype=float)


def cycle_factors(E_j, E, t):
    """Success and failure amplitude factors for one cycle (broadcasting)."""
    phase = np.exp(-1j * (np.asarray(E_j, dtype=float) - E) * t)
    return (1 + phase) / 2, (1 - phase) / 2


def filter_products(energies, E: float, times) -> np.ndarray:
    """prod_n cos^2[(E_j - E) t_n / 2]; ``times`` of shape (..., N) gives (..., n_levels)."""
    times = np.asarray(times, dtype=float)
    detuning = np.asarray(energies, dtype=float) - E
    return (np.cos(detuning[:, None] * times[..., None, :] / 2) ** 2).prod(axis=-1)


def success_probability(weights: SpectralWeights, E: float, schedule: CycleSchedule) -> float:
    """sum_j w_j prod_n cos^2[(E_j - E) t_n / 2]."""
    prods = filter_products(weights.energies, E, schedule.times)
    return float(min(1.0, prods @ weights.weights))


def expected_success_probability(weights: SpectralWeights, E, cycles: int, t_rms: float):
    """Schedule average of the success probability for Gaussian times.

    Each cycle contributes (1 + exp(-(E_j - E)^2 t_rms^2 / 2)) / 2. ``E`` may be
    an array, in which case an array is returned.
    """
    E_arr = np.asarray(E, dtype=float)
    d = weights.energies[None, :] - np.atleast_1d(E_arr)[:, None]
    single = (1 + np.exp(-(d**2) * t_rms**2 / 2)) / 2
    out = (single**cycles) @ weights.weights
    return float(out[0]) if E_arr.ndim == 0 else out


def apply_cycle(
    state: SpectralState,
    eig,
    E: float,
    t: float,
    forced: int | None = None,
    rng: np.random.Generator | None = None,
):
    """Run one cycle and return the renormalized state and its outcome.

    Without ``forced`` the outcome is sampled from ``rng``. The state's
    survival probability is multiplied by the probability of the branch
    taken, i.e. it stays the probability of the recorded outcome sequence.
    """
    succ, fail = cycle_factors(_energies(eig), E, t)
    a = state.amplitudes
    branch = {1: a * succ, 0: a * fail}
    p1 = float(np.sum(np.abs(branch[1]) ** 2))
    p0 = float(np.sum(np.abs(branch[0]) ** 2))
    if forced is None:
        if rng is None:
            raise ValidationError("either a forced outcome or an rng is required")
        bit = 1 if rng.random() < p1 / (p0 + p1) else 0
    elif forced in (0, 1):
        bit = int(forced)
    else:
        raise ValidationError(f"forced outcome must be 0 or 1, got {forced!r}")
    prob = min(p1 if bit else p0, 1.0)
    if prob < UNDERFLOW_FLOOR:
        raise DegenerateBranchError(f"outcome {bit} has zero probability")
    new = SpectralState(branch[bit] / np.sqrt(prob), state.survival_probability * prob)
    return new, CycleOutcome(bit, prob)


def run_postselected(state: SpectralState, eig, config: RodeoConfig, schedule: CycleSchedule | None = None):
    """Apply ``config.cycles`` success branches at a fixed filter energy.

    Returns the normalized final state and the joint probability of reading
    every ancilla as |1>.
    """
    if schedule is None:
        schedule = config.schedule()
    if len(schedule) != config.cycles:
        raise ValidationError(
            f"schedule has {len(schedule)} times, config asks for {config.cycles} cycles"
        )
    succ, _ = cycle_factors(_energies(eig)[:, None], config.filter_energy, schedule.times[None, :])
    amps = state.amplitudes * succ.prod(axis=1)
    joint = min(float(np.sum(np.abs(amps) ** 2)), 1.0)
    if joint < UNDERFLOW_FLOOR:
        raise UnderflowError(
            f"joint success probability {joint:.3e} is below {UNDERFLOW_FLOOR:g}; use fewer cycles"
        )
    final = SpectralState(amps / np.sqrt(joint), state.survival_probability * joint)
    return final, joint


@dataclass(frozen=True)
class SampledRun:
    outcomes: tuple
    state: SpectralState

    @property
    def all_success(self) -> bool:
        return all(o.bit == 1 for o in self.outcomes)


def run_sampled(state: SpectralState, eig, config: RodeoConfig, rng: np.random.Generator | None = None) -> SampledRun:
    """Shot-level trajectory: every ancilla outcome drawn from its Born probability."""
    schedule = config.schedule()
    if rng is None:
        rng = _rng(config.seed, (1,))
    outcomes = []
    for t in schedule.times:
        state, outcome = apply_cycle(state, eig, config.filter_energy, t, rng=rng)
        outcomes.append(outcome)
    return SampledRun(tuple(outcomes), state)


def _target_mask(n: int, target) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(target))
    if idx.size == 0 or np.any(idx < 0) or np.any(idx >= n):
        raise ValidationError(f"target index {target!r} outside 0..{n - 1}")
    mask = np.zeros(n, dtype=bool)
    mask[idx] = True
    return mask


def residual(state: SpectralState, target, trace: Sequence[TraceEntry] = ()) -> ResidualReport:
    """Delta = norm of the part of ``state`` outside the target eigenvector(s).

    ``target`` is an index or a collection of indices spanning a degenerate
    level. Delta is summed from the orthogonal components directly so it
    stays accurate far below sqrt(machine epsilon).
    """
    w = np.abs(state.amplitudes) ** 2
    mask = _target_mask(w.shape[0], target)
    norm = w.sum()
    off = float(w[~mask].sum() / norm)
    target_out = int(target) if np.ndim(target) == 0 else tuple(int(i) for i in target)
    return ResidualReport(target_out, float(np.sqrt(off)), 1.0 - off, tuple(trace))


def _check_fg_args(p, N):
    p = np.asarray(p, dtype=float)
    N = np.asarray(N, dtype=float)
    if np.any(p <= 0) or np.any(p > 1):
        raise ValidationError("overlap probability p must lie in (0, 1]")
    if np.any(N < 0):
        raise ValidationError("number of cycles must be non-negative")
    return p, N


def _estimate(p, N, base):
    p, N = _check_fg_args(p, N)
    s = base ** (-N) * (1 - p)
    out = np.sqrt(s / (p + s))
    return float(out) if out.ndim == 0 else out


def estimate_FA(p, N):
    """Residual predicted by arithmetic-mean suppression, 1/2 per cycle."""
    return _estimate(p, N, 2.0)


def estimate_FG(p, N):
    """Residual predicted by geometric-mean suppression, 1/4 per cycle."""
    return _estimate(p, N, 4.0)


def _level_members(energies: np.ndarray, j: int) -> np.ndarray:
    tol = DEGENERACY_RTOL * max(1.0, abs(energies[j]))
    return np.flatnonzero(np.abs(energies - energies[j]) <= tol)


def _quadratic_peak(f_minus: float, f_zero: float, f_plus: float, step: float) -> float:
    """Offset of the vertex of the parabola through three equally spaced points."""
    curvature = f_plus - 2 * f_zero + f_minus
    if curvature >= 0:
        return step if f_plus > f_minus else (-step if f_minus > f_plus else 0.0)
    shift = step * (f_minus - f_plus) / (2 * curvature)
    return float(np.clip(shift, -step, step))


def select_target(weights: SpectralWeights, E_start: float, floor: float = 1e-6) -> int:
    occupied = np.flatnonzero(weights.weights > floor)
    if occupied.size == 0:
        raise ValidationError("state has no occupied eigenvector")
    return int(occupied[np.argmin(np.abs(weights.energies[occupied] - E_start))])


def prepare_eigenstate(
    state: SpectralState,
    eig,
    E_start: float,
    config: RodeoConfig,
    schedule: CycleSchedule | None = None,
    isolation: float = 4.0,
    weight_floor: float = 1e-6,
):
    """Filter toward the eigenvector nearest ``E_start``, re-centering E.

    The target must be isolated: no other occupied level (weight above
    ``weight_floor``) within ``isolation / t_rms`` of ``E_start``. With
    ``config.recenter`` set, after cycle n the filter energy moves to the
    vertex of a parabola through the schedule-averaged n-cycle success
    probability of the initial weights, sampled at E - dE, E, E + dE with
    dE = 1 / (t_rms sqrt(n)). Its peaks narrow as n grows.
    """
    energies = _energies(eig)
    weights = SpectralWeights(np.abs(state.amplitudes) ** 2, energies)
    j = select_target(weights, E_start, weight_floor)
    members = _level_members(energies, j)
    radius = isolation / config.t_rms
    occupied = weights.weights > weight_floor
    near = np.abs(energies - E_start) < radius
    near[members] = False
    competitors = energies[near & occupied]
    if competitors.size:
        raise AmbiguousTargetError(
            f"target at {energies[j]:.6g} is not isolated within {radius:.3g}; competing "
            f"eigenvalues: {', '.join(f'{e:.6g}' for e in competitors)}",
            competitors,
        )
    if schedule is None:
        schedule = config.schedule()
    target = int(j) if members.size == 1 else tuple(int(i) for i in members)

    E = float(E_start)
    elapsed = 0.0
    trace = [TraceEntry(0, residual(state, target).delta, E, state.survival_probability, 0.0)]
    for n, t in enumerate(schedule.times, start=1):
        state, _ = apply_cycle(state, eig, E, t, forced=1)
        elapsed += abs(t) if config.time_accounting == "sum-abs" else config.t_rms
        trace.append(
            TraceEntry(n, residual(state, target).delta, E, state.survival_probability, elapsed)
        )
        if config.recenter:
            step = 1.0 / (config.t_rms * np.sqrt(n))
            f = expected_success_probability(weights, np.array([E - step, E, E + step]), n, config.t_rms)
            E += _quadratic_peak(*f, step)
    return state, residual(state, target, trace)


def full_statevector_reference(H, psi, E: float, schedule: CycleSchedule):
    """Gate-level simulation of the ancilla + object register.

    Per cycle: ancilla prepared in |1>, Hadamard, controlled exp(-i H t),
    phase gate P(E t) = diag(1, exp(i E t)), Hadamard, then projection onto
    ancilla |1>. The joint register index is ancilla * d + object index.
    Returns the post-selected object state (computational basis) and the
    joint success probability.
    """
    H = H.matrix if isinstance(H, HermitianOperator) else np.asarray(H)
    d = H.shape[0]
    if d > REFERENCE_MAX_DIM:
        raise DimensionError(f"reference simulator supports d <= {REFERENCE_MAX_DIM}, got {d}")
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape != (d,):
        raise DimensionError("state and Hamiltonian dimensions differ")
    eye = np.eye(d)
    had = np.kron(np.array([[1, 1], [1, -1]]) / np.sqrt(2), eye)
    obj = psi / np.linalg.norm(psi)
    joint = 1.0
    for t in schedule.times:
        reg = np.concatenate([np.zeros(d, complex), obj])
        reg = had @ reg
        cu = scipy.linalg.block_diag(eye, scipy.linalg.expm(-1j * H * t))
        phase = scipy.linalg.block_diag(eye, np.exp(1j * E * t) * eye)
        reg = had @ (phase @ (cu @ reg))
        branch = reg[d:]
        prob = float(np.vdot(branch, branch).real)
        if prob < UNDERFLOW_FLOOR:
            raise UnderflowError("success branch vanished in the reference simulation")
        joint *= prob
        obj = branch / np.sqrt(prob)
    return obj, joint


def mean_log_success(detuning: float, t_rms: float, max_cycles: int, samples: int, seed: int = 0):
    """Mean and standard error of ln P_N for N = 1..max_cycles.

    Each sample draws one schedule of ``max_cycles`` times; P_N uses its
    first N entries.
    """
    logs = np.empty((samples, max_cycles))
    for s in range(samples):
        times = draw_schedule(max_cycles, t_rms, seed, (s,)).times
        with np.errstate(divide="ignore"):
            logs[s] = np.cumsum(np.log(np.cos(detuning * times / 2) ** 2))
    return logs.mean(axis=0), logs.std(axis=0, ddof=1) / np.sqrt(samples)
