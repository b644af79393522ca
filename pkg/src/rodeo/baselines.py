"""Adiabatic evolution and phase estimation, the two reference methods.

The adiabatic path is H(t) = cos^2(pi t / 2T) H_I + sin^2(pi t / 2T) H_obj,
integrated with piecewise-constant midpoint steps. Phase estimation is
modelled in the eigenbasis through its closed-form outcome kernel; a small
gate-level register simulation backs it up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .engine import (
    RodeoConfig,
    CycleSchedule,
    _level_members,
    _rng,
    draw_schedule,
    estimate_FA,
    estimate_FG,
    residual,
    run_postselected,
)
from .errors import ConvergenceError, DimensionError, ValidationError
from .parallel import ordered_map
from .spectral import (
    EigenDecomposition,
    HermitianOperator,
    SpectralState,
    eigendecompose,
    project_to_eigenbasis,
)

MAX_PHASE_BITS = 24
REFERENCE_MAX_REGISTER = 4096


def _matrix(H) -> np.ndarray:
    return H.matrix if isinstance(H, HermitianOperator) else np.asarray(H)


@dataclass(frozen=True)
class AdiabaticConfig:
    total_time: float
    steps: int = 64
    convergence_tol: float = 1e-6
    max_doublings: int = 20

    def __post_init__(self):
        if not self.total_time > 0:
            raise ValidationError("total_time must be positive")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ValidationError("steps must be an integer >= 2")
        if not self.convergence_tol > 0:
            raise ValidationError("convergence_tol must be positive")


@dataclass(frozen=True)
class AdiabaticRun:
    state: np.ndarray
    steps: int
    overlap: float | None = None


def _integrate(psi, HI, Hobj, T: float, steps: int) -> np.ndarray:
    dt = T / steps
    out = psi
    for n in range(steps):
        s = math.sin(math.pi * (n + 0.5) * dt / (2 * T)) ** 2
        Hmid = ((1 - s) * HI + s * Hobj).tocsr()
        out = expm_multiply(-1j * dt * Hmid, out)
    return out


def adiabatic_evolve(psi, H_I, H_obj, cfg: AdiabaticConfig, target=None) -> AdiabaticRun:
    """Evolve ``psi`` along the interpolating path for ``cfg.total_time``.

    The step count starts at ``cfg.steps`` and doubles until the quantity
    watched changes by less than the tolerance: |<target|out>|^2 when a
    target vector is given, otherwise the norm of the change of the output
    state itself.
    """
    HI, Hobj = _matrix(H_I), _matrix(H_obj)
    psi = np.asarray(psi, dtype=np.complex128)
    if HI.shape != Hobj.shape or psi.shape != (HI.shape[0],):
        raise DimensionError(
            f"dimension mismatch: H_I {HI.shape}, H_obj {Hobj.shape}, state {psi.shape}"
        )
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ValidationError("initial state is not normalized")
    if target is not None:
        target = np.asarray(target, dtype=np.complex128)
        if target.shape != psi.shape:
            raise DimensionError("target vector dimension differs from the state")
    HI, Hobj = sp.csr_matrix(HI), sp.csr_matrix(Hobj)

    def watched(v):
        return abs(np.vdot(target, v)) ** 2 if target is not None else v

    steps = int(cfg.steps)
    prev = _integrate(psi, HI, Hobj, cfg.total_time, steps)
    for _ in range(cfg.max_doublings):
        steps *= 2
        out = _integrate(psi, HI, Hobj, cfg.total_time, steps)
        change = np.linalg.norm(np.atleast_1d(watched(out) - watched(prev)))
        if change < cfg.convergence_tol:
            overlap = float(watched(out)) if target is not None else None
            return AdiabaticRun(out, steps, overlap)
        prev = out
    raise ConvergenceError(
        f"adiabatic evolution not converged after {cfg.max_doublings} doublings "
        f"({steps} steps, last change {change:.3e})"
    )


@dataclass(frozen=True)
class QpeConfig:
    """Phase estimation with ``phase_bits`` readout qubits.

    Energies in ``energy_window`` map linearly onto phases in [0, 2 pi).
    ``base_time`` is the evolution time of one application of U; None means
    2 pi / (window width), the choice under which U = exp(i phi).
    """

    phase_bits: int
    base_time: float | None = None
    energy_window: tuple | None = None

    def __post_init__(self):
        if int(self.phase_bits) != self.phase_bits or not 0 <= self.phase_bits <= MAX_PHASE_BITS:
            raise ValidationError(f"phase_bits must be an integer in 0..{MAX_PHASE_BITS}")
        if self.base_time is not None and not self.base_time > 0:
            raise ValidationError("base_time must be positive")
        if self.energy_window is not None:
            lo, hi = self.energy_window
            if not lo < hi:
                raise ValidationError("energy window is empty")

    def resolve(self, energies) -> "QpeConfig":
        """Fill in the default window [min E - 1, max E + 1] and base time."""
        window = self.energy_window
        if window is None:
            e = np.asarray(energies)
            window = (float(e.min()) - 1.0, float(e.max()) + 1.0)
        base = self.base_time if self.base_time is not None else 2 * math.pi / (window[1] - window[0])
        return QpeConfig(self.phase_bits, base, tuple(float(x) for x in window))

    @property
    def total_time(self) -> float:
        return (2**self.phase_bits - 1) * self.base_time


@dataclass(frozen=True)
class QpeResult:
    state: SpectralState
    outcome: int
    probability: float
    total_time: float


def eigenphases(energies, window) -> np.ndarray:
    lo, hi = window
    return 2 * math.pi * (np.asarray(energies) - lo) / (hi - lo)


def qpe_kernel(phases, m, bits: int) -> np.ndarray:
    """(1/M) sum_{k<M} exp(i k (phi - 2 pi m / M)) with M = 2^bits.

    Evaluated as a Dirichlet kernel after reducing the argument to
    (-pi, pi], which is exact because the sum is 2 pi periodic.
    """
    M = 2**bits
    x = np.asarray(phases, dtype=float) - 2 * math.pi * np.asarray(m, dtype=float) / M
    x = x - 2 * math.pi * np.round(x / (2 * math.pi))
    half = x / 2
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.sin(M * half) / (M * np.sin(half))
    ratio = np.where(half == 0, 1.0, ratio)
    return np.exp(1j * half * (M - 1)) * ratio


def _check_window(energies, amplitudes, window):
    occupied = np.abs(amplitudes) ** 2 > 0
    e = np.asarray(energies)[occupied]
    lo, hi = window
    if e.size and (e.min() < lo or e.max() >= hi):
        raise ValidationError(
            f"occupied energies span [{e.min():.6g}, {e.max():.6g}], outside window [{lo:.6g}, {hi:.6g})"
        )


def outcome_distribution(state: SpectralState, eig: EigenDecomposition, cfg: QpeConfig) -> np.ndarray:
    """Probability of each readout m = 0..2^t - 1."""
    cfg = cfg.resolve(eig.energies)
    _check_window(eig.energies, state.amplitudes, cfg.energy_window)
    phi = eigenphases(eig.energies, cfg.energy_window)
    M = 2**cfg.phase_bits
    w = np.abs(state.amplitudes) ** 2
    probs = np.zeros(M)
    for j in np.flatnonzero(w > 0):
        probs += w[j] * np.abs(qpe_kernel(phi[j], np.arange(M), cfg.phase_bits)) ** 2
    return probs


def qpe_filter(
    state: SpectralState,
    eig: EigenDecomposition,
    cfg: QpeConfig,
    outcome: int | None = None,
    rng: np.random.Generator | None = None,
) -> QpeResult:
    """Readout ``outcome`` (sampled if None) and the state it leaves behind."""
    cfg = cfg.resolve(eig.energies)
    _check_window(eig.energies, state.amplitudes, cfg.energy_window)
    M = 2**cfg.phase_bits
    phi = eigenphases(eig.energies, cfg.energy_window)
    if outcome is None:
        rng = rng if rng is not None else _rng(0)
        w = np.abs(state.amplitudes) ** 2
        j = rng.choice(w.shape[0], p=w / w.sum())
        p_m = np.abs(qpe_kernel(phi[j], np.arange(M), cfg.phase_bits)) ** 2
        outcome = int(rng.choice(M, p=p_m / p_m.sum()))
    if not 0 <= outcome < M:
        raise ValidationError(f"outcome {outcome} outside 0..{M - 1}")
    amps = state.amplitudes * qpe_kernel(phi, outcome, cfg.phase_bits)
    prob = min(float(np.sum(np.abs(amps) ** 2)), 1.0)
    if prob == 0:
        raise ValidationError(f"outcome {outcome} has zero probability")
    post = SpectralState(amps / math.sqrt(prob), state.survival_probability * prob)
    return QpeResult(post, int(outcome), prob, cfg.total_time)


def qpe_circuit_reference(H, psi, cfg: QpeConfig):
    """Explicit register simulation of textbook phase estimation.

    Readout qubits start in |0> and receive Hadamards; readout bit b
    controls U^(2^b) with U = expm(i 2 pi (H - w_min) / W); an inverse QFT
    built from Hadamards, controlled phase rotations and swaps follows.
    Returns (probabilities over m, post-measurement object states in the
    computational basis, one row per m).
    """
    H = _matrix(H)
    d = H.shape[0]
    if cfg.energy_window is None:
        raise ValidationError("the reference needs an explicit energy window")
    n = cfg.phase_bits
    M = 2**n
    if M * d > REFERENCE_MAX_REGISTER:
        raise DimensionError(f"register of size {M * d} exceeds {REFERENCE_MAX_REGISTER}")
    lo, hi = cfg.energy_window
    U = scipy.linalg.expm(1j * 2 * math.pi * (H - lo * np.eye(d)) / (hi - lo))
    reg = np.zeros((M, d), dtype=np.complex128)
    reg[0] = np.asarray(psi, dtype=np.complex128)
    ks = np.arange(M)

    def hadamard(bit):
        mask = 1 << bit
        low = ks[(ks & mask) == 0]
        a, b = reg[low].copy(), reg[low | mask].copy()
        reg[low] = (a + b) / math.sqrt(2)
        reg[low | mask] = (a - b) / math.sqrt(2)

    for b in range(n):
        hadamard(b)
    power = U
    for b in range(n):
        on = (ks >> b) & 1 == 1
        reg[on] = reg[on] @ power.T
        power = power @ power

    # Inverse QFT. Qubit q (q = 1 is most significant) is integer bit n - q.
    def bit_of(q):
        return n - q

    for q in range(1, n // 2 + 1):
        a, b = bit_of(q), bit_of(n + 1 - q)
        swapped = ks ^ (((ks >> a) & 1 ^ (ks >> b) & 1) * ((1 << a) | (1 << b)))
        reg[:] = reg[swapped]
    for q in range(n, 0, -1):
        for c in range(n, q, -1):
            r = c - q + 1
            both = ((ks >> bit_of(q)) & 1 == 1) & ((ks >> bit_of(c)) & 1 == 1)
            reg[both] *= np.exp(-2j * math.pi / 2**r)
        hadamard(bit_of(q))

    probs = np.sum(np.abs(reg) ** 2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        posts = reg / np.sqrt(probs)[:, None]
    return probs, posts


def _target_level(eig: EigenDecomposition, state: SpectralState, energy: float, floor: float = 1e-12):
    w = np.abs(state.amplitudes) ** 2
    occupied = np.flatnonzero(w > floor)
    if occupied.size == 0:
        raise ValidationError("state has no occupied eigenvector")
    j = int(occupied[np.argmin(np.abs(eig.energies[occupied] - energy))])
    members = _level_members(np.asarray(eig.energies), j)
    return tuple(int(i) for i in members)


def _level_overlap(state: SpectralState, members) -> float:
    return float(np.sum(np.abs(state.amplitudes[list(members)]) ** 2))


@dataclass(frozen=True)
class PreconditionRow:
    t_ae: float
    target_energy: float
    cycles: tuple
    mean_overlap: tuple
    stderr: tuple


def precondition_then_rodeo(
    psi,
    H_I,
    H_obj,
    t_ae: float,
    target_energy: float,
    t_rms: float,
    cycles=(0, 3, 6, 9),
    samples: int = 100,
    seed: int = 0,
    adiabatic_steps: int = 64,
    adiabatic_tol: float = 1e-6,
    eig: EigenDecomposition | None = None,
    threads: int | None = 1,
) -> PreconditionRow:
    """Adiabatic preconditioning for ``t_ae`` followed by rodeo cycles.

    The filter energy is the exact eigenvalue of the occupied level nearest
    ``target_energy``. For each N the overlap with that level after N
    post-selected cycles is averaged over ``samples`` schedules; sample s
    uses the first N times of schedule (seed, s).
    """
    eig = eig if eig is not None else eigendecompose(H_obj)
    state0 = project_to_eigenbasis(psi, eig)
    members = _target_level(eig, state0, target_energy)
    E = float(np.mean(eig.energies[list(members)]))
    if t_ae > 0:
        vec = eig.vectors[:, members[0]]
        run = adiabatic_evolve(psi, H_I, H_obj, AdiabaticConfig(t_ae, adiabatic_steps, adiabatic_tol), vec)
        state0 = project_to_eigenbasis(run.state / np.linalg.norm(run.state), eig)
    n_max = max(cycles)

    def one(s):
        row = []
        sched = draw_schedule(n_max, t_rms, seed, (s,)) if n_max > 0 else None
        for N in cycles:
            if N == 0:
                row.append(_level_overlap(state0, members))
                continue
            sub = CycleSchedule(sched.times[:N], t_rms, seed, (s,))
            out, _ = run_postselected(state0, eig, RodeoConfig(N, t_rms, E, seed), sub)
            row.append(_level_overlap(out, members))
        return row

    table = np.array(ordered_map(one, range(samples), threads))
    mean = table.mean(axis=0)
    se = table.std(axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else np.zeros(len(cycles))
    return PreconditionRow(float(t_ae), E, tuple(cycles), tuple(map(float, mean)), tuple(map(float, se)))


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    total_time: float
    log_delta: float
    params: dict = field(default_factory=dict)
    seed: int = 0


def _rodeo_schedule(budget: float, t_rms: float, seed: int, key):
    n = int(4 * budget / t_rms) + 16
    while True:
        sched = draw_schedule(n, t_rms, seed, key)
        if np.abs(sched.times).sum() > budget:
            return sched
        n *= 2


def compare_methods(
    psi,
    H_I,
    H_obj,
    target_energy: float,
    budgets,
    t_rms: float = 1.0,
    replicas: int = 25,
    seed: int = 0,
    qpe_base_time: float | None = None,
    adiabatic_steps: int = 64,
    adiabatic_tol: float = 1e-6,
    eig: EigenDecomposition | None = None,
    threads: int | None = 1,
):
    """log10 residual against total evolution time for the three methods.

    Rodeo: filter energy fixed at the exact target eigenvalue, the most
    cycles whose sum of |t_n| fits the budget, median over ``replicas``
    schedules. QPE: the most readout bits whose (2^t - 1) base_time fits,
    conditioned on the readout nearest the target phase. Adiabatic: path
    duration equal to the budget. Rows labelled FA and FG give the two
    residual estimates at the median rodeo cycle count.
    """
    eig = eig if eig is not None else eigendecompose(H_obj)
    state0 = project_to_eigenbasis(psi, eig)
    members = _target_level(eig, state0, target_energy)
    E = float(np.mean(eig.energies[list(members)]))
    p = _level_overlap(state0, members)
    budgets = [float(b) for b in budgets]
    if any(b <= 0 for b in budgets):
        raise ValidationError("time budgets must be positive")
    T_max = max(budgets)

    def rodeo_replica(s):
        sched = _rodeo_schedule(T_max, t_rms, seed, (s,))
        spent = np.cumsum(np.abs(sched.times))
        out = []
        for T in budgets:
            N = int(np.searchsorted(spent, T, side="right"))
            if N == 0:
                out.append((0, math.sqrt(max(1 - p, 0.0)), 0.0))
                continue
            sub = CycleSchedule(sched.times[:N], t_rms, seed, (s,))
            final, _ = run_postselected(state0, eig, RodeoConfig(N, t_rms, E, seed), sub)
            out.append((N, residual(final, members).delta, float(spent[N - 1])))
        return out

    replica_rows = ordered_map(rodeo_replica, range(replicas), threads)
    rows = []
    for b, T in enumerate(budgets):
        Ns = np.array([r[b][0] for r in replica_rows])
        deltas = np.array([r[b][1] for r in replica_rows])
        used = np.array([r[b][2] for r in replica_rows])
        median = float(np.median(np.log10(deltas)))
        N_med = float(np.median(Ns))
        rows.append(
            ComparisonRow(
                "rodeo", T, median,
                {"median_cycles": N_med, "mean_time_used": float(used.mean()), "t_rms": t_rms, "replicas": replicas},
                seed,
            )
        )
        rows.append(ComparisonRow("FA", T, math.log10(estimate_FA(p, N_med)), {"cycles": N_med, "p": p}, seed))
        rows.append(ComparisonRow("FG", T, math.log10(estimate_FG(p, N_med)), {"cycles": N_med, "p": p}, seed))

    base = QpeConfig(0, qpe_base_time).resolve(eig.energies)
    phi_target = float(eigenphases(E, base.energy_window))
    for T in budgets:
        bits = min(int(math.floor(math.log2(T / base.base_time + 1) + 1e-12)), MAX_PHASE_BITS)
        cfg = QpeConfig(bits, base.base_time, base.energy_window)
        M = 2**bits
        m = int(round(phi_target * M / (2 * math.pi))) % M
        res = qpe_filter(state0, eig, cfg, outcome=m)
        delta = residual(res.state, members).delta
        rows.append(
            ComparisonRow(
                "qpe", T, math.log10(max(delta, 1e-300)),
                {"phase_bits": bits, "outcome": m, "outcome_probability": res.probability,
                 "time_used": cfg.total_time, "base_time": base.base_time},
                seed,
            )
        )

    vec = eig.vectors[:, members[0]]
    for T in budgets:
        run = adiabatic_evolve(psi, H_I, H_obj, AdiabaticConfig(T, adiabatic_steps, adiabatic_tol), vec)
        final = project_to_eigenbasis(run.state / np.linalg.norm(run.state), eig)
        delta = residual(final, members).delta
        rows.append(
            ComparisonRow("adiabatic", T, math.log10(max(delta, 1e-300)), {"steps": run.steps}, seed)
        )
    return rows
