"""Energy scans of the averaged success probability.

Sweeping the filter energy E over a grid and averaging the success
probability over independent Gaussian schedules estimates the initial-state
spectral function on top of a roughly constant 2^-N background. Peaks are
read off against the median of the scan, and a sequence of narrowing scans
locates a single eigenvalue to a target resolution.

Every grid point draws its schedules from its own (seed, point, draw) stream,
so results do not depend on the number of worker threads.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import draw_schedule, filter_products
from .errors import SearchFailedError, ValidationError
from .parallel import ordered_map
from .spectral import SpectralWeights

CHUNK = 16
WEIGHT_FLOOR = 1e-15


def derive_seed(seed: int, *key: int) -> int:
    """A 63-bit integer seed for the sub-stream ``key`` of ``seed``."""
    state = np.random.SeedSequence(seed, spawn_key=key).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1] & 0x7FFFFFFF) << 32)


@dataclass(frozen=True)
class ScanConfig:
    e_min: float
    e_max: float
    points: int
    cycles: int
    t_rms: float
    averages: int = 20
    seed: int = 0

    def __post_init__(self):
        if not self.e_min < self.e_max:
            raise ValidationError("e_min must be below e_max")
        if int(self.points) != self.points or self.points < 2:
            raise ValidationError("a scan needs at least 2 points")
        if int(self.cycles) != self.cycles or self.cycles < 1:
            raise ValidationError("cycles must be a positive integer")
        if not self.t_rms > 0:
            raise ValidationError("t_rms must be positive")
        if int(self.averages) != self.averages or self.averages < 1:
            raise ValidationError("averages must be a positive integer")

    def grid(self) -> np.ndarray:
        return np.linspace(self.e_min, self.e_max, self.points)


@dataclass(frozen=True)
class ScanResult:
    energies: np.ndarray
    mean_success: np.ndarray
    stderr: np.ndarray
    metadata: dict = field(default_factory=dict)
    evolution_time: float = 0.0

    def __len__(self) -> int:
        return self.energies.shape[0]


def _occupied(weights: SpectralWeights):
    keep = weights.level_weights > WEIGHT_FLOOR
    return weights.level_energies[keep], weights.level_weights[keep]


def scan_spectral(weights: SpectralWeights, cfg: ScanConfig, threads: int | None = 1) -> ScanResult:
    energies, w = _occupied(weights)
    grid = cfg.grid()

    def block(start: int):
        rows = []
        for i in range(start, min(start + CHUNK, cfg.points)):
            times = np.stack(
                [draw_schedule(cfg.cycles, cfg.t_rms, cfg.seed, (i, r)).times for r in range(cfg.averages)]
            )
            probs = np.minimum(filter_products(energies, grid[i], times) @ w, 1.0)
            mean = probs.mean()
            se = probs.std(ddof=1) / math.sqrt(cfg.averages) if cfg.averages > 1 else 0.0
            rows.append((mean, se, np.abs(times).sum()))
        return rows

    rows = [r for chunk in ordered_map(block, range(0, cfg.points, CHUNK), threads) for r in chunk]
    mean = np.array([r[0] for r in rows])
    se = np.array([r[1] for r in rows])
    total = float(sum(r[2] for r in rows))
    meta = asdict(cfg) | {"evolution_time": total}
    return ScanResult(grid, mean, se, meta, total)


@dataclass(frozen=True)
class Peak:
    location: float
    height: float
    index: int


@dataclass(frozen=True)
class PeakList:
    peaks: tuple
    background_level: float

    def __len__(self) -> int:
        return len(self.peaks)

    def __iter__(self):
        return iter(self.peaks)


def _refine(x: np.ndarray, y: np.ndarray):
    """Vertex of the parabola through three equally spaced samples.

    The fit is done on log(y) when all samples are positive, which is exact
    for a Gaussian peak; otherwise on y itself.
    """
    h = x[1] - x[0]
    log_domain = np.all(y > 0)
    f = np.log(y) if log_domain else y
    curvature = f[0] - 2 * f[1] + f[2]
    if curvature >= 0:
        return float(x[1]), float(y[1])
    offset = float(np.clip(0.5 * (f[0] - f[2]) / curvature, -1.0, 1.0))
    top = f[1] - 0.25 * (f[0] - f[2]) * offset
    height = math.exp(top) if log_domain else top
    return float(x[1] + offset * h), float(max(height, y[1]))


def detect_peaks(result: ScanResult, z_threshold: float = 5.0) -> PeakList:
    """Strict local maxima rising more than z standard errors above the median."""
    m, se = result.mean_success, result.stderr
    background = float(np.median(m)) if len(m) else 0.0
    peaks = []
    for i in range(1, len(m) - 1):
        if m[i] > m[i - 1] and m[i] > m[i + 1] and m[i] > background + z_threshold * se[i]:
            loc, height = _refine(result.energies[i - 1 : i + 2], m[i - 1 : i + 2])
            peaks.append(Peak(loc, height, i))
    return PeakList(tuple(peaks), background)


@dataclass(frozen=True)
class LevelMatch:
    energy: float
    weight: float
    cell_weight: float
    centroid: float
    peak: Peak | None


def match_levels(peaks: PeakList, weights: SpectralWeights, width: float, tolerance: float,
                 min_weight: float = 0.03, rel: float = 0.25):
    """Compare every level of weight >= ``min_weight`` with the detected peaks.

    A scan at resolution ``width`` ~ 1/t_rms cannot separate a level from
    occupied neighbours closer than ``width``; its peak carries their summed
    weight (the cell weight) and sits near their weighted mean. A level
    matches when a peak lies within ``tolerance`` of the level or of that
    centroid and its height is within ``rel`` of the cell weight.
    """
    energies, w = weights.occupied(WEIGHT_FLOOR)
    report = []
    for e, p in zip(energies, w):
        if p < min_weight:
            continue
        near = np.abs(energies - e) < width
        cell = float(w[near].sum())
        centroid = float(energies[near] @ w[near] / cell)
        hit = None
        for peak in peaks:
            close = min(abs(peak.location - e), abs(peak.location - centroid)) <= tolerance
            if close and abs(peak.height - cell) <= rel * cell:
                hit = peak
                break
        report.append(LevelMatch(float(e), float(p), cell, centroid, hit))
    return report


@dataclass(frozen=True)
class OverlapEstimate:
    value: float
    stderr: float
    resolved: bool


def estimate_overlap(
    weights: SpectralWeights,
    E_peak: float,
    cycles: int,
    t_rms: float,
    averages: int,
    seed: int = 0,
) -> OverlapEstimate:
    """Mean success probability with E parked on a peak.

    ``resolved`` is False when no eigenvalue lies within 1/(2 t_rms sqrt(N))
    of ``E_peak``, in which case the value underestimates the level weight.
    """
    energies, w = _occupied(weights)
    times = np.stack([draw_schedule(cycles, t_rms, seed, (r,)).times for r in range(averages)])
    probs = filter_products(energies, E_peak, times) @ w
    se = probs.std(ddof=1) / math.sqrt(averages) if averages > 1 else 0.0
    resolved = bool(np.min(np.abs(weights.energies - E_peak)) <= 1 / (2 * t_rms * math.sqrt(cycles)))
    return OverlapEstimate(float(probs.mean()), float(se), resolved)


@dataclass(frozen=True)
class SearchConfig:
    """Hierarchical search settings.

    ``t_rms`` None picks the first-scan value that makes the peak width half
    a grid step. ``select`` chooses between the tallest peak and the lowest
    energy peak of each scan.
    """

    epsilon: float
    shrink: float = 4.0
    cycles: int = 8
    points: int = 16
    t_rms: float | None = None
    averages: int = 10
    max_scans: int = 64
    seed: int = 0
    z_threshold: float = 5.0
    min_weight: float = 0.01
    select: str = "strongest"

    def __post_init__(self):
        if not self.shrink > 1:
            raise ValidationError("shrink factor K must exceed 1")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if self.select not in ("strongest", "lowest"):
            raise ValidationError("select must be 'strongest' or 'lowest'")
        if self.points < 3:
            raise ValidationError("a search scan needs at least 3 points")


@dataclass(frozen=True)
class ScanRecord:
    scan: int
    e_lo: float
    e_hi: float
    t_rms: float
    peak_energy: float
    peak_height: float
    evolution_time: float


@dataclass(frozen=True)
class SearchResult:
    estimate: float
    history: tuple
    total_time: float

    @property
    def scans(self) -> int:
        return len(self.history)


def max_scans_for(width: float, epsilon: float, shrink: float) -> int:
    return max(1, math.ceil(math.log(width / epsilon) / math.log(shrink) - 1e-12))


def hierarchical_search(
    weights: SpectralWeights,
    e_min: float,
    e_max: float,
    cfg: SearchConfig,
    threads: int | None = 1,
) -> SearchResult:
    """Locate one eigenvalue to resolution ``cfg.epsilon``.

    Each scan narrows the window by K around the chosen peak and multiplies
    t_rms by the same factor. The last scanned window is K * epsilon wide, so
    closing it by K leaves a window of width epsilon; scans number
    ceil(log_K((e_max - e_min) / epsilon)) and the final t_rms is
    proportional to 1 / epsilon.
    """
    if not e_min < e_max:
        raise ValidationError("e_min must be below e_max")
    width0 = e_max - e_min
    t0 = cfg.t_rms or 2 * math.sqrt(2) * (cfg.points - 1) / (math.sqrt(cfg.cycles) * width0)
    floor = cfg.shrink * cfg.epsilon
    lo, hi = e_min, e_max
    history = []
    for s in range(cfg.max_scans):
        width = hi - lo
        t_rms = t0 * width0 / width
        scan_cfg = ScanConfig(lo, hi, cfg.points, cfg.cycles, t_rms, cfg.averages, derive_seed(cfg.seed, s))
        result = scan_spectral(weights, scan_cfg, threads)
        found = detect_peaks(result, cfg.z_threshold)
        accepted = [p for p in found if p.height - found.background_level >= cfg.min_weight / 2]
        if not accepted:
            raise SearchFailedError(
                f"scan {s} over [{lo:.6g}, {hi:.6g}] found no peak above threshold", history
            )
        if cfg.select == "lowest":
            peak = min(accepted, key=lambda p: p.location)
        else:
            peak = max(accepted, key=lambda p: p.height)
        history.append(
            ScanRecord(s, lo, hi, t_rms, peak.location, peak.height, result.evolution_time)
        )
        if width <= floor * (1 + 1e-12):
            break
        new_width = max(width / cfg.shrink, floor)
        lo, hi = peak.location - new_width / 2, peak.location + new_width / 2
    else:
        raise SearchFailedError(f"no convergence within {cfg.max_scans} scans", history)
    total = float(sum(r.evolution_time for r in history))
    return SearchResult(history[-1].peak_energy, tuple(history), total)
