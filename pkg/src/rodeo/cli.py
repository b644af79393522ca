"""Command-line front end.

Every data-producing subcommand writes one CSV file (``--out``) and a JSON
manifest next to it (``--manifest``, default ``<out>.manifest.json``) holding
the command line, resolved configuration, seed, package version, wall time
and SHA-256 digests of the outputs. ``verify`` re-checks the digests and,
with ``--rerun``, repeats the run and compares the data byte for byte.

Exit status: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import (
    QpeConfig,
    AdiabaticConfig,
    adiabatic_evolve,
    compare_methods,
    outcome_distribution,
    precondition_then_rodeo,
)
from .engine import RodeoConfig, TIME_ACCOUNTING, prepare_eigenstate
from .errors import RodeoError
from .hamiltonians import (
    AndersonParams,
    HeisenbergParams,
    alternating_bits,
    build_anderson,
    build_heisenberg,
    build_product_state,
    build_staggered_field,
    find_kmin,
    load_hamiltonian,
    site_state,
)
from .parallel import default_threads
from .scan import ScanConfig, ScanResult, SearchConfig, detect_peaks, hierarchical_search, scan_spectral
from .spectral import HermitianOperator, eigendecompose, initial_weights, project_to_eigenbasis

SCHEMAS = {
    "spectrum-exact": ("energy", "weight"),
    "scan": ("energy", "mean_success", "stderr"),
    "peaks": ("energy", "height", "grid_index"),
    "search": ("scan", "e_lo", "e_hi", "t_rms", "peak_energy", "peak_height", "evolution_time"),
    "prepare": ("cycle", "filter_energy", "delta", "survival_probability"),
    "adiabatic": ("total_time", "steps", "target_energy", "overlap"),
    "qpe": ("outcome", "energy", "probability"),
    "compare": ("method", "total_time", "log10_delta", "seed"),
    "precondition": ("t_ae", "cycles", "mean_overlap", "stderr"),
}
RUN_ONLY = {"out", "manifest", "threads", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _ranged(kind, low=None, high=None, strict=False, name="value"):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid {name}: {text!r}")
        if kind is float and not math.isfinite(value):
            raise argparse.ArgumentTypeError(f"{name} must be finite")
        if low is not None and (value <= low if strict else value < low):
            raise argparse.ArgumentTypeError(f"{name} must be {'>' if strict else '>='} {low}, got {text}")
        if high is not None and value > high:
            raise argparse.ArgumentTypeError(f"{name} must be <= {high}, got {text}")
        return value

    return parse


positive_int = _ranged(int, 1, name="positive integer")
positive_real = _ranged(float, 0.0, strict=True, name="positive number")
real = _ranged(float, name="number")
seed_type = _ranged(int, 0, 2**64 - 1, name="seed")


def _shared(p):
    g = p.add_argument_group("run")
    g.add_argument("--seed", type=seed_type, default=0, help="master seed (u64)")
    g.add_argument("--threads", type=positive_int, default=None, help="worker threads (default: all cores)")
    g.add_argument("--out", required=True, help="CSV output path")
    g.add_argument("--manifest", default=None, help="manifest path (default: <out>.manifest.json)")


def _model(p):
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=("heisenberg", "anderson", "file"), default="heisenberg")
    g.add_argument("--sites", type=_ranged(int, 2, name="sites"), default=10)
    g.add_argument("--J", type=real, default=1.0, help="Heisenberg exchange coupling")
    g.add_argument("--h", type=real, default=0.0, help="Heisenberg field along z")
    g.add_argument("--disorder-rms", type=positive_real, default=None, help="Anderson Gaussian disorder rms")
    g.add_argument("--disorder-seed", type=seed_type, default=0, help="Anderson disorder seed")
    g.add_argument("--disorder-const", type=real, default=None, help="same disorder value on every site")
    g.add_argument("--hamiltonian-file", default=None, help="JSON COO Hamiltonian (--model file)")
    g.add_argument(
        "--init", default=None,
        help="initial state: bit string, site:k (basis vector k) or kmin; "
        "defaults to 0101... (heisenberg), kmin (anderson), site:0 (file)",
    )


def _rodeo(p, cycles_default=None, trms_default=None, averages_default=20, trms_required=True):
    g = p.add_argument_group("rodeo")
    g.add_argument("--cycles", type=positive_int, default=cycles_default, required=cycles_default is None)
    g.add_argument("--trms", type=positive_real, default=trms_default,
                   required=trms_required and trms_default is None, help="RMS of the cycle times")
    g.add_argument("--filter-energy", type=real, default=None, help="filter / target energy")
    g.add_argument("--averages", type=positive_int, default=averages_default, help="schedules averaged")
    g.add_argument("--recenter", action="store_true", help="re-center E after each cycle")
    g.add_argument("--time-accounting", choices=TIME_ACCOUNTING, default="sum-abs")


def _scan(p, points_default=None):
    g = p.add_argument_group("scan")
    g.add_argument("--emin", type=real, required=True)
    g.add_argument("--emax", type=real, required=True)
    g.add_argument("--points", type=_ranged(int, 2, name="points"), default=points_default,
                   required=points_default is None)
    g.add_argument("--peak-z", type=positive_real, default=5.0, help="peak threshold in standard errors")


def _baseline(p):
    g = p.add_argument_group("baselines")
    g.add_argument("--total-time", type=positive_real, default=5.0)
    g.add_argument("--steps", type=_ranged(int, 2, name="steps"), default=64)
    g.add_argument("--phase-bits", type=_ranged(int, 0, 24, name="phase bits"), default=6)
    g.add_argument("--base-time", type=positive_real, default=None,
                   help="time per application of U (default 2 pi / window width)")
    g.add_argument("--t-ae", type=_ranged(float, 0.0, name="t_ae"), default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rodeo", description="Rodeo algorithm numerical laboratory.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("spectrum-exact", help="eigenvalues and initial-state weights")
    _model(p)
    _shared(p)

    p = sub.add_parser("scan", help="averaged success probability over an energy grid")
    _model(p)
    _rodeo(p)
    _scan(p)
    _shared(p)

    p = sub.add_parser("peaks", help="scan and report detected peaks")
    _model(p)
    _rodeo(p)
    _scan(p)
    _shared(p)

    p = sub.add_parser("search", help="hierarchical eigenvalue search")
    _model(p)
    _rodeo(p, cycles_default=8, averages_default=10, trms_required=False)
    _scan(p, points_default=16)
    g = p.add_argument_group("search")
    g.add_argument("--shrink-K", type=_ranged(float, 1.0, strict=True, name="K"), default=4.0)
    g.add_argument("--epsilon", type=positive_real, required=True)
    g.add_argument("--select", choices=("strongest", "lowest"), default="strongest")
    g.add_argument("--min-weight", type=positive_real, default=0.01)
    _shared(p)

    p = sub.add_parser("prepare", help="post-selected eigenstate preparation trace")
    _model(p)
    _rodeo(p)
    p.add_argument("--isolation", type=positive_real, default=4.0,
                   help="required gap to other occupied levels, in units of 1/t_rms")
    _shared(p)

    p = sub.add_parser("adiabatic", help="adiabatic evolution overlap")
    _model(p)
    _baseline(p)
    p.add_argument("--filter-energy", type=real, default=None, help="target level energy")
    _shared(p)

    p = sub.add_parser("qpe", help="phase-estimation readout distribution")
    _model(p)
    _baseline(p)
    _shared(p)

    p = sub.add_parser("compare", help="residual versus total time for rodeo, QPE and adiabatic")
    _model(p)
    _rodeo(p, cycles_default=1, trms_default=1.0, averages_default=25)
    _baseline(p)
    p.add_argument("--points", type=_ranged(int, 2, name="points"), default=17, help="number of time budgets")
    _shared(p)

    p = sub.add_parser("precondition", help="adiabatic preconditioning followed by rodeo cycles")
    _model(p)
    _rodeo(p, cycles_default=9, trms_default=5.0, averages_default=100)
    _baseline(p)
    _shared(p)

    p = sub.add_parser("verify", help="check a manifest's digests")
    p.add_argument("--manifest", required=True)
    p.add_argument("--rerun", action="store_true", help="re-run the command and compare data")
    return parser


def build_model(args):
    """(H, initial vector, H_I, model metadata) from parsed flags."""
    if args.model == "heisenberg":
        H = build_heisenberg(HeisenbergParams(args.sites, args.J, args.h))
        init = args.init or alternating_bits(args.sites)
        HI = build_staggered_field(args.sites)
        meta = {"sites": args.sites, "J": args.J, "h": args.h}
        kmin = None
    elif args.model == "anderson":
        if args.disorder_const is not None:
            params = AndersonParams(args.sites, coefficients=(args.disorder_const,) * args.sites)
        elif args.disorder_rms is not None:
            params = AndersonParams(args.sites, rms=args.disorder_rms, seed=args.disorder_seed)
        else:
            raise UsageError("anderson model needs --disorder-rms or --disorder-const")
        H = build_anderson(params)
        init = args.init or "kmin"
        HI = HermitianOperator(np.diag(np.diag(H.matrix)))
        meta = params.metadata()
        kmin = find_kmin(params)
    else:
        if not args.hamiltonian_file:
            raise UsageError("--model file needs --hamiltonian-file")
        H = load_hamiltonian(args.hamiltonian_file)
        init = args.init or "site:0"
        HI = HermitianOperator(np.diag(np.diag(H.matrix)).real)
        meta = {"file": str(args.hamiltonian_file), "dim": H.dim}
        kmin = None
    d = H.dim
    if init == "kmin":
        if kmin is None:
            raise UsageError("--init kmin applies to the anderson model only")
        psi = site_state(d, kmin)
    elif init.startswith("site:"):
        try:
            k = int(init[5:])
        except ValueError:
            raise UsageError(f"bad --init {init!r}")
        psi = site_state(d, k)
    else:
        if args.model == "anderson":
            raise UsageError("anderson initial states are site:k or kmin")
        if len(init) != int(round(math.log2(d))) or 2 ** len(init) != d:
            raise UsageError(f"--init {init!r} does not match dimension {d}")
        psi = build_product_state(init)
    meta = meta | {"model": args.model, "init": init, "dim": d}
    return H, psi, HI, meta


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def emit_csv(header, rows, path) -> str:
    """Write header + rows with shortest round-trip floats; return the SHA-256."""
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    data = ("\n".join(lines) + "\n").encode()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def scan_rows(result: ScanResult):
    return zip(result.energies, result.mean_success, result.stderr)


def _weights(args):
    H, psi, HI, meta = build_model(args)
    eig = eigendecompose(H)
    return H, psi, HI, meta, eig


def _default_target(eig, psi):
    w = initial_weights(psi, eig)
    e, _ = w.occupied(1e-6)
    return float(e[0])


def cmd_spectrum_exact(args, threads):
    H, psi, _, meta, eig = _weights(args)
    w = initial_weights(psi, eig)
    return list(zip(eig.energies, w.weights)), meta


def _scan_result(args, threads):
    H, psi, _, meta, eig = _weights(args)
    cfg = ScanConfig(args.emin, args.emax, args.points, args.cycles, args.trms, args.averages, args.seed)
    return scan_spectral(initial_weights(psi, eig), cfg, threads), meta


def cmd_scan(args, threads):
    result, meta = _scan_result(args, threads)
    return list(scan_rows(result)), meta | {"evolution_time": result.evolution_time}


def cmd_peaks(args, threads):
    result, meta = _scan_result(args, threads)
    found = detect_peaks(result, args.peak_z)
    rows = [(p.location, p.height, p.index) for p in found]
    return rows, meta | {"background_level": found.background_level}


def cmd_search(args, threads):
    H, psi, _, meta, eig = _weights(args)
    cfg = SearchConfig(
        epsilon=args.epsilon, shrink=args.shrink_K, cycles=args.cycles, points=args.points,
        t_rms=args.trms, averages=args.averages, seed=args.seed, z_threshold=args.peak_z,
        min_weight=args.min_weight, select=args.select,
    )
    res = hierarchical_search(initial_weights(psi, eig), args.emin, args.emax, cfg, threads)
    rows = [
        (r.scan, r.e_lo, r.e_hi, r.t_rms, r.peak_energy, r.peak_height, r.evolution_time)
        for r in res.history
    ]
    return rows, meta | {"estimate": res.estimate, "total_time": res.total_time}


def cmd_prepare(args, threads):
    H, psi, _, meta, eig = _weights(args)
    E0 = args.filter_energy if args.filter_energy is not None else _default_target(eig, psi)
    cfg = RodeoConfig(args.cycles, args.trms, E0, args.seed, args.recenter, args.time_accounting)
    _, report = prepare_eigenstate(project_to_eigenbasis(psi, eig), eig, E0, cfg, isolation=args.isolation)
    rows = [(t.cycle, t.filter_energy, t.delta, t.survival_probability) for t in report.per_cycle_trace]
    return rows, meta | {"target_index": report.target_index, "final_delta": report.delta}


def cmd_adiabatic(args, threads):
    H, psi, HI, meta, eig = _weights(args)
    E = args.filter_energy if args.filter_energy is not None else _default_target(eig, psi)
    state = project_to_eigenbasis(psi, eig)
    occupied = np.flatnonzero(np.abs(state.amplitudes) ** 2 > 1e-12)
    j = int(occupied[np.argmin(np.abs(eig.energies[occupied] - E))])
    run = adiabatic_evolve(psi, HI, H, AdiabaticConfig(args.total_time, args.steps), eig.vectors[:, j])
    return [(args.total_time, run.steps, float(eig.energies[j]), run.overlap)], meta


def cmd_qpe(args, threads):
    H, psi, _, meta, eig = _weights(args)
    cfg = QpeConfig(args.phase_bits, args.base_time).resolve(eig.energies)
    probs = outcome_distribution(project_to_eigenbasis(psi, eig), eig, cfg)
    lo, hi = cfg.energy_window
    M = len(probs)
    rows = [(m, lo + (hi - lo) * m / M, probs[m]) for m in range(M)]
    return rows, meta | {"energy_window": list(cfg.energy_window), "base_time": cfg.base_time,
                         "total_time": cfg.total_time}


def cmd_compare(args, threads):
    H, psi, HI, meta, eig = _weights(args)
    E = args.filter_energy if args.filter_energy is not None else _default_target(eig, psi)
    budgets = np.linspace(0.0, args.total_time, args.points)
    budgets[0] = 1e-9
    rows = compare_methods(
        psi, HI, H, E, budgets, t_rms=args.trms, replicas=args.averages, seed=args.seed,
        qpe_base_time=args.base_time, adiabatic_steps=args.steps, eig=eig, threads=threads,
    )
    return [(r.method, r.total_time, r.log_delta, r.seed) for r in rows], meta


def cmd_precondition(args, threads):
    H, psi, HI, meta, eig = _weights(args)
    E = args.filter_energy if args.filter_energy is not None else _default_target(eig, psi)
    cycles = tuple(sorted({0, *range(3, args.cycles + 1, 3), args.cycles}))
    row = precondition_then_rodeo(
        psi, HI, H, args.t_ae, E, args.trms, cycles, samples=args.averages, seed=args.seed,
        adiabatic_steps=args.steps, eig=eig, threads=threads,
    )
    rows = [(row.t_ae, n, m, s) for n, m, s in zip(row.cycles, row.mean_overlap, row.stderr)]
    return rows, meta | {"target_energy": row.target_energy}


COMMANDS = {
    "spectrum-exact": cmd_spectrum_exact,
    "scan": cmd_scan,
    "peaks": cmd_peaks,
    "search": cmd_search,
    "prepare": cmd_prepare,
    "adiabatic": cmd_adiabatic,
    "qpe": cmd_qpe,
    "compare": cmd_compare,
    "precondition": cmd_precondition,
}


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def run_command(args, argv) -> Path:
    threads = args.threads or default_threads()
    start = time.perf_counter()
    rows, meta = COMMANDS[args.command](args, threads)
    out = Path(args.out)
    digest = emit_csv(SCHEMAS[args.command], rows, out)
    manifest = Path(args.manifest) if args.manifest else out.with_name(out.name + ".manifest.json")
    doc = {
        "command": list(argv),
        "subcommand": args.command,
        "config": {k: v for k, v in vars(args).items() if k not in RUN_ONLY},
        "seed": args.seed,
        "version": __version__,
        "duration_s": time.perf_counter() - start,
        "results": meta,
        "outputs": [{"path": str(out.resolve()), "sha256": digest}],
    }
    manifest.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return manifest


def verify(manifest_path, rerun: bool = False) -> int:
    doc = json.loads(Path(manifest_path).read_text())
    bad = []
    for entry in doc["outputs"]:
        path = Path(entry["path"])
        if not path.exists():
            bad.append(f"{path} (missing)")
        elif _sha256(path) != entry["sha256"]:
            bad.append(f"{path} (digest mismatch)")
    if bad:
        print(f"error: verification failed: {'; '.join(bad)}", file=sys.stderr)
        return 1
    if rerun:
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / "rerun.csv"
            argv = list(doc["command"]) + ["--out", str(out), "--manifest", str(Path(tmp) / "m.json")]
            args = build_parser().parse_args(argv)
            run_command(args, argv)
            if _sha256(out) != doc["outputs"][0]["sha256"]:
                print(f"error: re-run data differs from {doc['outputs'][0]['path']}", file=sys.stderr)
                return 1
    print("ok")
    return 0


def run_cli(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "verify":
            return verify(args.manifest, args.rerun)
        run_command(args, argv)
    except UsageError as exc:
        print(f"rodeo {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (RodeoError, OSError, ValueError, json.JSONDecodeError, KeyError) as exc:
        message = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {message}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())
