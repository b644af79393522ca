import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from rodeo.cli import SCHEMAS, run_cli


def cli(*args):
    return subprocess.run([sys.executable, "-m", "rodeo", *args], capture_output=True, text=True)


def read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_help_and_version():
    assert cli("--help").returncode == 0
    assert cli("scan", "--help").returncode == 0
    assert cli("--version").stdout.strip()


@pytest.mark.parametrize(
    "args",
    [
        ["scan", "--emin", "0", "--emax", "1", "--cycles", "3", "--trms", "1", "--out", "x.csv", "--bogus"],
        ["scan", "--emin", "0", "--emax", "1", "--cycles", "3", "--trms", "1", "--points", "0", "--out", "x.csv"],
        ["qpe", "--phase-bits", "30", "--out", "x.csv"],
        ["search", "--emin", "0", "--emax", "1", "--epsilon", "0.1", "--shrink-K", "1", "--out", "x.csv"],
        ["nosuchcommand"],
    ],
)
def test_usage_errors_exit_2(args, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rodeo", *args], capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 2
    assert not (tmp_path / "x.csv").exists()


def test_clean_ring_spectrum(tmp_path):
    out = tmp_path / "s.csv"
    assert run_cli(["spectrum-exact", "--model", "anderson", "--sites", "4", "--disorder-const", "0",
                    "--out", str(out)]) == 0
    rows = read(out)
    assert tuple(rows[0]) == SCHEMAS["spectrum-exact"]
    e = np.array([float(r[0]) for r in rows[1:]])
    w = np.array([float(r[1]) for r in rows[1:]])
    np.testing.assert_allclose(e, [-2, 0, 0, 2], atol=1e-12)
    assert abs(w.sum() - 1) < 1e-12
    assert abs(w[0] - 0.25) < 1e-12


def test_no_peaks_gives_header_only(tmp_path):
    out = tmp_path / "p.csv"
    assert run_cli(["peaks", "--sites", "4", "--h", "1", "--cycles", "3", "--trms", "1", "--emin", "50",
                    "--emax", "60", "--points", "11", "--out", str(out)]) == 0
    assert read(out) == [list(SCHEMAS["peaks"])]


def test_manifest_contents(tmp_path):
    out = tmp_path / "q.csv"
    assert run_cli(["qpe", "--sites", "4", "--h", "1", "--phase-bits", "4", "--seed", "9", "--out", str(out)]) == 0
    doc = json.loads((tmp_path / "q.csv.manifest.json").read_text())
    assert doc["subcommand"] == "qpe" and doc["seed"] == 9
    assert doc["config"]["phase_bits"] == 4
    assert "out" not in doc["config"] and "threads" not in doc["config"]
    assert doc["outputs"][0]["sha256"]
    probs = [float(r[2]) for r in read(out)[1:]]
    assert abs(sum(probs) - 1) < 1e-12


def test_repeat_runs_have_same_digest(tmp_path):
    args = ["scan", "--sites", "4", "--h", "1", "--cycles", "3", "--trms", "2", "--emin", "-8", "--emax", "4",
            "--points", "21", "--averages", "4", "--seed", "5"]
    digests = []
    for name in ("a.csv", "b.csv"):
        assert run_cli(args + ["--out", str(tmp_path / name)]) == 0
        digests.append(json.loads((tmp_path / f"{name}.manifest.json").read_text())["outputs"][0]["sha256"])
    assert digests[0] == digests[1]
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_verify_detects_tampering(tmp_path):
    out = tmp_path / "s.csv"
    manifest = tmp_path / "m.json"
    assert run_cli(["spectrum-exact", "--sites", "4", "--out", str(out), "--manifest", str(manifest)]) == 0
    assert run_cli(["verify", "--manifest", str(manifest)]) == 0
    out.write_text(out.read_text() + "0,0\n")
    proc = cli("verify", "--manifest", str(manifest))
    assert proc.returncode == 1 and proc.stderr.startswith("error:")
    out.unlink()
    assert cli("verify", "--manifest", str(manifest)).returncode == 1


def test_runtime_error_is_one_line(tmp_path):
    proc = cli("spectrum-exact", "--model", "file", "--hamiltonian-file", str(tmp_path / "missing.json"),
               "--out", str(tmp_path / "x.csv"))
    assert proc.returncode == 1
    assert proc.stderr.count("\n") == 1 and proc.stderr.startswith("error:")
    assert "Traceback" not in proc.stderr


def test_ambiguous_prepare_target_fails(tmp_path):
    proc = cli("prepare", "--sites", "6", "--h", "1", "--cycles", "3", "--trms", "1", "--isolation", "50",
               "--out", str(tmp_path / "x.csv"))
    assert proc.returncode == 1 and proc.stderr.startswith("error:")


@pytest.mark.slow
def test_full_heisenberg_scan_grid(tmp_path):
    out = tmp_path / "scan.csv"
    assert run_cli(["scan", "--sites", "10", "--h", "3", "--cycles", "9", "--trms", "5", "--emin", "-20",
                    "--emax", "12", "--points", "321", "--averages", "20", "--seed", "7", "--out", str(out)]) == 0
    rows = read(out)
    assert len(rows) == 322
    e = np.array([float(r[0]) for r in rows[1:]])
    assert e[0] == -20 and e[-1] == 12
