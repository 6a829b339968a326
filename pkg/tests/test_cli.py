import json
import textwrap

import pytest

from qhydro.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_TOLERANCE, OUTPUT_ENV, main
from qhydro.scenarios import bundled_names

SMALL = """
[scenario]
name = small_free
dim = 1
description = short free spreading run
exercises = cli

[state]
kind = free-gaussian
sigma0 = 1.0

[potential]
kind = free

[grid]
lo = -10
hi = 10
counts = 128

[integration]
t_end = 0.2
snapshots = 2

[oracle]
lo = -6
hi = 6
counts = 241
dt = 1e-3

[diagnostics]
trajectory = yes
charges = energy, momentum
{extra}
"""


def write(tmp_path, text, name="case.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def small(tmp_path, extra=""):
    return write(tmp_path, SMALL.format(extra=extra))


def tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in root.rglob("*") if p.is_file()}


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 8 and len(lines) == len(bundled_names())


def test_describe(capsys):
    assert main(["describe", "vortex_2d"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "vortex_2d (2D)" in out and "harmonic" in out


def test_describe_unknown():
    assert main(["describe", "nope"]) == EXIT_CONFIG


def test_bad_arguments():
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_too_few_nodes(tmp_path, capsys):
    path = write(tmp_path, SMALL.format(extra="").replace("counts = 128", "counts = 3"))
    assert main(["validate", path]) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_inadmissible_charge(tmp_path, capsys):
    text = SMALL.format(extra="").replace("kind = free\n", "kind = harmonic\nomega = 1.0\n")
    text = text.replace("charges = energy, momentum", "charges = dilation")
    assert main(["run", write(tmp_path, text), "--output", str(tmp_path / "out")]) == EXIT_CONFIG
    assert "q . grad V + 2 t dV/dt + 2 V = 0" in capsys.readouterr().err


def test_small_run_writes_outputs(tmp_path):
    out = tmp_path / "out"
    assert main(["run", small(tmp_path), "--output", str(out)]) == EXIT_OK
    files = tree(out / "small_free")
    assert "report.json" in files and "summary.json" in files
    assert any(name.startswith("snapshots/") for name in files)
    assert any(name.startswith("charges/") for name in files)
    summary = json.loads(files["summary.json"])
    assert summary["passed"] is True


def test_deterministic_and_env_root(tmp_path, monkeypatch):
    path = small(tmp_path)
    assert main(["run", path, "--output", str(tmp_path / "a")]) == EXIT_OK
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "b"))
    assert main(["run", path]) == EXIT_OK
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_impossible_tolerance(tmp_path, capsys):
    path = small(tmp_path, "\n[tolerances]\ntrajectory_rel = 1e-30\n")
    assert main(["run", path, "--output", str(tmp_path / "out")]) == EXIT_TOLERANCE
    assert "FAIL" in capsys.readouterr().out


def test_tangled_vortex_is_fatal(tmp_path):
    path = write(tmp_path, """
        [scenario]
        name = raw_vortex
        dim = 2
        [state]
        kind = vortex-2d
        omega = 1.0
        [potential]
        kind = harmonic
        omega = 1.0
        [grid]
        lo = -5
        hi = 5
        counts = 48
        [integration]
        t_end = 0.5
        snapshots = 1
        [fluid]
        core_radius = 0.0
        """)
    out = tmp_path / "out"
    assert main(["run", path, "--output", str(out)]) == EXIT_RUNTIME
    info = json.loads((out / "raw_vortex" / "failure.json").read_text())
    assert info["error"] == "MeshTanglingError" and info["min_jacobian"] <= 0
