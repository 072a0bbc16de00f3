import json
import subprocess
import sys

import numpy as np
import pytest

from qhyst import io
from qhyst.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main

HYBRID = """
[lattice]
kind = "ring"
n = 4

[drive]
h_max = 3.0
t_total = 120.0

[schedule]
j_over_gamma = 7.87

[hybrid]
dt = 0.02
record_stride = 10

[output]
samples = 20
"""

MFA = """
[lattice]
kind = "ring"
n = 2

[drive]
kind = "sinusoidal"
h1 = 2.0
omega = 1.0

[schedule]
gamma = 0.1

[mfa]
gammas = [0.05, 0.1, 0.2, 0.3, 0.5]
"""


@pytest.fixture
def config_file(tmp_path):
    def write(text, name="run.toml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return write


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def test_simulate_hybrid_writes_outputs(tmp_path, config_file, capsys):
    code, summary = run(["simulate-hybrid", "--config", config_file(HYBRID), "--out", str(tmp_path / "o")], capsys)
    assert code == EXIT_OK
    assert summary["mode"] == "hybrid"
    trace = io.read_trace_csv(tmp_path / "o" / "trace.csv")
    assert len(trace) == summary["records"]
    samples = io.load_sampleset_csv(tmp_path / "o" / "samples.csv")
    assert len(samples) == len(trace)
    assert io.load_config(tmp_path / "o" / "config.toml") == io.load_config(config_file(HYBRID))


def test_seed_flag_changes_nothing_in_unitary_mode(tmp_path, config_file, capsys):
    path = config_file(HYBRID.replace("samples = 20", "samples = 0"))
    a, first = run(["simulate-unitary", "--config", path, "--out", str(tmp_path / "a"), "--seed", "1"], capsys)
    b, second = run(["simulate-unitary", "--config", path, "--out", str(tmp_path / "b"), "--seed", "2"], capsys)
    assert a == b == EXIT_OK
    assert first == second
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_quiet_prints_nothing(tmp_path, config_file, capsys):
    code, summary = run(["simulate-ip", "--config", config_file(MFA), "--out", str(tmp_path), "--quiet"], capsys)
    assert code == EXIT_OK and summary is None


def test_mfa_area_scan(tmp_path, config_file, capsys):
    code, summary = run(["simulate-mfa", "--config", config_file(MFA), "--out", str(tmp_path)], capsys)
    assert code == EXIT_OK
    assert len(summary["areas"]) == 5
    code, fit = run(["analyze", "area-scaling", str(tmp_path / "areas.csv")], capsys)
    assert code == EXIT_OK
    assert fit["alpha"] == pytest.approx(summary["alpha"])


def test_unstable_mfa_exits_3(tmp_path, config_file, capsys):
    doc = MFA.replace('gammas = [0.05, 0.1, 0.2, 0.3, 0.5]', "lam = 1.0\nbeta = 1.0\ndt = 0.01")
    doc = doc.replace('kind = "sinusoidal"\nh1 = 2.0\nomega = 1.0', "h_max = 3.0\nt_total = 60.0")
    doc = doc.replace("gamma = 0.1", "gamma = 0.3")
    code, _ = run(["simulate-mfa", "--config", config_file(doc), "--out", str(tmp_path)], capsys)
    assert code == EXIT_NUMERICAL


def test_unknown_key_exits_2(tmp_path, config_file, capsys):
    assert main(["simulate-hybrid", "--config", config_file(HYBRID + "typo = 1\n"), "--out", str(tmp_path)]) == 2
    assert "output.typo" in capsys.readouterr().err


def test_missing_config_exits_2(tmp_path, capsys):
    assert main(["simulate-hybrid", "--config", str(tmp_path / "nope.toml")]) == EXIT_VALIDATION
    assert main(["simulate-hybrid"]) == EXIT_VALIDATION


def test_crossing_scan(tmp_path, capsys):
    code, summary = run(["crossing-scan", "--sizes", "3,4", "--gammas", "0.1", "--points", "101",
                         "--out", str(tmp_path)], capsys)
    assert code == EXIT_OK
    assert all(-2.2 <= row[2] <= -1.8 for row in summary["crossings"])
    assert (tmp_path / "crossings.csv").exists()


def test_inconclusive_scan_exits_3(tmp_path, capsys):
    code, _ = run(["crossing-scan", "--sizes", "4", "--gammas", "0.1", "--h-min", "-1.5", "--h-max", "-1.0",
                   "--out", str(tmp_path)], capsys)
    assert code == EXIT_NUMERICAL


def test_lz_check(tmp_path, capsys):
    code, summary = run(["lz-check", "--min-exponent", "0.5", "--max-exponent", "2", "--points", "3",
                         "--out", str(tmp_path)], capsys)
    assert code == EXIT_OK
    assert summary["max_abs_diff"] < 1e-2


def test_analyze_loop_and_kinks(tmp_path, config_file, capsys):
    traces = []
    for t_total in (60.0, 120.0, 240.0):
        out = tmp_path / f"T{int(t_total)}"
        doc = HYBRID.replace("t_total = 120.0", f"t_total = {t_total}").replace("samples = 20", "samples = 0")
        assert main(["simulate-unitary", "--config", config_file(doc, f"{t_total}.toml"), "--out", str(out),
                     "--quiet"]) == EXIT_OK
        traces.append(str(out / "trace.csv"))
    code, loops = run(["analyze", "loop", *traces], capsys)
    assert code == EXIT_OK and set(loops) == set(traces)
    code, kinks = run(["analyze", "kinks", *traces, "--gamma", str(1 / 7.87)], capsys)
    assert code == EXIT_OK
    assert len(kinks["hdot"]) == 3
    assert kinks["theoretical_slope"] < 0


def test_analyze_loop_rejects_garbage(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,trace\n")
    assert main(["analyze", "loop", str(bad)]) == EXIT_VALIDATION


def test_ssf(tmp_path, capsys):
    path = tmp_path / "samples.csv"
    path.write_text("h,segment,config\n" + "0.0,forward,+-+-+-+-+-+-+-+-\n" * 3)
    code, summary = run(["ssf", str(path), "--width", "4", "--size", "21", "--out", str(tmp_path)], capsys)
    assert code == EXIT_OK
    heat = np.loadtxt(tmp_path / "ssf.csv", delimiter=",")
    assert heat.shape == (21, 21)
    assert summary["peak"] == pytest.approx(heat.max())


def test_ssf_bad_width(tmp_path, capsys):
    path = tmp_path / "samples.csv"
    path.write_text("h,segment,config\n0.0,forward,+-+\n")
    assert main(["ssf", str(path), "--width", "2", "--out", str(tmp_path)]) == EXIT_VALIDATION


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qhyst", "crossing-scan", "--sizes", "3", "--gammas", "0.1",
                           "--points", "41", "--out", str(tmp_path), "--quiet"], capture_output=True)
    assert proc.returncode == 0
