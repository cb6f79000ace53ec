import csv
import json

import numpy as np
import pytest

from medianflow import io
from medianflow.cli import main
from medianflow.energy import EnergyReport
from medianflow.experiments import build_config, parse_override, resolve
from medianflow.grid import ConfigurationError

SMALL = ["--set", "grid.n=48", "--set", "solver.K_max=6", "--threads", "1"]


# -- file formats ------------------------------------------------------------

def test_pgm_roundtrip(tmp_path, rng):
    phi = rng.random((13, 7))
    phi[0, 0], phi[-1, -1] = 0.0, 1.0
    io.write_pgm(tmp_path / "a.pgm", phi)
    back = io.read_pgm(tmp_path / "a.pgm")
    assert back.shape == phi.shape and back.dtype == np.uint8
    assert np.array_equal(back, np.rint(255 * phi).astype(np.uint8))
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n13 7\n255\n")
    # first stored row is the top of the domain (largest iy)
    assert raw[len(b"P5\n13 7\n255\n")] == back[0, -1]


def test_trace_csv_roundtrip(tmp_path):
    reps = [EnergyReport(1.0, 0.5, 1.25, 0.3, 0.0), EnergyReport(0.9, 0.4, 1.1, 0.3, 0.1)]
    rows = io.trace_rows(reps, [0.2, 0.1], [3, 4])
    io.write_trace_csv(tmp_path / "t.csv", rows)
    with open(tmp_path / "t.csv") as fh:
        assert next(csv.reader(fh)) == list(io.TRACE_HEADER)
    back = io.read_trace_csv(tmp_path / "t.csv")
    assert list(back["iter"]) == [1, 2]
    assert list(back["total"]) == [1.25, 1.1]
    assert list(back["multiplier"]) == [0.0, 0.1]


def test_histogram_has_64_bins(tmp_path, rng):
    phi = rng.random((20, 20))
    phi[0, 0] = 1.0
    io.write_histogram(tmp_path / "h.csv", phi)
    h = io.read_histogram(tmp_path / "h.csv")
    assert len(h["count"]) == io.HISTOGRAM_BINS
    assert h["count"].sum() == phi.size
    assert h["fraction"].sum() == pytest.approx(1.0)
    assert h["bin_lo"][0] == 0.0 and h["bin_hi"][-1] == 1.0


def test_manifest_lines(tmp_path):
    io.write_manifest(tmp_path / "m.txt", {"b.x": 0.1, "a": [1, 2], "c": "s", "d": None})
    lines = (tmp_path / "m.txt").read_text().splitlines()
    assert lines == ['a = [1, 2]', 'b.x = 0.1', 'c = "s"', 'd = null']


# -- configuration -------------------------------------------------------------

def test_parse_override():
    assert parse_override("solver.tau=5e-4") == ("solver.tau", 5e-4)
    assert parse_override("run.init = square") == ("run.init", "square")
    assert parse_override("run.tau_ladder=[1e-3, 2e-3]") == ("run.tau_ladder", [1e-3, 2e-3])
    with pytest.raises(ConfigurationError):
        parse_override("novalue")


def test_build_config_layers(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text('preset = "sharpness"\n[solver]\ntau = 2e-3\nK_max = 7\n')
    cfg = build_config(None, f, ["solver.K_max=9"], output_dir=str(tmp_path / "o"))
    assert cfg.preset == "sharpness"
    assert cfg.solver.tau == 2e-3 and cfg.solver.K_max == 9 and cfg.solver.lambda_tilde == 0.6
    assert not cfg.is_topopt
    topo = build_config("stokes_contraction")
    assert topo.is_topopt and topo.flow.beta == 0.45 and topo.grid.nx == 96


def test_config_errors():
    with pytest.raises(ConfigurationError):
        build_config("sharpness", overrides=["solver.tau=-1"])
    with pytest.raises(ConfigurationError):
        build_config("custom", overrides=["image_gen.seed=none", "run.init=random"])
    with pytest.raises(ConfigurationError):
        resolve({"preset": "nonsense"})


# -- command line ----------------------------------------------------------------

def run_cli(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_run_sharpness_writes_outputs(tmp_path, capsys):
    out = tmp_path / "sharp"
    code, cap = run_cli(capsys, "run", "--preset", "sharpness", "--out", str(out), *SMALL)
    assert code == 0, cap.err
    for name in ("trace.csv", "phi_final.pgm", "phi_initial.pgm", "mask_final.pgm",
                 "histogram.csv", "manifest.txt", "image.pgm",
                 "histogram_iter0000.csv", "histogram_iter0002.csv", "histogram_iter0005.csv",
                 "histogram_final.csv"):
        assert (out / name).exists(), name
    tr = io.read_trace_csv(out / "trace.csv")
    assert np.all(np.diff(tr["iter"]) == 1)
    assert np.all(np.diff(tr["total"]) <= 1e-9 * abs(tr["total"][0]))
    man = (out / "manifest.txt").read_text()
    assert "solver.tau = 0.001" in man and "grid.n = 48" in man and "solver.K_max = 6" in man


def test_rerun_is_bit_identical(tmp_path, capsys):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert run_cli(capsys, "run", "--preset", "quadratic_demo", "--out", str(d), *SMALL,
                       "--set", "run.snapshot_iters=[2, 4]")[0] == 0
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(dirs[1]) for p in dirs[1].rglob("*") if p.is_file())
    for rel in files:
        a, b = (dirs[0] / rel).read_bytes(), (dirs[1] / rel).read_bytes()
        if rel.name == "trace.csv":
            # wall-clock column aside, every value must repeat exactly
            ta, tb = io.read_trace_csv(dirs[0] / rel), io.read_trace_csv(dirs[1] / rel)
            for key in ta:
                if key != "wall_ms":
                    assert np.array_equal(ta[key], tb[key]), key
        elif rel.name == "manifest.txt":
            # only the timing and the (deliberately different) output path may differ
            def keep(t):
                return [ln for ln in t.decode().splitlines()
                        if "seconds" not in ln and not ln.startswith("output_dir")]
            assert keep(a) == keep(b)
        else:
            assert a == b, rel


def test_pinning_compare_summary(tmp_path, capsys):
    out = tmp_path / "pin"
    code, cap = run_cli(capsys, "run", "--preset", "pinning_compare", "--out", str(out),
                        "--set", "grid.n=48", "--set", "solver.K_max=3",
                        "--set", "run.tau_ladder=[9e-4, 5e-4]")
    assert code == 0, cap.err
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["method"], float(r["tau"])) for r in rows] == [
        ("binary_td", 9e-4), ("binary_td", 5e-4),
        ("weighted_quantile", 9e-4), ("weighted_quantile", 5e-4)]
    assert (out / "binary_td_tau9e-04" / "mask_final.pgm").exists()


def test_run_topopt_small(tmp_path, capsys):
    out = tmp_path / "topo"
    code, cap = run_cli(capsys, "run", "--preset", "stokes_double_pipe", "--out", str(out),
                        "--set", "grid.n=32", "--set", "solver.K_max=3",
                        "--set", "solver.tau=1e-3", "--set", "solver.lambda_tilde=20.0",
                        "--seed", "4")
    assert code == 0, cap.err
    with open(out / "trace.csv") as fh:
        assert next(csv.reader(fh)) == list(io.TRACE_HEADER) + ["linearized_fidelity"]
    assert "run.seed = 4" in (out / "manifest.txt").read_text()


def test_validate(tmp_path, capsys):
    f = tmp_path / "c.toml"
    f.write_text('preset = "lif_demo"\n')
    code, cap = run_cli(capsys, "validate", "--config", str(f))
    assert code == 0 and cap.out.startswith("ok: preset lif_demo")
    f.write_text('preset = "lif_demo"\n[solver]\ntau = -1.0\n')
    code, cap = run_cli(capsys, "validate", "--config", str(f))
    assert code == 1 and cap.err.startswith("error:")
    f.write_text("not toml [")
    assert run_cli(capsys, "validate", "--config", str(f))[0] == 1


def test_oracle_quantile(tmp_path, capsys):
    rng = np.random.default_rng(0)
    samples = tmp_path / "s.jsonl"
    with open(samples, "w") as fh:
        for _ in range(50):
            n = int(rng.integers(1, 10))
            fh.write(json.dumps({"values": rng.random(n).tolist(),
                                 "weights": rng.random(n).tolist(),
                                 "T": float(rng.uniform(-0.5, 1.5))}) + "\n")
    code, cap = run_cli(capsys, "oracle", "quantile", "--samples", str(samples))
    assert code == 0 and "50 samples, 0 violations" in cap.out
    samples.write_text('{"values": [0.5]}\n')
    assert run_cli(capsys, "oracle", "quantile", "--samples", str(samples))[0] == 1


def test_error_exit_codes(tmp_path, capsys):
    code, cap = run_cli(capsys, "run", "--preset", "sharpness", "--out", str(tmp_path / "x"),
                        "--set", "solver.kernel=box")
    assert code == 1 and "error:" in cap.err
    code, cap = run_cli(capsys, "run", "--config", str(tmp_path / "missing.toml"))
    assert code == 1
    code, cap = run_cli(capsys, "run", "--preset", "sharpness", "--threads", "0")
    assert code == 1
    with pytest.raises(SystemExit):
        main(["run", "--preset", "nope"])


def test_console_script_is_installed():
    import shutil
    import subprocess

    exe = shutil.which("medianflow")
    assert exe is not None
    res = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "validate" in res.stdout
