"""Command-line interface tests (exit codes, artifacts, config handling)."""

import csv
import filecmp
import json
import subprocess
import sys

import numpy as np
import pytest


def run_cli(*args, timeout=600):
    return subprocess.run([sys.executable, "-m", "manigrad.cli", *args],
                          capture_output=True, text=True, timeout=timeout)


@pytest.fixture(scope="module")
def circle_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "circle.csv"
    rng = np.random.default_rng(0)
    theta = rng.uniform(0.0, 2 * np.pi, 200)
    pts = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    np.savetxt(path, pts, delimiter=",", header="x,y", comments="")
    return path


class TestUsageErrors:
    def test_no_command(self):
        assert run_cli().returncode == 2

    def test_unknown_command(self):
        assert run_cli("frobnicate").returncode == 2

    def test_grad_bench_bad_t_list(self, tmp_path):
        r = run_cli("grad-bench", "--out", str(tmp_path / "o"),
                    "--t-list", "1,zero")
        assert r.returncode == 2

    def test_pack_bad_dimension(self, tmp_path):
        r = run_cli("pack", "--n", "9", "--out", str(tmp_path / "o"))
        assert r.returncode == 2

    def test_dmap_missing_input(self, tmp_path):
        r = run_cli("dmap", "--input", str(tmp_path / "nope.csv"),
                    "--out", str(tmp_path / "o"))
        assert r.returncode == 2

    def test_bad_config_file(self, tmp_path, circle_csv):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("not a key value line\n")
        r = run_cli("dmap", "--input", str(circle_csv),
                    "--out", str(tmp_path / "o"), "--config", str(cfg))
        assert r.returncode == 2


class TestGradBench:
    def test_small_grid(self, tmp_path):
        out = tmp_path / "gb"
        r = run_cli("grad-bench", "--out", str(out), "--seed", "3",
                    "--t-list", "1,0.5", "--m-list", "80", "--trials", "1")
        assert r.returncode == 0, r.stderr
        with open(out / "table.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert {"t", "m", "mse_proposed", "mse_learning", "seed"} <= set(rows[0])
        summary = json.loads((out / "summary.json").read_text())
        assert summary["cells"] == 2
        assert (out / "config.txt").exists()
        assert (out / "table.png").exists()

    def test_config_file_with_cli_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("t_list=1\nm_list=60\ntrials=1\nseed=5\n")
        out = tmp_path / "gb"
        r = run_cli("grad-bench", "--config", str(cfg), "--out", str(out),
                    "--m-list", "90")
        assert r.returncode == 0, r.stderr
        echoed = dict(line.split("=", 1)
                      for line in (out / "config.txt").read_text().splitlines())
        assert echoed["m_list"] == "90"   # CLI flag wins
        assert echoed["t_list"] == "1"    # config value survives
        assert echoed["seed"] == "5"


class TestPack:
    def test_artifacts(self, tmp_path):
        out = tmp_path / "pack"
        r = run_cli("pack", "--n", "2", "--iters", "120", "--executions", "1",
                    "--seed", "0", "--out", str(out))
        assert r.returncode == 0, r.stderr
        for name in ("trace.csv", "basis.json", "lattice.csv", "config.txt",
                     "trace.png", "lattice.png"):
            assert (out / name).exists(), name
        basis = json.loads((out / "basis.json").read_text())
        cols = np.array(basis["columns"])
        assert abs(np.linalg.det(cols) - 1.0) < 1e-9
        assert basis["minkowski_violations"] == 0

    def test_strict_failure_exit_code(self, tmp_path):
        # 5 iterations cannot reach the 0.90 density bar from the identity
        r = run_cli("pack", "--n", "2", "--iters", "5", "--executions", "1",
                    "--seed", "0", "--out", str(tmp_path / "o"), "--strict")
        assert r.returncode == 1


class TestTomo:
    def test_artifacts_and_embeddings(self, tmp_path):
        out = tmp_path / "tomo"
        r = run_cli("tomo", "--n", "48", "--k", "300", "--s", "10",
                    "--eta", "0", "--seed", "1", "--out", str(out),
                    "--emit-embeddings")
        assert r.returncode == 0, r.stderr
        sub = out / "eta_0"
        for name in ("angles.csv", "sinogram.csv", "sinogram.json",
                     "recon.pgm", "recon.pgm.f32", "phantom.pgm", "angles.png"):
            assert (sub / name).exists(), name
        assert (out / "errors.csv").exists()
        assert any(sub.glob("embedding_w*.csv"))
        truth = json.loads((sub / "sinogram.json").read_text())
        assert "truth" in truth


class TestDmap:
    def test_embedding_output(self, tmp_path, circle_csv):
        out = tmp_path / "dmap"
        r = run_cli("dmap", "--input", str(circle_csv), "--out", str(out),
                    "--m", "2")
        assert r.returncode == 0, r.stderr
        with open(out / "embedding.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 201  # header + 200 points
        eig = json.loads((out / "eigenvalues.json").read_text())
        assert len(eig["eigenvalues"]) == 2

    def test_m_too_large(self, tmp_path, circle_csv):
        r = run_cli("dmap", "--input", str(circle_csv),
                    "--out", str(tmp_path / "o"), "--m", "500")
        assert r.returncode == 2


class TestDeterminism:
    def test_dmap_byte_identical(self, tmp_path, circle_csv):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            r = run_cli("dmap", "--input", str(circle_csv), "--out", str(out),
                        "--m", "2")
            assert r.returncode == 0
            outs.append(out)
        for f in sorted(outs[0].iterdir()):
            if f.suffix == ".png":
                continue
            assert filecmp.cmp(f, outs[1] / f.name, shallow=False), f.name
