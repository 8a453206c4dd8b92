import json
import os

import numpy as np
import pytest

from svrg_imc.cli import cli_main
from svrg_imc.fileio import read_manifest, read_matrix, read_observations


def run(*argv):
    return cli_main(list(argv))


class TestCheck:
    def test_healthy_build_exits_zero(self, capsys):
        assert run("check") == 0
        out = capsys.readouterr().out
        for name in ("gradient-oracle", "procrustes-oracle", "unbiasedness-oracle", "svd-oracle"):
            assert f"{name}: ok" in out


class TestUsageErrors:
    def test_unknown_flag(self, capsys):
        assert run("solve", "--frobnicate", "1") == 1

    def test_unknown_subcommand(self):
        assert run("tabulate") == 1

    def test_missing_out(self, capsys):
        assert run("generate", "--d1", "10") == 1
        assert "error" in capsys.readouterr().err

    def test_both_samplers_rejected(self, tmp_path, capsys):
        code = run(
            "solve", "--sample-rate", "0.5", "--samples", "40",
            "--out", str(tmp_path / "x"),
        )
        assert code == 1

    def test_help_exits_zero(self):
        # argparse exits are converted to return codes by cli_main
        assert run("--help") == 0


class TestGenerateSampleInit:
    def test_pipeline(self, tmp_path):
        prefix = str(tmp_path / "inst")
        assert run(
            "generate", "--d1", "24", "--d2", "20", "--n1", "6", "--n2", "5",
            "--rank", "2", "--cond", "2.0", "--seed", "3", "--out", prefix,
        ) == 0
        x_left = read_matrix(f"{prefix}.x_left.txt")
        assert x_left.shape == (24, 6)
        l_star = read_matrix(f"{prefix}.l_star.txt")
        assert l_star.shape == (24, 20)

        obs_prefix = str(tmp_path / "obs")
        assert run(
            "sample", "--instance", prefix, "--sample-rate", "0.6",
            "--seed", "4", "--out", obs_prefix,
        ) == 0
        omega = read_observations(f"{obs_prefix}.obs.txt")
        assert omega.shape == (24, 20)
        assert np.array_equal(omega.values, l_star[omega.rows, omega.cols])

        init_prefix = str(tmp_path / "init")
        assert run(
            "init", "--instance", prefix, "--obs", f"{obs_prefix}.obs.txt",
            "--rank", "2", "--seed", "5", "--out", init_prefix,
        ) == 0
        u = read_matrix(f"{init_prefix}.u.txt")
        v = read_matrix(f"{init_prefix}.v.txt")
        assert u.shape == (6, 2)
        assert v.shape == (5, 2)
        manifest = read_manifest(f"{init_prefix}.manifest.json")
        assert manifest["command"] == "init"
        assert len(manifest["inputs"]) == 3

    def test_exact_count_sampling(self, tmp_path):
        prefix = str(tmp_path / "inst")
        run("generate", "--d1", "12", "--d2", "12", "--n1", "4", "--n2", "4",
            "--rank", "2", "--seed", "1", "--out", prefix)
        assert run("sample", "--instance", prefix, "--samples", "37",
                   "--seed", "2", "--out", str(tmp_path / "o")) == 0
        omega = read_observations(str(tmp_path / "o.obs.txt"))
        assert omega.size == 37

    def test_sample_missing_instance_file(self, tmp_path, capsys):
        code = run("sample", "--instance", str(tmp_path / "nope"),
                   "--sample-rate", "0.5", "--out", str(tmp_path / "o"))
        assert code == 1


class TestSolve:
    BASE = [
        "solve", "--d1", "30", "--d2", "30", "--n1", "6", "--n2", "6",
        "--rank", "2", "--cond", "1.5", "--seed", "7",
        "--sample-rate", "0.8", "--epochs", "300", "--tol", "1e-4",
    ]

    def test_writes_trace_and_factors(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        assert run(*self.BASE, "--out", out) == 0
        trace = open(f"{out}.trace.csv").read().splitlines()
        assert trace[0] == "epoch,passes,rel_err,dist,objective,projection_activations"
        assert len(trace) > 2
        assert read_matrix(f"{out}.u.txt").shape == (6, 2)
        manifest = read_manifest(f"{out}.manifest.json")
        assert manifest["config"]["algo"] == "lrsvrg"
        assert manifest["config"]["tol"] == 1e-4

    def test_divergence_exit_code(self, tmp_path, capsys):
        out = str(tmp_path / "run")
        code = run(*self.BASE, "--tau", "1000.0", "--out", out)
        assert code == 2
        err = capsys.readouterr().err
        assert "diverged" in err
        assert "epoch" in err

    @pytest.mark.parametrize("algo", ["gd", "am"])
    def test_baselines_run(self, tmp_path, algo):
        out = str(tmp_path / algo)
        args = [a for a in self.BASE]
        if algo == "gd":
            args += ["--epochs", "2000"]
        assert run(*args, "--algo", algo, "--out", out) == 0

    def test_manifest_rerun_byte_identical(self, tmp_path):
        out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
        assert run(*self.BASE, "--out", out1) == 0
        assert run("solve", "--manifest", f"{out1}.manifest.json", "--out", out2) == 0
        assert open(f"{out1}.trace.csv", "rb").read() == open(f"{out2}.trace.csv", "rb").read()
        assert open(f"{out1}.u.txt", "rb").read() == open(f"{out2}.u.txt", "rb").read()

    def test_manifest_with_stray_flags_rejected(self, tmp_path):
        out = str(tmp_path / "a")
        assert run(*self.BASE, "--out", out) == 0
        code = run("solve", "--manifest", f"{out}.manifest.json",
                   "--seed", "9", "--out", str(tmp_path / "b"))
        assert code == 1


class TestPhaseConverge:
    PHASE = [
        "phase", "--datasets", "20,5,2", "--multiples", "6,24.8",
        "--trials", "2", "--epochs", "50", "--seed", "11",
    ]
    CONVERGE = [
        "converge", "--dataset", "20,5,2", "--rates", "0.9",
        "--algos", "lrsvrg,gd", "--trials", "2", "--pass-budget", "30",
        "--seed", "12", "--epochs", "100",
    ]

    def test_phase_csv(self, tmp_path):
        out = str(tmp_path / "phase.csv")
        assert run(*self.PHASE, "--out", out) == 0
        lines = open(out).read().splitlines()
        assert lines[0].startswith("dataset,d,n,r,multiple")
        assert len(lines) == 3

    def test_phase_manifest_rerun(self, tmp_path):
        out1, out2 = str(tmp_path / "p1.csv"), str(tmp_path / "p2.csv")
        assert run(*self.PHASE, "--out", out1) == 0
        assert run("phase", "--manifest", f"{out1}.manifest.json", "--out", out2) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()

    def test_converge_csv_and_rerun(self, tmp_path):
        out1, out2 = str(tmp_path / "c1.csv"), str(tmp_path / "c2.csv")
        assert run(*self.CONVERGE, "--out", out1) == 0
        lines = open(out1).read().splitlines()
        assert lines[0] == "dataset,p,algo,trial,pass,log2_rel_err,rel_err,dist"
        assert len(lines) > 3
        assert run("converge", "--manifest", f"{out1}.manifest.json", "--out", out2) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()

    def test_converge_requires_budget(self, tmp_path):
        code = run("converge", "--dataset", "20,5,2", "--rates", "0.9",
                   "--trials", "1", "--out", str(tmp_path / "c.csv"))
        assert code == 1
