"""CLI behavior: exit codes, artifacts, config handling, determinism."""

import json
import subprocess
import sys

from lowdeg.models import read_tensor


def run_cli(*argv, workers=None, check=False):
    env = {"PATH": "/usr/bin:/bin", "LOWDEG_WORKERS": str(workers or 1)}
    proc = subprocess.run(
        [sys.executable, "-m", "lowdeg.cli", *argv],
        capture_output=True, text=True, env={**env},
    )
    if check and proc.returncode != 0:
        raise AssertionError(f"exit {proc.returncode}: {proc.stderr}")
    return proc


class TestLdlrNormCommand:
    def test_json_output_and_provenance(self, tmp_path):
        out = tmp_path / "norm.json"
        proc = run_cli(
            "ldlr-norm", "--p", "2", "--prior", "rademacher",
            "--lambda-hat", "0.9", "--n", "64", "--D", "8", "-o", str(out),
            check=True,
        )
        assert proc.returncode == 0
        doc = json.loads(out.read_text())
        assert doc["mode"] == "exact"
        assert len(doc["terms"]) == 9
        assert set(doc["provenance"]) >= {"config_hash", "version", "generator"}

    def test_conflicting_signal_flags(self):
        proc = run_cli("ldlr-norm", "--p", "2", "--prior", "rademacher",
                       "--lambda", "1", "--lambda-hat", "1", "--n", "4", "--D", "2")
        assert proc.returncode == 2

    def test_missing_n_is_config_error(self):
        proc = run_cli("ldlr-norm", "--p", "2", "--prior", "rademacher",
                       "--lambda", "1", "--D", "2")
        assert proc.returncode == 2
        assert "n" in proc.stderr


class TestScanCommand:
    def test_csv_schema_and_sidecar(self, tmp_path):
        out = tmp_path / "scan.csv"
        run_cli(
            "scan", "--p", "2", "--prior", "rademacher",
            "--lambda-hat-grid", "0.9,1.1", "--n-grid", "32,64,128",
            "--schedule", "const:6", "--seed", "5", "-o", str(out),
            check=True,
        )
        lines = out.read_text().splitlines()
        assert lines[0] == "p,n,D,lambda,lambda_hat,log_norm_sq,mode,classification"
        assert len(lines) == 7
        # n-major then lambda ordering
        ns = [int(line.split(",")[1]) for line in lines[1:]]
        assert ns == sorted(ns)
        meta = json.loads((tmp_path / "scan.csv.meta.json").read_text())
        assert "provenance" in meta and "classifications" in meta

    def test_empty_grid_is_config_error(self):
        proc = run_cli("scan", "--p", "2", "--prior", "rademacher",
                       "--lambda-hat-grid", "0.9", "--n-grid", "",
                       "--schedule", "const:4", "--seed", "1")
        assert proc.returncode == 2

    def test_partial_failure_exit_code(self, tmp_path):
        # negative lambda fails per point; the scan completes with exit 3
        out = tmp_path / "partial.csv"
        proc = run_cli("scan", "--p", "2", "--prior", "rademacher",
                       "--lambda-grid", "0.1,-0.1", "--n-grid", "8,16",
                       "--schedule", "const:4", "--seed", "1", "-o", str(out))
        assert proc.returncode == 3
        assert out.exists()
        assert len(out.read_text().splitlines()) == 5  # header + 4 grid rows

    def test_exact_rationals_in_json(self, tmp_path):
        out = tmp_path / "exact.json"
        run_cli("ldlr-norm", "--p", "2", "--prior", "rademacher", "--lambda", "1",
                "--n", "1", "--D", "2", "-o", str(out), check=True)
        doc = json.loads(out.read_text())
        assert doc["norm_sq_exact"] == "5/2"
        assert doc["lambda_sq_exact"] == "1"

    def test_byte_identical_across_worker_counts(self, tmp_path):
        blobs = {}
        for w in (1, 4):
            out = tmp_path / f"scan{w}.csv"
            run_cli(
                "scan", "--p", "2", "--prior", "rademacher",
                "--lambda-hat-grid", "0.8,1.2", "--n-grid", "16,32,64",
                "--schedule", "log", "--seed", "9", "-o", str(out),
                workers=w, check=True,
            )
            blobs[w] = (out.read_bytes(), (tmp_path / f"scan{w}.csv.meta.json").read_bytes())
        assert blobs[1] == blobs[4]


class TestSimulateCommand:
    def test_deterministic_dump(self, tmp_path):
        for name in ("one", "two"):
            run_cli(
                "simulate", "--p", "3", "--n", "10", "--prior", "rademacher",
                "--lambda", "0.3", "--seed", "7", "-o", str(tmp_path / name),
                check=True,
            )
        assert (tmp_path / "one").read_bytes() == (tmp_path / "two").read_bytes()
        obs = read_tensor(tmp_path / "one")
        assert obs.p == 3 and obs.n == 10
        assert obs.provenance["kind"] == "planted"

    def test_null_flag(self, tmp_path):
        run_cli("simulate", "--p", "2", "--n", "6", "--seed", "1", "--null",
                "--prior", "rademacher", "-o", str(tmp_path / "z"), check=True)
        obs = read_tensor(tmp_path / "z")
        assert obs.provenance["kind"] == "null"


class TestConfigFile:
    def test_config_with_flag_override(self, tmp_path):
        cfg = tmp_path / "exp.toml"
        cfg.write_text(
            '\n'.join([
                'p = 2', 'n = 32', 'D = 4', 'lambda_hat = "1/2"',
                '[prior]', 'kind = "sparse_rademacher"', 'rho = "1/4"',
            ])
        )
        out = tmp_path / "a.json"
        run_cli("--config", str(cfg), "ldlr-norm", "-o", str(out), check=True)
        a = json.loads(out.read_text())
        assert a["prior"] == "sparse_rademacher"
        # flags win over the file
        out2 = tmp_path / "b.json"
        run_cli("--config", str(cfg), "ldlr-norm", "--lambda-hat", "2",
                "-o", str(out2), check=True)
        b = json.loads(out2.read_text())
        assert b["log_norm_sq"] > a["log_norm_sq"]

    def test_missing_config_file(self):
        proc = run_cli("--config", "/nonexistent.toml", "ldlr-norm", "--n", "4",
                       "--prior", "rademacher", "--lambda", "1", "--D", "2")
        assert proc.returncode == 2

    def test_caps_override_from_config(self, tmp_path):
        cfg = tmp_path / "caps.toml"
        cfg.write_text(
            '\n'.join([
                'test = "poly"', 'p = 2', 'n = 4', 'D = 2', 'lambda_hat = "5"',
                'trials = 30', 'seed = 1',
                '[prior]', 'kind = "rademacher"',
                '[caps]', 'multi_index = 10',
            ])
        )
        proc = run_cli("--config", str(cfg), "error-rates")
        assert proc.returncode == 2  # cap of 10 cannot hold C(18,2) indices
        assert "cap" in proc.stderr

    def test_discrete_custom_atoms_from_config(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text(
            '\n'.join([
                'p = 2', 'n = 8', 'D = 4', 'lambda = "1/2"',
                '[prior]', 'kind = "discrete_custom"',
                'atoms = [["2", "1/5"], ["-1/2", "4/5"]]',
            ])
        )
        out = tmp_path / "c.json"
        run_cli("--config", str(cfg), "ldlr-norm", "-o", str(out), check=True)
        assert json.loads(out.read_text())["prior"] == "discrete_custom"


class TestCheckCommands:
    def test_hermite_check_residuals(self, tmp_path):
        out = tmp_path / "h.json"
        run_cli("hermite-check", "-o", str(out), check=True)
        doc = json.loads(out.read_text())
        assert doc["max_residual"] < 1e-8
        assert doc["orthonormality_max_residual"] < 1e-10

    def test_oracle_verify_passes(self, tmp_path):
        out = tmp_path / "o.json"
        proc = run_cli("oracle-verify", "-o", str(out), check=True)
        doc = json.loads(out.read_text())
        assert doc["all_passed"]
        assert all(c["passed"] for c in doc["checks"])
        assert "PASS" in proc.stdout


class TestPcaTestCommand:
    def test_report_json(self, tmp_path):
        out = tmp_path / "pca.json"
        run_cli("pca-test", "--n", "300", "--lambda-hat", "3", "--prior", "rademacher",
                "--trials", "30", "--seed", "4", "-o", str(out), check=True)
        doc = json.loads(out.read_text())
        assert doc["alpha_hat"] <= 0.2
        assert doc["beta_hat"] <= 0.2
        assert doc["provenance"]["seed"] == 4
