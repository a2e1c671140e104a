"""Tests for the command-line client (direct main() invocation)."""

import json

import pytest

from seqmeta.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestRotationTable:
    def test_default_table(self, capsys):
        code, out, _ = run_cli(capsys, "rotation-table")
        assert code == 0
        assert "E1 then E2" in out
        assert "0.394338" in out
        assert "0.894338" in out
        assert "1/4 + sqrt(3)/12" in out

    def test_json_output(self, capsys):
        code, out, _ = run_cli(capsys, "rotation-table", "--json")
        assert code == 0
        payload = json.loads(out)
        assert len(payload["rows"]) == 6
        assert payload["binary_disagreements"]["d12"] == 0.0
        gaps = payload["equality_gaps"]
        assert all(abs(g - 0.5) < 1e-6 for g in gaps.values())

    def test_custom_angles(self, capsys):
        code, out, _ = run_cli(
            capsys, "rotation-table", "--alpha", "0", "--beta", "0", "--gamma", "0", "--json"
        )
        payload = json.loads(out)
        assert all(abs(r["value"] - 0.788675) < 1e-6 for r in payload["rows"])

    def test_bad_v0_is_error(self, capsys):
        code, _, err = run_cli(capsys, "rotation-table", "--v0", "0,0,0")
        assert code == 2
        assert "error" in err


class TestSimulateAndAnalyze:
    @pytest.fixture()
    def rotation_spec(self, tmp_path):
        spec = tmp_path / "agent.json"
        spec.write_text(json.dumps({"kind": "rotation", "noise_sigma": 0.05}))
        return spec

    def test_simulate_writes_deterministic_file(self, tmp_path, capsys, rotation_spec):
        out1 = tmp_path / "a.jsonl"
        out2 = tmp_path / "b.jsonl"
        for out in (out1, out2):
            code, _, _ = run_cli(
                capsys,
                "simulate", "--agent", str(rotation_spec),
                "--n", "20", "--seed", "42", "--out", str(out),
            )
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert len(out1.read_text().splitlines()) == 120

    def test_simulate_to_stdout(self, capsys, rotation_spec):
        code, out, _ = run_cli(
            capsys, "simulate", "--agent", str(rotation_spec), "--n", "2", "--seed", "1"
        )
        assert code == 0
        lines = [json.loads(line) for line in out.splitlines()]
        assert len(lines) == 12

    def test_analyze_rejects_rotation_data(self, tmp_path, capsys, rotation_spec):
        out = tmp_path / "trials.jsonl"
        run_cli(
            capsys,
            "simulate", "--agent", str(rotation_spec),
            "--n", "200", "--seed", "7", "--out", str(out),
        )
        code, stdout, _ = run_cli(
            capsys,
            "analyze", str(out),
            "--permutations", "1000", "--min-n", "50", "--json",
        )
        assert code == 0
        reports = json.loads(stdout)
        assert len(reports) == 1
        assert reports[0]["verdict"] == "genuine_noncommutativity"

    def test_analyze_human_output(self, tmp_path, capsys, rotation_spec):
        out = tmp_path / "trials.jsonl"
        run_cli(
            capsys,
            "simulate", "--agent", str(rotation_spec),
            "--n", "60", "--seed", "3", "--out", str(out),
        )
        code, stdout, _ = run_cli(capsys, "analyze", str(out), "--permutations", "1000")
        assert code == 0
        assert "genuine_noncommutativity" in stdout
        assert "equality battery" in stdout

    def test_power_mode(self, capsys, rotation_spec):
        code, out, _ = run_cli(
            capsys,
            "simulate", "--power", "--agent", str(rotation_spec),
            "--n-grid", "5,80", "--replications", "100",
            "--permutations", "1000", "--seed", "2",
        )
        assert code == 0
        assert "rejection rate" in out
        lines = out.strip().splitlines()
        assert len(lines) == 3


class TestFeasibilityCommand:
    def write_marginals(self, tmp_path, p11_13):
        payload = {
            "variables": ["A1", "A2", "A3"],
            "singles": {"A1": "1/2", "A2": "1/2", "A3": "1/2"},
            "p11": [
                {"a": "A1", "b": "A2", "p11": "1/2"},
                {"a": "A2", "b": "A3", "p11": "1/2"},
                {"a": "A1", "b": "A3", "p11": p11_13},
            ],
        }
        path = tmp_path / "marginals.json"
        path.write_text(json.dumps(payload))
        return path

    def test_feasible_exit_zero(self, tmp_path, capsys):
        path = self.write_marginals(tmp_path, "1/2")
        code, out, _ = run_cli(capsys, "feasibility", str(path))
        assert code == 0
        assert "feasible" in out

    def test_infeasible_exit_nonzero_with_certificate(self, tmp_path, capsys):
        # Perfect agreement on two pairs, perfect disagreement on the third.
        path = self.write_marginals(tmp_path, "0")
        code, out, _ = run_cli(capsys, "feasibility", str(path))
        assert code == 1
        assert "infeasible" in out
        assert ">= 0" in out

    def test_malformed_file_exit_two(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"variables": ["A1", "A2", "A3"]}))
        code, _, err = run_cli(capsys, "feasibility", str(path))
        assert code == 2
        assert "invalid" in err

    def test_json_output(self, tmp_path, capsys):
        path = self.write_marginals(tmp_path, "0")
        code, out, _ = run_cli(capsys, "feasibility", str(path), "--json")
        assert code == 1
        payload = json.loads(out)
        assert payload["feasible"] is False
        assert payload["certificate"]
