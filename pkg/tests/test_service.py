"""Tests for the HTTP service surface."""

import math

import pytest
from fastapi.testclient import TestClient

from seqmeta.service import create_app


@pytest.fixture()
def client(tmp_path):
    app = create_app(tmp_path / "data")
    with TestClient(app) as c:
        yield c


def create_session(client, session_id="s1", seed=0):
    response = client.post("/sessions", json={"session_id": session_id, "seed": seed})
    assert response.status_code == 201, response.text
    return response.json()


def submit(client, session_id, index, first, second, r1=0.8, r2=0.3):
    return client.post(
        f"/sessions/{session_id}/trials",
        json={
            "trial_index": index,
            "first_eval": first,
            "second_eval": second,
            "r1": r1,
            "r2": r2,
            "covariates": {"accuracy": 1, "response_time_ms": 640.0, "difficulty": 0.5},
        },
    )


class TestSessionEndpoints:
    def test_create_session_returns_manifest(self, client):
        payload = create_session(client)
        assert payload["session_id"] == "s1"
        assert len(payload["evaluations"]) == 3
        assert set(payload["assigned_counts"].values()) == {0}

    def test_duplicate_session_conflict(self, client):
        create_session(client)
        response = client.post("/sessions", json={"session_id": "s1"})
        assert response.status_code == 409

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/ghost").status_code == 404
        assert client.get("/sessions/ghost/next-condition").status_code == 404
        assert client.get("/sessions/ghost/export").status_code == 404

    def test_next_condition_balanced(self, client):
        create_session(client)
        seen = set()
        for _ in range(6):
            payload = client.get("/sessions/s1/next-condition").json()
            seen.add((payload["first_eval"], payload["second_eval"]))
        assert len(seen) == 6


class TestTrialSubmission:
    def test_accepts_valid_trial(self, client):
        create_session(client)
        response = submit(client, "s1", 0, "EC", "EL")
        assert response.status_code == 201
        assert response.json()["status"] == "accepted"

    def test_validation_error_names_field(self, client):
        create_session(client)
        response = submit(client, "s1", 0, "EC", "EL", r2=1.3)
        assert response.status_code == 422
        detail = response.json()["detail"]
        assert any("r2" in str(item.get("loc", "")) for item in detail)

    def test_same_evaluation_twice_rejected(self, client):
        create_session(client)
        response = submit(client, "s1", 0, "EC", "EC")
        assert response.status_code == 422

    def test_duplicate_submission_acknowledged_once(self, client):
        create_session(client)
        assert submit(client, "s1", 0, "EC", "EL").status_code == 201
        response = submit(client, "s1", 0, "EC", "EL")
        assert response.status_code == 201
        assert response.json()["status"] == "duplicate"
        assert response.json()["submitted_total"] == 1

    def test_conflicting_resubmission_409(self, client):
        create_session(client)
        submit(client, "s1", 0, "EC", "EL", r2=0.3)
        response = submit(client, "s1", 0, "EC", "EL", r2=0.31)
        assert response.status_code == 409

    def test_unknown_evaluation_400(self, client):
        create_session(client)
        response = submit(client, "s1", 0, "EX", "EL")
        assert response.status_code == 400
        assert "first_eval" in response.json()["detail"]


class TestExportAndAnalyze:
    def test_export_is_jsonl(self, client):
        create_session(client)
        submit(client, "s1", 0, "EC", "EL", r1=0.75, r2=0.25)
        submit(client, "s1", 1, "EL", "EC", r1=0.5, r2=0.6)
        text = client.get("/sessions/s1/export").text
        lines = [line for line in text.split("\n") if line]
        assert len(lines) == 2
        assert lines[0].startswith('{"session_id":"s1","trial_index":0')

    def test_analyze_stored_session(self, client):
        create_session(client)
        for i in range(12):
            condition = client.get("/sessions/s1/next-condition").json()
            submit(client, "s1", i, condition["first_eval"], condition["second_eval"])
        response = client.post("/analyze", json={"session_id": "s1", "permutations": 1000})
        assert response.status_code == 200
        report = response.json()
        assert report["verdict"] == "insufficient_data"  # 12 trials < min_n

    def test_analyze_inline_trials(self, client):
        trials = []
        for i in range(120):
            first = "EC" if i % 2 == 0 else "EK"
            trials.append(
                {
                    "session_id": "inline",
                    "trial_index": i,
                    "first_eval": first,
                    "second_eval": "EL",
                    "r1": 0.5,
                    "r2": 0.3 if first == "EC" else 0.7,
                }
            )
        response = client.post(
            "/analyze", json={"trials": trials, "permutations": 1000, "min_n": 10}
        )
        assert response.status_code == 200
        report = response.json()
        assert report["verdict"] == "genuine_noncommutativity"
        assert report["interpretation"] is not None

    def test_analyze_requires_exactly_one_source(self, client):
        assert client.post("/analyze", json={}).status_code == 422


class TestComputeEndpoints:
    def test_rotation_table_defaults(self, client):
        response = client.get("/rotation-table")
        assert response.status_code == 200
        payload = response.json()
        values = {(r["first"], r["second"]): r["value"] for r in payload["rows"]}
        assert values[("E1", "E2")] == pytest.approx(0.394338, abs=1e-6)
        assert values[("E2", "E1")] == pytest.approx(0.894338, abs=1e-6)
        assert payload["binary_disagreements"] == {"d12": 0.0, "d13": 0.0, "d23": 0.0}

    def test_rotation_table_custom_state(self, client):
        response = client.get("/rotation-table", params={"v0": "0,0,1"})
        assert response.status_code == 200
        values = {(r["first"], r["second"]): r["value"] for r in response.json()["rows"]}
        assert values[("E1", "E3")] == pytest.approx(0.75, abs=1e-12)

    def test_rotation_table_bad_state_400(self, client):
        assert client.get("/rotation-table", params={"v0": "0,0,0"}).status_code == 400

    def test_feasibility_endpoint_feasible(self, client):
        body = {
            "variables": ["A1", "A2", "A3"],
            "singles": {"A1": "1/2", "A2": "1/2", "A3": "1/2"},
            "p11": [
                {"a": "A1", "b": "A2", "p11": "1/4"},
                {"a": "A1", "b": "A3", "p11": "1/4"},
                {"a": "A2", "b": "A3", "p11": "1/4"},
            ],
        }
        response = client.post("/feasibility", json=body)
        assert response.status_code == 200
        payload = response.json()
        assert payload["feasible"] is True
        assert payload["witness"] is not None

    def test_feasibility_endpoint_infeasible_with_certificate(self, client):
        body = {
            "variables": ["A1", "A2", "A3"],
            "singles": {"A1": "1/2", "A2": "1/2", "A3": "1/2"},
            "p11": [
                {"a": "A1", "b": "A2", "p11": "1/2"},
                {"a": "A2", "b": "A3", "p11": "1/2"},
                {"a": "A1", "b": "A3", "p11": "0"},
            ],
        }
        response = client.post("/feasibility", json=body)
        assert response.status_code == 200
        payload = response.json()
        assert payload["feasible"] is False
        assert payload["certificate"]["inequality"].endswith(">= 0")

    def test_simulate_endpoint(self, client):
        body = {
            "agent": {"kind": "rotation", "noise_sigma": 0.0},
            "n_trials_per_condition": 2,
            "seed": 5,
        }
        response = client.post("/simulate", json=body)
        assert response.status_code == 200
        payload = response.json()
        assert len(payload["trials"]) == 12
        low = [
            t["r2"]
            for t in payload["trials"]
            if (t["first_eval"], t["second_eval"]) == ("E1", "E2")
        ]
        assert low[0] == pytest.approx(0.394338, abs=1e-6)

    def test_simulate_bad_agent_400(self, client):
        body = {"agent": {"kind": "wizard"}, "n_trials_per_condition": 1}
        assert client.post("/simulate", json=body).status_code == 400
