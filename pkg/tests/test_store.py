"""Tests for the append-only session store."""

import threading
from collections import Counter

import pytest

from seqmeta.store import (
    DEFAULT_EVALUATIONS,
    SessionStore,
    TrialConflictError,
    UnknownSessionError,
)
from seqmeta.trials import TrialRecord, to_json_line


def record(session_id, index, first="EC", second="EL", r1=0.8, r2=0.3):
    return TrialRecord(
        session_id=session_id,
        trial_index=index,
        first_eval=first,
        second_eval=second,
        r1=r1,
        r2=r2,
    )


@pytest.fixture()
def store(tmp_path):
    return SessionStore(tmp_path / "data")


class TestSessions:
    def test_create_and_fetch_manifest(self, store):
        manifest = store.create_session(session_id="s1", seed=5)
        assert manifest.session_id == "s1"
        assert [e.id for e in manifest.evaluations] == [e[0] for e in DEFAULT_EVALUATIONS]
        assert store.get_manifest("s1").seed == 5

    def test_duplicate_session_rejected(self, store):
        store.create_session(session_id="s1")
        with pytest.raises(ValueError, match="exists"):
            store.create_session(session_id="s1")

    def test_unknown_session_raises(self, store):
        with pytest.raises(UnknownSessionError):
            store.get_manifest("nope")
        with pytest.raises(UnknownSessionError):
            store.next_condition("nope")

    def test_custom_evaluations(self, store):
        manifest = store.create_session(
            session_id="s2", evaluations=[("X1", "prompt one"), ("X2", "prompt two")]
        )
        assert len(manifest.condition_keys()) == 2


class TestNextCondition:
    def test_first_six_assignments_cover_all_conditions(self, store):
        store.create_session(session_id="s1", seed=0)
        seen = {tuple(store.next_condition("s1")) for _ in range(6)}
        assert len(seen) == 6

    def test_deficit_condition_served_first(self, store):
        store.create_session(session_id="s1", seed=0)
        manifest = store.get_manifest("s1")
        keys = manifest.condition_keys()
        for key in keys[:-1]:
            manifest.assigned_counts[key] = 5
        manifest.assigned_counts[keys[-1]] = 4
        first, second = store.next_condition("s1")
        assert f"{first}->{second}" == keys[-1]

    def test_deterministic_under_fixed_seed(self, tmp_path):
        a = SessionStore(tmp_path / "a")
        b = SessionStore(tmp_path / "b")
        a.create_session(session_id="s", seed=99)
        b.create_session(session_id="s", seed=99)
        seq_a = [a.next_condition("s") for _ in range(24)]
        seq_b = [b.next_condition("s") for _ in range(24)]
        assert seq_a == seq_b

    def test_balance_after_full_submission_rounds(self, store):
        store.create_session(session_id="s1", seed=1)
        k = 3
        for i in range(6 * k):
            first, second = store.next_condition("s1")
            store.append_trial(record("s1", i, first=first, second=second))
        counts = store.get_manifest("s1").submitted_counts
        assert set(counts.values()) == {k}


class TestAppend:
    def test_append_increments_counts(self, store):
        store.create_session(session_id="s1")
        ack = store.append_trial(record("s1", 0))
        assert ack.status == "accepted"
        assert ack.submitted_total == 1
        assert store.get_manifest("s1").submitted_counts["EC->EL"] == 1

    def test_idempotent_resubmission(self, store):
        store.create_session(session_id="s1")
        store.append_trial(record("s1", 0))
        ack = store.append_trial(record("s1", 0))
        assert ack.status == "duplicate"
        assert ack.submitted_total == 1
        assert len(store.read_trials("s1")) == 1

    def test_conflicting_resubmission_rejected(self, store):
        store.create_session(session_id="s1")
        store.append_trial(record("s1", 0, r2=0.3))
        with pytest.raises(TrialConflictError, match="different payload"):
            store.append_trial(record("s1", 0, r2=0.4))

    def test_unknown_evaluation_rejected(self, store):
        store.create_session(session_id="s1")
        with pytest.raises(ValueError, match="first_eval"):
            store.append_trial(record("s1", 0, first="EX"))

    def test_append_to_unknown_session(self, store):
        with pytest.raises(UnknownSessionError):
            store.append_trial(record("ghost", 0))

    def test_concurrent_appends_all_land(self, store):
        store.create_session(session_id="s1")
        errors = []

        def submit(base):
            try:
                for i in range(25):
                    store.append_trial(record("s1", base + i))
            except Exception as exc:  # noqa: BLE001
                errors.append(exc)

        threads = [threading.Thread(target=submit, args=(base,)) for base in (0, 25, 50, 75)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert len(store.read_trials("s1")) == 100


class TestDurability:
    def test_reopened_store_replays_log(self, tmp_path):
        path = tmp_path / "data"
        store = SessionStore(path)
        store.create_session(session_id="s1", seed=3)
        for i in range(10):
            first, second = store.next_condition("s1")
            store.append_trial(record("s1", i, first=first, second=second))

        reopened = SessionStore(path)
        manifest = reopened.get_manifest("s1")
        assert manifest.submitted_total == 10
        stored = reopened.read_trials("s1")
        assert len(stored) == 10
        # Idempotency state also survives: resubmitting a logged record is a
        # duplicate, not a new append.
        ack = reopened.append_trial(stored[5])
        assert ack.status == "duplicate"
        assert reopened.get_manifest("s1").submitted_total == 10

    def test_counts_rebuilt_from_log_not_manifest(self, tmp_path):
        path = tmp_path / "data"
        store = SessionStore(path)
        store.create_session(session_id="s1")
        store.append_trial(record("s1", 0))
        # Corrupt the manifest counters; the log must win on reopen.
        manifest_path = path / "s1" / "manifest.json"
        text = manifest_path.read_text().replace('"EC->EL": 1', '"EC->EL": 0')
        manifest_path.write_text(text)
        reopened = SessionStore(path)
        assert reopened.get_manifest("s1").submitted_counts["EC->EL"] == 1

    def test_export_matches_file_bytes(self, store):
        store.create_session(session_id="s1")
        records = [record("s1", i, r1=i / 40.0) for i in range(10)]
        for r in records:
            store.append_trial(r)
        export = store.export_text("s1")
        assert export == store.trials_path("s1").read_text()
        assert export == "".join(to_json_line(r) + "\n" for r in records)

    def test_export_drops_torn_final_line(self, store):
        store.create_session(session_id="s1")
        store.append_trial(record("s1", 0))
        with store.trials_path("s1").open("a") as handle:
            handle.write('{"torn": ')
        export = store.export_text("s1")
        assert export.endswith("\n")
        assert "torn" not in export
