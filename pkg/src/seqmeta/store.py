"""Append-only session storage with counterbalanced condition assignment.

Each session owns a directory containing ``trials.jsonl`` (the append-only
record log; one canonical JSON line per trial, fsynced per append) and
``manifest.json`` (session metadata plus assignment/submission counters,
rewritten atomically). The log is the source of truth: reopening a data
directory replays it, so submitted counts and the idempotency index survive a
process restart even if the manifest write raced a crash.

Condition assignment hands out the least-filled of the six ordered evaluation
pairs, breaking ties with a seeded shuffle, so any prefix of assignments is
as balanced as possible.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence, Union

from .trials import TrialRecord, iter_trials_jsonl, to_json_line

__all__ = [
    "SCHEMA_VERSION",
    "DEFAULT_EVALUATIONS",
    "EvaluationPromptSpec",
    "SessionManifest",
    "AppendAck",
    "SessionStore",
    "UnknownSessionError",
    "TrialConflictError",
]

SCHEMA_VERSION = 1

DEFAULT_EVALUATIONS = (
    ("EC", "How confident are you that your response was correct?"),
    ("EL", "How likely is it that your response was an error?"),
    ("EK", "How strong is your sense of knowing what the stimulus was?"),
)


class UnknownSessionError(KeyError):
    """Raised when an operation names a session the store has never seen."""


class TrialConflictError(ValueError):
    """Raised when a resubmitted trial index carries a different payload."""


@dataclass(frozen=True)
class EvaluationPromptSpec:
    id: str
    prompt: str


def _condition_key(first: str, second: str) -> str:
    return f"{first}->{second}"


@dataclass
class SessionManifest:
    """Metadata and counterbalancing state of one session."""

    session_id: str
    created_at: str
    seed: int
    evaluations: tuple[EvaluationPromptSpec, ...]
    schema_version: int = SCHEMA_VERSION
    assigned_counts: dict[str, int] = field(default_factory=dict)
    submitted_counts: dict[str, int] = field(default_factory=dict)

    def condition_keys(self) -> list[str]:
        ids = [e.id for e in self.evaluations]
        return [_condition_key(a, b) for a in ids for b in ids if a != b]

    @property
    def submitted_total(self) -> int:
        return sum(self.submitted_counts.values())

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "session_id": self.session_id,
            "created_at": self.created_at,
            "seed": self.seed,
            "evaluations": [{"id": e.id, "prompt": e.prompt} for e in self.evaluations],
            "assigned_counts": dict(self.assigned_counts),
            "submitted_counts": dict(self.submitted_counts),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SessionManifest":
        return cls(
            session_id=payload["session_id"],
            created_at=payload["created_at"],
            seed=int(payload.get("seed", 0)),
            evaluations=tuple(
                EvaluationPromptSpec(e["id"], e["prompt"]) for e in payload["evaluations"]
            ),
            schema_version=int(payload.get("schema_version", SCHEMA_VERSION)),
            assigned_counts={k: int(v) for k, v in payload.get("assigned_counts", {}).items()},
            submitted_counts={k: int(v) for k, v in payload.get("submitted_counts", {}).items()},
        )


@dataclass(frozen=True)
class AppendAck:
    """Result of appending a trial: accepted anew or an idempotent duplicate."""

    status: str  # "accepted" | "duplicate"
    session_id: str
    trial_index: int
    submitted_total: int


class _SessionState:
    __slots__ = ("manifest", "line_hashes", "lock")

    def __init__(self, manifest: SessionManifest):
        self.manifest = manifest
        self.line_hashes: dict[int, str] = {}
        self.lock = threading.Lock()


def _line_hash(line: str) -> str:
    return hashlib.sha256(line.encode("utf-8")).hexdigest()


class SessionStore:
    """File-backed store for experiment sessions; safe for concurrent use.

    Writes are serialized per session; independent sessions do not contend.
    Readers (`read_trials`, export) only consume newline-terminated lines, so
    they always observe a consistent snapshot.
    """

    def __init__(self, data_dir: Union[str, Path]):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._registry_lock = threading.Lock()
        self._sessions: dict[str, _SessionState] = {}

    # -- paths ------------------------------------------------------------

    def _session_dir(self, session_id: str) -> Path:
        return self.data_dir / session_id

    def _manifest_path(self, session_id: str) -> Path:
        return self._session_dir(session_id) / "manifest.json"

    def trials_path(self, session_id: str) -> Path:
        return self._session_dir(session_id) / "trials.jsonl"

    # -- session lifecycle --------------------------------------------------

    def create_session(
        self,
        session_id: Optional[str] = None,
        evaluations: Optional[Sequence[tuple[str, str]]] = None,
        seed: int = 0,
    ) -> SessionManifest:
        sid = session_id or f"session-{os.urandom(6).hex()}"
        if "/" in sid or sid in (".", ".."):
            raise ValueError(f"invalid session id {sid!r}")
        specs = tuple(
            EvaluationPromptSpec(eid, prompt)
            for eid, prompt in (evaluations or DEFAULT_EVALUATIONS)
        )
        if len({e.id for e in specs}) != len(specs) or len(specs) < 2:
            raise ValueError("sessions need at least two evaluations with distinct ids")
        with self._registry_lock:
            if sid in self._sessions or self._manifest_path(sid).exists():
                raise ValueError(f"session {sid!r} already exists")
            manifest = SessionManifest(
                session_id=sid,
                created_at=datetime.now(timezone.utc).isoformat(),
                seed=seed,
                evaluations=specs,
            )
            for key in manifest.condition_keys():
                manifest.assigned_counts[key] = 0
                manifest.submitted_counts[key] = 0
            self._session_dir(sid).mkdir(parents=True, exist_ok=True)
            self.trials_path(sid).touch()
            self._write_manifest(manifest)
            self._sessions[sid] = _SessionState(manifest)
        return manifest

    def _load_session(self, session_id: str) -> _SessionState:
        with self._registry_lock:
            state = self._sessions.get(session_id)
            if state is not None:
                return state
            manifest_path = self._manifest_path(session_id)
            if not manifest_path.exists():
                raise UnknownSessionError(session_id)
            manifest = SessionManifest.from_dict(json.loads(manifest_path.read_text()))
            state = _SessionState(manifest)
            # The log is authoritative: rebuild submitted counts and the
            # idempotency index from it.
            submitted: dict[str, int] = {k: 0 for k in manifest.condition_keys()}
            for record in iter_trials_jsonl(self.trials_path(session_id)):
                line = to_json_line(record)
                state.line_hashes[record.trial_index] = _line_hash(line)
                key = _condition_key(record.first_eval, record.second_eval)
                submitted[key] = submitted.get(key, 0) + 1
            manifest.submitted_counts = submitted
            for key, count in submitted.items():
                if manifest.assigned_counts.get(key, 0) < count:
                    manifest.assigned_counts[key] = count
            self._sessions[session_id] = state
            return state

    def get_manifest(self, session_id: str) -> SessionManifest:
        return self._load_session(session_id).manifest

    def list_sessions(self) -> list[str]:
        found = {p.parent.name for p in self.data_dir.glob("*/manifest.json")}
        return sorted(found | set(self._sessions))

    # -- operations ---------------------------------------------------------

    def next_condition(self, session_id: str) -> tuple[str, str]:
        """Assign the least-filled ordered condition (seeded tie-break)."""
        state = self._load_session(session_id)
        with state.lock:
            manifest = state.manifest
            keys = manifest.condition_keys()
            least = min(manifest.assigned_counts.get(k, 0) for k in keys)
            tied = [k for k in keys if manifest.assigned_counts.get(k, 0) == least]
            total_assigned = sum(manifest.assigned_counts.values())
            pick = random.Random(f"{manifest.seed}:{total_assigned}").choice(sorted(tied))
            manifest.assigned_counts[pick] = manifest.assigned_counts.get(pick, 0) + 1
            self._write_manifest(manifest)
            first, second = pick.split("->")
            return first, second

    def append_trial(self, record: TrialRecord) -> AppendAck:
        """Durably append a trial; idempotent on (session_id, trial_index).

        Resubmitting an identical record acknowledges without double-counting;
        a different payload under an existing index raises TrialConflictError.
        """
        state = self._load_session(record.session_id)
        with state.lock:
            manifest = state.manifest
            known_ids = {e.id for e in manifest.evaluations}
            for name, value in (("first_eval", record.first_eval), ("second_eval", record.second_eval)):
                if value not in known_ids:
                    raise ValueError(
                        f"{name} {value!r} is not part of session {record.session_id!r} "
                        f"(expected one of {sorted(known_ids)})"
                    )
            line = to_json_line(record)
            digest = _line_hash(line)
            existing = state.line_hashes.get(record.trial_index)
            if existing is not None:
                if existing == digest:
                    return AppendAck(
                        status="duplicate",
                        session_id=record.session_id,
                        trial_index=record.trial_index,
                        submitted_total=manifest.submitted_total,
                    )
                raise TrialConflictError(
                    f"trial_index {record.trial_index} was already submitted with a "
                    f"different payload"
                )
            with self.trials_path(record.session_id).open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
                os.fsync(handle.fileno())
            state.line_hashes[record.trial_index] = digest
            key = _condition_key(record.first_eval, record.second_eval)
            manifest.submitted_counts[key] = manifest.submitted_counts.get(key, 0) + 1
            if manifest.assigned_counts.get(key, 0) < manifest.submitted_counts[key]:
                manifest.assigned_counts[key] = manifest.submitted_counts[key]
            self._write_manifest(manifest)
            return AppendAck(
                status="accepted",
                session_id=record.session_id,
                trial_index=record.trial_index,
                submitted_total=manifest.submitted_total,
            )

    def read_trials(self, session_id: str) -> list[TrialRecord]:
        self._load_session(session_id)
        return list(iter_trials_jsonl(self.trials_path(session_id)))

    def export_text(self, session_id: str) -> str:
        """The session's trial log, bit-identical to the on-disk file format."""
        self._load_session(session_id)
        text = self.trials_path(session_id).read_text(encoding="utf-8")
        # Guard against a torn final line; exports carry complete lines only.
        if text and not text.endswith("\n"):
            text = text[: text.rfind("\n") + 1] if "\n" in text else ""
        return text

    # -- helpers --------------------------------------------------------------

    def _write_manifest(self, manifest: SessionManifest) -> None:
        path = self._manifest_path(manifest.session_id)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
        os.replace(tmp, path)
