"""Trial records and the line-oriented file format they travel in.

One trial = one line. Each line is a JSON object with a stable field order
(session_id, trial_index, first_eval, second_eval, r1, r2, covariates), which
keeps files diff-able and streamable. Floating-point values are serialized at
9 significant digits; parsing a serialized record and serializing it again is
byte-stable, so files round-trip exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Union

__all__ = [
    "TrialRecord",
    "round_sig",
    "to_json_line",
    "from_json_line",
    "write_trials_jsonl",
    "read_trials_jsonl",
    "iter_trials_jsonl",
]

_READOUT_SIG_DIGITS = 9


def round_sig(value: float) -> float:
    """Round a float to 9 significant digits (the serialization precision)."""
    return float(f"{float(value):.{_READOUT_SIG_DIGITS}g}")


def _check_readout(name: str, value: float) -> float:
    v = float(value)
    if not math.isfinite(v) or not (0.0 <= v <= 1.0):
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return v


def _check_covariates(covariates: Optional[Mapping[str, float]]) -> Optional[dict]:
    if covariates is None:
        return None
    cleaned: dict[str, float] = {}
    for key, raw in covariates.items():
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(f"covariates.{key} must be finite, got {raw!r}")
        if key == "accuracy" and value not in (0.0, 1.0):
            raise ValueError(f"covariates.accuracy must be 0 or 1, got {raw!r}")
        if key == "response_time_ms" and value <= 0:
            raise ValueError(f"covariates.response_time_ms must be positive, got {raw!r}")
        cleaned[key] = value
    return cleaned


@dataclass(frozen=True)
class TrialRecord:
    """One recorded or simulated trial: an ordered evaluation pair and its readouts."""

    session_id: str
    trial_index: int
    first_eval: str
    second_eval: str
    r1: float
    r2: float
    covariates: Optional[dict] = None

    def __post_init__(self) -> None:
        if not self.session_id:
            raise ValueError("session_id must be a nonempty string")
        if not isinstance(self.trial_index, int) or self.trial_index < 0:
            raise ValueError(f"trial_index must be a nonnegative integer, got {self.trial_index!r}")
        if not self.first_eval or not self.second_eval:
            raise ValueError("first_eval and second_eval must be nonempty")
        if self.first_eval == self.second_eval:
            raise ValueError(
                f"first_eval and second_eval must differ, both are {self.first_eval!r}"
            )
        object.__setattr__(self, "r1", _check_readout("r1", self.r1))
        object.__setattr__(self, "r2", _check_readout("r2", self.r2))
        object.__setattr__(self, "covariates", _check_covariates(self.covariates))

    @property
    def condition(self) -> tuple[str, str]:
        return (self.first_eval, self.second_eval)


def to_json_line(record: TrialRecord) -> str:
    """Serialize a record to its canonical single-line JSON form (no newline).

    Floats are rounded to 9 significant digits here, at the serialization
    boundary, so in-memory analysis keeps full precision.
    """
    payload = {
        "session_id": record.session_id,
        "trial_index": record.trial_index,
        "first_eval": record.first_eval,
        "second_eval": record.second_eval,
        "r1": round_sig(record.r1),
        "r2": round_sig(record.r2),
    }
    if record.covariates is not None:
        payload["covariates"] = {
            k: round_sig(record.covariates[k]) for k in sorted(record.covariates)
        }
    return json.dumps(payload, separators=(",", ":"))


def from_json_line(line: str) -> TrialRecord:
    try:
        payload = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed trial line: {exc}") from exc
    if not isinstance(payload, dict):
        raise ValueError(f"trial line must hold a JSON object, got {type(payload).__name__}")
    known = {"session_id", "trial_index", "first_eval", "second_eval", "r1", "r2", "covariates"}
    unknown = set(payload) - known
    if unknown:
        raise ValueError(f"unknown trial fields: {sorted(unknown)}")
    try:
        return TrialRecord(
            session_id=payload["session_id"],
            trial_index=payload["trial_index"],
            first_eval=payload["first_eval"],
            second_eval=payload["second_eval"],
            r1=payload["r1"],
            r2=payload["r2"],
            covariates=payload.get("covariates"),
        )
    except KeyError as exc:
        raise ValueError(f"trial line missing field {exc.args[0]!r}") from exc


def write_trials_jsonl(path: Union[str, Path], records: Iterable[TrialRecord]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(to_json_line(record) + "\n")


def read_trials_jsonl(path: Union[str, Path]) -> list[TrialRecord]:
    """Read all complete records from a trial file.

    A trailing line without a newline terminator (a write in progress) is
    ignored, so readers always see a consistent snapshot of an append-only
    file.
    """
    return list(iter_trials_jsonl(path))


def iter_trials_jsonl(path: Union[str, Path]) -> Iterator[TrialRecord]:
    with Path(path).open("r", encoding="utf-8") as handle:
        text = handle.read()
    for raw in text.split("\n")[:-1]:  # only newline-terminated lines are complete
        line = raw.strip()
        if line:
            yield from_json_line(line)
