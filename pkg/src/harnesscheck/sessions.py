"""Crash-safe session persistence for the inspection service.

Layout under the store root:

    index.json            session headers, rewritten atomically (tmp + rename)
    events/<sid>.jsonl    append-only event log, one JSON object per line
    blobs/<digest>.png    uploaded frames stored by SHA-256 content digest

Every append is flushed with fsync before the call returns, so a killed
process loses at most the line it was writing; a partial trailing line is
dropped on reload. Counts are never stored: they are always derived from the
event log, which makes them trivially consistent after a crash.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

VALID_ACTIONS = ("none", "manual_pass", "manual_fail")


class SessionClosed(Exception):
    """Mutation attempted on a session that has ended."""


class EventNotResolvable(Exception):
    """Resolve attempted on a non-Unclear or already-resolved event."""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass(frozen=True)
class InspectionEvent:
    """One inspection submission and its (possibly operator-resolved) outcome."""

    event_id: str
    timestamp: str
    frame_digests: tuple[str, ...]
    result: dict  # serialized InspectionResult
    operator_action: str = "none"

    def __post_init__(self):
        if self.operator_action not in VALID_ACTIONS:
            raise ValueError(f"unknown operator action {self.operator_action!r}")
        if self.operator_action != "none" and self.result.get("overall") != "Unclear":
            raise ValueError("operator actions apply only to Unclear results")
        object.__setattr__(self, "frame_digests", tuple(self.frame_digests))

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "timestamp": self.timestamp,
            "frame_digests": list(self.frame_digests),
            "result": self.result,
            "operator_action": self.operator_action,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InspectionEvent":
        return cls(
            event_id=d["event_id"],
            timestamp=d["timestamp"],
            frame_digests=tuple(d["frame_digests"]),
            result=d["result"],
            operator_action=d.get("operator_action", "none"),
        )


@dataclass(frozen=True)
class SessionRecord:
    session_id: str
    operator: str
    harness_type: str
    profile_id: str
    started_at: str
    ended_at: Optional[str]
    counts: dict = field(default_factory=dict)
    events: tuple[InspectionEvent, ...] = ()

    @property
    def open(self) -> bool:
        return self.ended_at is None


def tally_counts(events: tuple[InspectionEvent, ...]) -> dict:
    """Counts are a pure function of the event log, never stored state."""
    counts = {"pass": 0, "fail": 0, "unclear": 0, "manual_override": 0}
    for ev in events:
        overall = ev.result.get("overall")
        if overall == "Pass":
            counts["pass"] += 1
        elif overall == "Fail":
            counts["fail"] += 1
        elif overall == "Unclear":
            counts["unclear"] += 1
        if ev.operator_action != "none":
            counts["manual_override"] += 1
    return counts


class SessionStore:
    """Filesystem-backed session state with per-session write serialization."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "events").mkdir(exist_ok=True)
        (self.root / "blobs").mkdir(exist_ok=True)
        self._index_lock = threading.Lock()
        self._session_locks: dict[str, threading.Lock] = {}
        self._headers: dict[str, dict] = {}
        self._load_index()

    # -- index ---------------------------------------------------------------

    @property
    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _load_index(self) -> None:
        if self._index_path.exists():
            self._headers = json.loads(self._index_path.read_text(encoding="utf-8"))[
                "sessions"
            ]
        else:
            self._headers = {}

    def _write_index(self) -> None:
        tmp = self._index_path.with_suffix(".json.tmp")
        payload = json.dumps({"sessions": self._headers}, indent=2, sort_keys=True)
        fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o644)
        try:
            os.write(fd, payload.encode("utf-8"))
            os.fsync(fd)
        finally:
            os.close(fd)
        os.replace(tmp, self._index_path)

    def _lock_for(self, session_id: str) -> threading.Lock:
        with self._index_lock:
            return self._session_locks.setdefault(session_id, threading.Lock())

    # -- event log -----------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.root / "events" / f"{session_id}.jsonl"

    def _append_line(self, session_id: str, record: dict) -> None:
        line = json.dumps(record, sort_keys=True) + "\n"
        fd = os.open(self._log_path(session_id), os.O_RDWR | os.O_CREAT | os.O_APPEND, 0o644)
        try:
            size = os.fstat(fd).st_size
            # A crash can leave an unterminated tail; push it onto its own
            # line so the new record is never glued to the garbage.
            if size and os.pread(fd, 1, size - 1) != b"\n":
                os.write(fd, b"\n")
            os.write(fd, line.encode("utf-8"))
            os.fsync(fd)
        finally:
            os.close(fd)

    def _replay(self, session_id: str) -> tuple[InspectionEvent, ...]:
        path = self._log_path(session_id)
        if not path.exists():
            return ()
        events: dict[str, InspectionEvent] = {}
        order: list[str] = []
        with path.open("rb") as fh:
            for raw in fh:
                if not raw.endswith(b"\n"):
                    break  # torn final write from a crash; drop it
                try:
                    rec = json.loads(raw.decode("utf-8"))
                except (json.JSONDecodeError, UnicodeDecodeError):
                    continue  # terminated garbage from a recovered crash
                if rec.get("type") == "event":
                    ev = InspectionEvent.from_dict(rec["event"])
                    events[ev.event_id] = ev
                    order.append(ev.event_id)
                elif rec.get("type") == "resolve":
                    eid = rec["event_id"]
                    if eid in events:
                        events[eid] = replace(events[eid], operator_action=rec["action"])
        return tuple(events[eid] for eid in order)

    # -- blobs ---------------------------------------------------------------

    def store_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / "blobs" / f"{digest}.png"
        if not path.exists():
            tmp = path.with_suffix(".png.tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return digest

    def blob_path(self, digest: str) -> Path:
        return self.root / "blobs" / f"{digest}.png"

    # -- sessions ------------------------------------------------------------

    def create_session(self, operator: str, harness_type: str, profile_id: str) -> SessionRecord:
        session_id = uuid.uuid4().hex
        header = {
            "session_id": session_id,
            "operator": operator,
            "harness_type": harness_type,
            "profile_id": profile_id,
            "started_at": _now(),
            "ended_at": None,
        }
        with self._index_lock:
            self._headers[session_id] = header
            self._write_index()
        return self.get_session(session_id)

    def list_sessions(self) -> list[SessionRecord]:
        with self._index_lock:
            ids = list(self._headers)
        records = [self.get_session(sid) for sid in ids]
        return sorted(records, key=lambda r: r.started_at)

    def get_session(self, session_id: str) -> SessionRecord:
        with self._index_lock:
            header = self._headers.get(session_id)
            if header is None:
                raise KeyError(session_id)
            header = dict(header)
        events = self._replay(session_id)
        return SessionRecord(
            session_id=header["session_id"],
            operator=header["operator"],
            harness_type=header["harness_type"],
            profile_id=header["profile_id"],
            started_at=header["started_at"],
            ended_at=header["ended_at"],
            counts=tally_counts(events),
            events=events,
        )

    def close_session(self, session_id: str) -> SessionRecord:
        with self._lock_for(session_id):
            with self._index_lock:
                header = self._headers.get(session_id)
                if header is None:
                    raise KeyError(session_id)
                if header["ended_at"] is not None:
                    raise SessionClosed(session_id)
                header["ended_at"] = _now()
                self._write_index()
        return self.get_session(session_id)

    def append_event(
        self, session_id: str, frame_digests: tuple[str, ...], result: dict
    ) -> InspectionEvent:
        with self._lock_for(session_id):
            with self._index_lock:
                header = self._headers.get(session_id)
                if header is None:
                    raise KeyError(session_id)
                if header["ended_at"] is not None:
                    raise SessionClosed(session_id)
            count = len(self._replay(session_id))
            event = InspectionEvent(
                event_id=f"e{count + 1:06d}",
                timestamp=_now(),
                frame_digests=tuple(frame_digests),
                result=result,
            )
            self._append_line(session_id, {"type": "event", "event": event.to_dict()})
            return event

    def resolve_event(self, session_id: str, event_id: str, action: str) -> InspectionEvent:
        if action not in ("manual_pass", "manual_fail"):
            raise ValueError(f"invalid resolve action {action!r}")
        with self._lock_for(session_id):
            with self._index_lock:
                if session_id not in self._headers:
                    raise KeyError(session_id)
            events = {ev.event_id: ev for ev in self._replay(session_id)}
            event = events.get(event_id)
            if event is None:
                raise KeyError(event_id)
            if event.result.get("overall") != "Unclear" or event.operator_action != "none":
                raise EventNotResolvable(event_id)
            self._append_line(
                session_id,
                {"type": "resolve", "event_id": event_id, "action": action, "timestamp": _now()},
            )
            return replace(event, operator_action=action)
