"""REST API for the operator console.

Sessions, live inspections, unclear-event resolution, and profile training
over HTTP. All endpoints require a static bearer token. State lives in a
SessionStore on disk; profiles are immutable JSON files under a profiles
directory, cached in memory after first load.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

from fastapi import Depends, FastAPI, File, Form, HTTPException, Request, UploadFile
from fastapi.staticfiles import StaticFiles

from .errors import (
    CorruptProfile,
    FormatVersionUnsupported,
    ProfileVersionMismatch,
    SampleCountTooLow,
    TrainingSampleUnclear,
    WireCountInconsistent,
)
from .imaging import decode_png
from .profile import (
    TrainedProfile,
    inspect,
    load_profile,
    profile_path,
    result_to_dict,
    save_profile,
    train,
    view_from_config,
)
from .sessions import EventNotResolvable, SessionClosed, SessionRecord, SessionStore


def _session_to_dict(record: SessionRecord, include_events: bool = False) -> dict:
    d = {
        "session_id": record.session_id,
        "operator": record.operator,
        "harness_type": record.harness_type,
        "profile_id": record.profile_id,
        "started_at": record.started_at,
        "ended_at": record.ended_at,
        "open": record.open,
        "counts": record.counts,
    }
    if include_events:
        d["events"] = [ev.to_dict() for ev in record.events]
    return d


def create_app(
    profiles_dir: Path,
    store: SessionStore,
    token: str,
    console_dir: Optional[Path] = None,
) -> FastAPI:
    app = FastAPI(title="harnesscheck inspection service")
    profiles_dir = Path(profiles_dir)
    profile_cache: dict[str, TrainedProfile] = {}

    def require_token(request: Request) -> None:
        header = request.headers.get("authorization", "")
        if header != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="invalid or missing bearer token")

    auth = Depends(require_token)

    def find_profile(profile_id: str) -> TrainedProfile:
        cached = profile_cache.get(profile_id)
        if cached is not None:
            return cached
        # Service-trained profiles use the id as the filename stem. Profiles
        # trained elsewhere and dropped into the directory can be named
        # anything, so fall back to matching on the stored id.
        matches = list(profiles_dir.glob(f"*/{profile_id}.harnessprofile.json"))
        if matches:
            try:
                profile = load_profile(matches[0])
            except (CorruptProfile, FormatVersionUnsupported) as exc:
                raise HTTPException(status_code=500, detail=str(exc)) from exc
            profile_cache[profile_id] = profile
            return profile
        for path in sorted(profiles_dir.glob("*/*.harnessprofile.json")):
            try:
                profile = load_profile(path)
            except (CorruptProfile, FormatVersionUnsupported):
                continue
            if profile.profile_id == profile_id:
                profile_cache[profile_id] = profile
                return profile
        raise HTTPException(status_code=404, detail=f"unknown profile {profile_id!r}")

    def get_session_or_404(session_id: str) -> SessionRecord:
        try:
            return store.get_session(session_id)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}") from exc

    # -- profiles -------------------------------------------------------------

    @app.get("/profiles", dependencies=[auth])
    def list_profiles() -> dict:
        out = []
        for path in sorted(profiles_dir.glob("*/*.harnessprofile.json")):
            try:
                profile = load_profile(path)
            except (CorruptProfile, FormatVersionUnsupported):
                continue
            out.append(
                {
                    "profile_id": profile.profile_id,
                    "harness_type": profile.harness_type,
                    "created_at": profile.created_at,
                    "sample_count": profile.sample_count,
                    "views": [v.view_id for v in profile.views],
                }
            )
        return {"profiles": out}

    @app.post("/profiles", status_code=201, dependencies=[auth])
    async def train_profile(
        config: str = Form(...), files: list[UploadFile] = File(...)
    ) -> dict:
        try:
            cfg = json.loads(config)
            harness_type = cfg["harness_type"]
            views = [view_from_config(v) for v in cfg["views"]]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"bad view config: {exc}") from exc

        # Files are routed to views by "<view_id>__<name>.png" prefixes; with a
        # single view the prefix is optional.
        buckets: dict[str, list[tuple[str, bytes]]] = {v.view_id: [] for v in views}
        for f in files:
            name = f.filename or ""
            data = await f.read()
            if "__" in name:
                vid, rest = name.split("__", 1)
                if vid not in buckets:
                    raise HTTPException(status_code=400, detail=f"unknown view prefix {vid!r}")
                buckets[vid].append((rest, data))
            elif len(views) == 1:
                buckets[views[0].view_id].append((name, data))
            else:
                raise HTTPException(
                    status_code=400,
                    detail=f"file {name!r} lacks a '<view_id>__' prefix (multi-view profile)",
                )
        samples = []
        for v in views:
            ordered = sorted(buckets[v.view_id], key=lambda pair: pair[0])
            try:
                samples.append([decode_png(data) for _, data in ordered])
            except Exception as exc:
                raise HTTPException(
                    status_code=400, detail=f"undecodable PNG for view {v.view_id!r}: {exc}"
                ) from exc

        try:
            profile = train(
                samples,
                views,
                harness_type=harness_type,
                profile_id=cfg.get("profile_id"),
                provenance=[name for bucket in buckets.values() for name, _ in bucket],
            )
        except (SampleCountTooLow, TrainingSampleUnclear, WireCountInconsistent) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        save_profile(profile, profile_path(profiles_dir, harness_type, profile.profile_id))
        profile_cache[profile.profile_id] = profile
        return {"profile_id": profile.profile_id, "harness_type": harness_type}

    # -- sessions -------------------------------------------------------------

    @app.post("/sessions", status_code=201, dependencies=[auth])
    def create_session(body: dict) -> dict:
        for key in ("operator", "harness_type", "profile_id"):
            if key not in body:
                raise HTTPException(status_code=400, detail=f"missing field {key!r}")
        find_profile(body["profile_id"])  # 404 on unknown profile
        record = store.create_session(
            operator=body["operator"],
            harness_type=body["harness_type"],
            profile_id=body["profile_id"],
        )
        return _session_to_dict(record)

    @app.get("/sessions", dependencies=[auth])
    def list_sessions() -> dict:
        return {"sessions": [_session_to_dict(r) for r in store.list_sessions()]}

    @app.get("/sessions/{session_id}", dependencies=[auth])
    def get_session(session_id: str) -> dict:
        return _session_to_dict(get_session_or_404(session_id), include_events=True)

    @app.post("/sessions/{session_id}/close", dependencies=[auth])
    def close_session(session_id: str) -> dict:
        get_session_or_404(session_id)
        try:
            record = store.close_session(session_id)
        except SessionClosed as exc:
            raise HTTPException(status_code=409, detail="session already closed") from exc
        return _session_to_dict(record)

    @app.post("/sessions/{session_id}/inspect", dependencies=[auth])
    async def submit_inspection(
        session_id: str, frames: list[UploadFile] = File(...)
    ) -> dict:
        record = get_session_or_404(session_id)
        if not record.open:
            raise HTTPException(status_code=409, detail="session is closed")
        profile = find_profile(record.profile_id)
        if len(frames) != len(profile.views):
            raise HTTPException(
                status_code=400,
                detail=f"expected {len(profile.views)} frame(s), got {len(frames)}",
            )
        images = []
        digests = []
        for f in frames:
            data = await f.read()
            try:
                images.append(decode_png(data))
            except Exception as exc:
                raise HTTPException(status_code=400, detail=f"undecodable PNG: {exc}") from exc
            digests.append(store.store_blob(data))
        try:
            result = inspect(images, profile)
        except ProfileVersionMismatch as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        result_dict = result_to_dict(result)
        try:
            event = store.append_event(session_id, tuple(digests), result_dict)
        except SessionClosed as exc:
            raise HTTPException(status_code=409, detail="session is closed") from exc
        counts = store.get_session(session_id).counts
        return {"event": event.to_dict(), "result": result_dict, "counts": counts}

    @app.post("/sessions/{session_id}/events/{event_id}/resolve", dependencies=[auth])
    def resolve_event(session_id: str, event_id: str, body: dict) -> dict:
        action = body.get("action")
        if action not in ("manual_pass", "manual_fail"):
            raise HTTPException(status_code=400, detail="action must be manual_pass or manual_fail")
        get_session_or_404(session_id)
        try:
            event = store.resolve_event(session_id, event_id, action)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=f"unknown event {event_id!r}") from exc
        except EventNotResolvable as exc:
            raise HTTPException(
                status_code=409, detail="event is not Unclear or is already resolved"
            ) from exc
        counts = store.get_session(session_id).counts
        return {"event": event.to_dict(), "counts": counts}

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=str(console_dir), html=True), name="console")

    return app
