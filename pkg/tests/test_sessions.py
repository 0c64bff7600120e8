"""Durable session store: append-only log, replay, derived counts."""
import hashlib
import json
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harnesscheck.sessions import (
    EventNotResolvable,
    InspectionEvent,
    SessionClosed,
    SessionStore,
    tally_counts,
)


def result_of(overall):
    return {"overall": overall, "message": "x", "views": []}


def make_store(tmp_path):
    return SessionStore(tmp_path / "data")


def add(store, sid, overall):
    return store.append_event(sid, ("d1",), result_of(overall))


class TestTallyCounts:
    def _event(self, i, overall, action="none"):
        return InspectionEvent(
            event_id=f"e{i:06d}",
            timestamp="2026-01-01T00:00:00+00:00",
            frame_digests=("d",),
            result=result_of(overall),
            operator_action=action,
        )

    @given(st.lists(st.sampled_from(["Pass", "Fail", "Unclear"]), max_size=40))
    @settings(max_examples=150)
    def test_counts_partition_the_log(self, overalls):
        events = tuple(self._event(i, o) for i, o in enumerate(overalls))
        counts = tally_counts(events)
        assert counts["pass"] == overalls.count("Pass")
        assert counts["fail"] == overalls.count("Fail")
        assert counts["unclear"] == overalls.count("Unclear")
        assert counts["pass"] + counts["fail"] + counts["unclear"] == len(overalls)

    def test_resolution_keeps_original_verdict_bucket(self):
        # a manually-passed Unclear still counts as unclear plus one override
        events = (self._event(0, "Unclear", action="manual_pass"),)
        counts = tally_counts(events)
        assert counts == {"pass": 0, "fail": 0, "unclear": 1, "manual_override": 1}


class TestEventValidation:
    def test_action_only_allowed_on_unclear(self):
        with pytest.raises(ValueError):
            InspectionEvent("e1", "t", ("d",), result_of("Pass"), "manual_pass")

    def test_unknown_action_rejected(self):
        with pytest.raises(ValueError):
            InspectionEvent("e1", "t", ("d",), result_of("Unclear"), "shrug")

    def test_round_trip_dict(self):
        ev = InspectionEvent("e1", "t", ("d1", "d2"), result_of("Unclear"), "manual_fail")
        assert InspectionEvent.from_dict(ev.to_dict()) == ev


class TestSessionLifecycle:
    def test_create_and_get(self, tmp_path):
        store = make_store(tmp_path)
        rec = store.create_session("lee", "demo-8w", "p1")
        got = store.get_session(rec.session_id)
        assert got.operator == "lee"
        assert got.harness_type == "demo-8w"
        assert got.profile_id == "p1"
        assert got.ended_at is None and got.open
        assert got.counts == {"pass": 0, "fail": 0, "unclear": 0, "manual_override": 0}

    def test_list_sorted_by_start(self, tmp_path):
        store = make_store(tmp_path)
        ids = [store.create_session("op", "t", "p").session_id for _ in range(3)]
        listed = [s.session_id for s in store.list_sessions()]
        assert set(listed) == set(ids)

    def test_unknown_session(self, tmp_path):
        store = make_store(tmp_path)
        with pytest.raises(KeyError):
            store.get_session("nope")

    def test_event_ids_are_sequential(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        ids = [add(store, sid, "Pass").event_id for _ in range(3)]
        assert ids == ["e000001", "e000002", "e000003"]

    def test_counts_update_with_events(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        for overall in ("Pass", "Pass", "Fail", "Unclear"):
            add(store, sid, overall)
        counts = store.get_session(sid).counts
        assert counts == {"pass": 2, "fail": 1, "unclear": 1, "manual_override": 0}

    def test_close_stops_appends(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        closed = store.close_session(sid)
        assert closed.ended_at is not None and not closed.open
        with pytest.raises(SessionClosed):
            add(store, sid, "Pass")
        with pytest.raises(SessionClosed):
            store.close_session(sid)


class TestResolve:
    def test_resolve_unclear_event(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        ev = add(store, sid, "Unclear")
        out = store.resolve_event(sid, ev.event_id, "manual_pass")
        assert out.operator_action == "manual_pass"
        rec = store.get_session(sid)
        assert rec.counts["manual_override"] == 1
        assert rec.events[0].operator_action == "manual_pass"

    def test_resolve_non_unclear_rejected(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        ev = add(store, sid, "Pass")
        with pytest.raises(EventNotResolvable):
            store.resolve_event(sid, ev.event_id, "manual_pass")

    def test_double_resolve_rejected(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        ev = add(store, sid, "Unclear")
        store.resolve_event(sid, ev.event_id, "manual_fail")
        with pytest.raises(EventNotResolvable):
            store.resolve_event(sid, ev.event_id, "manual_pass")

    def test_unknown_event(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        with pytest.raises(KeyError):
            store.resolve_event(sid, "e999999", "manual_pass")

    def test_invalid_action(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        ev = add(store, sid, "Unclear")
        with pytest.raises(ValueError):
            store.resolve_event(sid, ev.event_id, "wave_through")


class TestDurability:
    def test_restart_replays_identical_state(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        add(store, sid, "Pass")
        ev = add(store, sid, "Unclear")
        store.resolve_event(sid, ev.event_id, "manual_pass")
        add(store, sid, "Fail")

        again = make_store(tmp_path)
        a, b = store.get_session(sid), again.get_session(sid)
        assert a.counts == b.counts
        assert a.events == b.events
        assert a.started_at == b.started_at

    def test_torn_final_line_is_dropped(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        add(store, sid, "Pass")
        add(store, sid, "Fail")
        log = tmp_path / "data" / "events" / f"{sid}.jsonl"
        raw = log.read_bytes()
        log.write_bytes(raw[:-7])  # cut mid-record, no trailing newline

        again = make_store(tmp_path)
        rec = again.get_session(sid)
        assert [e.event_id for e in rec.events] == ["e000001"]
        assert rec.counts == {"pass": 1, "fail": 0, "unclear": 0, "manual_override": 0}

    def test_append_after_torn_line_recovery(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        add(store, sid, "Pass")
        log = tmp_path / "data" / "events" / f"{sid}.jsonl"
        log.write_bytes(log.read_bytes() + b'{"half')

        again = make_store(tmp_path)
        ev = again.append_event(sid, ("d",), result_of("Fail"))
        assert ev.event_id == "e000002"
        assert [e.event_id for e in again.get_session(sid).events] == ["e000001", "e000002"]

    def test_log_is_append_only_across_operations(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        ev = add(store, sid, "Unclear")
        log = tmp_path / "data" / "events" / f"{sid}.jsonl"
        before = log.read_bytes()
        store.resolve_event(sid, ev.event_id, "manual_pass")
        after = log.read_bytes()
        assert after.startswith(before)  # resolution appended, nothing rewritten
        assert len(after) > len(before)

    def test_resolution_survives_restart_as_folded_state(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        ev = add(store, sid, "Unclear")
        store.resolve_event(sid, ev.event_id, "manual_fail")
        again = make_store(tmp_path)
        got = again.get_session(sid).events[0]
        assert got.operator_action == "manual_fail"
        with pytest.raises(EventNotResolvable):
            again.resolve_event(sid, ev.event_id, "manual_pass")

    @given(st.lists(st.sampled_from(["Pass", "Fail", "Unclear"]), min_size=1, max_size=12))
    @settings(max_examples=25, deadline=None)
    def test_replayed_counts_always_match_live(self, tmp_path_factory, overalls):
        root = tmp_path_factory.mktemp("seq")
        store = SessionStore(root)
        sid = store.create_session("op", "t", "p").session_id
        for overall in overalls:
            ev = add(store, sid, overall)
            if overall == "Unclear":
                store.resolve_event(sid, ev.event_id, "manual_pass")
        assert SessionStore(root).get_session(sid).counts == store.get_session(sid).counts


class TestBlobs:
    def test_blob_named_by_content_digest(self, tmp_path):
        store = make_store(tmp_path)
        data = b"png-bytes-here"
        digest = store.store_blob(data)
        assert digest == hashlib.sha256(data).hexdigest()
        assert store.blob_path(digest).read_bytes() == data

    def test_blob_store_is_idempotent(self, tmp_path):
        store = make_store(tmp_path)
        d1 = store.store_blob(b"abc")
        d2 = store.store_blob(b"abc")
        assert d1 == d2
        assert store.blob_path(d1).exists()


class TestIndexFile:
    def test_index_is_valid_json_after_every_operation(self, tmp_path):
        store = make_store(tmp_path)
        index = tmp_path / "data" / "index.json"
        sid = store.create_session("op", "t", "p").session_id
        json.loads(index.read_text())
        add(store, sid, "Pass")
        json.loads(index.read_text())
        store.close_session(sid)
        doc = json.loads(index.read_text())
        assert sid in json.dumps(doc)

    def test_no_leftover_temp_files(self, tmp_path):
        store = make_store(tmp_path)
        sid = store.create_session("op", "t", "p").session_id
        add(store, sid, "Pass")
        store.close_session(sid)
        names = os.listdir(tmp_path / "data")
        assert all(not n.endswith(".tmp") for n in names)
