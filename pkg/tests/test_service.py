"""Service: endpoint contracts, event-stream cursor semantics, key privacy."""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from conftest import CORPUS, build_pipeline_script, safety_reply
from labpilot.service import create_app


def wait_for_phase(client, session_id, phases, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        snapshot = client.get(f"/sessions/{session_id}").json()
        if snapshot["phase"] in phases:
            return snapshot
        time.sleep(0.02)
    raise AssertionError(f"timed out waiting for {phases}; last: {snapshot['phase']}")


@pytest.fixture
def client(tmp_path):
    app = create_app(base_dir=tmp_path / "sessions")
    with TestClient(app) as test_client:
        yield test_client


def create_session(client, **over):
    body = {
        "model": "scripted",
        "budget": "10.0",
        "script": build_pipeline_script(),
        "corpus": CORPUS,
        "num_ideas": 2,
        "reflections": 1,
        **over,
    }
    response = client.post("/sessions", json=body)
    assert response.status_code == 201, response.text
    return response.json()["id"]


def drive_to_ideas(client, session_id):
    response = client.post(
        f"/sessions/{session_id}/intent",
        json={"text": "improve KV-cache reuse for LLM serving"},
    )
    assert response.status_code == 202
    return wait_for_phase(client, session_id, {"idea_ready"})


class TestSessionLifecycle:
    def test_create_returns_201_and_id(self, client):
        session_id = create_session(client)
        assert client.get(f"/sessions/{session_id}").json()["phase"] == "configured"

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/ghost").status_code == 404
        assert client.post("/sessions/ghost/intent", json={"text": "x"}).status_code == 404

    def test_intent_then_ideas_table(self, client):
        session_id = create_session(client)
        drive_to_ideas(client, session_id)
        table = client.get(f"/sessions/{session_id}/ideas").json()
        assert len(table["rows"]) == 2
        assert table["version"] == 0

    def test_empty_intent_422(self, client):
        session_id = create_session(client)
        assert (
            client.post(f"/sessions/{session_id}/intent", json={"text": "  "}).status_code
            == 422
        )

    def test_double_intent_409(self, client):
        session_id = create_session(client)
        drive_to_ideas(client, session_id)
        response = client.post(f"/sessions/{session_id}/intent", json={"text": "again"})
        assert response.status_code == 409

    def test_full_flow_through_review(self, client):
        session_id = create_session(client)
        drive_to_ideas(client, session_id)
        assert client.post(f"/sessions/{session_id}/confirm", json={}).status_code == 202
        wait_for_phase(client, session_id, {"code_ready"})

        zipped = client.get(f"/sessions/{session_id}/artifacts")
        assert zipped.status_code == 200
        import io, zipfile

        names = zipfile.ZipFile(io.BytesIO(zipped.content)).namelist()
        assert "run_1/final_info.json" in names

        assert client.post(f"/sessions/{session_id}/write").status_code == 202
        wait_for_phase(client, session_id, {"paper_ready"})
        paper = client.get(f"/sessions/{session_id}/paper")
        assert paper.status_code == 200
        assert "ai-disclosure-footer" in paper.text

        assert client.post(f"/sessions/{session_id}/review").status_code == 202
        wait_for_phase(client, session_id, {"done"})
        review = client.get(f"/sessions/{session_id}/review").json()
        assert 1 <= review["overall"] <= 10

    def test_wrong_phase_actions_409(self, client):
        session_id = create_session(client)
        assert client.post(f"/sessions/{session_id}/write").status_code == 409
        assert client.post(f"/sessions/{session_id}/review").status_code == 409
        assert client.post(f"/sessions/{session_id}/confirm", json={}).status_code == 409

    def test_blocked_session_becomes_blocked_phase(self, client):
        session_id = create_session(client, script=[safety_reply("HIGH")])
        client.post(f"/sessions/{session_id}/intent", json={"text": "risky topic"})
        snapshot = wait_for_phase(client, session_id, {"blocked"})
        assert snapshot["phase"] == "blocked"

    def test_budget_terminated_402(self, client):
        session_id = create_session(client, budget="0.0001")
        client.post(f"/sessions/{session_id}/intent", json={"text": "any intent"})
        wait_for_phase(client, session_id, {"terminated"})
        response = client.post(f"/sessions/{session_id}/write")
        assert response.status_code == 402


class TestTableEdits:
    def test_patch_cell_and_version_bump(self, client):
        session_id = create_session(client)
        drive_to_ideas(client, session_id)
        edit = {"version": 0, "edit": {"row": 0, "column": "title", "new_value": "Edited"}}
        response = client.patch(f"/sessions/{session_id}/tables/ideas", json=edit)
        assert response.status_code == 200
        assert response.json()["version"] == 1
        assert response.json()["rows"][0]["title"] == "Edited"

    def test_stale_version_409_exactly_one_wins(self, client):
        session_id = create_session(client)
        drive_to_ideas(client, session_id)
        edit = {"version": 0, "edit": {"row": 0, "column": "title", "new_value": "A"}}
        first = client.patch(f"/sessions/{session_id}/tables/ideas", json=edit)
        second = client.patch(f"/sessions/{session_id}/tables/ideas", json=edit)
        assert {first.status_code, second.status_code} == {200, 409}

    def test_bad_address_422(self, client):
        session_id = create_session(client)
        drive_to_ideas(client, session_id)
        edit = {"version": 0, "edit": {"row": 99, "column": "title", "new_value": "A"}}
        assert (
            client.patch(f"/sessions/{session_id}/tables/ideas", json=edit).status_code == 422
        )


def collect_events(client, session_id, cursor=0, idle=1.0):
    events = []
    url = f"/sessions/{session_id}/events?cursor={cursor}&idle={idle}"
    with client.stream("GET", url) as response:
        for line in response.iter_lines():
            if line.startswith("data: "):
                events.append(json.loads(line[len("data: ") :]))
    return events


class TestEventStream:
    def test_phase_changes_produce_exactly_one_event_each(self, client):
        session_id = create_session(client)
        drive_to_ideas(client, session_id)
        events = collect_events(client, session_id)
        phase_events = [e for e in events if e["kind"] == "phase_change"]
        assert [e["payload"]["phase"] for e in phase_events] == ["thinking", "idea_ready"]

    def test_cursor_resume_no_gaps_no_duplicates(self, client):
        session_id = create_session(client)
        drive_to_ideas(client, session_id)
        all_events = collect_events(client, session_id)
        assert [e["seq"] for e in all_events] == list(range(1, len(all_events) + 1))
        cut = len(all_events) // 2
        resumed = collect_events(client, session_id, cursor=all_events[cut - 1]["seq"])
        assert [e["seq"] for e in resumed] == [e["seq"] for e in all_events[cut:]]

    def test_live_subscription_during_run(self, client):
        session_id = create_session(client)
        results = {}

        def subscribe():
            results["events"] = collect_events(client, session_id, idle=20.0)

        thread = threading.Thread(target=subscribe, daemon=True)
        thread.start()
        drive_to_ideas(client, session_id)
        client.post(f"/sessions/{session_id}/confirm", json={})
        wait_for_phase(client, session_id, {"code_ready"})
        client.post(f"/sessions/{session_id}/write")
        wait_for_phase(client, session_id, {"paper_ready"})
        client.post(f"/sessions/{session_id}/review")
        wait_for_phase(client, session_id, {"done"})
        thread.join(timeout=30.0)
        seqs = [e["seq"] for e in results["events"]]
        assert seqs == sorted(set(seqs))
        phases = [
            e["payload"]["phase"] for e in results["events"] if e["kind"] == "phase_change"
        ]
        assert phases[-1] == "done"
        assert phases == [
            "thinking",
            "idea_ready",
            "coding",
            "code_ready",
            "writing",
            "paper_ready",
            "reviewing",
            "done",
        ]


class TestApiKeyPrivacy:
    def test_api_key_never_persisted(self, client, tmp_path):
        secret = "sk-super-secret-key-000"
        session_id = create_session(client, api_key=secret)
        drive_to_ideas(client, session_id)
        base = tmp_path / "sessions"
        for path in base.rglob("*"):
            if path.is_file():
                content = path.read_bytes()
                assert secret.encode() not in content, f"api key leaked into {path}"
