import time

import pytest
from fastapi.testclient import TestClient

from bimq.llm import RecordingBackend, ScriptBackend, open_replay
from bimq.pipeline import PipelineConfig
from bimq.service import ServiceConfig, create_app
from helpers import ASK_SCRIPT, PUMP_QUERY, PUMP_SCRIPT, PUMP_SUMMARY


@pytest.fixture()
def replay_backend(hospital_store, tmp_path):
    """Cassette covering the pump walkthrough and the general question."""
    recorder = RecordingBackend(ScriptBackend(PUMP_SCRIPT + ASK_SCRIPT))
    from bimq.pipeline import run_query
    run_query(hospital_store, recorder, PipelineConfig(), PUMP_QUERY)
    run_query(hospital_store, recorder, PipelineConfig(), "What is BIM?")
    path = tmp_path / "service.json"
    recorder.cassette.save(path)
    return open_replay(path)


@pytest.fixture()
def client(hospital_store, replay_backend):
    app = create_app(hospital_store, replay_backend, ServiceConfig())
    with TestClient(app) as test_client:
        yield test_client


class TestHttp:
    def test_query_returns_answer_event(self, client):
        response = client.post("/api/query", json={"text": PUMP_QUERY})
        assert response.status_code == 200
        body = response.json()
        assert body["type"] == "answer"
        assert body["ok"] is True
        assert body["text"] == PUMP_SUMMARY
        assert body["retrieved_ids"] == ["14569"]
        assert body["rows"][0]["id"] == "14569"
        assert body["rows"][0]["record"]["manufacturer"] == "PACO"

    def test_empty_text_rejected(self, client):
        response = client.post("/api/query", json={"text": "   "})
        assert response.status_code == 400

    def test_include_trace(self, client):
        response = client.post(
            "/api/query", json={"text": PUMP_QUERY, "include_trace": True})
        trace = response.json()["trace"]
        assert [event["stage"] for event in trace] == [
            "intent", "parameter", "value", "db_execute", "summary"]
        assert all("prompt_text" not in event for event in trace)

    def test_prompts_redacted_unless_configured(self, hospital_store, replay_backend):
        app = create_app(hospital_store, replay_backend,
                         ServiceConfig(include_prompts=True))
        with TestClient(app) as client:
            response = client.post(
                "/api/query", json={"text": PUMP_QUERY, "include_trace": True})
            trace = response.json()["trace"]
            assert "Task instruction:" in trace[0]["prompt_text"]

    def test_categories_and_schema(self, client):
        categories = client.get("/api/categories").json()["categories"]
        assert "Pumps" in categories
        schema = client.get("/api/schema/pumps").json()
        assert schema["name"] == "Pumps"
        assert schema["id_parameter"] == "component_id"
        assert client.get("/api/schema/starships").status_code == 404

    def test_health(self, client):
        assert client.get("/health").json() == {"status": "ok"}


class TestWebSocket:
    def test_stream_order_and_answer(self, client):
        with client.websocket_connect("/ws/chat") as ws:
            ws.send_json({"type": "query", "request_id": "r1", "text": PUMP_QUERY})
            events = [ws.receive_json() for _ in range(6)]
        stages, answer = events[:5], events[5]
        assert [event["type"] for event in stages] == ["stage"] * 5
        assert [event["stage"] for event in stages] == [
            "intent", "parameter", "value", "db_execute", "summary"]
        assert all(event["request_id"] == "r1" for event in events)
        assert answer["type"] == "answer"
        assert answer["retrieved_ids"] == ["14569"]

    def test_ws_answer_matches_http(self, client):
        http_body = client.post(
            "/api/query", json={"text": PUMP_QUERY, "request_id": "same"}).json()
        with client.websocket_connect("/ws/chat") as ws:
            ws.send_json({"type": "query", "request_id": "same", "text": PUMP_QUERY})
            ws_answer = ws.receive_json()
            while ws_answer["type"] != "answer":
                ws_answer = ws.receive_json()
        assert ws_answer == http_body

    def test_invalid_frame_yields_failed_answer(self, client):
        with client.websocket_connect("/ws/chat") as ws:
            ws.send_json({"type": "query", "request_id": "bad", "text": "  "})
            event = ws.receive_json()
        assert event["type"] == "answer"
        assert event["ok"] is False
        assert event["failure_stage"] == "validation"

    def test_interleaved_clients_stay_stateless(self, client):
        with client.websocket_connect("/ws/chat") as first, \
                client.websocket_connect("/ws/chat") as second:
            first.send_json({"type": "query", "request_id": "a", "text": PUMP_QUERY})
            second.send_json({"type": "query", "request_id": "b", "text": "What is BIM?"})
            answers = {}
            for ws, rid in ((first, "a"), (second, "b")):
                event = ws.receive_json()
                while event["type"] != "answer":
                    assert event["request_id"] == rid
                    event = ws.receive_json()
                answers[rid] = event
        assert answers["a"]["text"] == PUMP_SUMMARY
        assert answers["b"]["text"] == ASK_SCRIPT[1]
        assert answers["b"]["retrieved_ids"] == []


class TestOverhead:
    def test_service_overhead_under_50ms(self, client):
        client.post("/api/query", json={"text": PUMP_QUERY})  # warm up
        timings = []
        for _ in range(5):
            start = time.perf_counter()
            response = client.post("/api/query", json={"text": PUMP_QUERY})
            timings.append(time.perf_counter() - start)
            assert response.status_code == 200
        timings.sort()
        assert timings[len(timings) // 2] < 0.050
