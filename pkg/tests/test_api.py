import asyncio
import csv
import io
import json

import pytest
from fastapi.testclient import TestClient

from app.main import app
from app.models.schemas import format_fraction
from app.services.export import RECORD_FIELDS
from app.websocket.manager import ConnectionManager


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as test_client:
        yield test_client


def test_root(client):
    response = client.get("/")
    assert response.status_code == 200
    assert response.json()["message"] == "Turnover Orbibundle API"


def test_invariants_outside_component(client):
    response = client.post("/api/invariants", json={
        "signature": "3,3,4", "selection": "1,1,2", "s": 0.1, "t": 0.2})
    assert response.status_code == 422
    assert response.json()["detail"]["error"] == "ConditionC1Violated"


def test_invariants_bad_input(client):
    assert client.post("/api/invariants", json={
        "signature": "2,3,6", "selection": "1,1,2", "s": 0.1, "t": 0.2}).status_code == 422
    response = client.post("/api/invariants", json={
        "signature": "3,3,4", "selection": "9,9,9", "s": 0.1, "t": 0.2})
    assert response.status_code == 400
    assert response.json()["detail"]["error"] == "InvalidSelection"
    assert client.post("/api/invariants", json={
        "signature": "3,3,4", "selection": "1,1,1"}).status_code == 400


def test_invariants_at_passing_point(client, passing_query):
    sel, branch, cell, query = passing_query
    response = client.post("/api/invariants", json={
        "signature": sel.signature.label, "selection": sel.label, "lift": sel.lift,
        "branch": branch.value, "s": cell.s, "t": cell.t})
    assert response.status_code == 200
    body = response.json()
    assert body["e"] == format_fraction(query.report.e)
    assert body["f"] == query.report.f
    assert body["consistency"] is True


def test_census_job_lifecycle(client):
    response = client.post("/api/jobs/census", json={"case": "special-line", "n_max": 5})
    assert response.status_code == 200
    job_id = response.json()["job_id"]

    # background tasks finish before the test client returns
    job = client.get(f"/api/jobs/{job_id}").json()
    assert job["status"] == "completed"
    assert job["progress"]["signatures_done"] == job["progress"]["total_signatures"]
    assert job["summary"]["records"] == job["progress"]["records_found"]

    records = client.get(f"/api/jobs/{job_id}/records").json()
    assert len(records) == job["progress"]["records_found"]
    for record in records:
        assert record["case"] == "special-line"

    exported = client.get(f"/api/jobs/{job_id}/export", params={"format": "csv"})
    assert exported.status_code == 200
    reader = csv.DictReader(io.StringIO(exported.text))
    assert reader.fieldnames == RECORD_FIELDS
    assert len(list(reader)) == len(records)
    assert len(client.get(f"/api/jobs/{job_id}/export", params={"format": "json"}).json()) == len(records)

    assert any(item["job_id"] == job_id for item in client.get("/api/jobs").json())


def test_job_errors(client):
    assert client.get("/api/jobs/nope").status_code == 404
    assert client.get("/api/jobs/nope/records").status_code == 404
    assert client.post("/api/jobs/census", json={"n_max": 3, "n_min": 5}).status_code == 400
    assert client.post("/api/jobs/census", json={"n_max": 30}).status_code == 422
    assert client.post("/api/jobs/census", json={"n_max": 5, "s_range": "4:0:1"}).status_code == 422


class RecordingSocket:
    def __init__(self, fail: bool = False):
        self.sent = []
        self.fail = fail

    async def accept(self):
        pass

    async def send_text(self, text: str):
        if self.fail:
            raise RuntimeError("closed")
        self.sent.append(json.loads(text))


def test_connection_manager_drops_stale_listeners():
    manager = ConnectionManager()
    live, dead = RecordingSocket(), RecordingSocket(fail=True)

    async def scenario():
        await manager.connect(live, "job")
        await manager.connect(dead, "job")
        await manager.broadcast_progress("job", "signature_done", {"signature": "3,3,4"})

    asyncio.run(scenario())
    assert live.sent == [{"type": "signature_done", "data": {"signature": "3,3,4"}}]
    assert manager.listeners("job") == 1
    manager.disconnect(live, "job")
    assert manager.listeners("job") == 0
