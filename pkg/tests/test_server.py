import time

import pytest
from fastapi.testclient import TestClient

from gal_engine.backends import BackendSpec
from gal_engine.engine import Engine, RunStatus
from gal_engine.server import EngineDriver, build_app
from gal_engine.strategy import StrategyKind

from conftest import base_config


@pytest.fixture
def human_engine(tmp_path):
    cfg = base_config(tmp_path / "r", strategy=StrategyKind.HUMAN,
                      backend=BackendSpec(g_init_low=0.35, g_init_high=0.35))
    with Engine(cfg) as engine:
        yield engine


class TestRunEndpoint:
    def test_summary_fields(self, human_engine):
        client = TestClient(build_app(human_engine))
        body = client.get("/api/run").json()
        assert body["status"] == "running"
        assert body["strategy"] == "human"
        assert body["anchor_count"] == 18
        assert body["k"] == 3


class TestCandidatesEndpoint:
    def test_conflict_while_running(self, human_engine):
        client = TestClient(build_app(human_engine))
        assert client.get("/api/round/current/candidates").status_code == 409

    def test_candidate_groups(self, human_engine):
        human_engine.run_round()
        client = TestClient(build_app(human_engine))
        resp = client.get("/api/round/current/candidates")
        assert resp.status_code == 200
        body = resp.json()
        assert body["round"] == 1
        for group in body["anchors"]:
            assert len(group["candidates"]) == 10
            card = group["candidates"][0]
            assert {"sample_id", "image_uri", "sim_to_anchor",
                    "sim_to_non_soi", "overfit"} <= set(card)


class TestDecisionEndpoint:
    def _pairs(self, client, n=3):
        body = client.get("/api/round/current/candidates").json()
        return [{"anchor_id": g["anchor_id"],
                 "sample_id": g["candidates"][0]["sample_id"]}
                for g in body["anchors"][:n]]

    def test_decision_advances_round(self, human_engine):
        human_engine.run_round()
        client = TestClient(build_app(human_engine))
        pairs = self._pairs(client)
        resp = client.post("/api/round/current/decision", json={"pairs": pairs})
        assert resp.status_code == 200
        body = resp.json()
        assert body["round"] == 1
        assert body["delta"] > 0
        assert len(body["admitted"]) == 3
        for item in body["admitted"]:
            assert item["weight"] == pytest.approx(body["delta"], abs=1e-12)
        assert human_engine.status is RunStatus.RUNNING

    def test_conflict_when_not_awaiting(self, human_engine):
        client = TestClient(build_app(human_engine))
        resp = client.post("/api/round/current/decision", json={"pairs": []})
        assert resp.status_code == 409

    def test_unknown_sample_is_unprocessable(self, human_engine):
        human_engine.run_round()
        client = TestClient(build_app(human_engine))
        pairs = [{"anchor_id": 0, "sample_id": "bogus"}]
        resp = client.post("/api/round/current/decision", json={"pairs": pairs})
        assert resp.status_code == 422

    def test_oversized_decision_is_unprocessable(self, human_engine):
        human_engine.run_round()
        client = TestClient(build_app(human_engine))
        pairs = self._pairs(client, n=4)
        resp = client.post("/api/round/current/decision", json={"pairs": pairs})
        assert resp.status_code == 422

    def test_malformed_body_is_unprocessable(self, human_engine):
        human_engine.run_round()
        client = TestClient(build_app(human_engine))
        assert client.post("/api/round/current/decision",
                           json={"nope": 1}).status_code == 422

    def test_second_decision_conflicts(self, human_engine):
        human_engine.run_round()
        client = TestClient(build_app(human_engine))
        pairs = self._pairs(client)
        assert client.post("/api/round/current/decision",
                           json={"pairs": pairs}).status_code == 200
        assert client.post("/api/round/current/decision",
                           json={"pairs": pairs}).status_code == 409


class TestReferencesEndpoint:
    def test_training_set_visible(self, human_engine):
        client = TestClient(build_app(human_engine))
        body = client.get("/api/references").json()
        assert len(body["references"]) == 1
        assert body["references"][0]["origin"] == "original"
        assert body["references"][0]["weight"] == 1.0


class TestDriverLoop:
    def _wait_for(self, client, status, timeout=20.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            body = client.get("/api/run").json()
            assert body.get("driver_error") is None, body
            if body["status"] == status:
                return body
            time.sleep(0.02)
        raise AssertionError(f"timed out waiting for status {status}")

    def test_full_human_run_through_api(self, tmp_path):
        cfg = base_config(tmp_path / "r", strategy=StrategyKind.HUMAN,
                          max_rounds=2,
                          backend=BackendSpec(g_init_low=0.35, g_init_high=0.35))
        with Engine(cfg) as engine:
            driver = EngineDriver(engine)
            client = TestClient(build_app(engine, driver))
            driver.start()
            try:
                for expected_round in (1, 2):
                    self._wait_for(client, "awaiting_human")
                    body = client.get("/api/round/current/candidates").json()
                    assert body["round"] == expected_round
                    pairs = [{"anchor_id": g["anchor_id"],
                              "sample_id": g["candidates"][0]["sample_id"]}
                             for g in body["anchors"][:3]]
                    resp = client.post("/api/round/current/decision",
                                       json={"pairs": pairs})
                    assert resp.status_code == 200
                self._wait_for(client, "stopped")
                assert len(engine.rounds) == 2
                refs = client.get("/api/references").json()["references"]
                assert sum(1 for r in refs if r["origin"] == "synthetic") == 6
            finally:
                driver.shutdown()
