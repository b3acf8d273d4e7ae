"""Human-in-the-loop, scripted.

Drives a human-strategy run through the same HTTP surface the review UI
uses: wait for a paused round, fetch the grouped candidates, post a
decision, repeat. Here the "reviewer" just picks the most anchor-faithful
card of the three most uncertain directions.
"""

import tempfile
import time

from fastapi.testclient import TestClient

from gal_engine import BackendSpec, Engine, RunConfig, SoISpec
from gal_engine.server import EngineDriver, build_app
from gal_engine.strategy import StrategyKind

config = RunConfig(
    soi=SoISpec(pseudo_token="S*", non_soi_text="cat",
                reference_caption_template="a photo of {SOI} cat"),
    anchors=tuple(f"{{SOI}} in scene {i}" for i in range(18)),
    references=("ref-0.png",),
    m=10, k=3, lam=0.005, max_rounds=3,
    strategy=StrategyKind.HUMAN,
    master_seed=23, embedding_dim=64,
    backend=BackendSpec(g_init_low=0.35, g_init_high=0.35),
    run_dir=tempfile.mkdtemp() + "/run",
)


def wait_for(client, status):
    while True:
        body = client.get("/api/run").json()
        if body["status"] == status or body["status"] == "stopped":
            return body
        time.sleep(0.02)


with Engine(config) as engine:
    driver = EngineDriver(engine)
    client = TestClient(build_app(engine, driver))
    driver.start()
    try:
        while True:
            body = wait_for(client, "awaiting_human")
            if body["status"] == "stopped":
                break
            groups = client.get("/api/round/current/candidates").json()["anchors"]
            groups.sort(key=lambda g: -g["entropy"])
            pairs = []
            for g in groups[:3]:
                best = max(g["candidates"], key=lambda c: c["sim_to_anchor"])
                pairs.append({"anchor_id": g["anchor_id"],
                              "sample_id": best["sample_id"]})
            summary = client.post("/api/round/current/decision",
                                  json={"pairs": pairs}).json()
            print(f"round {summary['round']}: delta={summary['delta']:.6f}  "
                  f"admitted={len(summary['admitted'])}  "
                  f"ovf={summary['metrics']['ovf']:.3f}")
    finally:
        driver.shutdown()
    print(f"\nfinished: {engine.status.value} ({engine.stop_reason.value}) "
          f"after {len(engine.rounds)} rounds; "
          f"training set holds {len(engine.training_set)} references.")
