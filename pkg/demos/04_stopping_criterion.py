"""Watching the adaptive stop fire.

With the round cap raised out of the way, the loop halts on its own once
fewer than k directions keep positive entropy: the model has become
certain (one way or the other) about nearly every direction, so further
querying would only admit uninformative samples.
"""

import tempfile

from gal_engine import BackendSpec, Engine, RunConfig, SoISpec
from gal_engine.strategy import StrategyKind

config = RunConfig(
    soi=SoISpec(pseudo_token="S*", non_soi_text="cat",
                reference_caption_template="a photo of {SOI} cat"),
    anchors=tuple(f"{{SOI}} in scene {i}" for i in range(18)),
    references=("ref-0.png",),
    m=10, k=3, lam=0.005, max_rounds=20,
    strategy=StrategyKind.UNCERTAINTY, balance_enabled=False,
    master_seed=11, embedding_dim=64,
    backend=BackendSpec(g_init_low=0.3, g_init_high=0.3),
    run_dir=tempfile.mkdtemp() + "/run",
)

with Engine(config) as engine:
    print(f"{'round':>5}  {'explorable':>10}  {'ovf':>6}  {'delta':>9}  verdict")
    while engine.status.value == "running":
        engine.run_round()
        rec = engine.rounds[-1]
        explorable = sum(1 for s in rec.stats if s.entropy > 0)
        verdict = rec.stop_reason or ""
        print(f"{rec.round:>5}  {explorable:>10}  {rec.metrics.ovf:>6.3f}  "
              f"{rec.openness:>9.6f}  {verdict}")
    print(f"\nstopped after {len(engine.rounds)} rounds "
          f"({engine.stop_reason.value}); fewer than k={config.k} directions "
          "were left to explore.")
