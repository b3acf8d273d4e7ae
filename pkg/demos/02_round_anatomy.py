"""One loop round, dissected.

Runs a single round of the simulated loop and prints what the engine saw:
per-direction overfit fractions and entropies, which directions were
queried, the openness score, and the weights the admitted references
received.
"""

import tempfile

from gal_engine import Engine, Origin, RunConfig, SoISpec

config = RunConfig(
    soi=SoISpec(pseudo_token="S*", non_soi_text="cat",
                reference_caption_template="a photo of {SOI} cat"),
    anchors=tuple(f"{{SOI}} in scene {i}" for i in range(12)),
    references=("ref-0.png",),
    m=10, k=3, lam=0.005, max_rounds=4,
    master_seed=7, embedding_dim=64,
    run_dir=tempfile.mkdtemp() + "/run",
)

with Engine(config) as engine:
    engine.run_round()
    rec = engine.rounds[0]

    print(f"round {rec.round}   openness = {rec.openness:.6f}\n")
    print(f"{'anchor':>6}  {'beta':>5}  {'entropy':>8}  queried")
    selected = {aid for aid, _ in rec.selected}
    for s in rec.stats:
        mark = "  <-- top-k" if s.anchor_id in selected else ""
        print(f"{s.anchor_id:>6}  {s.beta:>5.2f}  {s.entropy:>8.5f}{mark}")

    print("\nadmitted references:")
    for ref in engine.training_set:
        if ref.origin is Origin.SYNTHETIC:
            print(f"  caption={ref.caption!r}  weight={ref.weight:.6f}")
    print("\noriginals keep weight 1.0; synthetic admissions carry the "
          "round's openness score.")
