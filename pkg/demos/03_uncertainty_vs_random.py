"""Strategy comparison at desk scale.

Runs paired seeded loops for the random baseline, plain uncertainty
sampling, and uncertainty sampling with the balance scheme, then prints
their mean final metrics. Lower OVF is better; the balanced uncertainty
runs should land clearly below the random baseline.
"""

import tempfile
from pathlib import Path

from gal_engine import RunConfig, SoISpec
from gal_engine.cli import compare_strategies, parse_strategy_spec

config = RunConfig(
    soi=SoISpec(pseudo_token="S*", non_soi_text="cat",
                reference_caption_template="a photo of {SOI} cat"),
    anchors=tuple(f"{{SOI}} in scene {i}" for i in range(18)),
    references=("ref-0.png",),
    m=10, k=3, lam=0.005, max_rounds=4,
    master_seed=1337, embedding_dim=64,
    run_dir="unused",
)

specs = [parse_strategy_spec(s)
         for s in ("random", "uncertainty", "uncertainty+balance")]
rows = compare_strategies(config, specs, n_seeds=5,
                          work_dir=Path(tempfile.mkdtemp()))

print(f"{'strategy':<22} {'txt_aln':>8} {'img_aln':>8} {'ovf':>6}  (mean of 5 seeds)")
for kind, balance in specs:
    tag = kind.value + ("+balance" if balance else "")
    group = [r for r in rows if r["strategy"] == tag]
    txt = sum(r["txt_aln"] for r in group) / len(group)
    img = sum(r["img_aln"] for r in group) / len(group)
    ovf = sum(r["ovf"] for r in group) / len(group)
    print(f"{tag:<22} {txt:>8.3f} {img:>8.3f} {ovf:>6.3f}")

baseline = sum(r["round1_ovf"] for r in rows) / len(rows)
print(f"\nround-1 OVF before any admissions: {baseline:.3f}")
