"""Round-level evaluation metrics and the tabular report writer.

TXT-ALN averages how close samples sit to their own prompt, IMG-ALN how
close they sit to the (centroid of the) reference images, and OVF the
share of samples the oracle flags as overfit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

from .core import Embedding, GeneratedSample, MetricsTriple, RoundRecord, cosine_sim, mean_embedding
from .errors import EmptyBatchError

REPORT_COLUMNS = (
    "round", "strategy", "balance", "txt_aln", "img_aln", "ovf",
    "delta", "selected_count", "stopped", "stop_reason",
)


def txt_aln(samples: Sequence[GeneratedSample],
            prompt_embeddings: Mapping[int, Embedding]) -> float:
    """Mean similarity between each sample and the prompt that produced it."""
    if len(samples) == 0:
        raise EmptyBatchError("txt_aln needs at least one sample")
    total = 0.0
    for s in samples:
        total += cosine_sim(s.embedding, prompt_embeddings[s.anchor_id])
    return total / len(samples)


def img_aln(samples: Sequence[GeneratedSample],
            reference_embeddings: Sequence[Embedding]) -> float:
    """Mean similarity between samples and the normalized reference centroid.

    With a single reference this reduces to plain sample-to-reference
    similarity.
    """
    if len(samples) == 0:
        raise EmptyBatchError("img_aln needs at least one sample")
    if len(reference_embeddings) == 0:
        raise EmptyBatchError("img_aln needs at least one reference")
    centroid = mean_embedding(reference_embeddings)
    return sum(cosine_sim(s.embedding, centroid) for s in samples) / len(samples)


def ovf(samples: Sequence[GeneratedSample]) -> float:
    """Proportion of samples flagged overfit by the oracle."""
    if len(samples) == 0:
        raise EmptyBatchError("ovf needs at least one sample")
    return sum(1 for s in samples if s.overfit) / len(samples)


def compute_triple(samples: Sequence[GeneratedSample],
                   prompt_embeddings: Mapping[int, Embedding],
                   reference_embeddings: Sequence[Embedding],
                   samples_per_prompt: int) -> MetricsTriple:
    """All three metrics over one evaluation pool."""
    return MetricsTriple(
        txt_aln=txt_aln(samples, prompt_embeddings),
        img_aln=img_aln(samples, reference_embeddings),
        ovf=ovf(samples),
        eval_prompt_count=len({s.anchor_id for s in samples}),
        samples_per_prompt=samples_per_prompt,
    )


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(rounds: Sequence[RoundRecord], strategy: str, balance: bool,
                out_dir: str | Path) -> tuple[Path, Path]:
    """Write report.csv and its JSON mirror into out_dir.

    The CSV header and cell formatting are byte-stable so identical runs
    produce identical files.
    """
    if len(rounds) == 0:
        raise EmptyBatchError("emit_report needs at least one round")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    json_path = out_dir / "report.json"

    lines = [",".join(REPORT_COLUMNS)]
    for r in rounds:
        m = r.metrics
        lines.append(",".join(_csv_cell(v) for v in (
            r.round, strategy, balance,
            m.txt_aln if m else None,
            m.img_aln if m else None,
            m.ovf if m else None,
            r.openness, len(r.selected), r.stopped, r.stop_reason,
        )))
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    payload = []
    for r in rounds:
        payload.append({
            "round": r.round,
            "strategy": strategy,
            "balance": balance,
            "metrics": None if r.metrics is None else {
                "txt_aln": r.metrics.txt_aln,
                "img_aln": r.metrics.img_aln,
                "ovf": r.metrics.ovf,
                "eval_prompt_count": r.metrics.eval_prompt_count,
                "samples_per_prompt": r.metrics.samples_per_prompt,
            },
            "delta": r.openness,
            "selected": [{"anchor_id": a, "sample_id": s} for a, s in r.selected],
            "stopped": r.stopped,
            "stop_reason": r.stop_reason,
            "stats": [
                {"anchor_id": s.anchor_id, "beta": s.beta, "entropy": s.entropy,
                 "best_sample_id": s.best_sample_id}
                for s in r.stats
            ],
        })
    json_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return csv_path, json_path
