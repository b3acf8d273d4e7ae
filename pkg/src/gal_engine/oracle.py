"""Overfit oracle: is a generated sample closer to the distractor semantics
than to its own anchor direction?

Consumes embeddings only; turning images into embeddings is the backend's
job, which keeps the decision testable without any model.
"""

from __future__ import annotations

from typing import Sequence

from .core import Embedding, cosine_sim
from .errors import EmptyBatchError


def phi(sample: Embedding, anchor: Embedding, non_soi: Embedding) -> bool:
    """True (overfit) iff sim(sample, anchor) <= sim(sample, non_soi).

    Ties count as overfit: a sample that cannot beat the distractor has
    not disentangled it.
    """
    return cosine_sim(sample, anchor) <= cosine_sim(sample, non_soi)


def score_batch(
    samples: Sequence[Embedding],
    anchor: Embedding,
    non_soi: Embedding,
) -> list[tuple[float, float, bool]]:
    """Score every sample against one anchor, preserving order.

    Returns (sim_to_anchor, sim_to_non_soi, overfit) per sample.
    """
    if len(samples) == 0:
        raise EmptyBatchError("score_batch needs at least one sample")
    out: list[tuple[float, float, bool]] = []
    for s in samples:
        sa = cosine_sim(s, anchor)
        sn = cosine_sim(s, non_soi)
        out.append((sa, sn, sa <= sn))
    return out
