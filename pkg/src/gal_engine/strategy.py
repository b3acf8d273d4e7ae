"""Querying strategies: entropy-driven uncertainty sampling plus the
random and human baselines.

A strategy decides which anchor directions to query this round and which
generated sample represents each of them. Zero-entropy directions are
uninformative (the model is fully certain there) and are never queried;
that rule also keeps the stopping criterion and the selection consistent.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .core import DirectionStats, GeneratedSample
from .errors import DomainError, EmptyBatchError, ValidationError

LN2 = math.log(2.0)


class StrategyKind(str, Enum):
    RANDOM = "random"
    UNCERTAINTY = "uncertainty"
    HUMAN = "human"


@dataclass(frozen=True)
class SelectionDecision:
    """The (anchor, sample) pairs a strategy admits this round, with the
    per-anchor (beta, entropy) snapshot that justified them."""

    selected: tuple[tuple[int, str], ...]
    rationale: Mapping[int, tuple[float, float]]

    def __post_init__(self):
        ids = [aid for aid, _ in self.selected]
        if len(ids) != len(set(ids)):
            raise ValidationError("selected anchor ids must be distinct")


def compute_beta(flags: Sequence[bool], m: int | None = None) -> float:
    """Overfit fraction among m verdicts."""
    if m is None:
        m = len(flags)
    if m == 0 or len(flags) == 0:
        raise EmptyBatchError("beta needs at least one oracle verdict")
    if m != len(flags):
        raise DomainError(f"expected {m} flags, got {len(flags)}")
    return sum(1 for f in flags if f) / m


def entropy(beta: float) -> float:
    """Binary entropy of the overfit fraction, in nats.

    Peaks at ln 2 when beta is 0.5; zero at both endpoints (0*log 0 := 0).
    """
    if not 0.0 <= beta <= 1.0:
        raise DomainError(f"beta {beta!r} outside [0, 1]")
    if beta == 0.0 or beta == 1.0:
        return 0.0
    q = 1.0 - beta
    return -(q * math.log(q) + beta * math.log(beta))


def rank_top_k(stats: Sequence[DirectionStats], k: int) -> list[int]:
    """Anchor ids of the k most uncertain directions.

    Sorted by entropy descending, ties broken by anchor id ascending.
    Only directions with positive entropy are eligible; the result may
    therefore be shorter than k.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    if len(stats) == 0:
        raise EmptyBatchError("rank_top_k needs at least one direction")
    eligible = [s for s in stats if s.entropy > 0.0]
    eligible.sort(key=lambda s: (-s.entropy, s.anchor_id))
    return [s.anchor_id for s in eligible[:k]]


def select_best_sample(samples: Sequence[GeneratedSample]) -> str:
    """The most direction-faithful sample of one anchor's batch.

    Highest sim_to_anchor among non-overfit samples; if every sample is
    overfit, highest sim_to_anchor overall (the operation stays total, but
    the eligibility filter makes this branch unreachable in normal runs).
    Ties go to the earliest sample in batch order.
    """
    if len(samples) == 0:
        raise EmptyBatchError("select_best_sample needs at least one sample")
    anchor_ids = {s.anchor_id for s in samples}
    if len(anchor_ids) != 1:
        raise ValidationError(f"samples span multiple anchors: {sorted(anchor_ids)}")
    pool = [s for s in samples if not s.overfit] or list(samples)
    best = max(pool, key=lambda s: s.sim_to_anchor)
    return best.sample_id


def random_select(
    candidates: Mapping[int, Sequence[str]],
    k: int,
    rng_seed: int,
    rationale: Mapping[int, tuple[float, float]] | None = None,
) -> SelectionDecision:
    """Uniform baseline: k anchors without replacement, one uniform sample each.

    ``candidates`` maps each eligible anchor id to its sample ids. Selecting
    more anchors than exist degrades to selecting all of them. Fully
    deterministic for a given seed.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    rng = random.Random(rng_seed)
    anchor_ids = sorted(candidates)
    take = min(k, len(anchor_ids))
    chosen = sorted(rng.sample(anchor_ids, take))
    pairs = []
    for aid in chosen:
        pool = list(candidates[aid])
        if not pool:
            raise ValidationError(f"anchor {aid} has no candidate samples")
        pairs.append((aid, pool[rng.randrange(len(pool))]))
    return SelectionDecision(selected=tuple(pairs), rationale=dict(rationale or {}))


def human_select(
    candidates: Mapping[int, Sequence[str]],
    decision: Sequence[tuple[int, str]],
    k: int,
    rationale: Mapping[int, tuple[float, float]] | None = None,
) -> SelectionDecision:
    """Wrap an externally supplied decision verbatim, after validating it.

    The decision may be empty (the reviewer skips the round) but may not
    exceed k pairs, repeat an anchor, or name unknown ids.
    """
    if len(decision) > k:
        raise ValidationError(f"decision has {len(decision)} pairs, limit is {k}")
    seen: set[int] = set()
    for aid, sid in decision:
        if aid in seen:
            raise ValidationError(f"anchor {aid} selected twice")
        seen.add(aid)
        if aid not in candidates:
            raise ValidationError(f"unknown or ineligible anchor {aid}")
        if sid not in set(candidates[aid]):
            raise ValidationError(f"sample {sid!r} does not belong to anchor {aid}")
    return SelectionDecision(selected=tuple(decision), rationale=dict(rationale or {}))
