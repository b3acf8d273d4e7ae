"""Exploitation-exploration balancing: the round openness score, admission
weighting for fresh synthetic references, and the adaptive stopping rule."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Sequence

from .core import DirectionStats, Origin, ReferenceItem
from .errors import DegenerateWeightError, DomainError, EmptyBatchError, ValidationError


@dataclass(frozen=True)
class BalanceConfig:
    """Knobs of the balancing scheme."""

    lam: float = 0.005
    k: int = 3
    max_rounds: int = 4
    balance_enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.lam <= 1.0:
            raise DomainError("lambda must be in (0, 1]")
        if self.k < 1:
            raise DomainError("k must be >= 1")
        if self.max_rounds < 1:
            raise DomainError("max_rounds must be >= 1")


class StopReason(str, Enum):
    CONVERGED = "converged"
    ROUND_CAP = "round_cap"


def openness(stats: Sequence[DirectionStats], lam: float) -> float:
    """Scaled mean direction entropy of a round.

    High when many directions are still uncertain; used as the loss weight
    of the references admitted this round.
    """
    if len(stats) == 0:
        raise EmptyBatchError("openness needs at least one direction")
    if lam <= 0.0:
        raise DomainError("lambda must be positive")
    return lam * (sum(s.entropy for s in stats) / len(stats))


def weight_new_references(
    drafts: Sequence[ReferenceItem],
    delta: float,
    balance_enabled: bool,
    round_added: int | None = None,
) -> list[ReferenceItem]:
    """Stamp admission weights onto this round's synthetic drafts.

    Balanced runs weight each draft by the round's openness score; the
    unbalanced baselines keep weight 1.0. Weights are frozen at admission
    and never re-scaled in later rounds.
    """
    for d in drafts:
        if d.origin is not Origin.SYNTHETIC:
            raise ValidationError("only synthetic references can be admitted")
    if balance_enabled and delta <= 0.0 and drafts:
        raise DegenerateWeightError(
            "openness is zero with pending drafts; nothing left worth exploring"
        )
    out = []
    for d in drafts:
        w = delta if balance_enabled else 1.0
        out.append(replace(d, weight=w,
                           round_added=round_added if round_added is not None else d.round_added))
    return out


def should_stop(
    stats: Sequence[DirectionStats],
    k: int,
    round: int,
    max_rounds: int,
) -> tuple[bool, Optional[StopReason]]:
    """Adaptive stop check, evaluated after the training-set update.

    Stops when fewer than k directions retain positive entropy (converged)
    or when the round cap is hit; convergence wins when both fire.
    """
    if len(stats) == 0:
        raise EmptyBatchError("should_stop needs at least one direction")
    explorable = sum(1 for s in stats if s.entropy > 0.0)
    if explorable < k:
        return True, StopReason.CONVERGED
    if round >= max_rounds:
        return True, StopReason.ROUND_CAP
    return False, None
