"""Domain types and elementary vector/text operations.

Everything downstream (oracle, strategies, balancing, the engine) works in
terms of these value objects. All of them are immutable and safe to share
between threads. Vector math is done in float64 and stored as float32 so
values survive a round trip through persistence bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateVectorError,
    DimensionError,
    DomainError,
    TemplateError,
    ValidationError,
)

# Literal placeholder substituted by render_prompt. Templates contain it
# exactly once.
SOI_PLACEHOLDER = "{SOI}"

_UNIT_NORM_TOL = 1e-6


class Embedding:
    """A unit-norm float32 vector in the joint text-image space.

    The currency of all scoring. Construction validates finiteness and
    unit norm; use :func:`normalize` to build one from raw values.
    """

    __slots__ = ("_values",)

    def __init__(self, values: np.ndarray | Sequence[float]):
        arr = np.asarray(values, dtype=np.float32)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise DegenerateVectorError("embedding has non-finite entries")
        norm = float(np.linalg.norm(arr.astype(np.float64)))
        if abs(norm - 1.0) > _UNIT_NORM_TOL:
            raise DegenerateVectorError(
                f"embedding norm {norm!r} is not within {_UNIT_NORM_TOL} of 1.0"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def dim(self) -> int:
        return int(self._values.shape[0])

    def tolist(self) -> list[float]:
        return [float(v) for v in self._values]

    def to_bytes(self) -> bytes:
        """Raw little-endian float32 bytes, the on-disk .emb format."""
        return self._values.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Embedding":
        return cls(np.frombuffer(raw, dtype="<f4"))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Embedding):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __hash__(self) -> int:
        return hash(self._values.tobytes())

    def __repr__(self) -> str:
        return f"Embedding(dim={self.dim})"


def normalize(v: np.ndarray | Sequence[float]) -> Embedding:
    """Scale a raw vector to unit L2 norm.

    Raises DegenerateVectorError for zero or non-finite input.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError("expected a non-empty 1-D vector")
    if not np.all(np.isfinite(arr)):
        raise DegenerateVectorError("vector has non-finite entries")
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise DegenerateVectorError("zero vector cannot be normalized")
    return Embedding((arr / norm).astype(np.float32))


def cosine_sim(a: Embedding, b: Embedding) -> float:
    """Cosine similarity of two unit vectors, i.e. their dot product.

    Accumulation order is fixed by the element order of the operands, so
    cosine_sim(a, b) == cosine_sim(b, a) exactly.
    """
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return float(np.dot(a.values.astype(np.float64), b.values.astype(np.float64)))


def render_prompt(template: str, pseudo_token: str) -> str:
    """Substitute the subject placeholder into a prompt template.

    The template must contain ``{SOI}`` exactly once and render to
    non-empty text.
    """
    count = template.count(SOI_PLACEHOLDER)
    if count == 0:
        raise TemplateError(f"template {template!r} has no {SOI_PLACEHOLDER} placeholder")
    if count > 1:
        raise TemplateError(f"template {template!r} repeats the placeholder")
    rendered = template.replace(SOI_PLACEHOLDER, pseudo_token)
    if not rendered.strip():
        raise TemplateError(f"template {template!r} renders to empty text")
    return rendered


def strip_placeholder(template: str) -> str:
    """Render a template with the placeholder removed, whitespace collapsed.

    Used to embed anchor text for scoring when the pseudo token would be
    meaningless to the encoder. Returns empty string for a bare placeholder.
    """
    if template.count(SOI_PLACEHOLDER) != 1:
        raise TemplateError(f"template {template!r} must contain the placeholder once")
    return " ".join(template.replace(SOI_PLACEHOLDER, " ").split())


@dataclass(frozen=True)
class SoIDescriptor:
    """The subject of interest: pseudo token, its embedding, and the
    distractor (non-SoI) semantics generated images must shed."""

    pseudo_token: str
    soi_embedding: Embedding
    non_soi_text: str
    non_soi_embedding: Embedding
    reference_caption_template: str

    def __post_init__(self):
        occurrences = self.reference_caption_template.count(self.pseudo_token)
        if occurrences != 1:
            raise ValidationError(
                f"pseudo token {self.pseudo_token!r} must occur exactly once in the "
                f"reference caption (found {occurrences})"
            )


@dataclass(frozen=True)
class AnchorDirection:
    """One candidate querying direction: a prompt template plus the
    embedding of its rendered text."""

    id: int
    template: str
    rendered: str
    embedding: Embedding

    def __post_init__(self):
        if self.id < 0:
            raise ValidationError("anchor ids must be non-negative")
        if not self.rendered.strip():
            raise TemplateError(f"anchor template {self.template!r} renders to empty text")


class Origin(str, Enum):
    ORIGINAL = "original"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class GeneratedSample:
    """One generated image for an anchor in a round, with its oracle scores."""

    sample_id: str
    anchor_id: int
    round: int
    seed: int
    image_ref: str
    embedding: Embedding
    sim_to_anchor: float
    sim_to_non_soi: float
    overfit: bool

    def __post_init__(self):
        if self.round < 1:
            raise ValidationError("sample round must be >= 1")
        if self.overfit != (self.sim_to_anchor <= self.sim_to_non_soi):
            raise ValidationError(
                f"overfit flag inconsistent with similarities for {self.sample_id}"
            )


@dataclass(frozen=True)
class ReferenceItem:
    """A weighted (image, caption) training pair.

    Originals carry weight 1.0 and round 0; synthetic admissions carry the
    openness score of the round that admitted them (or 1.0 when balancing
    is disabled).
    """

    image_ref: str
    embedding: Embedding
    caption: str
    weight: float
    origin: Origin
    round_added: int

    def __post_init__(self):
        if self.weight <= 0.0:
            raise ValidationError("reference weight must be positive")
        if self.origin is Origin.ORIGINAL:
            if self.weight != 1.0:
                raise ValidationError("original references carry weight exactly 1.0")
            if self.round_added != 0:
                raise ValidationError("original references are added at round 0")
        elif self.round_added < 1:
            raise ValidationError("synthetic references are added at round >= 1")


@dataclass(frozen=True)
class DirectionStats:
    """Per-anchor uncertainty snapshot: overfit fraction and its entropy."""

    anchor_id: int
    beta: float
    entropy: float
    best_sample_id: Optional[str] = None

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise DomainError(f"beta {self.beta!r} outside [0, 1]")
        if self.entropy < 0.0 or self.entropy > math.log(2.0) + 1e-9:
            raise DomainError(f"entropy {self.entropy!r} outside [0, ln 2]")
        degenerate = self.beta in (0.0, 1.0)
        if degenerate != (self.entropy == 0.0):
            raise DomainError("entropy must be zero exactly when beta is 0 or 1")


@dataclass(frozen=True)
class MetricsTriple:
    """Round-level evaluation: text alignment, image alignment, overfit share."""

    txt_aln: float
    img_aln: float
    ovf: float
    eval_prompt_count: int
    samples_per_prompt: int

    def __post_init__(self):
        for name in ("txt_aln", "img_aln", "ovf"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if not 0.0 <= self.ovf <= 1.0:
            raise DomainError(f"ovf {self.ovf!r} outside [0, 1]")


@dataclass(frozen=True)
class RoundRecord:
    """Per-round ledger: stats, selections, openness, and the stop decision."""

    round: int
    stats: tuple[DirectionStats, ...]
    selected: tuple[tuple[int, str], ...]
    openness: float
    stopped: bool
    stop_reason: Optional[str] = None
    metrics: Optional[MetricsTriple] = None

    def __post_init__(self):
        eligible = {s.anchor_id for s in self.stats if s.entropy > 0.0}
        chosen = [aid for aid, _ in self.selected]
        if len(chosen) != len(set(chosen)):
            raise ValidationError("selected anchors must be distinct")
        if not set(chosen) <= eligible:
            raise ValidationError("selected anchors must all have positive entropy")
        if self.openness < 0.0:
            raise DomainError("openness must be non-negative")


def mean_embedding(embeddings: Iterable[Embedding]) -> Embedding:
    """Normalized centroid of a collection of unit vectors."""
    vecs = [e.values.astype(np.float64) for e in embeddings]
    if not vecs:
        raise DimensionError("cannot average zero embeddings")
    return normalize(np.mean(np.stack(vecs), axis=0))
