"""Pluggable generation/embedding/fine-tuning providers.

Two implementations of the same four-verb capability:

* SimulatedBackend, a deterministic stand-in generative model so the whole
  loop is verifiable at desk scale without a GPU. It keeps one scalar
  ``g_i`` per anchor, the probability that a generation along that
  direction comes out aligned rather than collapsed onto the distractor
  semantics. Fine-tuning moves the g vector; everything else is pure.

* RemoteBackend, an HTTP client for a real diffusion + encoder service
  speaking the minimal JSON protocol (embed / generate / finetune / jobs),
  with idempotent retries.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, Sequence
from urllib.parse import urlparse

import httpx
import numpy as np

from .core import Embedding, Origin, ReferenceItem, cosine_sim, normalize
from .errors import BackendError, ConfigError, ProtocolError, ValidationError

_MASK64 = (1 << 64) - 1

# Stream tags so the independent pseudo-random streams of one master seed
# never collide.
_TAG_VECTORS = 0x56454354
_TAG_ALIGNMENT = 0x414C4947
_TAG_TEXT = 0x54455854
_TAG_SELECTION = 0x53454C43


def _mix64(x: int) -> int:
    x &= _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(*parts: int) -> int:
    """Mix integer parts into one 64-bit seed.

    Stateless, so sample (round, anchor, j) receives the same seed no
    matter in which order generation requests execute.
    """
    acc = 0x9E3779B97F4A7C15
    for p in parts:
        acc = _mix64(acc ^ _mix64((int(p) + 0x9E3779B97F4A7C15) & _MASK64))
    return acc


def selection_seed(master_seed: int, round: int) -> int:
    """Seed for the random baseline's draw in a given round."""
    return derive_seed(master_seed, _TAG_SELECTION, round)


def text_fingerprint(text: str) -> int:
    """Stable 64-bit fingerprint of a text, for hashed fallback embeddings."""
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class RawSample:
    """One backend generation before the engine scores it."""

    image_ref: str
    embedding: Optional[Embedding]
    aligned: Optional[bool] = None  # simulator ground truth, None for remote


class Backend(Protocol):
    """The four verbs the engine needs from any provider."""

    def embed_text(self, text: str) -> Embedding: ...

    def embed_image(self, image_ref: str) -> Embedding: ...

    def generate(self, prompt: str, seed: int, count: int) -> list[RawSample]: ...

    def finetune(self, references: Sequence[ReferenceItem]) -> str: ...

    def fetch_image(self, image_ref: str) -> Optional[bytes]: ...


@dataclass(frozen=True)
class BackendSpec:
    """Backend selection plus simulator knobs, as read from run config."""

    kind: str = "simulated"
    endpoint: Optional[str] = None
    sigma: float = 0.05
    base_gain: float = 0.15
    weight_scale: float = 10.0
    g_init_low: float = 0.1
    g_init_high: float = 0.6
    positive_gain_cap: float = 0.5
    timeout: float = 10.0
    poll_interval: float = 0.2

    def __post_init__(self):
        if self.kind not in ("simulated", "remote"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ConfigError("remote backend requires an endpoint")
        if not 0.0 <= self.g_init_low <= self.g_init_high <= 1.0:
            raise ConfigError("alignment init range must satisfy 0 <= low <= high <= 1")
        if self.sigma < 0.0:
            raise ConfigError("sigma must be non-negative")


def _unit_gaussian(rng: np.random.Generator, dim: int) -> Embedding:
    return normalize(rng.standard_normal(dim))


class SimulatedBackend:
    """Deterministic generative model over unit vectors.

    Construction draws the subject vector, the distractor vector, and one
    near-orthogonal vector per anchor from the master seed, plus the
    initial per-anchor alignment levels g_i. Generation along anchor i
    emits an anchor-aligned sample with probability g_i and a
    distractor-collapsed one otherwise, each jittered by Gaussian noise.

    Fine-tuning replays the weighted training set: a synthetic reference
    that is faithful to its source anchor raises the alignment of that
    anchor and of positively correlated ones, scaled by (base_gain +
    weight_scale * weight); a reference that collapsed onto the distractor
    drags alignment down by the mirrored amount. Original references leave
    the model untouched. The whole transcript is a pure function of
    (seed, config, call sequence).
    """

    def __init__(
        self,
        *,
        dim: int,
        master_seed: int,
        anchor_prompts: Sequence[str],
        anchor_scoring_texts: Sequence[str],
        pseudo_token: str,
        non_soi_text: str,
        reference_images: Sequence[str],
        spec: BackendSpec | None = None,
    ):
        if len(anchor_prompts) != len(anchor_scoring_texts):
            raise ConfigError("anchor prompt/scoring text lists must align")
        self.spec = spec or BackendSpec()
        self.dim = dim
        self.master_seed = master_seed

        rng = np.random.Generator(np.random.PCG64(derive_seed(master_seed, _TAG_VECTORS)))
        self.e_soi = _unit_gaussian(rng, dim)
        self.e_non_soi = _unit_gaussian(rng, dim)
        self.anchors = [_unit_gaussian(rng, dim) for _ in anchor_prompts]

        g_rng = np.random.Generator(np.random.PCG64(derive_seed(master_seed, _TAG_ALIGNMENT)))
        self.g = g_rng.uniform(self.spec.g_init_low, self.spec.g_init_high,
                               len(anchor_prompts)).astype(np.float64)

        self.reference_embedding = normalize(
            0.6 * self.e_soi.values.astype(np.float64)
            + 0.4 * self.e_non_soi.values.astype(np.float64)
        )

        self._text_table: dict[str, Embedding] = {
            pseudo_token: self.e_soi,
            non_soi_text: self.e_non_soi,
        }
        self._prompt_to_anchor: dict[str, int] = {}
        for i, (prompt, scoring) in enumerate(zip(anchor_prompts, anchor_scoring_texts)):
            self._text_table[prompt] = self.anchors[i]
            self._text_table[scoring] = self.anchors[i]
            self._prompt_to_anchor[prompt] = i
        self._image_table: dict[str, Embedding] = {
            ref: self.reference_embedding for ref in reference_images
        }

    # -- embedding -------------------------------------------------------

    def embed_text(self, text: str) -> Embedding:
        if not text:
            raise ProtocolError("cannot embed empty text")
        known = self._text_table.get(text)
        if known is not None:
            return known
        # Unknown vocabulary maps to a stable pseudo-random direction so
        # arbitrary captions stay embeddable.
        rng = np.random.Generator(np.random.PCG64(
            derive_seed(self.master_seed, _TAG_TEXT, text_fingerprint(text))))
        return _unit_gaussian(rng, self.dim)

    def embed_image(self, image_ref: str) -> Embedding:
        emb = self._image_table.get(image_ref)
        if emb is None:
            raise ValidationError(f"unknown image ref {image_ref!r}")
        return emb

    # -- generation ------------------------------------------------------

    def generate(self, prompt: str, seed: int, count: int) -> list[RawSample]:
        anchor_id = self._prompt_to_anchor.get(prompt)
        if anchor_id is None:
            raise ValidationError(f"prompt {prompt!r} is not an anchor prompt")
        if count < 1:
            raise ValidationError("count must be >= 1")
        out: list[RawSample] = []
        sigma = self.spec.sigma
        base = self.anchors[anchor_id].values.astype(np.float64)
        distractor = self.e_non_soi.values.astype(np.float64)
        for j in range(count):
            rng = np.random.Generator(np.random.PCG64(derive_seed(seed, j)))
            aligned = bool(rng.uniform() < self.g[anchor_id])
            center = base if aligned else distractor
            emb = normalize(center + sigma * rng.standard_normal(self.dim))
            ref = f"sim://{anchor_id}/{seed}/{j}"
            self._image_table[ref] = emb
            out.append(RawSample(image_ref=ref, embedding=emb, aligned=aligned))
        return out

    # -- fine-tuning -----------------------------------------------------

    def finetune(self, references: Sequence[ReferenceItem]) -> str:
        if len(references) == 0:
            raise ValidationError("finetune needs at least one reference")
        for ref in references:
            if ref.origin is Origin.ORIGINAL:
                continue
            anchor_id = self._prompt_to_anchor.get(ref.caption)
            if anchor_id is None:
                raise ValidationError(
                    f"synthetic reference caption {ref.caption!r} matches no anchor")
            self._apply_reference(anchor_id, ref)
        return "ok"

    def _apply_reference(self, source: int, ref: ReferenceItem) -> None:
        # Positive learning saturates: one reference, however heavily
        # weighted, cannot push alignment faster than a bounded rate.
        # Distractor reinforcement has no such bound, the distractor being
        # the pretrained attractor, which is what makes over-weighted bad
        # admissions destructive.
        gain = self.spec.base_gain + self.spec.weight_scale * ref.weight
        faithful = cosine_sim(ref.embedding, self.anchors[source]) > cosine_sim(
            ref.embedding, self.e_non_soi)
        src_vec = self.anchors[source]
        pos_gain = min(gain, self.spec.positive_gain_cap)
        for j, anchor in enumerate(self.anchors):
            coupling = 1.0 if j == source else max(0.0, cosine_sim(src_vec, anchor))
            if coupling == 0.0:
                continue
            if faithful:
                self.g[j] = min(1.0, self.g[j] + pos_gain * coupling * (1.0 - self.g[j]))
            else:
                self.g[j] = max(0.0, self.g[j] - gain * coupling * self.g[j])

    def fetch_image(self, image_ref: str) -> Optional[bytes]:
        return None

    @property
    def alignment(self) -> np.ndarray:
        """Copy of the per-anchor alignment levels (diagnostics only)."""
        return self.g.copy()


_TRANSIENT_STATUSES = {429, 500, 502, 503, 504}


class RemoteBackend:
    """Client for the four-verb JSON protocol.

    POSTs carry an Idempotency-Key derived from the request body, and
    transient failures are retried with exponential backoff (3 attempts),
    so a retried round cannot double-apply work server-side.
    """

    def __init__(self, endpoint: str, dim: int, *, timeout: float = 10.0,
                 retries: int = 3, backoff: float = 0.25, poll_interval: float = 0.2,
                 poll_timeout: float = 120.0, client: httpx.Client | None = None):
        self.endpoint = endpoint.rstrip("/")
        self.dim = dim
        self.retries = retries
        self.backoff = backoff
        self.poll_interval = poll_interval
        self.poll_timeout = poll_timeout
        self._client = client or httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    # -- protocol plumbing -----------------------------------------------

    def _post(self, path: str, payload: dict) -> dict:
        body = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        headers = {
            "Content-Type": "application/json",
            "Idempotency-Key": hashlib.sha256(body.encode("utf-8")).hexdigest(),
        }
        url = self.endpoint + path
        last_exc: Exception | None = None
        for attempt in range(1, self.retries + 1):
            try:
                resp = self._client.post(url, content=body, headers=headers)
            except httpx.HTTPError as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2 ** (attempt - 1)))
                continue
            if resp.status_code // 100 == 2:
                try:
                    return resp.json()
                except (json.JSONDecodeError, ValueError) as exc:
                    raise ProtocolError(f"{path}: response is not JSON ({exc})")
            if resp.status_code == 422:
                raise ProtocolError(f"{path}: request rejected (422): {resp.text[:200]}")
            if resp.status_code in _TRANSIENT_STATUSES and attempt < self.retries:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
                continue
            raise BackendError(
                f"{path} failed with status {resp.status_code}",
                status=resp.status_code, attempts=attempt, body=resp.text[:200],
            )
        raise BackendError(f"{path} unreachable: {last_exc}", attempts=self.retries)

    def _get(self, path: str) -> dict:
        url = self.endpoint + path
        last_exc: Exception | None = None
        for attempt in range(1, self.retries + 1):
            try:
                resp = self._client.get(url)
            except httpx.HTTPError as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * (2 ** (attempt - 1)))
                continue
            if resp.status_code // 100 == 2:
                try:
                    return resp.json()
                except (json.JSONDecodeError, ValueError) as exc:
                    raise ProtocolError(f"{path}: response is not JSON ({exc})")
            if resp.status_code in _TRANSIENT_STATUSES and attempt < self.retries:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
                continue
            raise BackendError(
                f"{path} failed with status {resp.status_code}",
                status=resp.status_code, attempts=attempt, body=resp.text[:200],
            )
        raise BackendError(f"{path} unreachable: {last_exc}", attempts=self.retries)

    def _parse_embedding(self, data: dict, context: str) -> Embedding:
        values = data.get("embedding")
        if not isinstance(values, list) or not values:
            raise ProtocolError(f"{context}: missing embedding array")
        if len(values) != self.dim:
            raise ProtocolError(
                f"{context}: embedding has {len(values)} entries, expected {self.dim}")
        return normalize(np.asarray(values, dtype=np.float64))

    # -- verbs -------------------------------------------------------------

    def embed_text(self, text: str) -> Embedding:
        data = self._post("/v1/embed", {"kind": "text", "text": text})
        return self._parse_embedding(data, "embed text")

    def embed_image(self, image_ref: str) -> Embedding:
        data = self._post("/v1/embed", {"kind": "image", "image_uri": image_ref})
        return self._parse_embedding(data, "embed image")

    def generate(self, prompt: str, seed: int, count: int) -> list[RawSample]:
        data = self._post("/v1/generate", {"prompt": prompt, "seed": seed, "count": count})
        samples = data.get("samples")
        if not isinstance(samples, list) or len(samples) != count:
            got = len(samples) if isinstance(samples, list) else "no"
            raise ProtocolError(f"generate: expected {count} samples, got {got}")
        out = []
        for entry in samples:
            if not isinstance(entry, dict) or "image_uri" not in entry or "sample_id" not in entry:
                raise ProtocolError("generate: sample entries need sample_id and image_uri")
            out.append(RawSample(image_ref=str(entry["image_uri"]), embedding=None))
        return out

    def finetune(self, references: Sequence[ReferenceItem]) -> str:
        payload = {
            "references": [
                {"image_uri": r.image_ref, "caption": r.caption, "weight": r.weight}
                for r in references
            ]
        }
        data = self._post("/v1/finetune", payload)
        job_id = data.get("job_id")
        if not isinstance(job_id, str) or not job_id:
            raise ProtocolError("finetune: missing job_id")
        deadline = time.monotonic() + self.poll_timeout
        while True:
            status = self._get(f"/v1/jobs/{job_id}")
            state = status.get("status")
            if state == "done":
                return job_id
            if state == "failed":
                raise BackendError(
                    f"finetune job {job_id} failed: {status.get('detail', '')}",
                    body=str(status.get("detail", ""))[:200])
            if state != "pending":
                raise ProtocolError(f"jobs: unknown status {state!r}")
            if time.monotonic() > deadline:
                raise BackendError(f"finetune job {job_id} timed out", attempts=1)
            time.sleep(self.poll_interval)

    def fetch_image(self, image_ref: str) -> Optional[bytes]:
        parsed = urlparse(image_ref)
        if parsed.scheme in ("http", "https"):
            resp = self._client.get(image_ref)
            if resp.status_code // 100 != 2:
                raise BackendError(
                    f"image fetch failed with status {resp.status_code}",
                    status=resp.status_code)
            return resp.content
        if parsed.scheme == "file":
            return Path(parsed.path).read_bytes()
        p = Path(image_ref)
        if p.exists():
            return p.read_bytes()
        return None
