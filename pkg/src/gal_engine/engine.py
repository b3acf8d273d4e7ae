"""The round-loop state machine.

Owns run state, drives rounds (fine-tune, generate, score, select, weight,
stop-check), persists every step, and exposes the candidate pool the
human-review endpoint serves. One engine instance owns its run directory,
enforced by a lock file; all state-changing methods are serialized.

Crash consistency is persist-then-apply: all backend work for a round runs
before memory or disk changes, and the round record is written only after
every step succeeded. A backend failure mid-round therefore leaves the
last committed state intact on disk and in memory.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .backends import (
    Backend,
    BackendSpec,
    RemoteBackend,
    SimulatedBackend,
    derive_seed,
    selection_seed,
)
from .balance import StopReason, openness, should_stop, weight_new_references
from .core import (
    AnchorDirection,
    DirectionStats,
    Embedding,
    GeneratedSample,
    MetricsTriple,
    Origin,
    ReferenceItem,
    RoundRecord,
    SoIDescriptor,
    render_prompt,
    strip_placeholder,
)
from .errors import (
    ConfigError,
    DegenerateWeightError,
    LockError,
    PersistenceError,
    StateError,
)
from .metrics import compute_triple, emit_report
from .oracle import score_batch
from .strategy import (
    SelectionDecision,
    StrategyKind,
    compute_beta,
    entropy,
    human_select,
    random_select,
    rank_top_k,
    select_best_sample,
)

_EVAL_ANCHOR_BASE = 10_000  # pseudo anchor ids for evaluation-only prompts


@dataclass(frozen=True)
class SoISpec:
    """Config-side description of the subject of interest."""

    pseudo_token: str
    non_soi_text: str
    reference_caption_template: str


@dataclass(frozen=True)
class RunConfig:
    soi: SoISpec
    anchors: tuple[str, ...]
    references: tuple[str, ...]
    m: int = 10
    k: int = 3
    lam: float = 0.005
    max_rounds: int = 4
    strategy: StrategyKind = StrategyKind.UNCERTAINTY
    balance_enabled: bool = True
    backend: BackendSpec = field(default_factory=BackendSpec)
    master_seed: int = 0
    embedding_dim: int = 64
    run_dir: str = "run"
    strip_soi_for_scoring: bool = True
    eval_prompts: tuple[str, ...] = ()

    def validate(self) -> None:
        if not self.anchors:
            raise ConfigError("anchor list is empty")
        if len(set(self.anchors)) != len(self.anchors):
            raise ConfigError("anchor templates must be unique")
        if not self.references:
            raise ConfigError("at least one reference image is required")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if not 1 <= self.k <= len(self.anchors):
            raise ConfigError("k must satisfy 1 <= k <= |anchors|")
        if not 0.0 < self.lam <= 1.0:
            raise ConfigError("lambda must be in (0, 1]")
        if self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")
        if self.embedding_dim < 2:
            raise ConfigError("embedding_dim must be >= 2")
        if self.master_seed < 0 or self.master_seed > (1 << 64) - 1:
            raise ConfigError("master_seed must fit in 64 bits")
        if not self.soi.pseudo_token:
            raise ConfigError("pseudo token must be non-empty")
        if self.eval_prompts and self.backend.kind == "simulated":
            raise ConfigError(
                "evaluation prompts need a remote backend; the simulator's "
                "vocabulary is the anchor set")

    def to_dict(self) -> dict:
        return {
            "soi": dataclasses.asdict(self.soi),
            "anchors": list(self.anchors),
            "references": list(self.references),
            "m": self.m,
            "k": self.k,
            "lambda": self.lam,
            "max_rounds": self.max_rounds,
            "strategy": self.strategy.value,
            "balance_enabled": self.balance_enabled,
            "backend": dataclasses.asdict(self.backend),
            "master_seed": self.master_seed,
            "embedding_dim": self.embedding_dim,
            "strip_soi_for_scoring": self.strip_soi_for_scoring,
            "eval_prompts": list(self.eval_prompts),
            "run_dir": str(self.run_dir),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            return cls(
                soi=SoISpec(**d["soi"]),
                anchors=tuple(d["anchors"]),
                references=tuple(d["references"]),
                m=int(d.get("m", 10)),
                k=int(d.get("k", 3)),
                lam=float(d.get("lambda", 0.005)),
                max_rounds=int(d.get("max_rounds", 4)),
                strategy=StrategyKind(d.get("strategy", "uncertainty")),
                balance_enabled=bool(d.get("balance_enabled", True)),
                backend=BackendSpec(**d.get("backend", {})),
                master_seed=int(d.get("master_seed", 0)),
                embedding_dim=int(d.get("embedding_dim", 64)),
                run_dir=str(d.get("run_dir", "run")),
                strip_soi_for_scoring=bool(d.get("strip_soi_for_scoring", True)),
                eval_prompts=tuple(d.get("eval_prompts", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid run config: {exc}")

    def canonical_json(self) -> str:
        """Canonical form for hashing. Excludes run_dir: a run's identity
        does not depend on where it lives on disk."""
        d = self.to_dict()
        d.pop("run_dir")
        return json.dumps(d, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


class RunStatus(str, Enum):
    RUNNING = "running"
    AWAITING_HUMAN = "awaiting_human"
    STOPPED = "stopped"


class ExportKind(str, Enum):
    EMBEDDINGS = "embeddings"
    ROUNDS = "rounds"
    TRAINING_SET = "training_set"


@dataclass
class PendingRound:
    """Snapshot of a round paused for human review (scored, not yet
    selected or admitted)."""

    round: int
    stats: list[DirectionStats]
    samples: dict[int, list[GeneratedSample]]


def _atomic_write(path: Path, data: str | bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        tmp.write_text(data, encoding="utf-8")
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def _dump_json(path: Path, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=2, ensure_ascii=False) + "\n")


def _load_json(path: Path):
    if not path.exists():
        raise PersistenceError("missing file", str(path))
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise PersistenceError(f"corrupt JSON ({exc})", str(path))


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


# Run dirs owned by engine instances of this process; the pid in the lock
# file cannot distinguish those.
_OWNED_DIRS: set[str] = set()
_OWNED_GUARD = threading.Lock()


class Engine:
    """One live run. Construct for a fresh run directory, or :meth:`resume`
    an existing one."""

    def __init__(self, config: RunConfig, backend: Backend | None = None,
                 _resuming: bool = False):
        config.validate()
        self.config = config
        self.run_dir = Path(config.run_dir)
        if not _resuming and (self.run_dir / "state.json").exists():
            raise StateError(
                f"{self.run_dir} already holds a run; use Engine.resume")
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "rounds").mkdir(exist_ok=True)
        (self.run_dir / "samples").mkdir(exist_ok=True)
        self._mutex = threading.RLock()
        self._acquire_lock()
        try:
            self.backend: Backend = backend or self._build_backend()
            self.soi = self._build_soi()
            self.anchor_dirs = self._build_anchors()
            self.training_set: list[ReferenceItem] = []
            self.rounds: list[RoundRecord] = []
            self.status = RunStatus.RUNNING
            self.stop_reason: Optional[StopReason] = None
            self.rounds_started = 0
            self.pending: Optional[PendingRound] = None
            if not _resuming:
                self._init_references()
                self._persist_config()
                self._persist_references()
                self._persist_state()
        except Exception:
            self._release_lock()
            raise

    # -- construction ----------------------------------------------------

    def _build_backend(self) -> Backend:
        spec = self.config.backend
        if spec.kind == "remote":
            return RemoteBackend(spec.endpoint, self.config.embedding_dim,
                                 timeout=spec.timeout, poll_interval=spec.poll_interval)
        rendered = [render_prompt(t, self.config.soi.pseudo_token)
                    for t in self.config.anchors]
        return SimulatedBackend(
            dim=self.config.embedding_dim,
            master_seed=self.config.master_seed,
            anchor_prompts=rendered,
            anchor_scoring_texts=[self._scoring_text(t) for t in self.config.anchors],
            pseudo_token=self.config.soi.pseudo_token,
            non_soi_text=self.config.soi.non_soi_text,
            reference_images=self.config.references,
            spec=spec,
        )

    def _scoring_text(self, template: str) -> str:
        """Anchor text used for similarity scoring: the rendered prompt with
        the pseudo token stripped (it means nothing to a generic encoder),
        unless stripping is disabled or leaves nothing."""
        if self.config.strip_soi_for_scoring:
            stripped = strip_placeholder(template)
            if stripped:
                return stripped
        return render_prompt(template, self.config.soi.pseudo_token)

    def _build_soi(self) -> SoIDescriptor:
        c = self.config.soi
        caption = render_prompt(c.reference_caption_template, c.pseudo_token)
        return SoIDescriptor(
            pseudo_token=c.pseudo_token,
            soi_embedding=self.backend.embed_text(c.pseudo_token),
            non_soi_text=c.non_soi_text,
            non_soi_embedding=self.backend.embed_text(c.non_soi_text),
            reference_caption_template=caption,
        )

    def _build_anchors(self) -> list[AnchorDirection]:
        out = []
        for i, template in enumerate(self.config.anchors):
            out.append(AnchorDirection(
                id=i,
                template=template,
                rendered=render_prompt(template, self.config.soi.pseudo_token),
                embedding=self.backend.embed_text(self._scoring_text(template)),
            ))
        return out

    def _init_references(self) -> None:
        caption = self.soi.reference_caption_template
        for ref in self.config.references:
            self.training_set.append(ReferenceItem(
                image_ref=ref, embedding=self.backend.embed_image(ref),
                caption=caption, weight=1.0, origin=Origin.ORIGINAL, round_added=0))

    # -- locking -----------------------------------------------------------

    @property
    def _lock_path(self) -> Path:
        return self.run_dir / ".lock"

    def _acquire_lock(self) -> None:
        key = str(self.run_dir.resolve())
        path = self._lock_path
        with _OWNED_GUARD:
            if key in _OWNED_DIRS:
                raise LockError(f"run dir {self.run_dir} is locked by this process")
            if path.exists():
                try:
                    owner = int(path.read_text().strip())
                except ValueError:
                    owner = -1
                if owner != os.getpid() and owner > 0 and _pid_alive(owner):
                    raise LockError(
                        f"run dir {self.run_dir} is locked by pid {owner}")
            path.write_text(str(os.getpid()))
            _OWNED_DIRS.add(key)

    def _release_lock(self) -> None:
        with _OWNED_GUARD:
            _OWNED_DIRS.discard(str(self.run_dir.resolve()))
            try:
                if self._lock_path.exists():
                    self._lock_path.unlink()
            except OSError:
                pass

    def close(self) -> None:
        self._release_lock()
        close = getattr(self.backend, "close", None)
        if callable(close):
            close()

    def __enter__(self) -> "Engine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- round loop --------------------------------------------------------

    @property
    def current_round(self) -> int:
        return len(self.rounds)

    def run_round(self) -> RunStatus:
        """Execute the next round, or pause it for human review.

        All backend calls (fine-tune, generate, embed, image fetch) happen
        up front; a failure there propagates before anything is recorded,
        so the run stays at its last committed round.
        """
        with self._mutex:
            if self.status is not RunStatus.RUNNING:
                raise StateError(f"cannot run a round while {self.status.value}")
            r = self.current_round + 1

            self.backend.finetune(list(self.training_set))
            samples, blobs = self._generate_and_score(r)
            self.rounds_started += 1

            stats = self._direction_stats(samples)
            eligible = {s.anchor_id for s in stats if s.entropy > 0.0}

            if self.config.strategy is StrategyKind.HUMAN and eligible:
                self.pending = PendingRound(round=r, stats=stats, samples=samples)
                self.status = RunStatus.AWAITING_HUMAN
                self._persist_samples(r, samples, blobs)
                self._persist_pending()
                self._persist_state()
                return self.status

            decision = self._auto_select(stats, samples, r, eligible)
            self._complete_round(r, stats, samples, decision.selected, blobs)
            return self.status

    def _generate_and_score(
        self, r: int,
    ) -> tuple[dict[int, list[GeneratedSample]], dict[str, bytes]]:
        out: dict[int, list[GeneratedSample]] = {}
        blobs: dict[str, bytes] = {}
        for anchor in self.anchor_dirs:
            batch_seed = derive_seed(self.config.master_seed, r, anchor.id)
            raw = self.backend.generate(anchor.rendered, batch_seed, self.config.m)
            embeddings = [item.embedding or self.backend.embed_image(item.image_ref)
                          for item in raw]
            scored = score_batch(embeddings, anchor.embedding,
                                 self.soi.non_soi_embedding)
            batch = []
            for j, (item, emb, (sa, sn, flag)) in enumerate(zip(raw, embeddings, scored)):
                sample_id = f"r{r}-a{anchor.id}-s{j}"
                batch.append(GeneratedSample(
                    sample_id=sample_id,
                    anchor_id=anchor.id,
                    round=r,
                    seed=derive_seed(batch_seed, j),
                    image_ref=item.image_ref,
                    embedding=emb,
                    sim_to_anchor=sa,
                    sim_to_non_soi=sn,
                    overfit=flag,
                ))
                blob = self.backend.fetch_image(item.image_ref)
                if blob is not None:
                    blobs[sample_id] = blob
            out[anchor.id] = batch
        return out, blobs

    def _direction_stats(self, samples: dict[int, list[GeneratedSample]]) -> list[DirectionStats]:
        stats = []
        for anchor in self.anchor_dirs:
            batch = samples[anchor.id]
            beta = compute_beta([s.overfit for s in batch], self.config.m)
            stats.append(DirectionStats(
                anchor_id=anchor.id,
                beta=beta,
                entropy=entropy(beta),
                best_sample_id=select_best_sample(batch),
            ))
        return stats

    def _auto_select(self, stats: list[DirectionStats],
                     samples: dict[int, list[GeneratedSample]],
                     r: int, eligible: set[int]) -> SelectionDecision:
        rationale = {s.anchor_id: (s.beta, s.entropy) for s in stats}
        if not eligible:
            return SelectionDecision(selected=(), rationale=rationale)
        if self.config.strategy is StrategyKind.RANDOM:
            candidates = {aid: [s.sample_id for s in samples[aid]] for aid in eligible}
            return random_select(candidates, self.config.k,
                                 selection_seed(self.config.master_seed, r),
                                 rationale=rationale)
        if self.config.strategy is StrategyKind.HUMAN:
            return SelectionDecision(selected=(), rationale=rationale)
        by_id = {s.anchor_id: s for s in stats}
        chosen = rank_top_k(stats, self.config.k)
        return SelectionDecision(
            selected=tuple((aid, by_id[aid].best_sample_id) for aid in chosen),
            rationale=rationale)

    def submit_human_decision(self, pairs: Sequence[tuple[int, str]]) -> RunStatus:
        """Resume a paused round with the reviewer's (anchor, sample) picks."""
        with self._mutex:
            if self.status is not RunStatus.AWAITING_HUMAN or self.pending is None:
                raise StateError("no round is awaiting a human decision")
            pend = self.pending
            eligible = {s.anchor_id for s in pend.stats if s.entropy > 0.0}
            candidates = {aid: [s.sample_id for s in pend.samples[aid]]
                          for aid in eligible}
            decision = human_select(
                candidates, [(int(a), str(s)) for a, s in pairs], self.config.k,
                rationale={s.anchor_id: (s.beta, s.entropy) for s in pend.stats})
            self.status = RunStatus.RUNNING
            self.pending = None
            self._complete_round(pend.round, pend.stats, pend.samples,
                                 decision.selected, {})
            self._remove_pending()
            return self.status

    def _complete_round(self, r: int, stats: list[DirectionStats],
                        samples: dict[int, list[GeneratedSample]],
                        pairs: Sequence[tuple[int, str]],
                        blobs: dict[str, bytes]) -> None:
        delta = openness(stats, self.config.lam)
        by_anchor = {a.id: a for a in self.anchor_dirs}
        sample_index = {s.sample_id: s for batch in samples.values() for s in batch}

        drafts = [
            ReferenceItem(
                image_ref=sample_index[sid].image_ref,
                embedding=sample_index[sid].embedding,
                caption=by_anchor[aid].rendered,
                weight=1.0,
                origin=Origin.SYNTHETIC,
                round_added=r,
            )
            for aid, sid in pairs
        ]
        try:
            admitted = weight_new_references(
                drafts, delta, self.config.balance_enabled, round_added=r)
        except DegenerateWeightError:
            # Nothing left worth exploring; the stop check below fires too.
            admitted = []
        self.training_set.extend(admitted)

        stopped, reason = should_stop(stats, self.config.k, r, self.config.max_rounds)
        metrics = self._round_metrics(r, samples)
        record = RoundRecord(
            round=r,
            stats=tuple(stats),
            selected=tuple(pairs),
            openness=delta,
            stopped=stopped,
            stop_reason=reason.value if reason else None,
            metrics=metrics,
        )
        self.rounds.append(record)
        if stopped:
            self.status = RunStatus.STOPPED
            self.stop_reason = reason

        self._persist_samples(r, samples, blobs)
        self._persist_round(record, samples)
        self._persist_references()
        self._persist_state()
        self._persist_report()
        if stopped:
            self.export_state(ExportKind.ROUNDS)

    def _round_metrics(self, r: int,
                       samples: dict[int, list[GeneratedSample]]) -> MetricsTriple:
        prompt_embeddings = {a.id: a.embedding for a in self.anchor_dirs}
        pool = [s for a in self.anchor_dirs for s in samples[a.id]]
        if self.config.eval_prompts:
            pool = []
            for idx, prompt in enumerate(self.config.eval_prompts):
                aid = _EVAL_ANCHOR_BASE + idx
                emb = self.backend.embed_text(prompt)
                prompt_embeddings[aid] = emb
                batch_seed = derive_seed(self.config.master_seed, r, aid)
                raw = self.backend.generate(prompt, batch_seed, self.config.m)
                embs = [item.embedding or self.backend.embed_image(item.image_ref)
                        for item in raw]
                scored = score_batch(embs, emb, self.soi.non_soi_embedding)
                for j, (e, (sa, sn, flag)) in enumerate(zip(embs, scored)):
                    pool.append(GeneratedSample(
                        sample_id=f"r{r}-e{idx}-s{j}", anchor_id=aid, round=r,
                        seed=derive_seed(batch_seed, j), image_ref=raw[j].image_ref,
                        embedding=e, sim_to_anchor=sa, sim_to_non_soi=sn,
                        overfit=flag))
        originals = [ref.embedding for ref in self.training_set
                     if ref.origin is Origin.ORIGINAL]
        return compute_triple(pool, prompt_embeddings, originals, self.config.m)

    def run_to_completion(self) -> RunStatus:
        """Drive rounds until the run stops or pauses for a human."""
        while self.status is RunStatus.RUNNING:
            self.run_round()
        return self.status

    # -- views -------------------------------------------------------------

    def candidate_view(self) -> dict:
        """Grouped per-anchor candidates of the paused round."""
        with self._mutex:
            if self.status is not RunStatus.AWAITING_HUMAN or self.pending is None:
                raise StateError("no round is awaiting review")
            pend = self.pending
            by_anchor = {a.id: a for a in self.anchor_dirs}
            groups = []
            for s in pend.stats:
                if s.entropy <= 0.0:
                    continue
                groups.append({
                    "anchor_id": s.anchor_id,
                    "prompt": by_anchor[s.anchor_id].rendered,
                    "beta": s.beta,
                    "entropy": s.entropy,
                    "candidates": [
                        {
                            "sample_id": smp.sample_id,
                            "image_uri": smp.image_ref,
                            "sim_to_anchor": smp.sim_to_anchor,
                            "sim_to_non_soi": smp.sim_to_non_soi,
                            "overfit": smp.overfit,
                        }
                        for smp in pend.samples[s.anchor_id]
                    ],
                })
            return {
                "round": pend.round,
                "k": self.config.k,
                "references": list(self.config.references),
                "anchors": groups,
            }

    def run_summary(self) -> dict:
        with self._mutex:
            last = self.rounds[-1] if self.rounds else None
            return {
                "status": self.status.value,
                "stop_reason": self.stop_reason.value if self.stop_reason else None,
                "rounds_completed": len(self.rounds),
                "current_round": (self.pending.round if self.pending
                                  else len(self.rounds)),
                "strategy": self.config.strategy.value,
                "balance_enabled": self.config.balance_enabled,
                "k": self.config.k,
                "m": self.config.m,
                "anchor_count": len(self.config.anchors),
                "max_rounds": self.config.max_rounds,
                "last_delta": last.openness if last else None,
                "training_set_size": len(self.training_set),
            }

    def references_view(self) -> dict:
        with self._mutex:
            refs = [{k: v for k, v in entry.items() if k != "embedding"}
                    for entry in self._reference_dicts()]
            return {"references": refs}

    def last_round_summary(self) -> dict:
        """Summary of the most recently completed round (delta, admissions)."""
        with self._mutex:
            if not self.rounds:
                raise StateError("no completed rounds yet")
            rec = self.rounds[-1]
            synth_this_round = [ref for ref in self.training_set
                                if ref.round_added == rec.round
                                and ref.origin is Origin.SYNTHETIC]
            weight = synth_this_round[0].weight if synth_this_round else None
            admitted = [{"anchor_id": aid, "sample_id": sid, "weight": weight}
                        for aid, sid in rec.selected]
            return {
                "round": rec.round,
                "delta": rec.openness,
                "stopped": rec.stopped,
                "stop_reason": rec.stop_reason,
                "admitted": admitted,
                "metrics": None if rec.metrics is None else {
                    "txt_aln": rec.metrics.txt_aln,
                    "img_aln": rec.metrics.img_aln,
                    "ovf": rec.metrics.ovf,
                },
            }

    # -- persistence -------------------------------------------------------

    def _persist_config(self) -> None:
        d = self.config.to_dict()
        d["config_hash"] = self.config.config_hash()
        _dump_json(self.run_dir / "config.json", d)

    def _reference_dicts(self) -> list[dict]:
        return [
            {
                "image_ref": ref.image_ref,
                "caption": ref.caption,
                "weight": ref.weight,
                "origin": ref.origin.value,
                "round_added": ref.round_added,
                "embedding": ref.embedding.tolist(),
            }
            for ref in self.training_set
        ]

    def _persist_references(self) -> None:
        _dump_json(self.run_dir / "references.json",
                   {"references": self._reference_dicts()})

    def _round_dict(self, record: RoundRecord,
                    samples: dict[int, list[GeneratedSample]] | None) -> dict:
        anchors = []
        for s in record.stats:
            entry = {
                "anchor_id": s.anchor_id,
                "beta": s.beta,
                "entropy": s.entropy,
                "best_sample_id": s.best_sample_id,
                "samples": [] if samples is None else [
                    {
                        "sample_id": smp.sample_id,
                        "seed": smp.seed,
                        "sim_to_anchor": smp.sim_to_anchor,
                        "sim_to_non_soi": smp.sim_to_non_soi,
                        "overfit": smp.overfit,
                    }
                    for smp in samples[s.anchor_id]
                ],
            }
            anchors.append(entry)
        return {
            "round": record.round,
            "anchors": anchors,
            "selected": [{"anchor_id": a, "sample_id": sid}
                         for a, sid in record.selected],
            "delta": record.openness,
            "stopped": record.stopped,
            "stop_reason": record.stop_reason,
            "metrics": None if record.metrics is None else {
                "txt_aln": record.metrics.txt_aln,
                "img_aln": record.metrics.img_aln,
                "ovf": record.metrics.ovf,
                "eval_prompt_count": record.metrics.eval_prompt_count,
                "samples_per_prompt": record.metrics.samples_per_prompt,
            },
        }

    def _persist_round(self, record: RoundRecord,
                       samples: dict[int, list[GeneratedSample]]) -> None:
        path = self.run_dir / "rounds" / f"round-{record.round}.json"
        _dump_json(path, self._round_dict(record, samples))

    def _persist_samples(self, r: int, samples: dict[int, list[GeneratedSample]],
                         blobs: dict[str, bytes]) -> None:
        round_dir = self.run_dir / "samples" / f"round-{r}"
        round_dir.mkdir(parents=True, exist_ok=True)
        for aid, batch in samples.items():
            for j, smp in enumerate(batch):
                _atomic_write(round_dir / f"{aid}-{j}.emb", smp.embedding.to_bytes())
                blob = blobs.get(smp.sample_id)
                if blob is not None:
                    _atomic_write(round_dir / f"{aid}-{j}.png", blob)

    def _state_payload(self) -> dict:
        return {
            "config_hash": self.config.config_hash(),
            "status": self.status.value,
            "stop_reason": self.stop_reason.value if self.stop_reason else None,
            "rounds_completed": len(self.rounds),
            "rounds_started": self.rounds_started,
            "references": self._reference_dicts(),
            "rounds": [self._round_dict(rec, None) for rec in self.rounds],
        }

    def state_hash(self) -> str:
        payload = json.dumps(self._state_payload(), sort_keys=True,
                             separators=(",", ":"), ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _persist_state(self) -> None:
        _dump_json(self.run_dir / "state.json", {
            "config_hash": self.config.config_hash(),
            "status": self.status.value,
            "stop_reason": self.stop_reason.value if self.stop_reason else None,
            "rounds_completed": len(self.rounds),
            "rounds_started": self.rounds_started,
            "state_hash": self.state_hash(),
        })

    def _persist_report(self) -> None:
        if self.rounds:
            emit_report(self.rounds, self.config.strategy.value,
                        self.config.balance_enabled, self.run_dir)

    def _pending_path(self) -> Path:
        return self.run_dir / "pending.json"

    def _persist_pending(self) -> None:
        pend = self.pending
        assert pend is not None
        payload = {
            "round": pend.round,
            "stats": [
                {"anchor_id": s.anchor_id, "beta": s.beta, "entropy": s.entropy,
                 "best_sample_id": s.best_sample_id}
                for s in pend.stats
            ],
            "samples": [
                {
                    "anchor_id": aid,
                    "samples": [
                        {
                            "sample_id": smp.sample_id,
                            "seed": smp.seed,
                            "image_ref": smp.image_ref,
                            "sim_to_anchor": smp.sim_to_anchor,
                            "sim_to_non_soi": smp.sim_to_non_soi,
                            "overfit": smp.overfit,
                            "embedding": smp.embedding.tolist(),
                        }
                        for smp in batch
                    ],
                }
                for aid, batch in sorted(pend.samples.items())
            ],
        }
        _dump_json(self._pending_path(), payload)

    def _remove_pending(self) -> None:
        try:
            self._pending_path().unlink()
        except FileNotFoundError:
            pass

    # -- resume ------------------------------------------------------------

    @classmethod
    def resume(cls, run_dir: str | Path, backend: Backend | None = None) -> "Engine":
        """Rebuild a live engine from a persisted run directory.

        The simulated backend is restored by replaying each started round's
        fine-tune on the training set as it stood then; its transcript is a
        pure function of the call sequence, so the replay is exact. The
        reconstructed state hash must match the persisted one.
        """
        run_dir = Path(run_dir)
        config_doc = _load_json(run_dir / "config.json")
        if not isinstance(config_doc, dict):
            raise PersistenceError("config is not an object", str(run_dir / "config.json"))
        stored_hash = config_doc.get("config_hash")
        config_doc = {k: v for k, v in config_doc.items() if k != "config_hash"}
        config_doc["run_dir"] = str(run_dir)
        config = RunConfig.from_dict(config_doc)
        if stored_hash != config.config_hash():
            raise PersistenceError("config hash mismatch", str(run_dir / "config.json"))

        state_doc = _load_json(run_dir / "state.json")
        engine = cls(config, backend=backend, _resuming=True)
        try:
            engine._load_persisted(state_doc)
        except Exception:
            engine._release_lock()
            raise
        return engine

    def _load_persisted(self, state_doc: dict) -> None:
        refs_path = self.run_dir / "references.json"
        refs_doc = _load_json(refs_path)
        self.training_set = []
        for entry in refs_doc.get("references", []):
            try:
                self.training_set.append(ReferenceItem(
                    image_ref=entry["image_ref"],
                    embedding=Embedding(entry["embedding"]),
                    caption=entry["caption"],
                    weight=float(entry["weight"]),
                    origin=Origin(entry["origin"]),
                    round_added=int(entry["round_added"]),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise PersistenceError(f"bad reference entry ({exc})", str(refs_path))
        if not any(r.origin is Origin.ORIGINAL for r in self.training_set):
            raise PersistenceError("no original references", str(refs_path))

        completed = int(state_doc.get("rounds_completed", 0))
        self.rounds = []
        for n in range(1, completed + 1):
            path = self.run_dir / "rounds" / f"round-{n}.json"
            doc = _load_json(path)
            try:
                self.rounds.append(self._record_from_dict(doc))
            except (KeyError, TypeError, ValueError) as exc:
                raise PersistenceError(f"bad round record ({exc})", str(path))

        self.status = RunStatus(state_doc.get("status", "running"))
        reason = state_doc.get("stop_reason")
        self.stop_reason = StopReason(reason) if reason else None
        self.rounds_started = int(state_doc.get("rounds_started", completed))
        self.pending = (self._load_pending()
                        if self.status is RunStatus.AWAITING_HUMAN else None)

        if isinstance(self.backend, SimulatedBackend):
            self._replay_finetunes()

        expected = state_doc.get("state_hash")
        if expected != self.state_hash():
            raise PersistenceError("state hash mismatch",
                                   str(self.run_dir / "state.json"))

    def _record_from_dict(self, doc: dict) -> RoundRecord:
        stats = tuple(
            DirectionStats(anchor_id=int(e["anchor_id"]), beta=float(e["beta"]),
                           entropy=float(e["entropy"]),
                           best_sample_id=e.get("best_sample_id"))
            for e in doc["anchors"]
        )
        metrics = doc.get("metrics")
        triple = None
        if metrics:
            triple = MetricsTriple(
                txt_aln=float(metrics["txt_aln"]), img_aln=float(metrics["img_aln"]),
                ovf=float(metrics["ovf"]),
                eval_prompt_count=int(metrics["eval_prompt_count"]),
                samples_per_prompt=int(metrics["samples_per_prompt"]))
        return RoundRecord(
            round=int(doc["round"]),
            stats=stats,
            selected=tuple((int(p["anchor_id"]), p["sample_id"])
                           for p in doc.get("selected", [])),
            openness=float(doc["delta"]),
            stopped=bool(doc["stopped"]),
            stop_reason=doc.get("stop_reason"),
            metrics=triple,
        )

    def _load_pending(self) -> PendingRound:
        doc = _load_json(self._pending_path())
        try:
            stats = [
                DirectionStats(anchor_id=int(e["anchor_id"]), beta=float(e["beta"]),
                               entropy=float(e["entropy"]),
                               best_sample_id=e.get("best_sample_id"))
                for e in doc["stats"]
            ]
            samples: dict[int, list[GeneratedSample]] = {}
            for group in doc["samples"]:
                aid = int(group["anchor_id"])
                samples[aid] = [
                    GeneratedSample(
                        sample_id=e["sample_id"], anchor_id=aid,
                        round=int(doc["round"]), seed=int(e["seed"]),
                        image_ref=e["image_ref"],
                        embedding=Embedding(e["embedding"]),
                        sim_to_anchor=float(e["sim_to_anchor"]),
                        sim_to_non_soi=float(e["sim_to_non_soi"]),
                        overfit=bool(e["overfit"]),
                    )
                    for e in group["samples"]
                ]
            return PendingRound(round=int(doc["round"]), stats=stats, samples=samples)
        except (KeyError, TypeError, ValueError) as exc:
            raise PersistenceError(f"bad pending round ({exc})",
                                   str(self._pending_path()))

    def _replay_finetunes(self) -> None:
        for r in range(1, self.rounds_started + 1):
            past = [ref for ref in self.training_set if ref.round_added < r]
            if past:
                self.backend.finetune(past)

    # -- export --------------------------------------------------------------

    def export_state(self, what: ExportKind | str,
                     out_dir: str | Path | None = None) -> list[Path]:
        what = ExportKind(what)
        out = Path(out_dir) if out_dir else self.run_dir
        out.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []
        if what is ExportKind.ROUNDS:
            docs = [_load_json(self.run_dir / "rounds" / f"round-{rec.round}.json")
                    for rec in self.rounds]
            path = out / "rounds.json"
            _dump_json(path, docs)
            written.append(path)
        elif what is ExportKind.TRAINING_SET:
            refs = [{k: v for k, v in entry.items() if k != "embedding"}
                    for entry in self._reference_dicts()]
            path = out / "references-export.json" if out == self.run_dir else out / "references.json"
            _dump_json(path, {"references": refs})
            written.append(path)
        else:
            export_dir = out / "export"
            export_dir.mkdir(exist_ok=True)
            for rec in self.rounds:
                round_dir = self.run_dir / "samples" / f"round-{rec.round}"
                rows = []
                for aid in sorted(s.anchor_id for s in rec.stats):
                    for j in range(self.config.m):
                        emb_path = round_dir / f"{aid}-{j}.emb"
                        if not emb_path.exists():
                            raise PersistenceError("missing sample embedding",
                                                   str(emb_path))
                        rows.append(Embedding.from_bytes(emb_path.read_bytes()).values)
                path = export_dir / f"embeddings-round-{rec.round}.npy"
                with open(path, "wb") as fh:
                    np.save(fh, np.stack(rows))
                written.append(path)
        return written
