"""Generative active learning loop for image-synthesis personalization.

Selects which anchor directions to query via entropy-based uncertainty
sampling, admits the most faithful generated samples as weighted training
references, and stops adaptively once too few directions stay informative.
Generation, embedding, and fine-tuning run behind pluggable backends: a
wire-protocol client and a deterministic simulator.
"""

from .backends import (
    Backend,
    BackendSpec,
    RawSample,
    RemoteBackend,
    SimulatedBackend,
    derive_seed,
    selection_seed,
)
from .balance import BalanceConfig, StopReason, openness, should_stop, weight_new_references
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
    cosine_sim,
    mean_embedding,
    normalize,
    render_prompt,
    strip_placeholder,
)
from .engine import Engine, ExportKind, PendingRound, RunConfig, RunStatus, SoISpec
from .errors import (
    BackendError,
    ConfigError,
    DegenerateVectorError,
    DegenerateWeightError,
    DimensionError,
    DomainError,
    EmptyBatchError,
    GalError,
    LockError,
    PersistenceError,
    ProtocolError,
    StateError,
    TemplateError,
    ValidationError,
)
from .metrics import compute_triple, emit_report, img_aln, ovf, txt_aln
from .oracle import phi, score_batch
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

__version__ = "0.1.0"
