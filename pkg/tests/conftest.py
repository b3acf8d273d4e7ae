import dataclasses

import numpy as np
import pytest

from gal_engine.backends import BackendSpec
from gal_engine.core import Embedding, GeneratedSample, normalize
from gal_engine.engine import RunConfig, SoISpec


def unit(*values: float) -> Embedding:
    return normalize(np.asarray(values, dtype=np.float64))


def pad_unit(values, dim: int) -> Embedding:
    vec = np.zeros(dim)
    vec[:len(values)] = values
    return normalize(vec)


def make_sample(sample_id: str, anchor_id: int, sim_to_anchor: float,
                overfit: bool, round_: int = 1, dim: int = 4) -> GeneratedSample:
    """Sample with prescribed score fields; embedding is a placeholder."""
    sim_to_non_soi = sim_to_anchor if overfit else sim_to_anchor - 0.5
    vec = np.zeros(dim)
    vec[0] = 1.0
    return GeneratedSample(
        sample_id=sample_id, anchor_id=anchor_id, round=round_, seed=0,
        image_ref=f"mem://{sample_id}", embedding=Embedding(vec.astype(np.float32)),
        sim_to_anchor=sim_to_anchor, sim_to_non_soi=sim_to_non_soi, overfit=overfit)


def base_config(run_dir, **overrides) -> RunConfig:
    cfg = RunConfig(
        soi=SoISpec(pseudo_token="S*", non_soi_text="cat",
                    reference_caption_template="a photo of {SOI} cat"),
        anchors=tuple(f"{{SOI}} in scene {i}" for i in range(18)),
        references=("ref-0.png",),
        m=10, k=3, lam=0.005, max_rounds=4,
        master_seed=42, embedding_dim=64,
        run_dir=str(run_dir),
    )
    return dataclasses.replace(cfg, **overrides)


@pytest.fixture
def sim_config(tmp_path):
    return base_config(tmp_path / "run")


@pytest.fixture
def small_config(tmp_path):
    """Cheap config for tests that run many loops."""
    return base_config(
        tmp_path / "run",
        anchors=tuple(f"{{SOI}} in scene {i}" for i in range(6)),
        m=4, k=2, max_rounds=3, embedding_dim=32,
    )


@pytest.fixture
def fixed_g_spec():
    def make(g: float, **kw) -> BackendSpec:
        return BackendSpec(g_init_low=g, g_init_high=g, **kw)
    return make
