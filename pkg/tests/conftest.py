import numpy as np
import pytest

from autopark.bev import DepthBins, GridSpec
from autopark.model import ModelConfig, build_model
from autopark.sensing import default_rig
from autopark.tokenizer import TokenVocab
from autopark.world import VehicleParams


def tiny_model_config(**overrides) -> ModelConfig:
    """The small configuration used for exhaustive gradient/causality checks."""
    kwargs = dict(
        channels=4, d_model=8, n_heads=1, n_layers=1, q_len=3,
        fusion_mode="target_query", fusion_downsample=8, fusion_heads=1,
        img_height=8, img_width=8,
        grid=GridSpec(half_x=4.0, half_y=4.0, resolution=0.5),
        depth_bins=DepthBins(count=3, d_min=0.5, d_max=3.5),
        vocab=TokenVocab(n_tokens=16),
    )
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


def tiny_rig(n_cameras=2):
    return default_rig(n_cameras=n_cameras, width=8, height=8)


def tiny_batch(cfg: ModelConfig, rig, batch=2, seed=3, dtype=np.float64):
    """Random but fixed batch shaped for the tiny model."""
    rng = np.random.default_rng(seed)
    r = len(rig)
    images = rng.uniform(0, 1, (batch, r, 3, cfg.img_height, cfg.img_width)).astype(dtype)
    heat = (rng.uniform(0, 1, (batch, 1, cfg.grid.rows, cfg.grid.cols)) > 0.8).astype(dtype)
    toks = np.concatenate(
        [
            np.full((batch, 1), cfg.vocab.bos),
            rng.integers(0, cfg.vocab.n_tokens, (batch, 2 * cfg.q_len)),
            np.full((batch, 1), cfg.vocab.eos),
        ],
        axis=1,
    )
    return images, heat, toks


@pytest.fixture(scope="session")
def tiny_model():
    cfg = tiny_model_config()
    rig = tiny_rig()
    return build_model(cfg, rig, seed=7), cfg, rig


@pytest.fixture
def vehicle():
    return VehicleParams()
