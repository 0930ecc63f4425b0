import numpy as np
import pytest

from met2net.arch import ModelConfig
from met2net.data import SpriteSceneConfig, generate_mvm, load_dataset


def tiny_model_config(**kw) -> ModelConfig:
    base = dict(n_vars=3, channels_per_var=[1, 1, 1], in_frames=2, out_frames=2, height=8, width=8,
                latent_dim=4, down_factor=1, enc_depth=1, translator_depth=1, norm_groups=2)
    base.update(kw)
    return ModelConfig(**base)


def tiny_scene(**kw) -> SpriteSceneConfig:
    base = dict(canvas=16, sprite_size=8, n_sprites=1, in_frames=2, out_frames=2, n_train=12, n_test=6,
                speed_range=[1, 2], seed=3)
    base.update(kw)
    return SpriteSceneConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinydata")
    generate_mvm(tiny_scene(), root)
    return load_dataset(root)
