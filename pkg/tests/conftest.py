import numpy as np
import pytest

from mvret.data import Dataset, SyntheticConfig, generate_synthetic
from mvret.model import ModelConfig
from mvret.trainer import Checkpoint, TrainConfig, train

TINY_SYNTH = SyntheticConfig(num_classes=3, items_per_class=40, audio_dim=16,
                             video_dim=12, seed=3)
TINY_MODEL = ModelConfig(audio_input_dim=16, video_input_dim=12, embed_dim=8,
                         g_hidden_dims=(32,), h_hidden_dims=(16,), dropout_p=0.1)
TINY_TRAIN = TrainConfig(epochs=2, batch_size=32, seed=5)


@pytest.fixture(scope="session")
def tiny_dataset() -> Dataset:
    return generate_synthetic(TINY_SYNTH)


@pytest.fixture(scope="session")
def tiny_checkpoint(tiny_dataset) -> Checkpoint:
    checkpoint, _ = train(tiny_dataset, TINY_MODEL, TINY_TRAIN)
    return checkpoint


def random_unit_rows(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)
