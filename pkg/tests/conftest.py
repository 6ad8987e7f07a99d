import json

import numpy as np
import pytest

from featlab.cnn import CnnConfig, init_model, train
from featlab.corpus import EmbeddingTable, Vocabulary
from featlab.experiments import load_corpus_dir
from featlab.optim import TrainConfig
from featlab.synth import sentiment_corpus


@pytest.fixture(scope="session")
def sentiment_dir(tmp_path_factory):
    """Small but realistic two-class corpus shared across test modules."""
    out = tmp_path_factory.mktemp("data") / "sentiment"
    sentiment_corpus(out, n_train=150, n_dev=50, n_test=150, embed_dim=64, seed=7)
    return out


@pytest.fixture(scope="session")
def sentiment_corpus_loaded(sentiment_dir):
    return load_corpus_dir(sentiment_dir)


@pytest.fixture(scope="session")
def sentiment_oracle(sentiment_dir):
    return json.loads((sentiment_dir / "oracle.json").read_text())


@pytest.fixture(scope="session")
def small_model(sentiment_corpus_loaded):
    """A trained 30-feature CNN on the small corpus (shared, treat as read-only)."""
    dataset, table = sentiment_corpus_loaded
    config = CnnConfig(class_count=2, max_len=40, embed_dim=64, seed=0)
    model, log = train(init_model(config, table), dataset, TrainConfig(seed=0, max_epochs=30, patience=5))
    assert log, "training should run at least one epoch"
    return model


def make_toy_table(n_words: int, dim: int, seed: int = 0) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    vocab = Vocabulary(index={f"w{i}": i + 2 for i in range(n_words)})
    matrix = rng.standard_normal((vocab.size, dim))
    matrix[0] = 0.0
    return EmbeddingTable.from_matrix(vocab, matrix)
