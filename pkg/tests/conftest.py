import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sparsefool import (
    MlpClassifier,
    TrainConfig,
    load_idx,
    synth_digits,
    train_sgd,
    write_idx,
)

DIGITS_TRAIN_SEED = 11
DIGITS_TEST_SEED = 12
MODEL_SEED = 0


def build_desk_setup(tmpdir, train_n=10000, test_n=1200):
    """Generate the desk-scale digit corpus, round-trip it through IDX
    files, and train the standard MLP preset. Deterministic end to end."""
    tmpdir = Path(tmpdir)
    train = synth_digits(train_n, seed=DIGITS_TRAIN_SEED)
    test = synth_digits(test_n, seed=DIGITS_TEST_SEED)
    write_idx(train, tmpdir / "train-images.idx", tmpdir / "train-labels.idx")
    write_idx(test, tmpdir / "test-images.idx", tmpdir / "test-labels.idx")
    train = load_idx(tmpdir / "train-images.idx", tmpdir / "train-labels.idx")
    test = load_idx(tmpdir / "test-images.idx", tmpdir / "test-labels.idx")
    # path-independent names keep serialized reports run-to-run identical
    train.name = "digits-train"
    test.name = "digits-test"

    model = MlpClassifier.random([784, 128, 64, 10], seed=MODEL_SEED,
                                 input_shape=(1, 28, 28))
    result = train_sgd(
        model,
        train.as_matrix(),
        np.asarray(train.labels),
        TrainConfig(learning_rate=0.1, epochs=12, batch_size=64, seed=MODEL_SEED),
        val_x=test.as_matrix(),
        val_labels=np.asarray(test.labels),
    )
    return result, train, test


@pytest.fixture(scope="session")
def desk(tmp_path_factory):
    """(train_result, train_set, test_set) shared across the suite."""
    return build_desk_setup(tmp_path_factory.mktemp("desk"))


@pytest.fixture(scope="session")
def desk_model(desk):
    return desk[0].model


@pytest.fixture(scope="session")
def digits_test(desk):
    return desk[2]
