import os

import pytest

from yynet.data.cifar10 import load_cifar10
from yynet.learn.trainer import run_training
from yynet.model.model_config import cifar10_config
from yynet.optim.train_config import TrainConfig
from yynet.test.quick_tests.data.synthetic_cifar import write_synthetic_cifar10
from yynet.util.util import try_noisy_test_up_to_n_times

CIFAR10_DIR = os.environ.get("YYNET_CIFAR10_DIR")

needs_cifar10 = pytest.mark.skipif(CIFAR10_DIR is None, reason="set YYNET_CIFAR10_DIR to a CIFAR-10 binary directory")

SMOKE_CONFIG = TrainConfig(epochs=3, batch_size=64, train_subset=5000, test_subset=1000)


def test_synthetic_colors_are_learned(tmp_path):
    write_synthetic_cifar10(tmp_path, records_per_train_file=200, test_records=200, learnable=True)
    train_split, test_split = load_cifar10(tmp_path, expected_counts=None)

    def run_learning(attempt):
        learner = run_training(
            cifar10_config(8),
            TrainConfig(epochs=4, batch_size=50, seed=attempt),
            train_split,
            test_split,
            show_progress=False,
        )
        rows = learner.metrics.rows
        print("\n".join(str(row) for row in rows))
        assert rows[-1].train_loss < rows[0].train_loss
        assert rows[-1].test_accuracy >= 0.5

    try_noisy_test_up_to_n_times(run_learning)


@needs_cifar10
def test_smoke_run_learns():
    train_split, test_split = load_cifar10(CIFAR10_DIR)
    learner = run_training(cifar10_config(16), SMOKE_CONFIG, train_split, test_split, show_progress=False)
    rows = learner.metrics.rows
    print("\n".join(str(row) for row in rows))
    losses = [row.train_loss for row in rows]
    assert all(later < earlier for earlier, later in zip(losses, losses[1:]))
    assert rows[-1].test_accuracy >= 0.35


@needs_cifar10
def test_single_threaded_runs_are_identical(tmp_path):
    train_split, test_split = load_cifar10(CIFAR10_DIR)
    config = SMOKE_CONFIG.replace(num_threads=1)
    losses = []
    for run in ("first", "second"):
        learner = run_training(
            cifar10_config(16), config, train_split, test_split, out_dir=os.fspath(tmp_path / run), show_progress=False
        )
        losses.append([row.train_loss for row in learner.metrics.rows])
    assert losses[0] == losses[1]
    with open(tmp_path / "first" / "metrics.csv") as first, open(tmp_path / "second" / "metrics.csv") as second:
        first_lines = [line.rsplit(",", 1)[0] for line in first]
        second_lines = [line.rsplit(",", 1)[0] for line in second]
    assert first_lines == second_lines


@pytest.mark.skipif(
    CIFAR10_DIR is None or not os.environ.get("YYNET_FULL_SCALE"),
    reason="set YYNET_CIFAR10_DIR and YYNET_FULL_SCALE for the 40-epoch reproduction",
)
def test_full_scale_reaches_published_range(tmp_path):
    train_split, test_split = load_cifar10(CIFAR10_DIR)
    learner = run_training(
        cifar10_config(16), TrainConfig(), train_split, test_split, out_dir=os.fspath(tmp_path), show_progress=True
    )
    assert learner.last_row.test_accuracy >= 0.85
