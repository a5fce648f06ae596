import os

import numpy as np

from yynet.data.cifar10 import RECORD_BYTES, TEST_FILE, TRAIN_FILES


def synthetic_records(number_of_records, seed=0, learnable=False):
    """
    Random CIFAR-10 records as one bytes object.
    With `learnable`, each class gets a distinct average color so that a small network can separate them.
    """
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 10, size=number_of_records, dtype=np.uint8)
    if learnable:
        palette = rng.integers(40, 216, size=(10, 3, 1, 1))
        noise = rng.integers(-40, 41, size=(number_of_records, 3, 32, 32))
        images = np.clip(palette[labels] + noise, 0, 255).astype(np.uint8)
    else:
        images = rng.integers(0, 256, size=(number_of_records, 3, 32, 32), dtype=np.uint8)
    records = np.empty((number_of_records, RECORD_BYTES), dtype=np.uint8)
    records[:, 0] = labels
    records[:, 1:] = images.reshape(number_of_records, -1)
    return records.tobytes()


def write_synthetic_cifar10(directory, records_per_train_file=20, test_records=30, seed=0, learnable=False):
    """Writes the six batch files of a miniature binary distribution; returns {file name: bytes written}."""
    os.makedirs(directory, exist_ok=True)
    contents = {}
    for index, name in enumerate(TRAIN_FILES):
        contents[name] = synthetic_records(records_per_train_file, seed=seed + index, learnable=learnable)
    contents[TEST_FILE] = synthetic_records(test_records, seed=seed + len(TRAIN_FILES), learnable=learnable)
    for name, raw in contents.items():
        with open(os.path.join(directory, name), "wb") as file:
            file.write(raw)
    return contents


def small_counts(records_per_train_file=20, test_records=30):
    return 5 * records_per_train_file, test_records
