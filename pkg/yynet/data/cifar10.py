import os
from dataclasses import dataclass

import numpy as np
import structlog

from yynet.util.errors import DataIOError, FormatError
from yynet.util.util import check_path_like

log = structlog.get_logger()

IMAGE_SIZE = 32
CHANNELS = 3
PIXEL_BYTES = CHANNELS * IMAGE_SIZE * IMAGE_SIZE
RECORD_BYTES = 1 + PIXEL_BYTES
NUMBER_OF_CLASSES = 10

TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
BATCHES_SUBDIRECTORY = "cifar-10-batches-bin"

TRAIN_RECORDS = 50_000
TEST_RECORDS = 10_000
FULL_COUNTS = (TRAIN_RECORDS, TEST_RECORDS)


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    """
    Raw CIFAR-10 records of one split.

    images: uint8 array (N, 3, 32, 32), planes in R, G, B order, rows top to bottom
    labels: uint8 array (N,) with values in [0, 10)
    role: "train" or "test"
    """

    images: np.ndarray
    labels: np.ndarray
    role: str

    def __post_init__(self):
        if self.images.shape[1:] != (CHANNELS, IMAGE_SIZE, IMAGE_SIZE) or len(self.images) != len(self.labels):
            raise FormatError(
                f"{self.role} split has images {self.images.shape} and labels {self.labels.shape}"
            )

    def __len__(self):
        return len(self.labels)

    def record(self, index):
        """The (pixel bytes, label) pair of one record, as stored in the binary distribution."""
        return self.images[index].tobytes(), int(self.labels[index])

    def to_bytes(self):
        """The split re-assembled in the binary distribution layout: label byte then 3072 pixel bytes per record."""
        records = np.empty((len(self), RECORD_BYTES), dtype=np.uint8)
        records[:, 0] = self.labels
        records[:, 1:] = self.images.reshape(len(self), PIXEL_BYTES)
        return records.tobytes()

    def subset(self, n, seed=0):
        """`n` records drawn without replacement, in a seeded order; the whole split when n is None or too large."""
        if n is None or n >= len(self):
            return self
        indices = np.random.default_rng(seed).permutation(len(self))[:n]
        return DatasetSplit(self.images[indices], self.labels[indices], self.role)

    def shuffled_labels(self, seed=0):
        """Same images with labels permuted, breaking every image-label association."""
        labels = np.random.default_rng(seed).permutation(self.labels)
        return DatasetSplit(self.images, labels, self.role)

    def __repr__(self):
        return f"DatasetSplit(role={self.role}, records={len(self)})"


def parse_records(raw, name="<bytes>"):
    """Parses bytes of 3073-byte records into (images, labels) arrays."""
    if len(raw) % RECORD_BYTES != 0:
        raise FormatError(
            f"{name} has {len(raw)} bytes, which is not a multiple of the {RECORD_BYTES}-byte record size"
        )
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    labels = records[:, 0].copy()
    if len(labels) > 0 and int(labels.max()) >= NUMBER_OF_CLASSES:
        bad = int(np.argmax(labels >= NUMBER_OF_CLASSES))
        raise FormatError(f"{name} record {bad} has label {labels[bad]} outside of [0, {NUMBER_OF_CLASSES})")
    images = records[:, 1:].reshape(-1, CHANNELS, IMAGE_SIZE, IMAGE_SIZE).copy()
    return images, labels


def read_batch_file(path):
    check_path_like(path, caller="read_batch_file")
    try:
        with open(path, "rb") as file:
            raw = file.read()
    except OSError as e:
        raise DataIOError(f"Cannot read CIFAR-10 batch file {path}: {e.strerror}") from e
    return parse_records(raw, name=os.fspath(path))


def resolve_directory(directory):
    """`directory` itself, or its cifar-10-batches-bin sub-directory when the batch files are there instead."""
    check_path_like(directory, caller="resolve_directory")
    nested = os.path.join(directory, BATCHES_SUBDIRECTORY)
    if not os.path.exists(os.path.join(directory, TEST_FILE)) and os.path.isdir(nested):
        return nested
    return os.fspath(directory)


def read_split(directory, file_names, role, expected_records=None):
    parts = [read_batch_file(os.path.join(directory, name)) for name in file_names]
    images = np.concatenate([images for images, _ in parts])
    labels = np.concatenate([labels for _, labels in parts])
    if expected_records is not None and len(labels) != expected_records:
        raise FormatError(f"{role} split has {len(labels)} records but {expected_records} were expected")
    return DatasetSplit(images, labels, role)


def load_cifar10(directory, expected_counts=FULL_COUNTS):
    """
    Reads the five training batch files and the test batch file of the CIFAR-10 binary distribution.
    `expected_counts` are the (train, test) record counts to insist on; None accepts any count.
    Returns (train, test) DatasetSplits.
    """
    directory = resolve_directory(directory)
    train_expected, test_expected = expected_counts if expected_counts is not None else (None, None)
    train = read_split(directory, TRAIN_FILES, "train", train_expected)
    test = read_split(directory, (TEST_FILE,), "test", test_expected)
    log.info("CIFAR-10 loaded", directory=directory, n_train=len(train), n_test=len(test))
    return train, test
