import math
import queue
import threading
from typing import NamedTuple

import torch

from yynet.autograd.tensor import Tensor
from yynet.data.augmentation import augment
from yynet.data.normalization import normalize
from yynet.util.errors import ConfigError
from yynet.util.util import generator_from_seed


class LabeledBatch(NamedTuple):
    """Normalized images (N, 3, 32, 32) as a yynet Tensor and their class labels as a torch long tensor."""

    images: Tensor
    labels: torch.Tensor

    def __len__(self):
        return len(self.labels)


def number_of_batches(number_of_records, batch_size):
    return math.ceil(number_of_records / batch_size)


def epoch_order(number_of_records, seed, epoch, shuffle=True):
    """Record indices of one epoch: a permutation determined by (seed, epoch), or the identity."""
    if not shuffle:
        return torch.arange(number_of_records)
    return torch.randperm(number_of_records, generator=generator_from_seed(seed, epoch))


def batch_index_generator(number_of_records, batch_size, seed, epoch, shuffle=True):
    order = epoch_order(number_of_records, seed, epoch, shuffle)
    for i in range(0, number_of_records, batch_size):
        yield order[i : i + batch_size]


def batches(split, batch_size, seed=0, epoch=0, shuffle=True, stats=None, augment_images=False, dtype=None):
    """
    LabeledBatches covering `split` once, in the order of epoch `epoch`; the final batch may be short.
    Images are standardized with `stats` and, if `augment_images`, flipped and cropped
    with a generator also determined by (seed, epoch).
    """
    if batch_size <= 0:
        raise BatchSizeMustBeGreaterThanZero()
    augmentation_generator = generator_from_seed(seed, epoch, 1)
    for indices in batch_index_generator(len(split), batch_size, seed, epoch, shuffle):
        indices = indices.numpy()
        images = split.images[indices]
        images = normalize(images, stats, dtype) if stats is not None else torch.as_tensor(images).to(
            torch.float32 if dtype is None else dtype
        )
        images = augment(images, augmentation_generator, enabled=augment_images)
        labels = torch.as_tensor(split.labels[indices]).to(torch.long)
        yield LabeledBatch(Tensor(images), labels)


class Prefetcher:
    """
    Iterates over `iterable` on a background thread, keeping up to `depth` ready items in a bounded queue.
    Exceptions raised while producing are re-raised by the consumer. Depth 0 iterates in the caller's thread.
    """

    _DONE = object()

    def __init__(self, iterable, depth=2):
        self.iterable = iterable
        self.depth = depth

    def __iter__(self):
        if self.depth <= 0:
            yield from self.iterable
            return
        items = queue.Queue(maxsize=self.depth)
        stop = threading.Event()

        def offer(item):
            while not stop.is_set():
                try:
                    items.put(item, timeout=0.1)
                    return True
                except queue.Full:
                    pass
            return False

        def produce():
            try:
                for item in self.iterable:
                    if not offer(item):
                        return
                offer(Prefetcher._DONE)
            except BaseException as e:
                offer(e)

        thread = threading.Thread(target=produce, name="yynet-prefetch", daemon=True)
        thread.start()
        try:
            while True:
                item = items.get()
                if item is Prefetcher._DONE:
                    return
                if isinstance(item, BaseException):
                    raise item
                yield item
        finally:
            stop.set()
            thread.join(timeout=1.0)


class EpochBatchLoader:
    """
    A data loader producing the batches of any epoch on request, so that training can resume at any epoch
    with the same order and augmentation it would otherwise have had.
    """

    def __init__(
        self, split, batch_size, seed=0, shuffle=True, stats=None, augment_images=False, prefetch_depth=0, dtype=None
    ):
        if batch_size <= 0:
            raise BatchSizeMustBeGreaterThanZero()
        self.split = split
        self.batch_size = batch_size
        self.seed = seed
        self.shuffle = shuffle
        self.stats = stats
        self.augment_images = augment_images
        self.prefetch_depth = prefetch_depth
        self.dtype = dtype

    def epoch(self, epoch):
        return Prefetcher(
            batches(
                self.split,
                self.batch_size,
                self.seed,
                epoch,
                self.shuffle,
                self.stats,
                self.augment_images,
                self.dtype,
            ),
            self.prefetch_depth,
        )

    def __iter__(self):
        return iter(self.epoch(0))

    def __len__(self):
        return number_of_batches(len(self.split), self.batch_size)


class BatchSizeMustBeGreaterThanZero(ConfigError):
    def __init__(self):
        super().__init__("Batch size must be greater than zero")
