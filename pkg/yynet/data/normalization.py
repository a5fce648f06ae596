import os
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import structlog
import torch

from yynet.autograd.tensor import DEFAULT_DTYPE
from yynet.util.errors import DataIOError, FormatError
from yynet.util.util import check_path_like

log = structlog.get_logger()

# Channels whose spread is below this are left unscaled.
MIN_STD = 1e-8


@dataclass(frozen=True)
class NormalizationStats:
    """Per-channel mean and standard deviation of pixel values scaled to [0, 1]."""

    mean: Tuple[float, float, float]
    std: Tuple[float, float, float]

    def to_text(self):
        return "\n".join(repr(float(v)) for v in self.mean + self.std) + "\n"

    @staticmethod
    def from_text(text, name="<text>"):
        try:
            values = [float(token) for token in text.split()]
        except ValueError as e:
            raise FormatError(f"{name} does not hold normalization statistics: {e}") from e
        if len(values) != 6:
            raise FormatError(f"{name} should hold six numbers but holds {len(values)}")
        if any(v <= 0 for v in values[3:]):
            raise FormatError(f"{name} has non-positive standard deviations {values[3:]}")
        return NormalizationStats(tuple(values[:3]), tuple(values[3:]))


def channel_statistics(split):
    """Two-pass per-channel mean and population standard deviation over the whole split."""
    pixels = split.images.astype(np.float64) / 255.0
    mean = pixels.mean(axis=(0, 2, 3))
    centered = pixels - mean[None, :, None, None]
    std = np.sqrt((centered * centered).mean(axis=(0, 2, 3)))
    std = np.where(std < MIN_STD, 1.0, std)
    return NormalizationStats(tuple(float(m) for m in mean), tuple(float(s) for s in std))


def save_stats(stats, path):
    check_path_like(path, caller="save_stats")
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as file:
        file.write(stats.to_text())


def load_stats(path):
    check_path_like(path, caller="load_stats")
    try:
        with open(path, "r") as file:
            text = file.read()
    except OSError as e:
        raise DataIOError(f"Cannot read normalization statistics {path}: {e.strerror}") from e
    return NormalizationStats.from_text(text, name=os.fspath(path))


def cached_stats(split, path, refresh=False):
    """Statistics of `split`, read from `path` when present, otherwise computed and written there."""
    if not refresh and os.path.exists(path):
        stats = load_stats(path)
        log.debug("normalization statistics read", path=os.fspath(path))
        return stats
    stats = channel_statistics(split)
    save_stats(stats, path)
    log.info("normalization statistics computed", path=os.fspath(path), mean=stats.mean, std=stats.std)
    return stats


def normalize(images, stats, dtype=None):
    """
    Standardizes uint8 images (N, 3, H, W) channel by channel: (x / 255 - mean) / std.
    Accepts a numpy array or a torch tensor; returns a torch tensor.
    """
    dtype = DEFAULT_DTYPE if dtype is None else dtype
    x = torch.as_tensor(np.asarray(images)).to(torch.float64) / 255.0
    mean = torch.tensor(stats.mean, dtype=torch.float64).view(1, -1, 1, 1)
    std = torch.tensor(stats.std, dtype=torch.float64).view(1, -1, 1, 1)
    return ((x - mean) / std).to(dtype)
