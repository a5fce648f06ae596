import json
import os
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import structlog
import torch

from yynet.data.normalization import NormalizationStats
from yynet.model.model_config import ModelConfig
from yynet.model.yynet import YYNet
from yynet.optim.adamw import OptimizerState
from yynet.optim.train_config import TrainConfig
from yynet.util.errors import ConfigError, DataIOError, FormatError
from yynet.util.util import check_path_like

log = structlog.get_logger()

MAGIC = b"YYNET-CHECKPOINT 1\n"
FORMAT_VERSION = 1

# manifest dtype name -> (torch dtype, little-endian numpy dtype)
DTYPES = {
    "float32": (torch.float32, np.dtype("<f4")),
    "float64": (torch.float64, np.dtype("<f8")),
    "int64": (torch.int64, np.dtype("<i8")),
    "uint8": (torch.uint8, np.dtype("u1")),
}
DTYPE_NAMES = {torch_dtype: name for name, (torch_dtype, _) in DTYPES.items()}


def serialize_container(tensors, metadata):
    """
    Lays out a checkpoint container:
    a magic line, the decimal byte length of the manifest on its own line, the manifest
    (compact JSON with sorted keys listing name, dtype, shape, offset and size of every array, plus `metadata`),
    then the arrays as little-endian raw bytes in name order.
    """
    entries = []
    chunks = []
    offset = 0
    for name in sorted(tensors):
        tensor = tensors[name].detach().cpu().contiguous()
        if tensor.dtype not in DTYPE_NAMES:
            raise FormatError(f"Cannot store tensor {name} of dtype {tensor.dtype}")
        dtype_name = DTYPE_NAMES[tensor.dtype]
        raw = tensor.numpy().astype(DTYPES[dtype_name][1], copy=False).tobytes()
        entries.append(
            {"name": name, "dtype": dtype_name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    manifest = json.dumps(
        {"format": FORMAT_VERSION, "metadata": metadata, "tensors": entries},
        sort_keys=True,
        separators=(",", ":"),
        allow_nan=False,
    ).encode("utf-8")
    return b"".join([MAGIC, str(len(manifest)).encode("ascii"), b"\n", manifest] + chunks)


def parse_container(raw, name="<bytes>"):
    """Inverse of `serialize_container`: returns (tensors by name, metadata)."""
    if not raw.startswith(MAGIC):
        raise FormatError(f"{name} is not a yynet checkpoint")
    length_end = raw.find(b"\n", len(MAGIC))
    if length_end < 0:
        raise FormatError(f"{name} is truncated before its manifest")
    try:
        manifest_length = int(raw[len(MAGIC) : length_end].decode("ascii"))
        manifest_start = length_end + 1
        manifest = json.loads(raw[manifest_start : manifest_start + manifest_length].decode("utf-8"))
        entries = manifest["tensors"]
        metadata = manifest["metadata"]
    except (ValueError, KeyError, UnicodeDecodeError) as e:
        raise FormatError(f"{name} has a corrupt manifest: {e}") from e
    if manifest.get("format") != FORMAT_VERSION:
        raise FormatError(f"{name} has unsupported format {manifest.get('format')}")

    data = memoryview(raw)[manifest_start + manifest_length :]
    tensors = {}
    expected_offset = 0
    for entry in entries:
        try:
            dtype_name, shape, offset, nbytes = entry["dtype"], entry["shape"], entry["offset"], entry["nbytes"]
            torch_dtype, numpy_dtype = DTYPES[dtype_name]
        except KeyError as e:
            raise FormatError(f"{name} has a corrupt manifest entry {entry}") from e
        count = int(np.prod(shape, dtype=np.int64))
        if offset != expected_offset or nbytes != count * numpy_dtype.itemsize or offset + nbytes > len(data):
            raise FormatError(f"{name} is truncated or inconsistent at tensor {entry['name']}")
        array = np.frombuffer(data, dtype=numpy_dtype, count=count, offset=offset).reshape(shape)
        tensors[entry["name"]] = torch.from_numpy(array.astype(numpy_dtype.newbyteorder("="), copy=True)).to(
            torch_dtype
        )
        expected_offset = offset + nbytes
    if expected_offset != len(data):
        raise FormatError(f"{name} has {len(data) - expected_offset} unexpected trailing bytes")
    return tensors, metadata


def save_container(path, tensors, metadata):
    check_path_like(path, caller="save_container")
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    temporary = os.fspath(path) + ".tmp"
    with open(temporary, "wb") as file:
        file.write(serialize_container(tensors, metadata))
    os.replace(temporary, path)


def load_container(path):
    check_path_like(path, caller="load_container")
    try:
        with open(path, "rb") as file:
            raw = file.read()
    except OSError as e:
        raise DataIOError(f"Cannot read checkpoint {path}: {e.strerror}") from e
    return parse_container(raw, name=os.fspath(path))


@dataclass
class TrainingCheckpoint:
    """
    Everything needed to evaluate a trained model or to resume its training at an epoch boundary.
    `epoch` is the number of completed epochs and `step` the number of optimizer steps taken.
    """

    model_config: ModelConfig
    train_config: TrainConfig
    model_state: Dict[str, torch.Tensor]
    first_moments: Dict[str, torch.Tensor]
    second_moments: Dict[str, torch.Tensor]
    ema_shadow: Optional[Dict[str, torch.Tensor]]
    dropout_rng: torch.Tensor
    epoch: int
    step: int
    current_lr: float
    current_wd: float
    stats: Optional[NormalizationStats] = None

    @staticmethod
    def capture(model, state, train_config, epoch, stats=None):
        return TrainingCheckpoint(
            model_config=model.config,
            train_config=train_config,
            model_state={name: t.clone() for name, t in model.state_dict().items()},
            first_moments={name: t.clone() for name, t in state.first_moments.items()},
            second_moments={name: t.clone() for name, t in state.second_moments.items()},
            ema_shadow=None if state.ema_shadow is None else {n: t.clone() for n, t in state.ema_shadow.items()},
            dropout_rng=model.rng_state().clone(),
            epoch=epoch,
            step=state.step,
            current_lr=state.current_lr,
            current_wd=state.current_wd,
            stats=stats,
        )

    @property
    def ema_active(self):
        return self.ema_shadow is not None

    def to_container(self):
        tensors = {"rng/dropout": self.dropout_rng}
        for prefix, group in (
            ("model/", self.model_state),
            ("adam_m/", self.first_moments),
            ("adam_v/", self.second_moments),
            ("ema/", self.ema_shadow or {}),
        ):
            tensors.update({prefix + name: tensor for name, tensor in group.items()})
        metadata = {
            "model_config": self.model_config.to_dict(),
            "train_config": self.train_config.to_dict(),
            "progress": {"epoch": self.epoch, "step": self.step},
            "optimizer": {
                "current_lr": self.current_lr,
                "current_wd": self.current_wd,
                "ema_active": self.ema_active,
            },
            "normalization": None
            if self.stats is None
            else {"mean": list(self.stats.mean), "std": list(self.stats.std)},
        }
        return tensors, metadata

    @staticmethod
    def from_container(tensors, metadata, name="<checkpoint>"):
        def group(prefix):
            return {key[len(prefix) :]: t for key, t in tensors.items() if key.startswith(prefix)}

        try:
            optimizer = metadata["optimizer"]
            progress = metadata["progress"]
            normalization = metadata["normalization"]
            checkpoint = TrainingCheckpoint(
                model_config=ModelConfig.from_dict(metadata["model_config"]),
                train_config=TrainConfig.from_dict(metadata["train_config"]),
                model_state=group("model/"),
                first_moments=group("adam_m/"),
                second_moments=group("adam_v/"),
                ema_shadow=group("ema/") if optimizer["ema_active"] else None,
                dropout_rng=tensors["rng/dropout"],
                epoch=int(progress["epoch"]),
                step=int(progress["step"]),
                current_lr=float(optimizer["current_lr"]),
                current_wd=float(optimizer["current_wd"]),
                stats=None
                if normalization is None
                else NormalizationStats(tuple(normalization["mean"]), tuple(normalization["std"])),
            )
        except (KeyError, TypeError, ValueError, ConfigError) as e:
            raise FormatError(f"{name} has incomplete training metadata: {e}") from e
        return checkpoint

    def save(self, path):
        save_container(path, *self.to_container())
        log.debug("checkpoint saved", path=os.fspath(path), epoch=self.epoch, step=self.step)

    @staticmethod
    def load(path):
        tensors, metadata = load_container(path)
        return TrainingCheckpoint.from_container(tensors, metadata, name=os.fspath(path))

    def restore_model(self, dtype=None):
        """A YYNet with the saved configuration, parameters, BatchNorm statistics and dropout generator state."""
        model = YYNet(self.model_config, dtype=dtype)
        model.load_state_dict(self.model_state)
        model.set_rng_state(self.dropout_rng)
        return model

    def restore_optimizer_state(self, model):
        named_parameters = list(model.named_parameters())
        state = OptimizerState(named_parameters)
        for target, saved in ((state.first_moments, self.first_moments), (state.second_moments, self.second_moments)):
            if set(target) != set(saved):
                raise FormatError("Checkpoint optimizer moments do not match the model parameters")
            for name, tensor in target.items():
                tensor.copy_(saved[name])
        state.step = self.step
        state.current_lr = self.current_lr
        state.current_wd = self.current_wd
        if self.ema_shadow is not None:
            if set(self.ema_shadow) != set(state.first_moments):
                raise FormatError("Checkpoint EMA shadow does not match the model parameters")
            state.ema_shadow = {name: t.clone() for name, t in self.ema_shadow.items()}
        return state
