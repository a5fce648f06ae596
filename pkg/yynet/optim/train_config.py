import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Tuple

from yynet.util.errors import ConfigError

CLIP_MODES = ("norm", "value")
EMA_CADENCES = ("step", "epoch")


@dataclass(frozen=True)
class TrainConfig:
    """Training recipe. Defaults are the CIFAR-10 settings."""

    max_lr: float = 1e-2
    epochs: int = 40
    batch_size: int = 64
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    clip_norm: float = 1.0
    clip_mode: str = "norm"
    ema_start_fraction: float = 0.25
    ema_avg_coeff: float = 0.1
    ema_cur_coeff: float = 0.9
    ema_cadence: str = "step"
    ema_eval: bool = True
    wd_lr_multiplier: float = 1.56
    seed: int = 0
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4
    augment: bool = True
    prefetch_depth: int = 2
    num_threads: int = 0
    checkpoint_every: int = 1
    log_every_step: bool = False
    train_subset: Optional[int] = None
    test_subset: Optional[int] = None

    def validate(self):
        if self.max_lr <= 0:
            raise ConfigError(f"max_lr must be positive but was {self.max_lr}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be non-negative but was {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive but was {self.batch_size}")
        if len(self.betas) != 2 or not all(0.0 <= b < 1.0 for b in self.betas):
            raise ConfigError(f"betas must be two numbers in [0, 1) but were {self.betas}")
        if self.eps <= 0:
            raise ConfigError(f"eps must be positive but was {self.eps}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive but was {self.clip_norm}")
        if self.clip_mode not in CLIP_MODES:
            raise ConfigError(f"clip_mode must be one of {CLIP_MODES} but was '{self.clip_mode}'")
        if self.ema_cadence not in EMA_CADENCES:
            raise ConfigError(f"ema_cadence must be one of {EMA_CADENCES} but was '{self.ema_cadence}'")
        if not 0.0 <= self.ema_start_fraction <= 1.0:
            raise ConfigError(f"ema_start_fraction must be in [0, 1] but was {self.ema_start_fraction}")
        if not math.isclose(self.ema_avg_coeff + self.ema_cur_coeff, 1.0, rel_tol=0, abs_tol=1e-12):
            raise ConfigError(
                f"ema_avg_coeff + ema_cur_coeff must be 1 but was "
                f"{self.ema_avg_coeff} + {self.ema_cur_coeff}"
            )
        if not 0.0 <= self.pct_start < 1.0:
            raise ConfigError(f"pct_start must be in [0, 1) but was {self.pct_start}")
        if self.div_factor <= 0 or self.final_div_factor <= 0:
            raise ConfigError(
                f"div_factor and final_div_factor must be positive but were "
                f"{self.div_factor} and {self.final_div_factor}"
            )
        if self.wd_lr_multiplier < 0:
            raise ConfigError(f"wd_lr_multiplier must be non-negative but was {self.wd_lr_multiplier}")
        if self.prefetch_depth < 0 or self.num_threads < 0:
            raise ConfigError("prefetch_depth and num_threads must be non-negative")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be non-negative but was {self.checkpoint_every}")
        for name in ("train_subset", "test_subset"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be positive or null but was {value}")
        return self

    @property
    def initial_lr(self):
        return self.max_lr / self.div_factor

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        result = dataclasses.asdict(self)
        result["betas"] = list(self.betas)
        return result

    @staticmethod
    def field_names():
        return [f.name for f in dataclasses.fields(TrainConfig)]

    @staticmethod
    def from_dict(values, base=None):
        base = TrainConfig() if base is None else base
        unknown = sorted(set(values) - set(TrainConfig.field_names()))
        if unknown:
            raise ConfigError(f"Unknown training config keys {unknown}")
        values = dict(values)
        if "betas" in values:
            values["betas"] = tuple(values["betas"])
        return dataclasses.replace(base, **values)
