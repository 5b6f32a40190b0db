import random
from typing import Any, Dict, List, Optional
import numpy as np
import torch

from errors import ConfigError
from constants import (
    Purpose, Architecture, LossNorm, Optimizer,
    DEFAULT_SEED, DEFAULT_KAPPA, DEFAULT_BETA, DEFAULT_BAND_LIMIT, DEFAULT_T, DEFAULT_M, DEFAULT_OUT_DIR
)

device = torch.device("cpu")

def initialize_seeds(seed_num: int):
    random.seed(seed_num)
    torch.manual_seed(seed_num)

def rng_stream(seed: int, purpose: Purpose, sample_id: int = 0) -> np.random.Generator:
    """
    Counter-based stream for (seed, purpose, sample_id)
    The Philox key is derived from the master seed with (purpose, sample_id) as spawn key, and the counter starts at 0,
    so any sample's stream can be rebuilt without generating the ones before it
    """
    seed_seq = np.random.SeedSequence(entropy=seed, spawn_key=(int(purpose), int(sample_id)))
    key = seed_seq.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))

def torch_seed(seed: int, purpose: Purpose) -> int:
    return int(rng_stream(seed, purpose).integers(0, 2 ** 62))

def enum_choices(enum):
    return [choice.value for choice in enum]

def enum_value_to_member(value, enum):
    return next((member for member in enum if member.value == value), None)

def _lookup(options: dict, path: str, default: Any):
    node: Any = options
    for key in path.split("."):
        if not isinstance(node, dict) or key not in node:
            return default
        node = node[key]
    return node

class TrainConfig:
    def __init__(self, options: dict):
        self.n_samples: int = options.get("n_samples", 1000)
        self.epochs: int = options.get("epochs", 20)
        self.batch_size: int = options.get("batch_size", 256)
        self.optim: str = options.get("optim", Optimizer.SGD.value)
        self.lr: float = options.get("lr", 0.5)
        self.clip_norm: Optional[float] = options.get("clip_norm", 10.0)
        self.loss_norm: str = options.get("loss_norm", LossNorm.CM.value)
        self.architecture: str = options.get("architecture", Architecture.PER_TIME_AFFINE.value)
        self.diagonal: bool = options.get("diagonal", True)
        self.hidden_size: int = options.get("hidden_size", 64)
        self.num_layers: int = options.get("num_layers", 2)
        self.fixed_dataset: bool = options.get("fixed_dataset", False)

    def as_dict(self):
        return dict(self.__dict__)

    def update(self, options: dict):
        self.__dict__.update(options)

    def validate(self, num_times: int, prefix: str = "train"):
        if self.n_samples < 1:
            raise ConfigError("must be >= 1", f"{prefix}.n_samples")
        if self.epochs < 1:
            raise ConfigError("must be >= 1", f"{prefix}.epochs")
        if not self.lr > 0:
            raise ConfigError("must be > 0", f"{prefix}.lr")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigError("must be > 0 or null", f"{prefix}.clip_norm")
        if self.batch_size < 1 or self.batch_size > self.n_samples * num_times:
            raise ConfigError(f"must be in [1, n_samples * M] = [1, {self.n_samples * num_times}]", f"{prefix}.batch_size")
        if self.optim not in enum_choices(Optimizer):
            raise ConfigError(f"must be one of {enum_choices(Optimizer)}", f"{prefix}.optim")
        if self.loss_norm not in enum_choices(LossNorm):
            raise ConfigError(f"must be one of {enum_choices(LossNorm)}", f"{prefix}.loss_norm")
        if self.architecture not in enum_choices(Architecture):
            raise ConfigError(f"must be one of {enum_choices(Architecture)}", f"{prefix}.architecture")
        if self.hidden_size < 1:
            raise ConfigError("must be >= 1", f"{prefix}.hidden_size")
        if self.num_layers not in (1, 2):
            raise ConfigError("must be 1 or 2", f"{prefix}.num_layers")

class RunOptions:
    """
    Run configuration, read from the nested JSON config; CLI flags override through update()
    """
    def __init__(self, options: dict):
        self.kappa: float = _lookup(options, "matern.kappa", DEFAULT_KAPPA)
        self.beta: float = _lookup(options, "matern.beta", DEFAULT_BETA)
        self.band_limit: int = options.get("band_limit", DEFAULT_BAND_LIMIT)
        self.spectrum_csv: Optional[str] = options.get("spectrum_csv", None)
        self.T: float = _lookup(options, "time.T", DEFAULT_T)
        self.M: int = _lookup(options, "time.M", DEFAULT_M)
        self.data: Optional[dict] = options.get("data", None)
        self.train = TrainConfig(options.get("train", {}))
        self.n_generate: int = _lookup(options, "generation.n_samples", 100)
        self.emit_grid: bool = _lookup(options, "generation.grid", False)
        self.n_mc: int = _lookup(options, "verify.n_mc", 100000)
        self.score_offset: float = _lookup(options, "verify.score_offset", 0.0)
        self.h_sweep: List[float] = _lookup(options, "verify.h_sweep", [0.2, 0.1, 0.05, 0.025])
        self.n_fit_samples: int = _lookup(options, "verify.n_fit_samples", 10000)
        self.seed: int = options.get("seed", DEFAULT_SEED)
        self.out_dir: str = options.get("out_dir", DEFAULT_OUT_DIR)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "matern": {"kappa": self.kappa, "beta": self.beta},
            "band_limit": self.band_limit,
            "spectrum_csv": self.spectrum_csv,
            "time": {"T": self.T, "M": self.M},
            "data": self.data,
            "train": self.train.as_dict(),
            "generation": {"n_samples": self.n_generate, "grid": self.emit_grid},
            "verify": {"n_mc": self.n_mc, "score_offset": self.score_offset, "h_sweep": self.h_sweep, "n_fit_samples": self.n_fit_samples},
            "seed": self.seed,
            "out_dir": self.out_dir,
        }

    def update(self, options: dict):
        for key, val in options.items():
            if key.startswith("train."):
                self.train.update({key[len("train."):]: val})
            else:
                setattr(self, key, val)

    def validate(self):
        if not self.kappa > 0:
            raise ConfigError("must be > 0", "matern.kappa")
        if not self.beta > 0.5:
            raise ConfigError("must be > 0.5", "matern.beta")
        if not isinstance(self.band_limit, int) or self.band_limit < 0:
            raise ConfigError("must be an integer >= 0", "band_limit")
        if not self.T > 0:
            raise ConfigError("must be > 0", "time.T")
        if not isinstance(self.M, int) or self.M < 1:
            raise ConfigError("must be an integer >= 1", "time.M")
        if self.n_generate < 0:
            raise ConfigError("must be >= 0", "generation.n_samples")
        if self.n_mc < 2:
            raise ConfigError("must be >= 2", "verify.n_mc")
        if self.n_fit_samples < 2:
            raise ConfigError("must be >= 2", "verify.n_fit_samples")
        if any(not step > 0 for step in self.h_sweep):
            raise ConfigError("all steps must be > 0", "verify.h_sweep")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("must be an unsigned 64-bit integer", "seed")
        self.train.validate(self.M)
