"""Flat run configuration shared by every CLI subcommand.

Resolution order: command-line flags, then the JSON config file, then the
defaults below.  The file is a flat JSON object using the field names of
:class:`RunConfig`; unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError, ValidationError
from .graph import IngestConfig
from .metrics import SplitSpec
from .neuron import NeuronConfig
from .training import LAMBDA_SWEEP, TrainConfig


@dataclass(frozen=True)
class RunConfig:
    # data
    edges: Optional[str] = None
    labels: Optional[str] = None
    features: Optional[str] = None
    manifest: Optional[str] = None
    mode: str = "cumulative"
    num_nodes: Optional[int] = None
    num_steps: Optional[int] = None
    num_classes: Optional[int] = None
    feature_dim: int = 16
    # splits
    ratio: float = 0.4
    val_ratio: float = 0.05
    # training
    seed: int = 0
    lr: float = 0.001
    epochs: int = 100
    batch_size: int = 1024
    hidden: int = 128
    num_layers: int = 2
    optimizer: str = "adam"
    encoding: str = "bernoulli"
    patience: Optional[int] = None
    checkpoint_every: Optional[int] = None
    log_wall_time: bool = True
    lambda_values: tuple = LAMBDA_SWEEP
    # neuron
    v_th: float = 1.0
    lam: float = 1.0
    K: int = 8
    reset_mode: str = "soft"
    gamma: Optional[float] = None
    # outputs / evaluation
    out_dir: str = "dysign_out"
    checkpoint: Optional[str] = None
    mask: str = "test"

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    @classmethod
    def from_file(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a flat JSON object")
        return cls().merged(data, source=str(path))

    def merged(self, values, source="overrides"):
        unknown = set(values) - set(self.keys())
        if unknown:
            raise ConfigError(f"{source}: unknown config keys {sorted(unknown)}")
        for key, value in values.items():
            if isinstance(value, (dict, list)) and key != "lambda_values":
                raise ConfigError(f"{source}: {key} must be a scalar")
        clean = dict(values)
        if "lambda_values" in clean:
            clean["lambda_values"] = tuple(clean["lambda_values"])
        return replace(self, **clean)

    def to_dict(self):
        out = asdict(self)
        out["lambda_values"] = list(self.lambda_values)
        return out

    def neuron(self):
        return NeuronConfig(v_th=self.v_th, lam=self.lam, K=self.K, reset_mode=self.reset_mode, gamma=self.gamma)

    def ingest(self):
        return IngestConfig(
            num_nodes=self.num_nodes,
            num_steps=self.num_steps,
            num_classes=self.num_classes,
            feature_dim=self.feature_dim,
            mode=self.mode,
        )

    def split(self):
        return SplitSpec(train_ratio=self.ratio, val_ratio=self.val_ratio, seed=self.seed)

    def train(self):
        return TrainConfig(
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            hidden=self.hidden,
            num_layers=self.num_layers,
            optimizer=self.optimizer,
            seed=self.seed,
            lambda_values=self.lambda_values,
            neuron=self.neuron(),
            encoding=self.encoding,
            patience=self.patience,
            checkpoint_every=self.checkpoint_every,
            log_wall_time=self.log_wall_time,
        )

    def validate(self):
        """Build every derived config once so that bad values surface as ConfigError."""
        try:
            self.ingest()
            self.split()
            self.train()
        except (ValidationError, TypeError) as exc:
            raise ConfigError(str(exc)) from None
        if self.mask not in ("train", "val", "test"):
            raise ConfigError(f"mask must be train, val or test, got {self.mask!r}")
        return self
