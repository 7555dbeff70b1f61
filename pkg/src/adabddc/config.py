"""Experiment configuration: JSON file with explicit keys and named presets."""

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    n: int = 32
    per_side: int = 4
    covariance: str = "brownian"  # brownian | exponential
    sigma2: float = 1.0
    eta1: float = 0.25
    eta2: float = 0.25
    expected: str = "B"  # A | B | constant:<c> | raster:<path>
    expected_seed: int = 2021
    R: int = 4
    k: int = 1
    source: float = 1.0
    pcg_tol: float = 1e-6
    pcg_max_iter: int = 200
    hidden: int = 10
    grad_min: float = 1e-6
    max_epochs: int = 20000
    train_seed: int = 0
    n_train: int = 500
    n_test: int = 100
    train_data_seed: int = 1000
    test_data_seed: int = 900000
    out: str = "runs/desk"
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.n < 2 or self.per_side < 1 or self.n % self.per_side:
            raise ConfigError(f"grid n={self.n} must be >= 2 and divisible by per_side={self.per_side}")
        if self.covariance not in ("brownian", "exponential"):
            raise ConfigError(f"unknown covariance family {self.covariance!r}")
        if not (self.sigma2 > 0 and self.eta1 > 0 and self.eta2 > 0):
            raise ConfigError("sigma2, eta1, eta2 must be positive")
        kind = self.expected.split(":", 1)[0]
        if kind not in ("A", "B", "constant", "raster"):
            raise ConfigError(f"unknown expected field {self.expected!r}")
        if self.R < 1 or self.k < 0 or self.hidden < 1:
            raise ConfigError("R >= 1, k >= 0 and hidden >= 1 required")
        edge = self.n // self.per_side - 1
        if self.k > edge:
            raise ConfigError(f"k={self.k} exceeds edge size {edge}")
        if not (self.pcg_tol > 0 and self.pcg_max_iter >= 1):
            raise ConfigError("invalid PCG settings")
        if not (self.grad_min > 0 and self.max_epochs >= 1):
            raise ConfigError("invalid training stopping criteria")
        if self.n_train < 1 or self.n_test < 0:
            raise ConfigError("invalid sample counts")
        return self

    def to_dict(self):
        return asdict(self)

    def hash(self):
        """Hash of everything that affects generated data and models (not output paths)."""
        d = self.to_dict()
        d.pop("out", None)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes):
        d = copy.deepcopy(self.to_dict())
        unknown = set(changes) - set(d)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        d.update(changes)
        return ExperimentConfig(**d).validate()


PRESETS = {
    "desk": {},
    "paper": {"n_train": 10000, "n_test": 500, "max_epochs": 1000000, "out": "runs/paper"},
}


def preset(name):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig(**PRESETS[name]).validate()


def load_config(path=None, preset_name="desk"):
    cfg = preset(preset_name)
    if path is None:
        return cfg
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    try:
        return cfg.replace(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
