"""
Configuration management for the application.

Defaults ship in config/csl_config.yaml; a user file (JSON or YAML) merges
over them and command-line flags win over both.
"""

import copy
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, Optional

import yaml

from logic.errors import ConfigError, InputPathError
from logic.file_ops import FileOperations
from logic.train import TrainConfig

# Constants - handle paths for both development and compiled environments
if getattr(sys, 'frozen', False):
    # Running as compiled executable
    base_dir = os.path.dirname(sys.executable)
    DEFAULTS_FILE = os.path.join(base_dir, "config", "csl_config.yaml")
else:
    # Running in development
    DEFAULTS_FILE = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                                 "config", "csl_config.yaml")

RUN_CONFIG_NAME = "run_config.json"

COMMANDS = ("train", "encode", "classify", "cluster", "detect", "gradcheck",
            "sweep-tau", "explain", "synth")

# Training batch size of commands that differ from train.batch_size, used
# when neither the user file nor a flag sets one
COMMAND_BATCH_SIZES = {"detect": 256}


def _section(cls, data, name):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {name} option(s): {sorted(unknown)}")
    return cls(**data)


@dataclass
class PathOptions:
    dataset: Optional[str] = None
    test: Optional[str] = None
    checkpoint: Optional[str] = None
    output: str = "runs"


@dataclass
class DataOptions:
    dims: int = 1
    labeled: bool = False
    normalize: bool = True

    def validate(self):
        if self.dims < 1:
            raise ConfigError("dims must be at least 1")


@dataclass
class EvaluateOptions:
    svm_c: float = 1.0
    svm_iter: int = 1000
    k: Optional[int] = None
    kmeans_restarts: int = 10
    nmi_average: str = "geometric"
    window: int = 25
    stride: Optional[int] = None
    score_stride: int = 1
    n_trees: int = 100
    psi: int = 256
    raw_baseline: bool = False
    per_scale: bool = False

    def validate(self):
        if self.svm_c <= 0 or self.svm_iter < 1:
            raise ConfigError("svm_c must be positive and svm_iter at least 1")
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be at least 1")
        if self.nmi_average not in ("geometric", "arithmetic"):
            raise ConfigError("nmi_average must be 'geometric' or 'arithmetic'")
        if self.window < 2:
            raise ConfigError("window must be at least 2")
        if (self.stride is not None and self.stride < 1) or self.score_stride < 1:
            raise ConfigError("window strides must be at least 1")
        if self.n_trees < 1 or self.psi < 2 or self.kmeans_restarts < 1:
            raise ConfigError("n_trees, psi and kmeans_restarts must be positive")


@dataclass
class SweepOptions:
    taus: List[float] = field(default_factory=lambda: [0.1, 0.01, 0.001])
    report: str = "tau_sweep.csv"

    def validate(self):
        if not self.taus or any(t <= 0 for t in self.taus):
            raise ConfigError("taus must be a non-empty list of positive values")


@dataclass
class GradcheckOptions:
    instances: int = 20
    tolerance: float = 1e-4
    components: Optional[List[str]] = None

    def validate(self):
        if self.instances < 1 or self.tolerance <= 0:
            raise ConfigError("gradcheck needs instances >= 1 and a positive tolerance")


@dataclass
class RunConfig:
    command: str = "train"
    paths: PathOptions = field(default_factory=PathOptions)
    data: DataOptions = field(default_factory=DataOptions)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluate: EvaluateOptions = field(default_factory=EvaluateOptions)
    sweep: SweepOptions = field(default_factory=SweepOptions)
    gradcheck: GradcheckOptions = field(default_factory=GradcheckOptions)

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        self.data.validate()
        self.train.validate()
        self.evaluate.validate()
        self.sweep.validate()
        self.gradcheck.validate()
        return self

    def to_dict(self):
        return {
            "command": self.command,
            "paths": dict(self.paths.__dict__),
            "data": dict(self.data.__dict__),
            "train": self.train.to_dict(),
            "evaluate": dict(self.evaluate.__dict__),
            "sweep": copy.deepcopy(self.sweep.__dict__),
            "gradcheck": copy.deepcopy(self.gradcheck.__dict__),
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        return cls(
            command=data.get("command", "train"),
            paths=_section(PathOptions, data.get("paths", {}), "paths"),
            data=_section(DataOptions, data.get("data", {}), "data"),
            train=TrainConfig.from_dict(data.get("train", {})),
            evaluate=_section(EvaluateOptions, data.get("evaluate", {}), "evaluate"),
            sweep=_section(SweepOptions, data.get("sweep", {}), "sweep"),
            gradcheck=_section(GradcheckOptions, data.get("gradcheck", {}), "gradcheck"),
        )


def canonical_json(run_config):
    return json.dumps(run_config.to_dict(), sort_keys=True, separators=(",", ":"))


def config_hash(run_config):
    """First 16 hex chars of the SHA-256 of the canonical JSON form"""
    return hashlib.sha256(canonical_json(run_config).encode("utf-8")).hexdigest()[:16]


def deep_merge(base, override):
    """Recursively merge override into a copy of base; override wins"""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ConfigManager:
    """Manages application configuration"""

    def __init__(self, app, defaults_file=DEFAULTS_FILE):
        self.app = app
        self.defaults_file = Path(defaults_file)

    def load_defaults(self):
        """Load defaults from YAML file"""
        try:
            if self.defaults_file.exists():
                with open(self.defaults_file, 'r', encoding='utf-8') as f:
                    return yaml.safe_load(f) or {}
            self.app.log_message(f"⚠️ Configuration file not found: {self.defaults_file}")
        except yaml.YAMLError as e:
            self.app.log_message(f"❌ Error loading config: {str(e)}")
        return self._get_default_config()

    def _get_default_config(self):
        """Get default configuration"""
        return RunConfig().to_dict()

    def load_user_config(self, path):
        """Read a JSON (.json) or YAML (.yaml/.yml) config file"""
        path = Path(path)
        if not path.is_file():
            raise InputPathError(path)
        try:
            with open(path, 'r', encoding='utf-8') as f:
                if path.suffix.lower() in (".yaml", ".yml"):
                    data = yaml.safe_load(f) or {}
                else:
                    data = json.load(f)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot parse config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a mapping at top level")
        self.app.log_message(f"📁 Loaded configuration from {path}")
        return data

    def build(self, command, config_path=None, overrides=None):
        """Defaults <- user file <- flag overrides, validated"""
        overrides = overrides or {}
        user = self.load_user_config(config_path) if config_path is not None else {}
        merged = deep_merge(deep_merge(self.load_defaults(), user), overrides)
        if command in COMMAND_BATCH_SIZES and not any(
                "batch_size" in (layer.get("train") or {}) for layer in (user, overrides)):
            merged.setdefault("train", {})["batch_size"] = COMMAND_BATCH_SIZES[command]
        merged["command"] = command
        return RunConfig.from_dict(merged).validate()

    def save_config(self, run_config, out_dir):
        """Write the resolved configuration next to the command outputs"""
        path = Path(out_dir) / RUN_CONFIG_NAME
        text = json.dumps(run_config.to_dict(), indent=2, sort_keys=True) + "\n"
        FileOperations(self.app).atomic_write_text(path, text)
        self.app.log_message(f"💾 Configuration saved (hash {config_hash(run_config)})")
        return path
