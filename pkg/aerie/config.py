"""Configuration management for aerie experiments."""

from __future__ import annotations

import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Any, Iterable, Optional

import tomli_w
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from aerie.agents import ModelConfig
from aerie.channel import ChannelParams
from aerie.environment import ScenarioConfig
from aerie.errors import ConfigurationError
from aerie.stochastics import NoiseConfig
from aerie.trainer import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUT_DIR_ENV = "AERIE_OUT_DIR"


class OutputConfig(BaseModel):
    """Where a run writes its files."""

    model_config = ConfigDict(extra="forbid")

    out_dir: Path = Field(default=Path("runs"), description="Directory for metrics, summaries and checkpoints")
    metrics_file: str = Field(default="metrics.csv", description="Per-epoch metrics CSV name")
    summary_file: str = Field(default="summary.json", description="Run summary JSON name")
    checkpoint_file: str = Field(default="checkpoint.json", description="Checkpoint JSON name")
    trace_file: str = Field(default="trace.csv", description="Per-step inference trace CSV name")


class ExperimentConfig(BaseModel):
    """Every setting of a run: scenario, noise, channel, networks, training and output."""

    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=0, ge=0, description="Root seed of all random streams")
    scenario: ScenarioConfig = Field(default_factory=ScenarioConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    channel: ChannelParams = Field(default_factory=ChannelParams)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def fingerprint(self) -> str:
        """SHA-256 of the canonical JSON of every setting that affects results."""
        document = self.model_dump(mode="json", exclude={"output"})
        canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _field_path(error: dict[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ()))


def validate(data: dict[str, Any]) -> ExperimentConfig:
    """Build an ExperimentConfig, reporting the first failure with its dotted field path."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        path = _field_path(first)
        extra = len(exc.errors()) - 1
        suffix = f" (and {extra} more)" if extra else ""
        raise ConfigurationError(f"{first['msg']}{suffix}", field_path=path or None) from exc


def parse_value(text: str) -> Any:
    """A TOML literal (number, bool, array, quoted string), or the raw text."""
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(data: dict[str, Any], assignment: str) -> dict[str, Any]:
    if "=" not in assignment:
        raise ConfigurationError(f"override {assignment!r} is not of the form key=value")
    key, _, raw = assignment.partition("=")
    parts = [p.strip() for p in key.strip().split(".")]
    if not all(parts):
        raise ConfigurationError(f"override key {key!r} is empty or malformed")
    node = data
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigurationError(f"{part} is not a section", field_path=key.strip())
        node = child
    node[parts[-1]] = parse_value(raw.strip())
    return data


class ConfigManager:
    """Loads, overrides, validates and dumps experiment configuration."""

    def __init__(self, config_path: Optional[Path] = None, env_file: Optional[Path] = None):
        self.config_path = Path(config_path) if config_path else None
        self.env_file = env_file

    def exists(self) -> bool:
        return self.config_path is not None and self.config_path.exists()

    def read(self) -> dict[str, Any]:
        """Raw TOML tables of the config file; empty when no file was given."""
        if self.config_path is None:
            return {}
        if not self.config_path.exists():
            raise ConfigurationError(f"config file {self.config_path} not found")
        try:
            with open(self.config_path, "rb") as f:
                return tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{self.config_path}: {exc}") from exc

    def load(self, overrides: Iterable[str] = (), seed: Optional[int] = None, out_dir: Optional[Path] = None) -> ExperimentConfig:
        """File, then AERIE_OUT_DIR, then ``--set`` overrides, then explicit seed and output flags."""
        data = self.read()
        load_dotenv(self.env_file)
        env_out = os.environ.get(OUT_DIR_ENV)
        if env_out:
            data.setdefault("output", {})["out_dir"] = env_out
        for assignment in overrides:
            apply_override(data, assignment)
        if seed is not None:
            data["seed"] = seed
        if out_dir is not None:
            data.setdefault("output", {})["out_dir"] = str(out_dir)
        return validate(data)

    @staticmethod
    def dumps(config: ExperimentConfig) -> str:
        """Resolved config as TOML; unset automatic fields are left out."""
        return tomli_w.dumps(config.model_dump(mode="json", exclude_none=True))

    def save(self, config: ExperimentConfig, path: Optional[Path] = None) -> Path:
        path = Path(path or self.config_path or "aerie.toml")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps(config), encoding="utf-8")
        return path
