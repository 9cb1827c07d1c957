"""JSON experiment configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .channels import Iid, model_from_dict
from .system_model import LtiSystem

FORMATS = ("json", "csv")


class ConfigError(ValueError):
    pass


@dataclass
class RunOptions:
    horizon: int = 3000
    num_paths: int = 200
    master_seed: int = 0
    C_list: list = field(default_factory=lambda: [1e6])
    k0_fraction: float = 0.5
    horizons: list | None = None
    burn_in: int = 0
    export_traces: int = 0

    def __post_init__(self):
        if int(self.horizon) < 1:
            raise ConfigError("run.horizon must be >= 1")
        if int(self.num_paths) < 1:
            raise ConfigError("run.num_paths must be >= 1")
        if not self.C_list:
            raise ConfigError("run.C_list must be non-empty")
        if list(self.C_list) != sorted(self.C_list):
            raise ConfigError("run.C_list must be sorted ascending")
        if not 0.0 < float(self.k0_fraction) <= 1.0:
            raise ConfigError("run.k0_fraction must lie in (0, 1]")
        if not 0 <= int(self.burn_in) < int(self.horizon):
            raise ConfigError("run.burn_in must lie in [0, horizon)")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("run.master_seed must be an unsigned 64-bit integer")
        self.horizon = int(self.horizon)
        self.num_paths = int(self.num_paths)
        self.master_seed = int(self.master_seed)
        self.burn_in = int(self.burn_in)
        self.export_traces = int(self.export_traces)
        self.C_list = [float(c) for c in self.C_list]
        self.k0_fraction = float(self.k0_fraction)
        if self.horizons is not None:
            self.horizons = sorted(int(h) for h in self.horizons)


@dataclass
class OutputOptions:
    directory: str = "out"
    formats: list = field(default_factory=lambda: list(FORMATS))
    figures: bool = False

    def __post_init__(self):
        bad = set(self.formats) - set(FORMATS)
        if bad:
            raise ConfigError(f"unknown output formats {sorted(bad)}")
        self.formats = [f for f in FORMATS if f in self.formats]


@dataclass
class ExperimentConfig:
    system: LtiSystem
    channel: object = field(default_factory=lambda: Iid(0.5))
    run: RunOptions = field(default_factory=RunOptions)
    output: OutputOptions = field(default_factory=OutputOptions)
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d, base_dir="."):
        if not isinstance(d, dict) or "system" not in d:
            raise ConfigError("config needs a 'system' entry")
        src = d["system"]
        if isinstance(src, str):
            path = Path(base_dir) / src
            try:
                src = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        system = LtiSystem.from_dict(src)
        channel = model_from_dict(d.get("channel", {"type": "iid", "p": 0.5}))
        try:
            run = RunOptions(**d.get("run", {}))
            output = OutputOptions(**d.get("output", {}))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        tol = dict(d.get("tolerances", {}))
        return cls(system=system, channel=channel, run=run, output=output, tolerances=tol)

    def to_dict(self):
        return {
            "system": self.system.to_dict(),
            "channel": self.channel.to_dict(),
            "run": dict(self.run.__dict__),
            "output": dict(self.output.__dict__),
            "tolerances": dict(self.tolerances),
        }


def load_config(path) -> ExperimentConfig:
    """Read a config file; OSError and JSON errors propagate to the caller."""
    path = Path(path)
    data = json.loads(path.read_text())
    return ExperimentConfig.from_dict(data, base_dir=path.parent)
