"""Run configuration: defaults, file loading, resolved snapshots.

Configs combine four sections (data, pcmci, model, train) plus run-level
fields. TOML and JSON files are accepted; every command writes the resolved
configuration back to its output directory so a run can be reproduced from
the snapshot alone.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .models import MODEL_KINDS, ModelConfig
from .synthdata import PRESET_NAMES
from .training import TrainConfig

__all__ = ["DataSection", "PcmciSection", "RunConfig", "load_config"]


@dataclass
class DataSection:
    preset: str = "fig6-default"
    dataset_path: str | None = None
    t_fine: int = 8000
    l_local: int = 16
    l_oci: int = 6

    def __post_init__(self) -> None:
        if self.dataset_path is None and self.preset not in PRESET_NAMES:
            raise ConfigError(
                f"unknown preset {self.preset!r}; choose from {PRESET_NAMES}"
            )


@dataclass
class PcmciSection:
    tau_max: int = 6
    alpha: float = 0.05
    alpha_pc: float = 0.2
    p_max: int = 10
    p_x: int = 10
    correction: str = "none"
    target_autolinks: bool = False
    season_length: int = 12

    def __post_init__(self) -> None:
        if self.correction not in ("none", "fdr_bh"):
            raise ConfigError("correction must be 'none' or 'fdr_bh'")
        if self.tau_max < 1:
            raise ConfigError("tau_max must be >= 1")


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/latest"
    model: str = "gnn_causal"
    horizon: int = 1
    hidden_dim: int = 32
    gnn_hidden: int = 64
    leaky_slope: float = 0.01
    n_permutations: int = 500
    n_background: int = 64
    data: DataSection = field(default_factory=DataSection)
    pcmci: PcmciSection = field(default_factory=PcmciSection)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {MODEL_KINDS}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")

    def model_config(self, c_local: int, c_oci: int) -> ModelConfig:
        return ModelConfig(
            c_local=c_local,
            c_oci=c_oci,
            l_local=self.data.l_local,
            l_oci=self.data.l_oci,
            horizon=self.horizon,
            hidden_dim=self.hidden_dim,
            gnn_hidden=self.gnn_hidden,
            leaky_slope=self.leaky_slope,
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out_dir": self.out_dir,
            "model": self.model,
            "horizon": self.horizon,
            "hidden_dim": self.hidden_dim,
            "gnn_hidden": self.gnn_hidden,
            "leaky_slope": self.leaky_slope,
            "n_permutations": self.n_permutations,
            "n_background": self.n_background,
            "data": dataclasses.asdict(self.data),
            "pcmci": dataclasses.asdict(self.pcmci),
            "train": self.train.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        d = dict(d)
        data = DataSection(**d.pop("data", {}))
        pcmci = PcmciSection(**d.pop("pcmci", {}))
        train = TrainConfig.from_dict(d.pop("train", {}))
        try:
            return RunConfig(data=data, pcmci=pcmci, train=train, **d)
        except TypeError as exc:
            raise ConfigError(f"invalid config field: {exc}") from exc

    def snapshot(self, out_dir: Path) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(
            json.dumps(self.to_dict(), indent=2, sort_keys=True)
        )


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Read TOML/JSON config (optional) and apply non-None CLI overrides."""
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        if path.suffix == ".toml":
            raw = tomllib.loads(path.read_text())
        elif path.suffix == ".json":
            raw = json.loads(path.read_text())
        else:
            raise ConfigError("config must be a .toml or .json file")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("preset", "dataset_path", "t_fine", "l_local", "l_oci"):
            raw.setdefault("data", {})[key] = value
        else:
            raw[key] = value
    return RunConfig.from_dict(raw)
