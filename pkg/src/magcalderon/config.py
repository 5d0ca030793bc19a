"""Flat experiment configuration with strict keys and a content hash."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

__all__ = ["ExperimentConfig", "ConfigError", "load_config"]


class ConfigError(ValueError):
    """Malformed or unknown configuration entries (exit code 2)."""


@dataclass
class ExperimentConfig:
    """Everything a run depends on.

    Defaults: probe covector ``x = (1.5, -1, 0)``, ``xi = (-1, 0, 0.3)``;
    scan spacing 0.05 and probe radius 0.1 with 20 samples per point;
    Riemannian grids with 33 nodes per axis.  ``out`` and ``workers`` do
    not affect results and are left out of the hash.
    """

    command: str = ""
    scenario: str = "minkowski-disk"
    other: Optional[str] = None
    seed: int = 0
    x: list = field(default_factory=lambda: [1.5, -1.0, 0.0])
    xi: list = field(default_factory=lambda: [-1.0, 0.0, 0.3])
    point: Optional[list] = None
    k: int = 0
    direction: str = "future"
    spacing: float = 0.05
    radius: float = 0.1
    samples: int = 20
    mode: str = "em"
    delta: float = 1.0
    norm_order: int = 2
    radii: list = field(default_factory=lambda: [0.3, 0.2, 0.1, 0.05])
    lens_samples: int = 100
    grid_n: int = 33
    runge_m: int = 200
    runge_lambda: float = 1e-8
    deltas: list = field(default_factory=lambda: [0.24, 0.16, 0.10666666666666667])
    probe_points: list = field(default_factory=lambda: [[0.5, 0.5, 0.5]])
    check_boundary: bool = True
    eps_c: float = 1e-2
    eps_probe: float = 1e-2
    eps_detect: float = 1e-6
    quad_tol: float = 1e-9
    scale_c: float = 2.0
    hessian_target: list = field(default_factory=lambda: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]])
    data: str = "x1"
    name: Optional[str] = None
    out: str = "."
    workers: int = 1

    _UNHASHED = ("out", "workers")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = sorted(set(d) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.mode not in ("em", "metric", "exact"):
            raise ConfigError(f"mode must be em, metric or exact, not {self.mode!r}")
        if self.direction not in ("future", "past"):
            raise ConfigError("direction must be future or past")
        if self.samples < 1 or self.grid_n < 5 or self.radius <= 0 or self.spacing <= 0:
            raise ConfigError("samples, grid_n, radius and spacing must be positive (grid_n >= 5)")
        for name in ("x", "xi"):
            if len(getattr(self, name)) != 3:
                raise ConfigError(f"{name} needs three components")

    def to_dict(self) -> dict:
        return asdict(self)

    def hashed_dict(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in self._UNHASHED}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @property
    def hash(self) -> str:
        blob = json.dumps(self.hashed_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path: str) -> dict:
    """Read a flat JSON object; nested objects are rejected."""
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    for k, v in d.items():
        if isinstance(v, dict):
            raise ConfigError(f"config is flat; key {k!r} holds an object")
    return d
