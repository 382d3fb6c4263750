"""Configuration files and seed derivation."""

from __future__ import annotations

import copy
import functools
import hashlib
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import IoError, ScenforgeError

TOOL_VERSION = "0.1.0"


def stable_hash(*parts) -> int:
    """64-bit hash that is stable across processes (unlike ``hash``)."""
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big")


def derive_rng(root_seed: int, *identity) -> np.random.Generator:
    """Independent generator for one unit of work (block, cluster, subtree)."""
    return np.random.default_rng([int(root_seed) & 0xFFFFFFFFFFFFFFFF, stable_hash(*identity)])


def read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror or exc}") from None


def _check_operator_config(cfg: dict) -> dict:
    try:
        ops = cfg["operators"]
        cats = cfg["categories"]
        for name in ("TSM_speed", "DTM", "VPM", "WPM", "DM", "NCM", "WM", "TSM_signal", "OIM"):
            if name not in ops:
                raise ScenforgeError(f"operator config lacks {name}")
        if cfg["gaussian"]["sigma_fraction"] <= 0:
            raise ScenforgeError("gaussian sigma_fraction must be positive")
        for cat in ops["NCM"]["literals"]:
            if cat not in cats:
                raise ScenforgeError(f"NCM literal {cat!r} has no category defaults")
        if int(cfg.get("variants_per_block", 2)) < 1:
            raise ScenforgeError("variants_per_block must be >= 1")
    except (KeyError, TypeError) as exc:
        raise ScenforgeError(f"malformed operator config: missing {exc}") from None
    return cfg


@functools.lru_cache(maxsize=None)
def _default_operator_text() -> str:
    return resources.files("scenforge.data").joinpath("operators.json").read_text(encoding="utf-8")


def load_operator_config(path: Optional[str | Path] = None) -> dict:
    """Operator parameters; the shipped file mirrors the published defaults."""
    text = _default_operator_text() if path is None else read_text(path)
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenforgeError(f"operator config is not JSON: {exc}") from None
    return _check_operator_config(cfg)


@functools.lru_cache(maxsize=None)
def _default_operator_config() -> dict:
    return load_operator_config()


def default_operator_config() -> dict:
    return copy.deepcopy(_default_operator_config())


@dataclass
class OracleThresholds:
    jerk_interval: float = 0.01
    jerk_band: tuple = (0.005, 0.015)
    collision_jerk: float = 300.0
    smooth_jerk: float = 0.9
    smooth_yaw_deg: float = 10.0
    window: float = 1.0
    t_start: float = 10.0
    eps_move: float = 0.5
    eps_goal: float = 5.0
    min_support: int = 1


@dataclass
class PipelineConfig:
    map_path: Optional[str] = None
    schema_catalog: Optional[str] = None
    operator_config: Optional[str] = None
    output_dir: str = "out"
    seed: int = 0
    backend: str = "fixture"
    transcript: Optional[str] = None
    retention: float = 0.5
    jobs: int = 1
    stop_time: float = 60.0
    oracle: OracleThresholds = field(default_factory=OracleThresholds)

    def __post_init__(self):
        for name in ("map_path", "schema_catalog", "operator_config", "transcript"):
            p = getattr(self, name)
            if p is not None and not Path(p).exists():
                raise IoError(f"{name} refers to missing file {p}")
        if not 0 < self.retention <= 1:
            raise ScenforgeError("retention must lie in (0, 1]")


def load_pipeline_config(path: Optional[str | Path]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        raw = json.loads(read_text(path))
    except json.JSONDecodeError as exc:
        raise ScenforgeError(f"config {path} is not JSON: {exc}") from None
    base = Path(path).resolve().parent
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ScenforgeError(f"unknown config keys: {sorted(unknown)}")
    oracle = OracleThresholds(**raw.pop("oracle", {}))
    for key in ("map_path", "schema_catalog", "operator_config", "transcript"):
        if raw.get(key) is not None:
            raw[key] = str((base / raw[key]).resolve())
    return PipelineConfig(oracle=oracle, **raw)
