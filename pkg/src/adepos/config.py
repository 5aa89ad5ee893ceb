"""Run configuration and master-seed expansion.

Config files are INI with a single ``[run]`` section; every key is optional::

    [run]
    manifest = data/manifest.ini
    L = 20
    n_max = 9
    n_min = 1
    k = 1.0
    c = 100.0
    n0 =                ; empty: same as L
    bits = 16           ; empty: floating-point inference
    frac =              ; empty: bits - 4
    seed = 0
    tol = 0.001
    window = 50
    norm_windows = 100
    max_train =         ; empty: no cap besides the stream length
    replicas = 1
    mode = boundary
    out = out
"""

from __future__ import annotations

import configparser
import zlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .elm import BOUNDARY, MODES
from .ensemble import TrainConfig, safe_base_seed
from .fixedpoint import FixedFormat


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    manifest: str | None = None
    L: int = 20
    n_max: int = 9
    n_min: int = 1
    k: float = 1.0
    c: float = 100.0
    n0: int | None = None
    bits: int | None = 16
    frac: int | None = None
    seed: int = 0
    tol: float = 1e-3
    window: int = 50
    norm_windows: int = 100
    max_train: int | None = None
    replicas: int = 1
    mode: str = BOUNDARY
    out: str = "out"

    def __post_init__(self):
        if self.L < 1:
            raise ConfigError(f"L must be positive, got {self.L}")
        for name in ("n_max", "n_min"):
            v = getattr(self, name)
            if v < 1 or v % 2 == 0:
                raise ConfigError(f"{name} must be a positive odd number, got {v}")
        if self.n_min > self.n_max:
            raise ConfigError("n_min must not exceed n_max")
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if not self.c > 0:
            raise ConfigError("c must be positive")
        if self.n0 is not None and self.n0 < self.L:
            raise ConfigError(f"n0 must be >= L = {self.L}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.norm_windows < 2:
            raise ConfigError("norm_windows must be >= 2")
        self.fixed_format()  # validates bits / frac

    def fixed_format(self) -> FixedFormat | None:
        if self.bits is None:
            return None
        try:
            return FixedFormat(self.bits, self.frac)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def train_config(self) -> TrainConfig:
        return TrainConfig(n_learners=self.n_max, L=self.L, mode=self.mode, c=self.c, n0=self.n0,
                           window=self.window, tol=self.tol, max_samples=self.max_train)

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse(name: str, text: str):
    kind = _TYPES[name]
    text = text.strip()
    if "None" in kind and text == "":
        return None
    base = kind.split("|")[0].strip()
    try:
        return {"int": int, "float": float, "str": str}[base](text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None


def load_config(path: str | Path) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";",))
    parser.optionxform = str  # keep "L" upper case
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read config file {path}")
    if not parser.has_section("run"):
        raise ConfigError(f"{path}: missing [run] section")
    values = {}
    for key, text in parser["run"].items():
        if key not in _TYPES:
            raise ConfigError(f"{path}: unknown key {key!r}")
        values[key] = _parse(key, text)
    return RunConfig(**values)


def _format(value) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def save_config(config: RunConfig, path: str | Path) -> None:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["run"] = {f.name: _format(getattr(config, f.name)) for f in fields(RunConfig)}
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


def derive_seed(master: int, *keys) -> int:
    """Deterministic 32-bit seed from a master seed and any str/int keys."""
    words = [int(master) & 0xFFFFFFFF]
    for k in keys:
        words.append(zlib.crc32(k.encode("utf-8")) if isinstance(k, str) else int(k) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def ensemble_seed(master: int, bearing_id: str, replica: int, n_learners: int) -> int:
    """LFSR base seed for one bearing's ensemble in one replica."""
    return safe_base_seed(derive_seed(master, "ensemble", bearing_id, replica) & 0xFFFF, n_learners)
