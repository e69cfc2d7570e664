"""Training configuration: typed keys, flat key/value config files, overrides.

Config files are plain text, one ``key = value`` per line, ``#`` comments
allowed. CLI overrides win over file values, file values over defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import UsageError


@dataclass
class TrainConfig:
    lr: float = 1e-5
    margin: float = 1.0
    tau: float = 0.7
    K: int = 3
    n: int = 1
    T: int = 1
    temperature: float = 1.0
    w_z: float = 1.0
    w_mask: float = 1.0
    max_epochs: int = 500
    seed: int = 0
    k: int = 2
    d_edge: int = 128
    d_z: int = 100
    L: int = 3
    # artifact knobs beyond the core hyperparameters
    val_every: int = 50
    patience: int = 10
    n_cand: int = 50
    eval_z_samples: int = 1
    max_queries: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.margin <= 0:
            raise UsageError(f"margin must be > 0, got {self.margin}")
        if not 0.0 < self.tau < 1.0:
            raise UsageError(f"tau must lie in (0, 1), got {self.tau}")
        if self.T < 1:
            raise UsageError(f"T must be >= 1, got {self.T}")
        if self.temperature <= 0:
            raise UsageError(f"temperature must be > 0, got {self.temperature}")
        for key in ("K", "n", "k", "d_edge", "d_z", "L"):
            if getattr(self, key) < 1:
                raise UsageError(f"{key} must be a positive integer, got {getattr(self, key)}")
        if self.threads < 1:
            raise UsageError(f"threads must be >= 1, got {self.threads}")


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind in ("int", int):
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, raw = line.partition("=")
        else:
            key, _, raw = line.partition(" ")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_TYPES:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        if not raw:
            raise UsageError(f"config line {lineno}: key {key!r} has no value")
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, overrides: dict | None = None) -> TrainConfig:
    values = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELD_TYPES:
            raise UsageError(f"unknown config key {key!r}")
        values[key] = val
    return TrainConfig(**values)
