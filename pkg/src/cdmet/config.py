"""Run configuration: defaults <- config file <- CLI flags.

The config file is flat ``key = value`` text ('#' comments allowed); keys
mirror the CLI flag names 1:1 with underscores, so recipes diff cleanly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps this to exit code 2."""


@dataclass
class RunConfig:
    nm_per_px_x: float = 1.0
    nm_per_px_y: float = 1.0
    threshold: int = 128
    min_area: int = 0
    jump_threshold: float = 5.0
    mid_fraction: float = 0.5
    noise_floor: float = 1.0
    out_dir: Path = Path(".")
    jobs: int = 1
    figures: bool = True

    def validate(self) -> None:
        if not (math.isfinite(self.nm_per_px_x) and self.nm_per_px_x > 0):
            raise ConfigError(f"nm_per_px_x must be positive, got {self.nm_per_px_x}")
        if not (math.isfinite(self.nm_per_px_y) and self.nm_per_px_y > 0):
            raise ConfigError(f"nm_per_px_y must be positive, got {self.nm_per_px_y}")
        if not 0 <= self.threshold <= 255:
            raise ConfigError(f"threshold must be in [0, 255], got {self.threshold}")
        if self.min_area < 0:
            raise ConfigError(f"min_area must be >= 0, got {self.min_area}")
        if self.jump_threshold <= 0:
            raise ConfigError(f"jump_threshold must be > 0, got {self.jump_threshold}")
        if not 0.0 <= self.mid_fraction <= 1.0:
            raise ConfigError(f"mid_fraction must be in [0, 1], got {self.mid_fraction}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read flat ``key = value`` lines; later keys override earlier ones."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = parts
        values[key.strip()] = value.strip()
    return values


def build_run_config(file_values: dict[str, str], cli_values: dict) -> RunConfig:
    """Layer config-file values then non-None CLI overrides onto defaults."""
    cfg = RunConfig()
    known = {f.name: f for f in fields(RunConfig)}
    for key, raw in file_values.items():
        if key not in known:
            continue  # synth spec keys etc. live in the same file format
        setattr(cfg, key, _coerce(key, raw, known[key].type))
    for key, value in cli_values.items():
        if key in known and value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _coerce(key: str, raw: str, type_name: str):
    try:
        if type_name == "int":
            return int(raw)
        if type_name == "float":
            return float(raw)
        if type_name == "bool":
            return _BOOL_WORDS[str(raw).lower()]
        if type_name == "Path":
            return Path(raw)
    except (ValueError, KeyError):
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw
