"""Layered run configuration: defaults < preset < file < command-line sets.

Config files are flat key-value text: one `key = value` per line, # for
comments. Values parse as JSON scalars (123, 1.5, true, "text"); bare
words fall back to strings. Unknown keys fail fast.
"""

from __future__ import annotations

import json
from dataclasses import asdict, fields
from pathlib import Path


class ConfigError(Exception):
    pass


def _parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_file(path: str | Path) -> dict:
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = _parse_value(value)
    return out


def parse_sets(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set needs key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        out[key.strip()] = _parse_value(value)
    return out


def layer_config(config_cls, preset: dict | None = None,
                 file_path: str | Path | None = None,
                 sets: dict | None = None):
    """Build a config dataclass from layered sources; unknown keys are errors."""
    known = {f.name for f in fields(config_cls)}
    merged = {}
    for source, values in (("preset", preset), ("config file", None if file_path is None
                                                else parse_config_file(file_path)),
                           ("command line", sets)):
        if not values:
            continue
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown {config_cls.__name__} keys from {source}: "
                              f"{', '.join(sorted(unknown))}")
        merged.update(values)
    try:
        return config_cls(**merged)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


TOKENIZER_PRESETS = {
    "full": {},
    "toy": {
        "latent_dim": 32, "codebook_size": 64, "channels": 64, "res_blocks": 1,
        "window": 64, "stride": 8, "batch_size": 16, "iterations": 500, "lr": 3e-4,
    },
}

POLICY_PRESETS = {
    "full": {},
    "toy": {
        "latent_dim": 32, "model_dim": 64, "cond_layers": 2, "cond_heads": 4,
        "decoder_dim": 64, "decoder_layers": 2, "decoder_heads": 4,
        "diff_hidden": 128, "time_embed_dim": 32, "batch_size": 16,
        "iterations": 500, "lr": 3e-4, "stride": 4,
    },
}


def preset_for(kind: str, name: str) -> dict:
    table = TOKENIZER_PRESETS if kind == "tokenizer" else POLICY_PRESETS
    if name not in table:
        raise ConfigError(f"unknown preset {name!r} (choose from {sorted(table)})")
    return dict(table[name])


def config_echo(config) -> dict:
    return asdict(config)
