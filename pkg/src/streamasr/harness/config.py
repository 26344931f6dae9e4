"""INI experiment config: known sections and keys only, typed, with flag overrides."""

from __future__ import annotations

import configparser
from pathlib import Path

from ..errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

# section -> key -> (type, default)
SCHEMA = {
    "augment": {
        "r_as": (float, 70.0),
        "vtlp": (bool, True),
        "specaug": (bool, True),
        "warp_min": (float, 0.8),
        "warp_max": (float, 1.2),
        "time_mask_max": (int, 20),
        "freq_mask_count_max": (int, 2),
        "freq_mask_width_max": (int, 8),
    },
    "pipeline": {
        "workers": (int, 4),
        "queue_bound": (int, 16),
        "seed": (int, 0),
    },
    "bpe": {
        "size": (int, 10025),
    },
    "model": {
        "kind": (str, "mocha"),
        "vocab_size": (int, 8),
        "encoder_layers": (int, 2),
        "encoder_hidden": (int, 32),
        "bidirectional": (bool, False),
        "decoder_hidden": (int, 32),
        "prediction_hidden": (int, 32),
        "embed_dim": (int, 16),
        "attention_dim": (int, 16),
        "joint_dim": (int, 32),
        "chunk_size": (int, 4),
        "dropout": (float, 0.1),
        "seed": (int, 0),
    },
    "train": {
        "steps": (int, 500),
        "lam": (float, 0.8),
        "smoothing": (float, 0.1),
        "layerwise": (bool, True),
        "lr": (float, 0.0),
        "utterances": (int, 16),
    },
    "decode": {
        "beam": (int, 12),
        "threshold": (float, 0.5),
        "max_symbols": (int, 5),
    },
}


def _convert(section, key, typ, raw: str):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {typ.__name__}") from None


def defaults() -> dict:
    return {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}


def resolve_config_path(path) -> Path:
    """A path as given, else a file of that name among the bundled configs."""
    p = Path(path)
    if p.is_file():
        return p
    bundled = CONFIG_DIR / p.name
    if bundled.is_file():
        return bundled
    raise ConfigError(f"config file not found: {path}")


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the file, then ``{(section, key): value}`` overrides (None skipped)."""
    cfg = defaults()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        p = resolve_config_path(path)
        try:
            parser.read_string(p.read_text(encoding="utf-8"), source=str(p))
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {p}: {exc}") from None
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{p}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{p}: unknown key {key!r} in [{section}]")
                cfg[section][key] = _convert(section, key, SCHEMA[section][key][0], raw)
    for (section, key), value in (overrides or {}).items():
        if value is None:
            continue
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown setting {section}.{key}")
        cfg[section][key] = value
    return cfg
