"""Typed INI configuration with strict keys and ``key=value`` overrides.

Sections and keys are fixed by :data:`SCHEMA`.  Key names are unique across
sections, so an override may name a bare key (``M=16``) or a qualified one
(``ansatz.M=16``).  Anything unknown or malformed raises :class:`ConfigError`
naming the offending key before any computation starts.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("not finite")
    return value


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none") else _float(text)


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _int_list(text: str) -> tuple[int, ...]:
    items = tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    if not items:
        raise ValueError("empty list")
    return items


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(_float(v) for v in text.replace(" ", "").split(",") if v)


def _dims(text: str):
    if text.strip().lower() in ("", "none"):
        return None
    dims = _int_list(text.replace("x", ","))
    if len(dims) != 3:
        raise ValueError("expected three integers nx,ny,nz")
    return dims


def _str(text: str) -> str:
    return text.strip()


# section -> key -> (parser, default); a default of ... marks a required key.
SCHEMA: dict[str, dict[str, tuple]] = {
    "geometry": {
        "kind": (_str, ...),
        "L": (_opt_int, None),
        "dims": (_dims, None),
        "J": (_float, -1.0),
        "h_x": (_float, 0.0),
        "h_z": (_float, 0.0),
        "alpha": (_opt_float, None),
        "p": (_opt_float, None),
        "graph_seed": (_int, 5),
        "graph_file": (_str, ""),
    },
    "ansatz": {
        "M": (_int_list, ...),
    },
    "schedule": {
        "epochs": (_int, 20_000),
        "resample_threshold": (_float, 1e-5),
        "resample_every": (_int, 5_000),
        "restarts": (_int, 20),
        "target_rel_error": (_opt_float, None),
        "seed": (_int, 0),
        "trace_every": (_int, 1),
    },
    "optimizer": {
        "learning_rate": (_float, 1e-3),
        "beta1": (_float, 0.9),
        "beta2": (_float, 0.999),
        "epsilon": (_float, 1e-8),
        "weight_decay": (_float, 0.0),
    },
    "reference": {
        "source": (_str, "none"),
        "method": (_str, "auto"),
    },
    "scan": {
        "sizes": (_int_list, ...),
        "samples": (_int, 10_000),
        "site": (_opt_int, None),
        "parameter": (_str, "h_x"),
        "values": (_float_list, ()),
    },
}

_OWNER = {key: section for section, keys in SCHEMA.items() for key in keys}


@dataclass
class Config:
    """Raw string values keyed by ``(section, key)``; typed on access."""

    raw: dict[tuple[str, str], str]

    def has(self, section: str, key: str | None = None) -> bool:
        if key is None:
            return any(s == section for s, _ in self.raw)
        return (section, key) in self.raw

    def get(self, section: str, key: str):
        parser, default = SCHEMA[section][key]
        if (section, key) not in self.raw:
            if default is ...:
                if not self.has(section):
                    raise ConfigError(f"missing required key '{section}' (section [{section}] with '{key}')")
                raise ConfigError(f"missing required key '{section}.{key}'")
            return default
        text = self.raw[(section, key)]
        try:
            return parser(text)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed value for '{section}.{key}': {text!r} ({exc})") from None

    def section(self, name: str) -> dict:
        """Every key of a section, typed; required keys must be present."""
        return {key: self.get(name, key) for key in SCHEMA[name]}

    def validate(self):
        """Parse every present value so malformed entries fail early."""
        for section, key in self.raw:
            self.get(section, key)

    def echo(self) -> dict:
        return {f"{s}.{k}": v for (s, k), v in sorted(self.raw.items())}


def resolve_key(name: str) -> tuple[str, str]:
    name = name.strip()
    if "." in name:
        section, key = name.split(".", 1)
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section '{section}' in '{name}'")
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key '{name}'")
        return section, key
    if name not in _OWNER:
        raise ConfigError(f"unknown config key '{name}'")
    return _OWNER[name], name


def parse_config_text(text: str, source: str = "<config>") -> Config:
    parser = configparser.ConfigParser(interpolation=None, strict=True, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from None
    raw = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section '{section}' in {source}")
        for key, value in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key '{section}.{key}' in {source}")
            raw[(section, key)] = value
    return Config(raw)


def load_config(path=None, overrides=()) -> Config:
    if path is None:
        cfg = Config({})
    else:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
        cfg = parse_config_text(text, str(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        name, value = item.split("=", 1)
        cfg.raw[resolve_key(name)] = value.strip()
    cfg.validate()
    return cfg


def format_config(cfg: Config) -> str:
    lines = []
    for section in SCHEMA:
        keys = [(k, v) for (s, k), v in cfg.raw.items() if s == section]
        if keys:
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in keys)
            lines.append("")
    return "\n".join(lines)
