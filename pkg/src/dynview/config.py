"""Flat key=value configuration with dotted namespaces.

Files contain one `section.key = value` per line (# comments allowed);
command-line overrides use the same syntax. Unknown keys are rejected and
every run logs the fully resolved configuration.
"""

from __future__ import annotations

import dataclasses

from .errors import ConfigError
from .model import ModelConfig
from .pipeline.train import TrainConfig
from .scenes import GenConfig

_SECTIONS = {"model": ModelConfig, "train": TrainConfig, "data": GenConfig}


def _known_keys():
    keys = {}
    for section, cls in _SECTIONS.items():
        for f in dataclasses.fields(cls):
            keys[f"{section}.{f.name}"] = f
    return keys


def _coerce(raw: str, field):
    raw = raw.strip()
    t = field.type
    if t in ("int", int):
        return int(raw)
    if t in ("float", float):
        return float(raw)
    if t in ("bool", bool):
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if t in ("str", str):
        return raw
    if t in ("tuple", tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        vals = [float(p) if "." in p else int(p) for p in parts]
        return tuple(vals)
    return raw


class CliConfig:
    """Merged model/train/data configuration."""

    def __init__(self):
        self.values = {}
        self._keys = _known_keys()

    def set(self, key: str, raw: str):
        if key not in self._keys:
            raise ConfigError(f"unknown config key: {key}")
        self.values[key] = _coerce(raw, self._keys[key])

    def load_file(self, path):
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, raw = line.split("=", 1)
                self.set(key.strip(), raw)

    def apply_overrides(self, pairs):
        for pair in pairs or []:
            if "=" not in pair:
                raise ConfigError(f"override must be key=value: {pair!r}")
            key, raw = pair.split("=", 1)
            self.set(key.strip(), raw)

    def _build(self, section):
        cls = _SECTIONS[section]
        kwargs = {k.split(".", 1)[1]: v for k, v in self.values.items()
                  if k.startswith(section + ".")}
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def model_config(self) -> ModelConfig:
        return self._build("model")

    def train_config(self) -> TrainConfig:
        return self._build("train")

    def gen_config(self) -> GenConfig:
        return self._build("data")

    def resolved(self) -> str:
        """Full effective configuration, one key=value per line."""
        lines = []
        for section in sorted(_SECTIONS):
            obj = self._build(section)
            for f in dataclasses.fields(type(obj)):
                lines.append(f"{section}.{f.name} = {getattr(obj, f.name)}")
        return "\n".join(lines)
