# File Name: config.py
# Created By: ZW
# Created On: 2023-04-05
# Purpose: merge hyperparameters from an optional JSON config file with
#  command-line overrides. precedence: flags, then file, then the dataclass
#  defaults.

# module imports
# ----------------------------------------------------------------------------
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from .core.errors import ConfigError
from .operations.engine import EngineConfig
from .operations.readers import load_json
from .operations.synth import SynthSpec
from .operations.training import TrainingConfig


# constants definitions
# ----------------------------------------------------------------------------
SECTIONS = {"engine": EngineConfig, "training": TrainingConfig, "synth": SynthSpec}


# function definitions
# ----------------------------------------------------------------------------

# define load_config() which reads a config file into section -> values,
# rejecting unknown sections and unknown keys
def load_config(filepath: Optional[Path]) -> Dict[str, Dict[str, Any]]:
    if filepath is None: return {}
    doc = load_json(filepath)
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{filepath} has unknown sections {sorted(unknown)}; expected {sorted(SECTIONS)}")
    out = {}
    for name, values in doc.items():
        if not isinstance(values, dict):
            raise ConfigError(f"config section {name!r} must be a JSON object")
        allowed = {f.name for f in fields(SECTIONS[name])}
        bad = set(values) - allowed
        if bad:
            raise ConfigError(f"config section {name!r} has unknown keys {sorted(bad)}")
        out[name] = dict(values)
    return out


def merged_values(config: Mapping[str, Mapping], section, overrides: Mapping[str, Any]) -> Dict[str, Any]:
    values = dict(config.get(section, {}))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return values


def engine_config(config: Mapping[str, Mapping], **overrides) -> EngineConfig:
    return EngineConfig(**merged_values(config, "engine", overrides))


def training_config(config: Mapping[str, Mapping], **overrides) -> TrainingConfig:
    return TrainingConfig(**merged_values(config, "training", overrides))


# define synth_spec() which layers file values and flags over a base spec
# document (for example one read with --spec)
def synth_spec(config: Mapping[str, Mapping], base: Optional[Mapping] = None, **overrides) -> SynthSpec:
    values = dict(base or {})
    values.update(merged_values(config, "synth", overrides))
    return SynthSpec.from_document(values)
