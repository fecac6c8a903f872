"""Run configuration: a JSON document checked against a published schema."""
import copy
import json
from importlib import resources

import jsonschema

from .exceptions import ConfigError, DomainError
from .defenses import DefenseSpec
from .oracle import HTTPOracle, ModelOracle, toy_oracle
from .scratch import AttackConfig

__all__ = ["DEFAULTS", "build_oracle", "load_config", "merge", "run_config_schema", "validate_config"]

DEFAULTS = {
    "manifest": "toy",
    "attack": {
        "scratch_count": 3,
        "per_scratch_l0": 16,
        "bezier_order": 2,
        "color_mode": "polychrome-saturated",
        "query_limit": 2000,
    },
    "optimizer": {"strategy": "ngo", "seeds": [0, 1, 2, 3, 4], "options": {}},
    "oracle": {"kind": "toy"},
    "targeted": False,
    "workers": 1,
    "defenses": [],
    "output": {"dir": "results"},
}


def run_config_schema():
    ref = resources.files("scratchattack") / "data" / "run_config.schema.json"
    with ref.open("r", encoding="utf-8") as fh:
        return json.load(fh)


def merge(base, override):
    """Recursive dict merge; values in ``override`` win, ``None`` values are ignored."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict):
            out[key] = merge(out[key] if isinstance(out.get(key), dict) else {}, value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(doc):
    """Fill in defaults, check against the schema and return the full document."""
    try:
        jsonschema.validate(doc, run_config_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid run config at {where}: {exc.message}") from None
    full = merge(DEFAULTS, doc)
    try:
        attack_config(full)
        for d in full["defenses"]:
            DefenseSpec(**d)
    except DomainError as exc:
        raise ConfigError(f"invalid run config: {exc}") from None
    return full


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path!r} not found") from None
    except ValueError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from None
    return doc


def attack_config(doc):
    return AttackConfig(**doc["attack"])


def build_oracle(spec):
    kind = spec["kind"]
    if kind == "toy":
        return toy_oracle()
    if kind == "local":
        return ModelOracle.from_file(spec["path"])
    options = {k: spec[k] for k in ("timeout", "min_interval", "max_retries", "backoff") if k in spec}
    return HTTPOracle(spec["url"], **options)
