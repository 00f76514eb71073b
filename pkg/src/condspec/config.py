"""Plain-text run configuration.

A document is a list of ``section.key = value`` lines; ``#`` starts a
comment and blank lines are ignored. Lists are comma separated. A scenario
document uses the sections ``dgp``, ``tests``, ``inference``, ``mc`` and
optionally ``sweep``; a GCI sweep document uses ``gci``. Every key, its
type and its default is listed in :data:`SCENARIO_KEYS` and
:data:`GCI_KEYS`; unknown keys are errors.

Example::

    dgp.family = DID
    dgp.rho = 0.5
    tests.list = pretrends:F
    mc.reps = 10000
    sweep.key = dgp.rho
    sweep.values = 0, 0.5, 0.9
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass

import numpy as np

from .conditional_mc import ScenarioConfig
from .dgp import FAMILIES, DgpParams
from .errors import BadParams, CondSpecError, ParseError, ValidationError

__all__ = [
    "SCENARIO_KEYS",
    "GCI_KEYS",
    "GciSweepConfig",
    "ScenarioSweep",
    "parse_config",
    "load_config",
    "config_digest",
    "with_seed",
]


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true or false, got {text!r}")


def _int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return value


def _float(text):
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"expected a finite number, got {text!r}")
    return value


def _floats(text):
    return tuple(_float(t) for t in _split(text))


def _strings(text):
    return tuple(_split(text))


def _split(text):
    items = [t.strip() for t in text.split(",")]
    if any(not t for t in items):
        raise ValueError("empty list item")
    return items


def _str(text):
    return text


def _optional(conv):
    def inner(text):
        return None if text.lower() in ("none", "default") else conv(text)
    return inner


# key -> (converter, default); None defaults are filled in downstream
SCENARIO_KEYS = {
    "dgp.family": (_str, None),
    "dgp.rho": (_float, 0.0),
    "dgp.null_mode": (_bool, True),
    "dgp.violation": (_float, 0.0),
    "dgp.n_pre": (_int, 2),
    "dgp.effect": (_float, 1.0),
    "dgp.treated_share": (_float, 0.5),
    "dgp.n_covariates": (_int, 1),
    "dgp.interval_points": (_int, 9),
    "dgp.n_instruments": (_int, 3),
    "dgp.gmm_weight": (_str, "identity"),
    "dgp.alpha0": (_float, 2.0),
    "dgp.beta0": (_float, 3.0),
    "dgp.grid_size": (_int, 101),
    "dgp.p": (_int, 1),
    "dgp.q": (_int, 2),
    "dgp.sigma12": (_optional(_floats), None),
    "tests.list": (_strings, ()),
    "tests.alpha_spec": (_floats, (0.05,)),
    "tests.critical": (_str, "simulate"),
    "tests.draws": (_int, 1000),
    "tests.known_draws": (_int, 200_000),
    "tests.weights": (_optional(_floats), None),
    "inference.alpha_inference": (_float, 0.05),
    "inference.b0": (_optional(_floats), None),
    "mc.n": (_int, 2000),
    "mc.reps": (_int, 1000),
    "mc.master_seed": (_seed, 0),
    "mc.mode": (_str, "theorem1"),
    "mc.scenario_id": (_str, "scenario"),
    "sweep.key": (_str, None),
    "sweep.values": (_strings, None),
}

GCI_KEYS = {
    "gci.dim_max": (_int, 6),
    "gci.cases": (_int, 200),
    "gci.draws": (_int, 100_000),
    "gci.master_seed": (_seed, 0),
    "gci.scenario_id": (_str, "gci"),
}

_CONFIG_FIELDS = {
    "tests.list": "tests",
    "tests.alpha_spec": "alpha_spec",
    "tests.critical": "critical",
    "tests.draws": "critical_draws",
    "tests.known_draws": "known_draws",
    "tests.weights": "weights",
    "inference.alpha_inference": "alpha_inference",
    "inference.b0": "b0",
    "mc.n": "n",
    "mc.reps": "reps",
    "mc.master_seed": "master_seed",
    "mc.mode": "mode",
    "mc.scenario_id": "scenario_id",
}


@dataclass(frozen=True)
class GciSweepConfig:
    dim_max: int = 6
    cases: int = 200
    draws: int = 100_000
    master_seed: int = 0
    scenario_id: str = "gci"

    def __post_init__(self):
        if not 1 <= self.dim_max <= 10:
            raise ValidationError("gci.dim_max", "dim_max must lie in 1..10")
        if self.cases < 0:
            raise ValidationError("gci.cases", "cases must be nonnegative")
        if self.draws < 10_000:
            raise ValidationError("gci.draws", "draws must be at least 10000")


@dataclass(frozen=True)
class ScenarioSweep:
    """One scenario per value of a single swept key."""

    key: str
    values: tuple
    configs: tuple


def _strip_comment(line):
    # '#' starts a comment unless inside double quotes
    quoted = False
    for i, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def _tokenize(text):
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ParseError("expected 'section.key = value'", lineno, col)
        key_part, _, value_part = line.partition("=")
        key = key_part.strip()
        col = len(key_part) - len(key_part.lstrip()) + 1
        if not key or "." not in key or any(c.isspace() for c in key):
            raise ParseError(f"malformed key {key!r}; expected 'section.key'", lineno, col)
        section, _, name = key.partition(".")
        if not section or not name:
            raise ParseError(f"malformed key {key!r}; expected 'section.key'", lineno, col)
        value = value_part.strip()
        vcol = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
        if not value:
            raise ParseError(f"missing value for {key}", lineno, vcol)
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1]
        elif '"' in value:
            raise ParseError("unbalanced quote", lineno, vcol + value.index('"'))
        if key in entries:
            raise ParseError(f"duplicate key {key} (first set on line {entries[key][1]})", lineno, col)
        entries[key] = (value, lineno)
    return entries


def _convert(schema, entries):
    out = {}
    for key, (value, lineno) in entries.items():
        if key not in schema:
            raise ValidationError(key, f"unknown key {key} (line {lineno})")
        conv, _ = schema[key]
        try:
            out[key] = conv(value)
        except ValueError as exc:
            raise ValidationError(key, f"{key}: {exc}") from None
    return out


def _build_scenario(values):
    if "dgp.family" not in values:
        raise ValidationError("dgp.family", "dgp.family is required")
    if values["dgp.family"] not in FAMILIES:
        raise ValidationError("dgp.family", f"dgp.family must be one of {', '.join(FAMILIES)}")
    dgp_kwargs = {}
    for key, (_, default) in SCENARIO_KEYS.items():
        if key.startswith("dgp."):
            value = values.get(key, default)
            if key == "dgp.sigma12" and value is not None:
                p = values.get("dgp.p", SCENARIO_KEYS["dgp.p"][1])
                q = values.get("dgp.q", SCENARIO_KEYS["dgp.q"][1])
                if len(value) != p * q:
                    raise ValidationError(key, f"dgp.sigma12 needs p*q = {p * q} entries (row-major)")
                value = tuple(tuple(value[i * q:(i + 1) * q]) for i in range(p))
            dgp_kwargs[key[4:]] = value
    try:
        dgp = DgpParams(**dgp_kwargs)
    except (BadParams, ValueError) as exc:
        key = getattr(exc, "key", None) or _guess_key(str(exc), "dgp.")
        raise ValidationError(key, str(exc)) from None
    kwargs = {field: values.get(key, SCENARIO_KEYS[key][1]) for key, field in _CONFIG_FIELDS.items()}
    kwargs["dgp"] = dgp
    try:
        return ScenarioConfig(**kwargs)
    except ValidationError as exc:
        full = next((k for k, f in _CONFIG_FIELDS.items() if f == exc.key), exc.key)
        raise ValidationError(full, str(exc)) from None
    except (CondSpecError, ValueError) as exc:
        raise ValidationError("tests.list", str(exc)) from None


def _guess_key(message, prefix):
    names = [k for k in SCENARIO_KEYS if k.startswith(prefix)]
    for key in names:
        if message.startswith(key[len(prefix):] + " "):
            return key
    for key in names:
        if re.search(rf"\b{re.escape(key[len(prefix):])}\b", message):
            return key
    return prefix.rstrip(".")


def parse_config(text: str):
    """Parse a document into a :class:`ScenarioConfig`, a :class:`ScenarioSweep`
    or a :class:`GciSweepConfig`."""
    entries = _tokenize(text)
    sections = {k.partition(".")[0] for k in entries}
    if "gci" in sections:
        if sections != {"gci"}:
            other = next(k for k in entries if not k.startswith("gci."))
            raise ValidationError(other, f"{other} cannot appear in a GCI sweep document")
        values = _convert(GCI_KEYS, entries)
        return GciSweepConfig(**{k[4:]: values.get(k, d) for k, (_, d) in GCI_KEYS.items()})
    values = _convert(SCENARIO_KEYS, entries)
    sweep_key = values.pop("sweep.key", None)
    sweep_values = values.pop("sweep.values", None)
    if (sweep_key is None) != (sweep_values is None):
        missing = "sweep.values" if sweep_values is None else "sweep.key"
        raise ValidationError(missing, "sweep.key and sweep.values must be given together")
    if sweep_key is None:
        return _build_scenario(values)
    if sweep_key not in SCENARIO_KEYS or sweep_key.startswith("sweep.") or sweep_key == "dgp.family":
        raise ValidationError("sweep.key", f"cannot sweep over {sweep_key!r}")
    if sweep_key in values:
        raise ValidationError("sweep.key", f"{sweep_key} is both set and swept")
    conv = SCENARIO_KEYS[sweep_key][0]
    base_id = values.get("mc.scenario_id", SCENARIO_KEYS["mc.scenario_id"][1])
    configs = []
    for raw in sweep_values:
        try:
            value = conv(raw)
        except ValueError as exc:
            raise ValidationError("sweep.values", f"sweep.values: {exc}") from None
        point = dict(values)
        point[sweep_key] = value
        point["mc.scenario_id"] = f"{base_id}[{sweep_key.partition('.')[2]}={raw}]"
        configs.append(_build_scenario(point))
    return ScenarioSweep(sweep_key, tuple(sweep_values), tuple(configs))


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def with_seed(config, seed: int):
    """Copy of ``config`` with its master seed replaced."""
    if isinstance(config, ScenarioSweep):
        return dataclasses.replace(config, configs=tuple(with_seed(c, seed) for c in config.configs))
    return dataclasses.replace(config, master_seed=seed)


def _canonical(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {"__type__": type(obj).__name__}
        for f in dataclasses.fields(obj):
            out[f.name] = _canonical(getattr(obj, f.name))
        return out
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj).hex()
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def config_digest(config) -> str:
    """SHA-256 of a canonical JSON rendering of a parsed configuration."""
    payload = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
