"""JSON run configurations: schemas, loading and conversion to planner inputs.

Each subcommand has its own schema; unknown keys are rejected everywhere.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from dpqt import fixtures, mclab
from dpqt.errors import ConfigError
from dpqt.fixed import BoxUniverse, sensitivity_psi

_POS = {"type": "number", "exclusiveMinimum": 0}
_PROB = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
_VEC = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_MATRIX = {"type": "array", "items": _VEC, "minItems": 1}
_COVARIANCE = {"oneOf": [{"const": "blood6"}, _MATRIX]}
_SEED = {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1}
_UNIVERSE = {
    "type": "object",
    "additionalProperties": False,
    "required": ["n", "bounds"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "bounds": {"type": "array", "minItems": 1,
                   "items": {"type": "array", "items": {"type": "number"},
                             "minItems": 2, "maxItems": 2}},
    },
}
_GRID = {
    "type": "object",
    "additionalProperties": False,
    "required": ["start", "stop", "step"],
    "properties": {"start": _POS, "stop": _POS, "step": _POS},
}


def _obj(properties: dict, required=(), **extra) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": properties,
            "required": list(required), **extra}


_FIXED_PROPS = {
    "universe": _UNIVERSE,
    "psi": _VEC,
    "eta": _VEC,
    "epsilon": _POS,
    "delta": _PROB,
    "alpha": _PROB,
    "coverage": _PROB,
}
_ONE_SENSITIVITY_SOURCE = {"oneOf": [{"required": ["universe"]}, {"required": ["psi"]}]}

_RANDOM_PROPS = {
    "covariance": _COVARIANCE,
    "example": {"enum": sorted(fixtures.EXAMPLES)},
    "n": {"type": "integer", "minimum": 2},
    "eta": _VEC,
    "delta": _PROB,
    "gamma": _PROB,
    "alpha": _PROB,
    "coverage": _PROB,
}

SCHEMAS = {
    "calibrate": _obj({"epsilon": _POS, "delta": _PROB, "sensitivity": _POS},
                      required=["epsilon", "delta", "sensitivity"]),
    "fixed": _obj(_FIXED_PROPS, required=["eta", "epsilon", "delta"],
                  **_ONE_SENSITIVITY_SOURCE),
    "rdp-curves": _obj({**_RANDOM_PROPS, "grid": _GRID}),
    "simulate": _obj({
        "seed": _SEED,
        "replications": {"type": "integer", "minimum": 1},
        "block_size": {"type": "integer", "minimum": 1},
        "fixed": _obj({**_FIXED_PROPS, "mu": _VEC},
                      required=["mu", "eta", "epsilon", "delta"], **_ONE_SENSITIVITY_SOURCE),
        "random": _obj({**_RANDOM_PROPS, "mu": _VEC, "epsilon": _POS},
                       required=["epsilon"]),
    }, required=["replications"]),
}


def validate(command: str, config: Any) -> dict:
    try:
        jsonschema.validate(config, SCHEMAS[command])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{command} config invalid at {where}: {exc.message}") from None
    return config


def load(command: str, path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None


def covariance(value) -> np.ndarray:
    if value == "blood6":
        return fixtures.blood6()
    return np.asarray(value, dtype=float)


def psi_of(section: dict) -> np.ndarray:
    if "universe" in section:
        u = section["universe"]
        return sensitivity_psi(BoxUniverse(u["n"], tuple(tuple(b) for b in u["bounds"])))
    return np.asarray(section["psi"], dtype=float)


def random_inputs(section: dict) -> dict:
    """Resolve an example number and defaults into concrete model inputs."""
    out = {"covariance": covariance(section.get("covariance", "blood6")),
           "alpha": section.get("alpha", fixtures.DEFAULT_ALPHA),
           "coverage": section.get("coverage", 0.95)}
    example = fixtures.EXAMPLES.get(section.get("example"))
    for key in ("n", "eta", "delta", "gamma"):
        if key in section:
            out[key] = section[key]
        elif example is not None:
            out[key] = getattr(example, key)
        else:
            raise ConfigError(f"'{key}' is required when no example is given")
    out["eta"] = np.asarray(out["eta"], dtype=float)
    return out


def parse_grid(text: str) -> dict:
    try:
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise ConfigError(f"--grid expects start:stop:step, got {text!r}") from None
    return {"start": start, "stop": stop, "step": step}


def grid_values(grid: dict) -> list[float]:
    start, stop, step = grid["start"], grid["stop"], grid["step"]
    if not (start > 0 and step > 0 and stop >= start):
        raise ConfigError("grid needs 0 < start <= stop and step > 0")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def sim_plan(config: dict) -> mclab.SimPlan:
    fixed_sc = random_sc = None
    if "fixed" in config:
        sec = config["fixed"]
        fixed_sc = mclab.FixedScenario(
            psi=tuple(psi_of(sec)), mu=tuple(sec["mu"]), eta=tuple(sec["eta"]),
            epsilon=sec["epsilon"], delta=sec["delta"],
            alpha=sec.get("alpha", 0.05), coverage=sec.get("coverage", 0.95))
    if "random" in config:
        sec = config["random"]
        inputs = random_inputs(sec)
        k = inputs["covariance"].shape[0]
        random_sc = mclab.RandomScenario(
            sigma=tuple(map(tuple, inputs["covariance"])), n=int(inputs["n"]),
            mu=tuple(sec.get("mu", [0.0] * k)), eta=tuple(inputs["eta"]),
            epsilon=sec["epsilon"], delta=inputs["delta"], gamma=inputs["gamma"],
            alpha=inputs["alpha"], coverage=inputs["coverage"])
    if fixed_sc is None and random_sc is None:
        raise ConfigError("simulate config needs a 'fixed' and/or 'random' section")
    return mclab.SimPlan(seed=config.get("seed", 0), replications=config["replications"],
                         fixed=fixed_sc, random=random_sc,
                         block_size=config.get("block_size", mclab.BLOCK_SIZE))
