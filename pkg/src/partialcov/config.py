"""Run configuration: JSON file + command-line overrides, validated by a schema.

The config file is one flat JSON object. Every key is optional; unknown keys
are rejected. Command-line flags override file values.
"""

import json

import jsonschema

from .errors import ConfigurationError

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_complex = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "partialcov run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        # estimation
        "estimator": {"type": "string"},
        "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "k_max": _pos_int,
        "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "ordering_mode": {"enum": ["set", "order"]},
        "bias_correct": {"type": "boolean"},
        "oracle": {"type": "boolean"},
        "oracle_budget": _pos_int,
        "input": {"type": "string"},
        "field": {"enum": ["complex", "real"]},
        # detection / simulation
        "detector": {"enum": ["mf", "nmf", "glr_cg"]},
        "d": _pos_int,
        "n": _pos_int,
        "steering": {"type": ["array", "null"], "items": _complex},
        "sinr_grid": {"type": "array", "items": _num, "minItems": 1},
        "outliers": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "noise_mu": {"type": ["array", "null"], "items": _complex},
        "outlier_sinr_db": {"type": ["number", "null"]},
        "pfa": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "calibration_trials": _pos_int,
        "trials": _pos_int,
        "block_size": _pos_int,
        "data_scale": {"type": "number", "exclusiveMinimum": 0},
        "threshold_file": {"type": "string"},
        "force": {"type": "boolean"},
        # bias table
        "bias_d": {"type": "array", "items": _pos_int, "minItems": 1},
        "bias_c_k": {"type": "array", "items": {"enum": [1, 2]}, "minItems": 1},
        "bias_p": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                              "maximum": 1}, "minItems": 1},
        # generator
        "n_samples": _pos_int,
        # common
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "workers": _pos_int,
        "out": {"type": "string"},
    },
}

DEFAULTS = {
    "estimator": "pscm",
    "p": 0.75,
    "k_max": 100,
    "epsilon": 1e-8,
    "ordering_mode": "set",
    "bias_correct": False,
    "oracle": False,
    "oracle_budget": 10 ** 6,
    "field": "complex",
    "detector": "nmf",
    "d": 8,
    "n": 22,
    "steering": None,
    "sinr_grid": [float(v) for v in range(-5, 26, 2)],
    "outliers": [0, 1, 2, 3, 4, 5],
    "noise_mu": None,
    "outlier_sinr_db": None,
    "pfa": 1e-2,
    "calibration_trials": 200000,
    "trials": 20000,
    "block_size": 1000,
    "data_scale": 1.0,
    "force": False,
    "bias_d": [1, 4, 8],
    "bias_c_k": [1, 2],
    "bias_p": [0.5, 0.75, 0.9],
    "n_samples": 22,
    "seed": 0,
    "workers": 1,
    "out": ".",
}


def validate(config):
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"invalid configuration at {where}: {exc.message}") from None
    return config


def load_config(path=None, overrides=None):
    """Merge defaults, the JSON file at ``path`` and ``overrides`` (in that order).

    Both the file and the overrides are validated before merging.
    """
    data = {}
    if path is not None:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
        validate(data)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    validate(overrides)
    merged = dict(DEFAULTS)
    merged.update(data)
    merged.update(overrides)
    return merged
