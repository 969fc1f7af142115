"""Experiment configuration: JSON documents validated against a strict schema."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import jsonschema

from .errors import ConfigError

TOLERANCE_ENV = "KML_TOLERANCE_SCALE"


@dataclass(frozen=True)
class Tolerances:
    """exact: float mirrors of exact quantities; quadrature: slack on
    quadrature-based bound checks; mc_se: Monte Carlo margin in standard errors."""

    exact: float = 1e-12
    quadrature: float = 1e-8
    mc_se: float = 3.0

    def scaled(self, factor: float) -> "Tolerances":
        return Tolerances(self.exact * factor, self.quadrature * factor, self.mc_se * factor)


def tolerance_scale() -> float:
    raw = os.environ.get(TOLERANCE_ENV)
    if raw is None or raw == "":
        return 1.0
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{TOLERANCE_ENV}={raw!r} is not a number") from None


def active_tolerances(base: Optional[dict] = None) -> Tolerances:
    return Tolerances(**(base or {})).scaled(tolerance_scale())


DEFAULTS = {
    "moment": {
        "sweeps": {"m": list(range(1, 13)), "x": ["0", "1/4", "1/3", "1/2", "2/3", "1"]},
    },
    "bounds": {
        "kernel": {"sigma": 1.0, "d": 1},
        "grid": {"q": 64, "G": 512, "max_nodes": 250000},
        "sweeps": {
            "m": list(range(3, 16)),
            "x": [i / 8 for i in range(9)],
            "t": [2.0, 2.5],
            "lambda": [10.0**-e for e in range(2, 13)],
        },
    },
    "spectrum": {
        "kernel": {"sigma": 1.0, "d": 1},
        "grid": {"q": 96, "G": 512, "dps": 80},
    },
    "mingap": {
        "sweeps": {"n": [2, 5, 10], "c": [0.01, 0.1, 1.0]},
        "replications": 1000000,
        "bins": 40,
        "seeds": [0],
    },
    "nystrom": {
        "kernel": {"sigma": 1.0, "d": 1},
        "sweeps": {"n": [128, 256, 512], "m_support": [32, 64, 128],
                   "lambda_schedules": ["inv_n", "exp_root", "fixed"]},
        "fixed_lambda": 1e-12,
        "target": "gauss_bump",
        "noise": 0.0,
        "seeds": [0, 1, 2, 3, 4],
    },
}
COMMON = {"density": {"kind": "uniform"}, "seeds": [0], "tolerances": {}}


def load_schema() -> dict:
    text = resources.files("kml").joinpath("schema/experiment.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(doc: dict) -> None:
    try:
        jsonschema.validate(doc, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def config_hash(doc: dict) -> str:
    """sha256 of the canonical JSON form; the output directory is not part of it."""
    body = {k: v for k, v in doc.items() if k != "output_dir"}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass
class ExperimentConfig:
    experiment: str
    doc: dict = field(repr=False)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        validate(raw)
        exp = raw["experiment"]
        doc = _merge(_merge(COMMON, DEFAULTS[exp]), raw)
        validate(doc)
        return cls(exp, doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(raw)

    @classmethod
    def default(cls, experiment: str) -> "ExperimentConfig":
        return cls.from_dict({"experiment": experiment})

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig.from_dict(_merge(self.doc, {"seeds": [seed]}))

    @property
    def hash(self) -> str:
        return config_hash(self.doc)

    def section(self, name: str) -> dict:
        return self.doc.get(name, {})

    @property
    def sweeps(self) -> dict:
        return self.doc.get("sweeps", {})

    @property
    def seeds(self) -> list:
        return self.doc["seeds"]

    @property
    def tolerances(self) -> Tolerances:
        return active_tolerances(self.doc.get("tolerances"))
