"""Experiment configuration: defaults, validation, hashing and atomic writes."""
from __future__ import annotations

import copy
import hashlib
import json
import math
import os
import tempfile
from dataclasses import MISSING, dataclass, field, fields

from .chaos import SweepConfig
from .errors import ValidationError

ARTIFACT_VERSION = "0.1.0"
SPEC_VERSION = "1.0"

DEFAULTS = {
    "scatter": {"well_depth": 2.0, "well_radius": 1.0, "rmax": 20.0, "nr": 20000,
                "shape": "square"},
    "gp": {"dim": 3, "trap": "harmonic", "g": 0.0, "grid_n": 64, "grid_L": 5.0,
           "tol": 1e-8, "max_iter": 200000, "stencil": 4, "dump_field": False},
    "nbody": {"N": 2, "d": 1, "trap": "harmonic", "pair": "gaussian:2,0.5",
              "scaling": "meanfield", "grid_n": 32, "grid_L": 6.0, "tol": 1e-13,
              "stencil": 4, "cap": 6, "dump_field": False},
    "diffuse": {"drift_from": "zero", "N": 1, "d": 1, "dt": 0.01, "T": 1.0, "paths": 1000,
                "delta": 4.0 / 51.0, "radius_law": "localization", "radius_scale": 1.0,
                "radius": None, "inflate": 0.0, "ou_rate": 1.0, "reference": None,
                "survival_points": 10, "box": None},
    "chaos": {f.name: (f.default_factory() if f.default_factory is not MISSING else f.default)
              for f in fields(SweepConfig)},
}
# the sweep seed lives in the global block
DEFAULTS["chaos"].pop("seed")

GLOBAL_KEYS = {"subcommand", "seed", "output_dir", "params", "emit_plot_data"}
POSITIVE = {"rmax", "well_radius", "grid_L", "tol", "dt", "T", "radius_scale", "ou_rate",
            "extent", "pair_width", "truncation"}
INTEGER = {"nr", "dim", "grid_n", "max_iter", "stencil", "N", "d", "cap", "paths",
           "survival_points", "points", "n_paths", "w2_samples", "bootstrap"}


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "runs"
    emit_plot_data: bool = False

    @classmethod
    def build(cls, raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - GLOBAL_KEYS
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}", sorted(unknown)[0])
        sub = raw.get("subcommand")
        if sub not in DEFAULTS:
            raise ValidationError(f"unknown subcommand {sub!r}", "subcommand")
        params = copy.deepcopy(DEFAULTS[sub])
        given = raw.get("params") or {}
        if not isinstance(given, dict):
            raise ValidationError("params must be an object", "params")
        bad = set(given) - set(params)
        if bad:
            raise ValidationError(f"unknown {sub} parameters: {sorted(bad)}", sorted(bad)[0])
        params.update(given)
        cfg = cls(sub, params, raw.get("seed", 0), raw.get("output_dir", "runs"),
                  bool(raw.get("emit_plot_data", False)))
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer", "seed")
        for key, val in self.params.items():
            if val is None:
                continue
            if key in INTEGER and (isinstance(val, bool) or not isinstance(val, int)):
                raise ValidationError(f"{key} must be an integer", key)
            if key in POSITIVE and not (isinstance(val, (int, float)) and val > 0
                                        and math.isfinite(val)):
                raise ValidationError(f"{key} must be positive", key)
        if self.subcommand == "chaos":
            self.sweep_config().validate()
        return self

    def sweep_config(self) -> SweepConfig:
        return SweepConfig(seed=self.seed, **self.params)

    def to_dict(self) -> dict:
        # output placement and plot side files do not change any result
        return {"subcommand": self.subcommand, "seed": self.seed, "params": self.params}

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def provenance(self) -> dict:
        return {"config_hash": self.hash, "artifact_version": ARTIFACT_VERSION,
                "spec_version": SPEC_VERSION, "config": self.to_dict()}

    def run_dir(self) -> str:
        return os.path.join(self.output_dir, f"{self.subcommand}-{self.hash}")


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}", "config") from None
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object", "config")
    return raw


def atomic_write(path, data: bytes | str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
