"""Experiment configuration: a JSON document with a fixed schema.

Top-level keys
--------------
title        str, used for plot titles
problem      problem spec (``{"kind": "registry", "id": ...}`` or any kind
             accepted by ``problems.problem_from_spec``); excludes ``dataset``
dataset      ``{"synthetic": {...} | "path": str, "loss": "square"|"hinge",
             "set": set spec, "lambda": float, "split": [4, 1, 1],
             "split_seed": int, "scale": "none"|"maxabs"}``
algorithms   list of ``{"id": one of ALGORITHMS, "label": str, ...params}``
n_grid       list of positive ints (sample budgets)
replicates   positive int
seed         base seed, 0 <= seed < 2**64
delta        confidence parameter for bound checks, in (0, 1)
checkpoints  number of log-spaced trace points per run
timing       record wall-clock times (breaks byte-identical reruns)
out          output directory
"""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

ALGORITHMS = ("ssg", "asa", "ssgs", "asa2", "psg", "asa3", "smd", "sag")

ALGO_PARAMS = {
    "ssg": {"gamma", "R0", "G"},
    "asa": {"R0", "G", "G_scale"},
    "ssgs": {"beta", "R0", "G"},
    "asa2": {"R0", "G", "G_scale"},
    "psg": {"gamma", "R0", "G"},
    "asa3": {"R0", "G", "G_scale"},
    "smd": {"gamma", "p"},
    "sag": {"step", "epochs"},
}
COMMON_PARAMS = {"id", "label", "w1", "tune"}

# documented default tuning grid: 10^-4 .. 10^0, log-spaced
DEFAULT_GRID = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    algorithms: list
    n_grid: list
    problem: Optional[dict] = None
    dataset: Optional[dict] = None
    replicates: int = 1
    seed: int = 0
    delta: float = 0.1
    checkpoints: int = 32
    timing: bool = False
    title: str = ""
    out: str = "results"
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        extra = d.pop("extra")
        d = {k: v for k, v in d.items() if v is not None}
        d.update(extra)
        return d

    @classmethod
    def from_dict(cls, d):
        d = copy.deepcopy(d)
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__ if f != "extra"}
        extra = {k: d.pop(k) for k in list(d) if k not in known}
        for key in ("algorithms", "n_grid"):
            if key not in d:
                raise ConfigError(f"missing required key {key!r}")
        return cls(**d, extra=extra)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def is_dataset(self):
        return self.dataset is not None

    @property
    def metric(self):
        return "test_error" if self.is_dataset else "excess_risk"


def labels(cfg):
    return [a.get("label", a["id"]) for a in cfg.algorithms]


def validate(cfg):
    """List of problems with ``cfg``; empty when valid."""
    from ..problems import REGISTRY

    errs = []
    if cfg.extra:
        errs.append(f"unknown config keys {sorted(cfg.extra)}")
    if (cfg.problem is None) == (cfg.dataset is None):
        errs.append("exactly one of 'problem' and 'dataset' must be given")
    if cfg.problem is not None:
        p = cfg.problem
        if not isinstance(p, dict) or "kind" not in p:
            errs.append("problem must be an object with a 'kind'")
        elif p["kind"] == "registry" and p.get("id") not in REGISTRY:
            errs.append(f"unknown problem id {p.get('id')!r}; known: {sorted(REGISTRY)}")
    if cfg.dataset is not None:
        ds = cfg.dataset
        if ("synthetic" in ds) == ("path" in ds):
            errs.append("dataset needs exactly one of 'synthetic' and 'path'")
        if ds.get("loss", "square") not in ("square", "hinge"):
            errs.append(f"unknown loss {ds.get('loss')!r}")
        if "set" not in ds:
            errs.append("dataset needs a constraint 'set'")
        if ds.get("scale", "none") not in ("none", "maxabs"):
            errs.append("dataset.scale must be 'none' or 'maxabs'")
    if not isinstance(cfg.algorithms, list) or not cfg.algorithms:
        errs.append("algorithms must be a nonempty list")
    else:
        seen = set()
        for i, a in enumerate(cfg.algorithms):
            if not isinstance(a, dict) or a.get("id") not in ALGORITHMS:
                errs.append(f"algorithms[{i}]: unknown id {a.get('id') if isinstance(a, dict) else a!r}")
                continue
            bad = set(a) - ALGO_PARAMS[a["id"]] - COMMON_PARAMS
            if bad:
                errs.append(f"algorithms[{i}] ({a['id']}): unknown parameters {sorted(bad)}")
            lab = a.get("label", a["id"])
            if lab in seen:
                errs.append(f"duplicate algorithm label {lab!r}")
            seen.add(lab)
            if "tune" in a:
                t = a["tune"]
                if not isinstance(t, dict) or t.get("param") not in ALGO_PARAMS[a["id"]]:
                    errs.append(f"algorithms[{i}]: tune.param must be one of {sorted(ALGO_PARAMS[a['id']])}")
                elif not cfg.is_dataset:
                    errs.append(f"algorithms[{i}]: tuning needs a dataset with a validation split")
    if not isinstance(cfg.n_grid, list) or not cfg.n_grid:
        errs.append("n_grid must be a nonempty list")
    elif any(not isinstance(n, int) or n < 1 for n in cfg.n_grid):
        errs.append("n_grid entries must be positive integers")
    if not isinstance(cfg.replicates, int) or cfg.replicates < 1:
        errs.append("replicates must be a positive integer")
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2 ** 64:
        errs.append("seed must be an integer in [0, 2**64)")
    if not 0 < cfg.delta < 1:
        errs.append("delta must lie in (0, 1)")
    if not isinstance(cfg.checkpoints, int) or cfg.checkpoints < 2:
        errs.append("checkpoints must be an integer >= 2")
    return errs


def check(cfg):
    errs = validate(cfg)
    if errs:
        raise ConfigError("; ".join(errs))
    return cfg


def _set_path(d, key, value):
    parts = key.split(".")
    cur = d
    for p in parts[:-1]:
        if isinstance(cur, list):
            cur = cur[int(p)]
        else:
            cur = cur.setdefault(p, {})
    last = parts[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    else:
        cur[last] = value


def apply_overrides(d, overrides):
    """Apply ``key.path=value`` strings; values are parsed as JSON when possible."""
    d = copy.deepcopy(d)
    for item in overrides or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        try:
            _set_path(d, key, value)
        except (IndexError, ValueError, TypeError, AttributeError) as e:
            raise ConfigError(f"cannot apply override {item!r}: {e}") from None
    return d


def load_config(path, overrides=None, seed=None, out=None):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from None
    raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    try:
        cfg = ExperimentConfig.from_dict(raw)
    except TypeError as e:
        raise ConfigError(str(e)) from None
    return check(cfg)


def save_config(cfg, path):
    with open(path, "w") as fh:
        fh.write(cfg.dumps() + "\n")
