"""Single-document JSON configuration with per-module parameter blocks."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .beliefs import Conjecture, default_family
from .controllers import BeliefParams
from .planner import PlannerParams
from .safety import FilterParams

SCHEMA_VERSION = 1

DEFAULT_CONFIG: dict = {
    "schema_version": SCHEMA_VERSION,
    "suite": {
        "environments": ["bottleneck", "warehouse-squeeze"],
        "controllers": ["rcsp-full", "dwa-style"],
        "seeds": [0, 1, 2, 3, 4, 5],
    },
    "planner": {
        "N": 64,
        "H": 20,
        "alpha": 0.1,
        "risk_weight": 2.0,
        "objective": "cvar",
        "top_k": 6,
        "c_safe": 0.5,
        "fractional_tail": True,
    },
    "filter": {
        "c_hard": 0.15,
        "kappa": 0.5,
        "horizon": 10,
        "w_progress": 1.0,
        "w_clearance": 2.0,
        "w_deviation": 0.5,
        "infeasible_penalty": 1000.0,
    },
    "beliefs": {
        "tau": 2.0,
        "floor": 0.02,
        "smoothing": 0.2,
        "sigma_like_slack": 0.05,
    },
    "family": [c.to_dict() for c in default_family()],
    "env_overrides": {},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Defaults merged with an optional JSON config file."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    with open(path) as f:
        user = json.load(f)
    return _merge(DEFAULT_CONFIG, user)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def fingerprint(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def family_from_config(config: dict) -> tuple[Conjecture, ...]:
    return tuple(Conjecture.from_dict(d) for d in config["family"])


def planner_params_from_config(config: dict) -> PlannerParams:
    return PlannerParams(**config["planner"])


def filter_params_from_config(config: dict, env) -> FilterParams:
    return FilterParams(dt=env.dt, robot_radius=env.robot_radius,
                        v_max=env.v_max, omega_max=env.omega_max,
                        **config["filter"])


def belief_params_from_config(config: dict) -> BeliefParams:
    return BeliefParams(**config["beliefs"])
