"""
Configuration utility for the inversion pipeline
"""
import copy
import hashlib
import json
import os
from pathlib import Path

from .errors import ConfigError

CONFIG_FILE = 'config.json'

# Keys accepted by one entry of scenario.inclusions
INCLUSION_KEYS = {
    "shape": str,
    "center": list,
    "radius": float,
    "half_extents": list,
    "epsilon": float,
    "depth": float,
    "label": str,
    "measured_n": float,
}

# Keys whose default is None accept these types
NULLABLE_TYPES = {
    "domain.gamma_prime_half_width": list,
    "time.time_step": float,
}


def default_config():
    """Create the default configuration (2-D desk-scale single inclusion)"""
    return {
        "version": "1.0.0",
        "run_name": "coeffinv",
        "domain": {
            "dimension": 2,
            # G: field domain, last axis is depth z
            "G": {"lo": [-0.3, -0.16], "hi": [0.3, 0.1]},
            "omega": {"lo": [-0.2, -0.12], "hi": [0.2, 0.04]},
            "z0": 0.08,
            # X (and Y in 3-D) of Gamma'; null means the lateral extent of G
            "gamma_prime_half_width": None,
        },
        "grid": {
            "spacing": 0.01,
            "synthesis_refinement": 2,
            "coarse_cells": [10, 4],
            "max_level": 2,
        },
        "time": {
            "final_time": 1.2,
            "cfl_safety": 0.5,
            "time_step": 0.003,
        },
        "source": {
            "omega": 30.0,
        },
        "laplace": {
            "s_min": 6.0,
            "s_max": 8.0,
            "layers": 10,
            "psi_oversampling": 4,
        },
        "stage1": {
            "carleman_lambda": 20.0,
            "inner_iterations": 5,
            "inner_tol": 1e-3,
            "outer_tol": 1e-3,
            "eps_max": 25.0,
            "s_eval": "s_n",
            "linear_tol": 1e-9,
            "linear_maxiter": 2000,
        },
        "stage2": {
            "gamma": 0.01,
            "theta": 1e-6,
            "beta1": 0.7,
            "max_refinements": 4,
            "max_cg_iterations": 8,
            "delta_fraction": 0.1,
            "armijo_c": 1e-4,
            "shrink": 0.5,
            "max_backtracks": 30,
            "max_update": 1.0,
            "stabilization_tol": 1e-3,
            "interpolation_constant": 1.0,
            "lipschitz_constant": 1.0,
            "restart": "glob",
        },
        "preprocess": {
            "propagation_offset": 0.0,
            "calibration_factor": 1.0,
            "noise_window": 20,
            "arrival_factor": 5.0,
            "arrival_floor": 0.01,
        },
        "scenario": {
            "name": "single-inclusion",
            "background": 1.0,
            "noise": 0.0,
            "seed": 0,
            "inclusions": [
                {
                    "shape": "ball",
                    "center": [0.0, -0.03],
                    "radius": 0.03,
                    "epsilon": 4.0,
                    "label": "dielectric",
                }
            ],
        },
    }


def _deep_merge(base, override):
    """Merge `override` into a copy of `base`, recursing into dicts"""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _type_ok(value, expected):
    if expected is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if expected is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, expected)


class Config:
    """
    Handles reading, validating and writing the JSON run configuration
    """
    def __init__(self, config_path=None, overrides=None):
        self.config_path = Path(config_path) if config_path else None
        self.config = self._load_config()
        if overrides:
            self.config = _deep_merge(self.config, overrides)
        self.validate()

    def get_config_path(self):
        """Return the path to the config file as a string"""
        return str(self.config_path) if self.config_path else ""

    def _load_config(self):
        """Load the configuration file merged over the defaults"""
        defaults = default_config()
        if self.config_path is None:
            return defaults
        if not os.path.exists(self.config_path):
            raise ConfigError(f"Config file not found: {self.config_path}", keys=[])
        try:
            with open(self.config_path, 'r', encoding='utf-8') as f:
                user = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Error reading config file {self.config_path}: {e}", keys=[])
        if not isinstance(user, dict):
            raise ConfigError("Config root must be an object", keys=["<root>"])
        return _deep_merge(defaults, user)

    def validate(self):
        """Check keys and value types against the defaults tree"""
        problems = []
        self._check_tree(self.config, default_config(), "", problems)
        for i, inclusion in enumerate(self.get("scenario.inclusions", [])):
            prefix = f"scenario.inclusions[{i}]"
            if not isinstance(inclusion, dict):
                problems.append(prefix)
                continue
            for key, value in inclusion.items():
                expected = INCLUSION_KEYS.get(key)
                if expected is None or not _type_ok(value, expected):
                    problems.append(f"{prefix}.{key}")
            for required in ("shape", "center", "epsilon"):
                if required not in inclusion:
                    problems.append(f"{prefix}.{required}")
        if problems:
            raise ConfigError(f"Invalid configuration keys: {', '.join(problems)}", keys=problems)

    def _check_tree(self, node, reference, prefix, problems):
        for key, value in node.items():
            path = f"{prefix}{key}"
            if key not in reference:
                problems.append(path)
                continue
            expected = reference[key]
            if isinstance(expected, dict):
                if not isinstance(value, dict):
                    problems.append(path)
                else:
                    self._check_tree(value, expected, path + ".", problems)
            elif expected is None:
                nullable = NULLABLE_TYPES.get(path)
                if value is not None and nullable is not None and not _type_ok(value, nullable):
                    problems.append(path)
            elif value is None and path in NULLABLE_TYPES:
                continue
            elif not _type_ok(value, type(expected)):
                problems.append(path)

    def save(self, path=None):
        """Save configuration to file"""
        target = Path(path) if path else self.config_path
        if target is None:
            raise ConfigError("No path to save configuration to", keys=[])
        os.makedirs(target.parent, exist_ok=True)
        with open(target, 'w', encoding='utf-8') as f:
            json.dump(self.config, f, indent=4, sort_keys=True)

    def update(self, **kwargs):
        """Update configuration blocks (nested dicts are merged)"""
        self.config = _deep_merge(self.config, kwargs)
        self.validate()

    def get(self, key, default=None):
        """Get a configuration value"""
        # Support nested keys with dot notation (e.g., "stage1.carleman_lambda")
        if '.' in key:
            value = self.config
            for part in key.split('.'):
                if isinstance(value, dict):
                    value = value.get(part)
                else:
                    return default
            return value if value is not None else default
        return self.config.get(key, default)

    def as_dict(self):
        return copy.deepcopy(self.config)

    def digest(self):
        """SHA-256 of the canonical JSON form, recorded in run manifests"""
        canonical = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
