import os
from typing import Dict, Any, Optional
import json
from loguru import logger
from pydantic import ValidationError

from .schemas import SweepSpec

# Default configuration
DEFAULT_CONFIG = {
    "psi_list": [20.0, 45.0, 60.0],
    "xi_list": [20.0, 45.0, 60.0],
    "phi_deg": 0.0,
    "k_max": 4,
    # DERIVED, not measured. With c = exp(-(d/sigma)^2 / 8) the xi=45 deg survival at k=4,
    # ((1+c)/2)^4, stays >= 0.73 for d/sigma <= 1.146 while the unprotected psi=45 deg
    # fidelity (1 + c^16)/2 drops to <= 0.56 for d/sigma >= 1.03. The survival_product
    # value, with branches renormalized between projections, is higher (0.79 at 1.07)
    "d_over_sigma": 1.07,
    "n_repetitions": 30,
    "shots_mean": 50000.0,
    "seed": 20240601,
    "protected": True,
    "project_after_last_block": True,
    "passive_transmission_per_element": 1.0,
    "monitor_fraction": 1.0,
    "workers": 1,
    "use_ancilla": True,
    "zeno_steps": [1, 2, 4, 8, 16, 32, 64, 128, 256],
    "output_dir": "results",
}

# Path to the config file
CONFIG_PATH = os.path.join(os.path.dirname(os.path.dirname(__file__)), "config.json")
EFFECTIVE_CONFIG_NAME = "config_used.json"

_TYPE_NAMES = {
    "int": "integer",
    "float": "number",
    "bool": "boolean",
    "list": "list",
    "str": "string",
}


class ConfigError(ValueError):
    """Malformed configuration; names the offending key and what it should hold"""

    def __init__(self, key: str, expected: str, message: str):
        self.key = key
        self.expected = expected
        super().__init__(f"Config key '{key}': {message} (expected {expected})")


def _expected_type(key: str) -> str:
    field = SweepSpec.model_fields.get(key)
    if field is None:
        return "no such key"
    annotation = getattr(field.annotation, "__name__", None) or str(field.annotation)
    return _TYPE_NAMES.get(annotation.lower(), annotation)


def spec_from_dict(data: Dict[str, Any]) -> SweepSpec:
    """Validate a flat config mapping, translating the first validation error into a ConfigError"""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "a flat JSON object", f"got {type(data).__name__}")
    try:
        return SweepSpec(**data)
    except ValidationError as e:
        error = e.errors()[0]
        key = str(error["loc"][0]) if error["loc"] else "<root>"
        if error["type"] == "extra_forbidden":
            raise ConfigError(key, "one of " + ", ".join(SweepSpec.model_fields), "unknown key") from e
        if error["type"] == "missing":
            raise ConfigError(key, _expected_type(key), "missing") from e
        raise ConfigError(key, _expected_type(key), error["msg"]) from e


def load_config(path: Optional[str] = None) -> SweepSpec:
    """Load the sweep configuration from a JSON file (config.json by default)"""
    path = path or CONFIG_PATH
    if not os.path.exists(path):
        raise ConfigError("<file>", "an existing JSON file", f"{path} not found")
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        logger.error(f"Error loading configuration: {str(e)}")
        raise ConfigError("<file>", "valid JSON", f"{path}: {str(e)}") from e
    spec = spec_from_dict(data)
    logger.info(f"Configuration loaded from {path}")
    return spec


def save_config(spec: SweepSpec, out_dir: str) -> str:
    """Record the effective configuration (file values plus overrides) next to a run's outputs"""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, EFFECTIVE_CONFIG_NAME)
    with open(path, 'w') as f:
        json.dump(spec.model_dump(mode="json"), f, indent=4, sort_keys=True)
    logger.info(f"Effective configuration written to {path}")
    return path


def apply_overrides(spec: SweepSpec, seed: Optional[int] = None, output_dir: Optional[str] = None,
                    workers: Optional[int] = None) -> SweepSpec:
    """Command-line values take precedence over the file"""
    updates = {key: value for key, value in
               (("seed", seed), ("output_dir", output_dir), ("workers", workers)) if value is not None}
    if not updates:
        return spec
    return spec_from_dict({**spec.model_dump(), **updates})
