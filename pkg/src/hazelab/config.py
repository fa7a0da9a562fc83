# hazelab config - Run configuration files and runtime settings

import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml
from loguru import logger
from pydantic import ValidationError

from ._validation import ConfigError
from .models import RunConfig

# flat key -> location inside RunConfig
FLAT_KEYS: Dict[str, Tuple[str, ...]] = {
    # schedule and batching
    "epochs": ("train", "epochs"),
    "lr_start": ("train", "lr_start"),
    "lr_end": ("train", "lr_end"),
    "decay_start_epoch": ("train", "decay_start_epoch"),
    "crop": ("train", "crop"),
    "batch_labeled": ("train", "batch_labeled"),
    "batch_unlabeled": ("train", "batch_unlabeled"),
    "d_update_period": ("train", "d_update_period"),
    "max_steps": ("train", "max_steps"),
    "seed": ("train", "seed"),
    "feature_seed": ("train", "feature_seed"),
    "checkpoint_every": ("train", "checkpoint_every"),
    "log_every": ("train", "log_every"),
    # optimizer
    "adam_beta1": ("train", "adam", "beta1"),
    "adam_beta2": ("train", "adam", "beta2"),
    "adam_eps": ("train", "adam", "eps"),
    "weight_decay": ("train", "adam", "weight_decay"),
    # loss weights and variants
    "alpha": ("train", "weights", "alpha"),
    "tv_weight": ("train", "weights", "tv_weight"),
    "gamma": ("train", "weights", "gamma"),
    "delta": ("train", "weights", "delta"),
    "epsilon": ("train", "weights", "epsilon"),
    "contrastive_mode": ("train", "contrastive_mode"),
    "contrastive_balance": ("train", "contrastive_balance"),
    "non_saturating": ("train", "non_saturating"),
    "squared_l2": ("train", "squared_l2"),
    "dark_channel_patch": ("train", "dark_channel_patch"),
    # networks
    "base_channels": ("train", "generator", "base_channels"),
    "scales": ("train", "generator", "scales"),
    "blocks_per_scale": ("train", "generator", "blocks_per_scale"),
    "bottleneck_blocks": ("train", "generator", "bottleneck_blocks"),
    "orthonormal_wavelet": ("train", "generator", "orthonormal_wavelet"),
    "reference_layout": ("train", "generator", "reference_layout"),
    "disc_base_channels": ("train", "discriminator", "base_channels"),
    "disc_blocks": ("train", "discriminator", "blocks"),
    # data and ablation switches
    "labeled": ("labeled",),
    "unlabeled": ("unlabeled",),
    "validation": ("validation",),
    "out_dir": ("out_dir",),
    "enable_dwt_bottleneck": ("enable_dwt_bottleneck",),
    "enable_contrastive": ("enable_contrastive",),
}

ENV_PREFIX = "HAZELAB_"


def _first_error(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(part) for part in first["loc"]) or "config"
    return f"{where}: {first['msg']}"


def run_config_from_flat(values: Mapping[str, Any]) -> RunConfig:
    """Build a RunConfig from flat keys; unknown keys are rejected."""
    unknown = sorted(set(values) - set(FLAT_KEYS))
    if unknown:
        raise ConfigError(
            f"unknown config keys: {', '.join(unknown)}",
            suggestion=f"Valid keys are: {', '.join(sorted(FLAT_KEYS))}",
        )
    nested: Dict[str, Any] = {}
    for key, value in values.items():
        node = nested
        *parents, leaf = FLAT_KEYS[key]
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = value

    crop = nested.get("train", {}).get("crop")
    if "discriminator" in nested.get("train", {}) and crop is not None:
        nested["train"]["discriminator"].setdefault("input_size", crop)

    try:
        return RunConfig(**nested)
    except ValidationError as e:
        raise ConfigError(_first_error(e)) from e


def run_config_to_flat(config: RunConfig) -> Dict[str, Any]:
    """Inverse of :func:`run_config_from_flat`; paths become strings."""
    data = config.model_dump()
    flat: Dict[str, Any] = {}
    for key, path in FLAT_KEYS.items():
        node: Any = data
        for part in path:
            node = node[part]
        flat[key] = str(node) if isinstance(node, Path) else node
    return flat


def _parse_key_value_lines(text: str, path: Path) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(
                f"config file {path} line {number}: expected a flat mapping of key: value or key=value pairs"
            )
        value = value.strip()
        # scalars keep their YAML types: 12 -> int, 2e-4 -> float, true -> bool
        try:
            parsed = yaml.safe_load(value) if value else None
        except yaml.YAMLError:
            parsed = value
        values[key.strip()] = parsed if isinstance(parsed, (int, float, bool, type(None))) else value
    return values


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a flat config file, either YAML ``key: value`` or ``key=value`` lines."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        values = yaml.safe_load(text)
    except yaml.YAMLError as e:
        if "=" not in text:
            raise ConfigError(f"cannot parse config file {path}: {e}") from e
        values = None
    if isinstance(values, dict):
        return values
    if values is None and "=" not in text:
        return {}
    return _parse_key_value_lines(text, path)


def env_overrides(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    found = {}
    for key in FLAT_KEYS:
        value = environ.get(ENV_PREFIX + key.upper())
        if value is not None:
            found[key] = value
    return found


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Defaults, then the config file, then HAZELAB_* variables, then ``overrides``."""
    values: Dict[str, Any] = {}
    if path is not None:
        values.update(read_config_file(path))
        logger.debug(f"Loaded {len(values)} config keys from {path}")
    from_env = env_overrides(environ)
    if from_env:
        logger.debug(f"Environment overrides: {sorted(from_env)}")
    values.update(from_env)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return run_config_from_flat(values)


def write_run_config(config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(run_config_to_flat(config), f, sort_keys=True)
    return path


class HazelabSettings:
    """Runtime settings that are not part of a run: logging and reporting."""

    def __init__(self, config_path: Optional[Path] = None, environ: Optional[Mapping[str, str]] = None):
        self._config_path = config_path or Path.home() / ".hazelab" / "hazelab.yaml"
        self._settings = self._load_settings(environ)

    def _load_settings(self, environ: Optional[Mapping[str, str]]) -> dict:
        """Load settings from various sources in priority order"""
        settings = {
            "log_level": "INFO",
            "log_to_file": False,
            "psnr_cap": 99.0,
        }

        if self._config_path.exists():
            try:
                with open(self._config_path) as f:
                    settings.update(yaml.safe_load(f) or {})
            except (OSError, yaml.YAMLError) as e:
                logger.warning(f"Ignoring unreadable settings file {self._config_path}: {e}")

        environ = os.environ if environ is None else environ
        env_mapping = {
            "HAZELAB_LOG_LEVEL": ("log_level", str.upper),
            "HAZELAB_LOG_TO_FILE": ("log_to_file", lambda x: x.lower() == "true"),
            "HAZELAB_PSNR_CAP": ("psnr_cap", float),
        }
        for env_var, (key, converter) in env_mapping.items():
            value = environ.get(env_var)
            if value is not None:
                try:
                    settings[key] = converter(value)
                except ValueError:
                    logger.warning(f"Ignoring invalid {env_var}={value!r}")
        return settings

    def get(self, key: str, default: Any = None) -> Any:
        return self._settings.get(key, default)

    def set(self, key: str, value: Any) -> None:
        """Set a value for this process only"""
        self._settings[key] = value

    @property
    def log_level(self) -> str:
        return self.get("log_level", "INFO")

    @property
    def log_to_file(self) -> bool:
        return bool(self.get("log_to_file", False))

    @property
    def psnr_cap(self) -> float:
        return float(self.get("psnr_cap", 99.0))


# Global settings instance
settings = HazelabSettings()
