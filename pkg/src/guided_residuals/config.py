"""Run configuration: a flat registry of dotted keys with typed defaults.

Values merge in precedence order: built-in defaults, then a JSON config file
(nested sections or flat dotted keys), then explicit overrides such as CLI
flags. Unknown keys are rejected by name so typos fail loudly instead of
silently running a default.
"""

from __future__ import annotations

import json

from .data import SCENARIOS, DatasetConfig
from .experiment import RunSpec, resolve_fusion
from .guided_filter import GuidedFilterParams
from .model import TrainSettings

DEFAULTS: dict[str, object] = {
    "guided.radius": 2,
    "guided.epsilon": 1e-2,
    "mte.enabled": True,
    "afm.enabled": True,
    "afm.skip_connection": False,
    "afm.freeze_epoch_weights": False,
    "fusion.method": "afm",
    "train.epochs": 8,
    "train.batch_size": 64,
    "train.learning_rate": 1e-3,
    "train.lr_decay": 0.7,
    "train.seed": 0,
    "data.classes": 4,
    "data.train_per_class": 500,
    "data.test_per_class": 100,
    "data.scenario": "raw",
    "data.amplitude_low": 0.05,
    "data.amplitude_high": 0.12,
    "data.jpeg_quality": 60,
    "data.mean_kernel": 5,
    "data.image_size": 64,
    "data.seed": 0,
}

_CHOICES = {
    "fusion.method": ("afm", "max", "min", "sum", "concat"),
    "data.scenario": SCENARIOS,
}


def known_keys() -> list[str]:
    return sorted(DEFAULTS)


def coerce(key: str, raw: object):
    """Convert a raw value (possibly a string) to the key's registered type."""
    if key not in DEFAULTS:
        raise ValueError(f"unknown config key {key!r} (known keys: {', '.join(known_keys())})")
    target = type(DEFAULTS[key])
    if target is bool:
        if isinstance(raw, bool):
            value = raw
        elif isinstance(raw, str) and raw.lower() in ("true", "false", "1", "0", "yes", "no"):
            value = raw.lower() in ("true", "1", "yes")
        else:
            raise ValueError(f"config key {key!r} wants a boolean, got {raw!r}")
    elif target is int:
        if isinstance(raw, bool) or (isinstance(raw, float) and raw != int(raw)):
            raise ValueError(f"config key {key!r} wants an integer, got {raw!r}")
        try:
            value = int(raw)
        except (TypeError, ValueError):
            raise ValueError(f"config key {key!r} wants an integer, got {raw!r}") from None
    elif target is float:
        if isinstance(raw, bool):
            raise ValueError(f"config key {key!r} wants a number, got {raw!r}")
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ValueError(f"config key {key!r} wants a number, got {raw!r}") from None
    else:
        value = str(raw)
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ValueError(f"config key {key!r} must be one of {_CHOICES[key]}, got {value!r}")
    return value


def _flatten(section: str, obj: dict, out: dict[str, object]) -> None:
    for name, value in obj.items():
        key = f"{section}.{name}" if section else str(name)
        if isinstance(value, dict):
            _flatten(key, value, out)
        else:
            out[key] = value


def load_config_file(path: str) -> dict[str, object]:
    """Read a JSON config; returns validated {dotted-key: typed value}."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ValueError(f"config file {path} is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must contain a JSON object")
    flat: dict[str, object] = {}
    _flatten("", raw, flat)
    return {key: coerce(key, value) for key, value in flat.items()}


def parse_override(text: str) -> tuple[str, object]:
    """Parse one 'key=value' override string."""
    if "=" not in text:
        raise ValueError(f"override must look like key=value, got {text!r}")
    key, _, raw = text.partition("=")
    key = key.strip()
    return key, coerce(key, raw.strip())


def merge_config(*layers: dict[str, object] | None) -> dict[str, object]:
    """Later layers win; every key is validated against the registry."""
    merged = dict(DEFAULTS)
    for layer in layers:
        if not layer:
            continue
        for key, value in layer.items():
            merged[key] = coerce(key, value)
    # rejects attention enabled alongside a baseline fusion method
    resolve_fusion(bool(merged["afm.enabled"]), _baseline_or_none(merged))
    return merged


def _baseline_or_none(cfg: dict[str, object]) -> str | None:
    method = cfg["fusion.method"]
    return None if method == "afm" else str(method)


# -- builders ---------------------------------------------------------------

def guided_params(cfg: dict[str, object]) -> GuidedFilterParams:
    return GuidedFilterParams(radius=int(cfg["guided.radius"]),
                              epsilon=float(cfg["guided.epsilon"]))


def dataset_config(cfg: dict[str, object], scenario: str | None = None) -> DatasetConfig:
    return DatasetConfig(
        n_train_per_class=int(cfg["data.train_per_class"]),
        n_test_per_class=int(cfg["data.test_per_class"]),
        n_classes=int(cfg["data.classes"]),
        scenarios=(scenario or str(cfg["data.scenario"]),),
        amplitude_low=float(cfg["data.amplitude_low"]),
        amplitude_high=float(cfg["data.amplitude_high"]),
        jpeg_quality=int(cfg["data.jpeg_quality"]),
        mean_kernel=int(cfg["data.mean_kernel"]),
        image_size=int(cfg["data.image_size"]),
        seed=int(cfg["data.seed"]),
    )


def train_settings(cfg: dict[str, object], seed: int | None = None) -> TrainSettings:
    return TrainSettings(
        epochs=int(cfg["train.epochs"]),
        batch_size=int(cfg["train.batch_size"]),
        learning_rate=float(cfg["train.learning_rate"]),
        lr_decay=float(cfg["train.lr_decay"]),
        seed=int(cfg["train.seed"] if seed is None else seed),
    )


def run_spec(cfg: dict[str, object], scenario: str | None = None,
             seed: int | None = None) -> RunSpec:
    use_afm = bool(cfg["afm.enabled"])
    return RunSpec(
        scenario=scenario or str(cfg["data.scenario"]),
        use_mte=bool(cfg["mte.enabled"]),
        use_afm=use_afm,
        fusion_method=None if use_afm else _baseline_or_none(cfg),
        seed=int(cfg["train.seed"] if seed is None else seed),
        skip_connection=bool(cfg["afm.skip_connection"]),
        freeze_epoch_weights=bool(cfg["afm.freeze_epoch_weights"]),
    )
