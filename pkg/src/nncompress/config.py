"""Run configuration files (same ``key=value`` dialect as artifact headers)."""

from __future__ import annotations

from dataclasses import fields, replace

from . import kvtext
from .network import ModelConfig, TOGGLES
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


# "full" is the full-size reference setup; "desk" is the laptop-scale profile used by
# the acceptance run (50k steps split into 20 epochs).
PROFILES = {
    "full": dict(d=12, width=512, m=128, sigma=1.6, learning_rate=3e-4, epochs=20, batch_size=389_880),
    "desk": dict(d=4, width=64, m=32, sigma=1.6, learning_rate=3e-4, epochs=20, batch_size=256,
                 samples_per_epoch=640_000, log_every=2500, val_slices=8),
}

_MODEL_KEYS = {f.name for f in fields(ModelConfig)} | {"width"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"workers"}
KEYS = _MODEL_KEYS | _TRAIN_KEYS | {"profile"}


def _convert(key: str, raw):
    if not isinstance(raw, str):
        return raw
    try:
        if key in TOGGLES:
            return kvtext.parse_bool(raw)
        if key == "widths":
            return tuple(kvtext.parse_ints(raw))
        if key == "activation":
            return raw.lower()
        if key in ("c_t", "c_p") and raw.lower() in ("", "auto"):
            return None
        if key == "samples_per_epoch" and raw.lower() in ("", "auto", "grid"):
            return None
        if key in ("d", "width", "m", "batch_size", "samples_per_epoch", "epochs", "seed", "log_every", "val_slices"):
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None


def build_configs(pairs: dict, seed: int | None = None, workers: int = 1) -> tuple[ModelConfig, TrainConfig]:
    unknown = sorted(set(pairs) - KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    profile = pairs.get("profile", "desk")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    merged = dict(PROFILES[profile])
    merged.update({k: _convert(k, v) for k, v in pairs.items() if k != "profile"})
    if seed is not None:
        merged["seed"] = seed
    d = merged.pop("d")
    width = merged.pop("width", None)
    widths = merged.pop("widths", None) or (width,) * d
    model_kw = {k: merged.pop(k) for k in list(merged) if k in _MODEL_KEYS}
    try:
        mcfg = ModelConfig(d=d, widths=tuple(widths), **model_kw)
        tcfg = TrainConfig(workers=workers, **merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return mcfg, tcfg


def load_configs(path, seed: int | None = None, workers: int = 1) -> tuple[ModelConfig, TrainConfig]:
    try:
        pairs = kvtext.load(path)
    except kvtext.KVError as exc:
        raise ConfigError(str(exc)) from None
    return build_configs(pairs, seed=seed, workers=workers)


def with_toggles(mcfg: ModelConfig, **toggles) -> ModelConfig:
    return replace(mcfg, **toggles)
