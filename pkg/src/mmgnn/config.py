"""Flat ``key = value`` run configuration files."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .dataset import MODALITIES, SyntheticSpec
from .errors import ConfigError
from .evaluation import DEFAULT_K
from .training import TrainConfig

_SYNTH_KEYS = ("n_users", "n_songs", "n_groups", "p_in", "p_out", "q_in", "q_out",
               "noise_sigma", "cold_fraction", "test_fraction")
_DIM_KEYS = {f"dim_{m}": m for m in MODALITIES}
_PATH_KEYS = ("data", "out")


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    paths: dict = field(default_factory=dict)
    k_list: tuple = DEFAULT_K


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_k_list(text):
    ks = tuple(int(x) for x in text.split(",") if x.strip())
    if not ks or min(ks) < 1:
        raise ValueError("expected comma-separated positive integers")
    return ks


def _convert(default, text):
    if isinstance(default, bool):
        return _parse_bool(text)
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_config(text: str, source="<config>") -> RunConfig:
    """Parse config text; unknown or duplicate keys raise :class:`ConfigError`."""
    cfg = RunConfig()
    train_fields = {f.name for f in fields(TrainConfig)}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        try:
            if key in train_fields:
                setattr(cfg.train, key, _convert(getattr(cfg.train, key), value))
                if key == "seed":
                    cfg.synthetic.seed = cfg.train.seed
            elif key in _SYNTH_KEYS:
                setattr(cfg.synthetic, key, _convert(getattr(cfg.synthetic, key), value))
            elif key in _DIM_KEYS:
                dims = dict(cfg.synthetic.feature_dims)
                dims[_DIM_KEYS[key]] = int(value)
                cfg.synthetic.feature_dims = dims
            elif key in _PATH_KEYS:
                cfg.paths[key] = value
            elif key == "k_list":
                cfg.k_list = _parse_k_list(value)
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    try:
        cfg.train.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))
