"""One JSON document holding every tunable, with defaults taken from the dataclasses.

Sections map onto the parameter classes of the library modules; a user
file only needs the keys it changes. ``override`` applies ``section.key``
assignments, which is how command-line flags land in the config.
"""

from __future__ import annotations

import copy
import dataclasses
import json
from pathlib import Path

from .augment import AugmentConfig
from .core import InvariantError
from .morphology import StructuringElement
from .pipeline import SegmentParams
from .scenegen import NoiseConfig, SceneConfig
from .voting import VotingParams


class ConfigError(ValueError):
    """Unknown key, wrong type, or a value that breaks a parameter invariant."""


_SEEDED = {"scene": SceneConfig, "augment": AugmentConfig}
_PLAIN = {"voting": VotingParams, "noise": NoiseConfig}

_EXTRA_DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "segment": {"method": "fast", "use_imp": True, "connectivity": 8,
                "se_shape": "disk", "se_fraction": 0.003, "se_radius": None},
    "oracle": {"direction_noise_deg": 0.0, "label_flip_prob": 0.0},
    "metrics": {"slack_radius": None, "averaging": "macro"},
    "refine": {"pad_frac": 0.25},
    "gen": {"count": 100, "depth_noise": False},
    "augment_gen": {"samples_per_instance": 1},
}


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def _section_defaults(cls) -> dict:
    inst = cls()
    return {f.name: _jsonable(getattr(inst, f.name)) for f in dataclasses.fields(cls)
            if f.init and f.name != "rng_seed"}


def default_config() -> dict:
    cfg = copy.deepcopy(_EXTRA_DEFAULTS)
    for name, cls in {**_SEEDED, **_PLAIN}.items():
        cfg[name] = _section_defaults(cls)
    return cfg


def _merge(base: dict, user: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in user.items():
        path = f"{where}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict) and key not in ("apply_probs",):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path!r} must be an object")
            out[key] = _merge(base[key], val, path + ".")
        else:
            out[key] = val
    return out


def load_config(path=None) -> dict:
    """Defaults, updated from a JSON file if one is given, then validated."""
    cfg = default_config()
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON ({exc})") from None
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        cfg = _merge(cfg, user)
    validate(cfg)
    return cfg


def override(cfg: dict, dotted: str, value) -> dict:
    """Copy of ``cfg`` with ``section.key`` (or a top-level key) set to ``value``."""
    parts = dotted.split(".")
    patch = value
    for p in reversed(parts):
        patch = {p: patch}
    out = _merge(cfg, patch)
    validate(out)
    return out


def _build(cls, section: dict, **extra):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in section:
            v = section[f.name]
            kwargs[f.name] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs, **extra)
    except (InvariantError, TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from None


def voting_params(cfg: dict) -> VotingParams:
    return _build(VotingParams, cfg["voting"])


def segment_params(cfg: dict) -> SegmentParams:
    s = cfg["segment"]
    if s["method"] not in ("fast", "exact"):
        raise ConfigError("segment.method must be 'fast' or 'exact'")
    if s["connectivity"] not in (4, 8):
        raise ConfigError("segment.connectivity must be 4 or 8")
    se = None
    try:
        if s["se_radius"] is not None:
            se = StructuringElement(s["se_shape"], int(s["se_radius"]))
        else:
            StructuringElement(s["se_shape"], 1)
    except InvariantError as exc:
        raise ConfigError(f"segment: {exc}") from None
    return SegmentParams(
        voting=voting_params(cfg),
        method=s["method"],
        use_imp=bool(s["use_imp"]),
        se_open=se,
        se_close=se,
        connectivity=int(s["connectivity"]),
        se_fraction=float(s["se_fraction"]),
        se_shape=s["se_shape"],
    )


def scene_config(cfg: dict) -> SceneConfig:
    return _build(SceneConfig, cfg["scene"], rng_seed=int(cfg["seed"]))


def noise_config(cfg: dict) -> NoiseConfig:
    return _build(NoiseConfig, cfg["noise"])


def augment_config(cfg: dict) -> AugmentConfig:
    return _build(AugmentConfig, cfg["augment"], rng_seed=int(cfg["seed"]))


def validate(cfg: dict) -> None:
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer")
    if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
        raise ConfigError("workers must be a positive integer")
    m = cfg["metrics"]
    if m["slack_radius"] is not None and (not isinstance(m["slack_radius"], int) or m["slack_radius"] < 0):
        raise ConfigError("metrics.slack_radius must be null or a nonnegative integer")
    if m["averaging"] not in ("macro", "micro"):
        raise ConfigError("metrics.averaging must be 'macro' or 'micro'")
    o = cfg["oracle"]
    if o["direction_noise_deg"] < 0 or not 0.0 <= o["label_flip_prob"] <= 1.0:
        raise ConfigError("oracle noise must be nonnegative and the flip probability in [0, 1]")
    if not cfg["refine"]["pad_frac"] >= 0:
        raise ConfigError("refine.pad_frac must be nonnegative")
    if not isinstance(cfg["gen"]["count"], int) or cfg["gen"]["count"] < 0:
        raise ConfigError("gen.count must be a nonnegative integer")
    if not isinstance(cfg["augment_gen"]["samples_per_instance"], int) or cfg["augment_gen"]["samples_per_instance"] < 1:
        raise ConfigError("augment_gen.samples_per_instance must be a positive integer")
    segment_params(cfg)
    scene_config(cfg)
    noise_config(cfg)
    augment_config(cfg)
