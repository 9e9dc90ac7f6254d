"""
Experiment configuration: strict JSON parsing with defaults echoed back.

A minimal file only needs the grid and the model variant::

    {"grid": {"n": 2, "size": 64}, "model": {"variant": "GeneralizedNoDamping"}}

Unknown keys, wrong types and violated constraints raise ConfigError with
the dotted key path in the message.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dynamics import VARIANTS, ModelParams
from .errors import ConfigError
from .integrator import StepperConfig
from .spectral import Grid

EXPERIMENT_KINDS = ("simulate", "energy-audit", "nu-sweep", "besov-norm", "commutator-test")
SIGMA = 6.0


@dataclass(frozen=True)
class GridConfig:
    n: int
    size: int
    dealias_fraction: float = 2.0 / 3.0


@dataclass(frozen=True)
class ModelConfig:
    variant: str
    nu: float | None = None
    alpha: float = 2.0
    k1: float = 1.0
    k2: float = 1.0
    b: float = 0.0


@dataclass(frozen=True)
class InitialConfig:
    seed: int = 0
    band: tuple = (1.0, 4.0)
    amplitude: float = 1.0
    slope: float = 0.0


@dataclass(frozen=True)
class EnsembleConfig:
    kind: str = "lemma210"
    samples: int = 50
    s_values: tuple = (-1.0, 0.0, 1.0, 2.0)
    band: tuple = (1.0, 4.0)
    refine_size: int | None = None


@dataclass(frozen=True)
class BesovConfig:
    field: str = ""
    component: str = "u"
    s: float = 1.0


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "out"
    checkpoint_every: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridConfig
    model: ModelConfig
    kind: str = "simulate"
    stepper: StepperConfig = field(default_factory=StepperConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    s_diff: float = 1.0
    nu_list: tuple = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
    dt_control: bool = True
    workers: int = 1
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    besov: BesovConfig = field(default_factory=BesovConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def make_grid(self):
        try:
            return Grid(self.grid.n, self.grid.size, self.grid.dealias_fraction)
        except ValueError as exc:
            raise ConfigError(str(exc), "grid") from exc

    def make_params(self, variant=None, nu=dataclasses.MISSING):
        m = self.model
        kwargs = dict(n=self.grid.n, alpha=m.alpha, k1=m.k1, k2=m.k2, b=m.b, variant=variant or m.variant)
        kwargs["nu"] = m.nu if nu is dataclasses.MISSING else nu
        return ModelParams(**kwargs)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "grid": GridConfig,
    "model": ModelConfig,
    "stepper": StepperConfig,
    "initial": InitialConfig,
    "ensemble": EnsembleConfig,
    "besov": BesovConfig,
    "output": OutputConfig,
}
_REQUIRED = {"grid": ("n", "size"), "model": ("variant",)}


def _coerce(value, default, path):
    """Check value against the type implied by the field default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", path)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in value):
            raise ConfigError(f"expected a list of numbers, got {value!r}", path)
        return tuple(float(x) for x in value)
    return value


# field types that have no default to infer from
_EXPLICIT = {
    ("grid", "n"): 0,
    ("grid", "size"): 0,
    ("model", "variant"): "",
    ("model", "nu"): 0.0,
    ("ensemble", "refine_size"): 0,
}


def _section(name, raw):
    cls = _SECTIONS[name]
    if not isinstance(raw, dict):
        raise ConfigError("expected a table", name)
    names = {f.name: f for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in names:
            raise ConfigError("unknown key", f"{name}.{key}")
    for key in _REQUIRED.get(name, ()):
        if key not in raw:
            raise ConfigError("missing required key", f"{name}.{key}")
    kwargs = {}
    for key, value in raw.items():
        path = f"{name}.{key}"
        f = names[key]
        if value is None and (name, key) in (("model", "nu"), ("ensemble", "refine_size")):
            kwargs[key] = None
            continue
        default = _EXPLICIT.get((name, key), f.default)
        if default is dataclasses.MISSING:
            default = f.default_factory()
        kwargs[key] = _coerce(value, default, path)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), name) from exc


def from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a table", "<root>")
    top = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    for key in raw:
        if key not in top:
            raise ConfigError("unknown key", key)
    for key in ("grid", "model"):
        if key not in raw:
            raise ConfigError("missing required section", key)
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            kwargs[key] = _section(key, value)
        elif key == "kind":
            kwargs[key] = _coerce(value, "", key)
        elif key == "workers":
            kwargs[key] = _coerce(value, 0, key)
        elif key == "dt_control":
            kwargs[key] = _coerce(value, True, key)
        elif key == "s_diff":
            kwargs[key] = _coerce(value, 0.0, key)
        elif key == "nu_list":
            kwargs[key] = _coerce(value, (), key)
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    # materialize the variant default viscosity in the echo-back
    return cfg.replace(model=dataclasses.replace(cfg.model, nu=cfg.make_params().nu))


def validate(cfg):
    """Cross-field constraints; raises ConfigError naming the offending key."""
    if cfg.kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {cfg.kind!r}; expected one of {EXPERIMENT_KINDS}", "kind")
    if cfg.model.variant not in VARIANTS:
        raise ConfigError(f"unknown variant {cfg.model.variant!r}; expected one of {VARIANTS}", "model.variant")
    cfg.make_grid()
    cfg.make_params()
    if not cfg.initial.amplitude > 0:
        raise ConfigError("must be positive", "initial.amplitude")
    if len(cfg.initial.band) != 2 or not 0 < cfg.initial.band[0] <= cfg.initial.band[1]:
        raise ConfigError("expected [low, high] with 0 < low <= high", "initial.band")
    if cfg.initial.seed < 0:
        raise ConfigError("must be a nonnegative integer", "initial.seed")
    if cfg.workers < 1:
        raise ConfigError("must be >= 1", "workers")
    if any(b >= a for a, b in zip(cfg.nu_list, cfg.nu_list[1:])):
        raise ConfigError("must be strictly decreasing", "nu_list")
    if any(nu <= 0 for nu in cfg.nu_list):
        raise ConfigError("viscosities must be positive", "nu_list")
    if cfg.kind == "nu-sweep" and len(cfg.nu_list) < 3:
        raise ConfigError("a rate fit needs at least 3 viscosities", "nu_list")
    if not 0.0 <= cfg.s_diff <= SIGMA - 2.0:
        raise ConfigError(f"must lie in [0, {SIGMA - 2.0}]", "s_diff")
    if cfg.ensemble.samples < 1:
        raise ConfigError("must be >= 1", "ensemble.samples")
    if cfg.besov.component not in ("u", "tau"):
        raise ConfigError("expected 'u' or 'tau'", "besov.component")
    if cfg.output.checkpoint_every < 0:
        raise ConfigError("must be >= 0", "output.checkpoint_every")
    return cfg


def to_dict(cfg):
    """Plain JSON-ready dict with every default materialized."""

    def clean(v):
        if isinstance(v, tuple):
            return [clean(x) for x in v]
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        return v

    return clean(dataclasses.asdict(cfg))


def emit_config(cfg, path=None):
    text = json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def parse_config(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON ({exc.msg} at line {exc.lineno})", str(path)) from exc
    return from_dict(raw)


def loads(text):
    return from_dict(json.loads(text))
