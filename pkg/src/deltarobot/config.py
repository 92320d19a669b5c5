"""TOML configuration: model, controller gains, simulator, design and scenarios."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from .control import ControllerConfig, GainSet
from .robot_model import RobotModel, default_model, model_from_dict, model_to_dict
from .rotor_design import DESIGN_WEIGHTS
from .scenarios import BUILTIN, Event, InitialCondition, NoiseModel, Scenario, ScenarioError, builtin
from .sim import SimConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DesignSettings:
    bounds: tuple[float, float] = (-0.5, 0.5)
    w1: float = DESIGN_WEIGHTS[0]
    w2: float = DESIGN_WEIGHTS[1]
    seed: int = 0
    max_evals: int = 20_000
    mu: int = 15
    lam: int = 105


@dataclass(frozen=True, eq=False)
class Config:
    model: RobotModel = field(default_factory=default_model)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    design: DesignSettings = field(default_factory=DesignSettings)
    scenarios: dict[str, Scenario] = field(default_factory=dict)

    def scenario(self, name: str) -> Scenario:
        """A scenario defined in the config, else the built-in of that name."""
        if name in self.scenarios:
            return self.scenarios[name]
        return builtin(name)


def _plain(value):
    """Tuples and arrays become lists; ``None`` entries are dropped (TOML has no null)."""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items() if v is not None}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "tolist"):
        return _plain(value.tolist())
    return value


def _build(cls, data: dict, section: str, nested=None):
    nested = nested or {}
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in nested:
            value = nested[key](value, f"{section}.{key}")
        elif isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def _gains(data, section):
    return _build(GainSet, data, section)


def controller_to_dict(cfg: ControllerConfig) -> dict:
    return _plain(dataclasses.asdict(cfg))


def controller_from_dict(data: dict) -> ControllerConfig:
    return _build(ControllerConfig, data, "controller", {"flight": _gains, "standing": _gains, "rolling": _gains})


def scenario_to_dict(sc: Scenario) -> dict:
    return _plain(
        {
            "duration": sc.duration,
            "window": sc.window,
            "seed": sc.seed,
            "initial": dataclasses.asdict(sc.initial),
            "noise": dataclasses.asdict(sc.noise),
            "events": [{"time": e.time, "kind": e.kind, **e.params} for e in sc.events],
        }
    )


def scenario_from_dict(name: str, data: dict) -> Scenario:
    section = f"scenarios.{name}"
    data = dict(data)
    base = builtin(name) if name in BUILTIN else None
    try:
        events = data.pop("events", None)
        if events is None:
            if base is None:
                raise ConfigError(f"[{section}] needs events")
            events = base.events
        else:
            events = tuple(
                Event(float(e["time"]), str(e["kind"]), {k: v for k, v in e.items() if k not in ("time", "kind")})
                for e in events
            )
        initial = data.pop("initial", None)
        initial = base.initial if initial is None and base else _build(InitialCondition, initial or {}, section + ".initial")
        noise = data.pop("noise", None)
        noise = base.noise if noise is None and base else _build(NoiseModel, noise or {}, section + ".noise")
        window = data.pop("window", base.window if base else None)
        duration = data.pop("duration", base.duration if base else None)
        if duration is None:
            raise ConfigError(f"[{section}] needs a duration")
        seed = data.pop("seed", base.seed if base else 0)
        if data:
            raise ConfigError(f"[{section}] unknown keys: {sorted(data)}")
        return Scenario(
            name=name,
            duration=float(duration),
            initial=initial,
            events=tuple(events),
            window=None if window is None else (float(window[0]), float(window[1])),
            seed=int(seed),
            noise=noise,
        )
    except (KeyError, TypeError, ScenarioError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def config_to_dict(cfg: Config) -> dict:
    out = {
        "model": _plain(model_to_dict(cfg.model)),
        "controller": controller_to_dict(cfg.controller),
        "sim": _plain(dataclasses.asdict(cfg.sim)),
        "design": _plain(dataclasses.asdict(cfg.design)),
    }
    if cfg.scenarios:
        out["scenarios"] = {name: scenario_to_dict(sc) for name, sc in cfg.scenarios.items()}
    return out


def config_from_dict(data: dict) -> Config:
    unknown = set(data) - {"model", "controller", "sim", "design", "scenarios"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    try:
        model = model_from_dict(data["model"]) if "model" in data else default_model()
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"[model] {exc}") from None
    return Config(
        model=model,
        controller=controller_from_dict(data.get("controller", {})),
        sim=_build(SimConfig, data.get("sim", {}), "sim"),
        design=_build(DesignSettings, data.get("design", {}), "design"),
        scenarios={k: scenario_from_dict(k, v) for k, v in data.get("scenarios", {}).items()},
    )


def dumps(cfg: Config) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def loads(text: str) -> Config:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return config_from_dict(data)


def load_config(path) -> Config:
    return loads(Path(path).read_text())


def write_config(cfg: Config, path) -> Path:
    path = Path(path)
    path.write_text(dumps(cfg))
    return path


def default_config_text() -> str:
    """Every default, including the built-in scenarios, as TOML."""
    cfg = Config(scenarios={name: make() for name, make in BUILTIN.items()})
    return dumps(cfg)

