"""INI configuration: defaults, scenario presets, files and ``section.key=value`` overrides.

Values are JSON literals where possible (numbers, lists, ``true``) and plain
strings otherwise. Every key must name an existing field of the section's
dataclass. The effective configuration keeps the raw text of file and
override values so a dump echoes them verbatim.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import json
import os
from dataclasses import dataclass, field, fields

from hopleg.contact import GroundModel
from hopleg.control import ControllerConfig
from hopleg.model import CableParams, LegModel, MotorParams, default_leg_model
from hopleg.powertrain import TestBench
from hopleg.sim import Scenario, ScenarioConfig, SimConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BenchSettings:
    """Test-bench experiment settings (the bench itself follows model, motor and cable)."""

    joint: int = 0
    step_torques: tuple[float, ...] = (5.0, 12.5, 25.0, 52.0)
    step_duration: float = 0.5
    dt: float = 1e-4
    sweep_amplitude: float = 12.5
    sweep_freqs: tuple[float, ...] = (10.0, 30.0, 50.0, 70.0)
    cycles: int = 5


SECTIONS = {
    "model": LegModel,
    "motor": MotorParams,
    "cable": CableParams,
    "ground": GroundModel,
    "controller": ControllerConfig,
    "sim": SimConfig,
    "scenario": ScenarioConfig,
    "testbench": BenchSettings,
}

# Scenario presets as raw INI values, mirrored by configs/*.ini.
_REALISM = {"motor": {"quantize": "true", "static_offset": "true"}}
PRESETS: dict[str, dict[str, dict[str, str]]] = {
    "default": {},
    "standing": {
        **_REALISM,
        "scenario": {"kind": '"standing"', "initial_joints": "[-0.7918, 1.5438]"},
        "sim": {"duration": "2.0"},
    },
    "longevity": {
        **_REALISM,
        "controller": {
            "k_s": "500.0", "d_s": "0.0", "z_target": "0.51",
            "q_flight": "[-0.8994, 1.75]", "min_flight_time": "0.03",
        },
        "scenario": {"kind": '"longevity"', "initial_joints": "[-0.8994, 1.75]", "perturbation": "0.05"},
        "sim": {"duration": "15.0"},
    },
    "highjump": {
        "motor": {**_REALISM["motor"], "electronics_power": "9.0"},
        "controller": {"q_flight": "[-0.614, 1.2]"},
        "scenario": {
            "kind": '"highjump"', "initial_joints": "[-1.65, 2.4]", "initial_clearance": "-0.0012",
            "target_initial_height": "true", "launch_time": "0.2", "launch_target": "1.5",
            "launch_k_s": "2000.0", "launch_d_s": "0.0", "launch_ramp": "0.3", "max_apexes": "1",
        },
        "sim": {"duration": "2.0"},
    },
}


def _derive(base: str, changes: dict[str, dict[str, str]]) -> dict[str, dict[str, str]]:
    out = {section: dict(items) for section, items in PRESETS[base].items()}
    for section, items in changes.items():
        out.setdefault(section, {}).update(items)
    return out


# Longevity retuned for half and one-and-a-half times the default rotor inertia.
PRESETS["longevity_rotor050"] = _derive("longevity", {
    "model": {"rotor_inertias": "[4e-4, 4e-4]"}, "controller": {"d_s": "3.0"}})
PRESETS["longevity_rotor150"] = _derive("longevity", {
    "model": {"rotor_inertias": "[1.2e-3, 1.2e-3]"}, "controller": {"z_target": "0.53"}})


def parse_value(text: str):
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        return text.strip()
    return tuple(value) if isinstance(value, list) else value


def _field_names(cls) -> set[str]:
    return {f.name for f in fields(cls)}


@dataclass
class Config:
    """Effective configuration: section -> key -> raw value text."""

    values: dict[str, dict[str, str]] = field(default_factory=dict)
    sources: list[str] = field(default_factory=list)

    def set(self, section: str, key: str, raw: str) -> None:
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in _field_names(SECTIONS[section]):
            raise ConfigError(f"unknown config key {section}.{key}")
        self.values.setdefault(section, {})[key] = raw.strip()

    def update(self, sections: dict[str, dict[str, str]]) -> None:
        for section, items in sections.items():
            for key, raw in items.items():
                self.set(section, key, raw)

    def section_kwargs(self, section: str) -> dict:
        return {k: parse_value(v) for k, v in self.values.get(section, {}).items()}

    def build(self, section: str):
        kwargs = self.section_kwargs(section)
        try:
            if section == "model":
                return default_leg_model(**kwargs)
            return SECTIONS[section](**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from exc

    def scenario(self) -> Scenario:
        parts = {name: self.build(name) for name in ("model", "cable", "ground", "controller", "sim", "scenario")}
        parts["motors"] = self.build("motor")
        scn = Scenario(**parts)
        errors = scn.sim.validate() + scn.scenario.validate() + scn.controller.validate(scn.model)
        if errors:
            raise ConfigError("; ".join(errors))
        return scn

    def bench_settings(self) -> BenchSettings:
        return self.build("testbench")

    def bench(self) -> TestBench:
        settings = self.bench_settings()
        return TestBench.from_model(self.build("model"), self.build("cable"), self.build("motor"), joint=settings.joint)

    def dump(self) -> str:
        """Every field of every section; explicitly set values keep their raw text."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for section, cls in SECTIONS.items():
            obj = self.build(section)
            cp.add_section(section)
            explicit = self.values.get(section, {})
            for f in fields(cls):
                if f.name in explicit:
                    cp.set(section, f.name, explicit[f.name])
                else:
                    cp.set(section, f.name, json.dumps(_plain(getattr(obj, f.name))))
        buf = io.StringIO()
        if self.sources:
            buf.write("".join(f"# source: {s}\n" for s in self.sources))
        cp.write(buf)
        return buf.getvalue()


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if dataclasses.is_dataclass(value):
        return dataclasses.asdict(value)
    return value


def read_ini(path: str) -> dict[str, dict[str, str]]:
    """Raw sections of an INI file, following ``[config] base = other.ini`` first."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    out: dict[str, dict[str, str]] = {}
    if cp.has_section("config"):
        meta = dict(cp.items("config"))
        unknown = set(meta) - {"base"}
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) in [config]: {sorted(unknown)}")
        if "base" in meta:
            base = os.path.join(os.path.dirname(path), meta["base"])
            out = read_ini(base)
    for section in cp.sections():
        if section == "config":
            continue
        out.setdefault(section, {}).update(dict(cp.items(section)))
    return out


def parse_override(text: str) -> tuple[str, str, str]:
    key, sep, raw = text.partition("=")
    section, dot, name = key.strip().partition(".")
    if not sep or not dot or not section or not name:
        raise ConfigError(f"override must look like section.key=value, got {text!r}")
    return section, name, raw


def load_config(paths=(), overrides=(), preset: str = "default") -> Config:
    """Defaults, then ``preset``, then each file in order, then overrides."""
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}")
    cfg = Config(sources=[f"preset {preset}"])
    cfg.update(PRESETS[preset])
    for path in paths:
        cfg.update(read_ini(path))
        cfg.sources.append(str(path))
    for text in overrides:
        cfg.set(*parse_override(text))
    for section in SECTIONS:
        cfg.build(section)
    return cfg
