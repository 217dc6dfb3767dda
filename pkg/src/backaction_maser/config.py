"""Scenario configuration files.

Configs are INI-style text with ``[run]``, ``[system]``, ``[sweep]`` and
``[sim]`` sections; every key is addressed as ``section.key`` in error
messages.  Frequencies and rates are given in Hz (cycles per second) and
converted to rad/s on load.  Anything left out falls back to the
experimental device: omega_c = 4.08 GHz, Omega_m = 6.5 MHz, g0 = 60 Hz,
Gamma_eff = 440 kHz and kappa = Gamma_eff / 2.5 split evenly between
intrinsic and external loss.

Example::

    [run]
    scenario = linewidth_narrowing
    output_dir = out/linewidth

    [sweep]
    cooperativities = 0, 0.2, 0.5, 0.8

    [sim]
    seed = 7
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .model import (MIN_SIDEBAND_RESOLUTION, ParameterError, SystemParams,
                    effective_mechanical_damping)

TWO_PI = 2 * math.pi

SCENARIOS = (
    "linewidth_narrowing",
    "masing_threshold",
    "injection_power_sweep",
    "injection_frequency_sweep",
    "arnold_tongue",
    "single_run",
)

SYSTEM_DEFAULTS = {
    "omega_c_hz": 4.08e9,
    "kappa_0_hz": 440e3 / 2.5 / 2,
    "kappa_ex_hz": 440e3 / 2.5 / 2,
    "omega_m_hz": 6.5e6,
    "gamma_m_hz": 440e3,
    "c_aux": 0.0,
    "g0_hz": 60.0,
    "pump_detuning_hz": 0.0,
    "noise_quanta_cavity": 1.0,
    "noise_quanta_mech": 1.0,
    "allow_unresolved": False,
}

# per-scenario sweep defaults; shared keys take the first definition
SWEEP_DEFAULTS = {
    "linewidth_narrowing": {"cooperativities": [0.0, 0.2, 0.5, 0.8]},
    "masing_threshold": {"cooperativities": [0.8, 1.2]},
    "injection_power_sweep": {
        "cooperativity": 1.5,
        "p_inj_ratios": [1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2],
        "injection_detuning_hz": -5e3,
        "alpha": 1.0,
    },
    "injection_frequency_sweep": {
        "cooperativity": 1.5,
        "p_inj_ratio": 1e-2,
        "detunings": [x / 2 for x in range(-8, 9)],
        "detuning_mode": "relative",
        "alpha": 1.0,
    },
    "arnold_tongue": {
        "cooperativity": 1.5,
        "p_inj_ratios": [0.0, 1e-3, 10**-2.5, 1e-2, 10**-1.5],
        "detunings": [float(x) for x in range(-4, 5)],
        "detuning_mode": "relative",
        "refine": 4,
        "alpha": 1.0,
    },
    "single_run": {"cooperativity": 1.5, "model": "nonlinear"},
}

SIM_DEFAULTS = {
    "duration": None,
    "dt": None,
    "seed": 1,
    "segments": 200,
    "jobs": 1,
    "reference_duration": 4e-4,
    "cycles": 60.0,
    "min_duration": 1e-3,
}

LIST_KEYS = {"cooperativities", "p_inj_ratios", "p_inj_dbm", "detunings"}
STRING_KEYS = {"detuning_mode", "model"}
INT_KEYS = {"refine", "seed", "segments", "jobs"}
ALL_SWEEP_KEYS = {k for d in SWEEP_DEFAULTS.values() for k in d} | {"p_inj_dbm"}


class ConfigError(ValueError):
    """All validation problems found in a config, one message per entry."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class SimSettings:
    duration: float | None
    dt: float | None
    seed: int
    segments: int = 200
    jobs: int = 1
    reference_duration: float = 4e-4
    cycles: float = 60.0
    min_duration: float = 1e-3


@dataclass
class ScenarioConfig:
    scenario: str
    system: SystemParams
    sweep: dict
    sim: SimSettings
    output_dir: Path
    source: str = ""
    effective: dict = field(default_factory=dict)


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_value(key, text):
    if key in LIST_KEYS:
        items = [t for t in text.replace(";", ",").split(",") if t.strip()]
        return [float(t) for t in items]
    if key in STRING_KEYS:
        return text.strip()
    if key in INT_KEYS:
        return int(text)
    if key == "allow_unresolved":
        return _parse_bool(text)
    return float(text)


def parse_config_text(text: str, source: str = "<string>",
                      overrides: dict | None = None) -> ScenarioConfig:
    """Parse and validate config text; raises :class:`ConfigError`."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    errors = []
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc

    known_sections = {"run", "system", "sweep", "sim"}
    for section in parser.sections():
        if section not in known_sections:
            errors.append(f"{section}: unknown section")

    def section(name):
        return parser[name] if parser.has_section(name) else {}

    run = section("run")
    for key in run:
        if key not in ("scenario", "output_dir"):
            errors.append(f"run.{key}: unknown key")
    scenario = run.get("scenario", "single_run").strip()
    if scenario not in SCENARIOS:
        errors.append(f"run.scenario: unknown scenario {scenario!r} (choose from {', '.join(SCENARIOS)})")
    output_dir = Path(run.get("output_dir", f"out/{scenario}"))

    def collect(name, defaults, allowed):
        values = dict(defaults)
        for key, text in section(name).items():
            if key not in allowed:
                errors.append(f"{name}.{key}: unknown key")
                continue
            try:
                values[key] = _parse_value(key, text)
            except ValueError as exc:
                errors.append(f"{name}.{key}: {exc}")
        return values

    system = collect("system", SYSTEM_DEFAULTS, SYSTEM_DEFAULTS.keys())
    sweep_defaults = SWEEP_DEFAULTS.get(scenario, {})
    sweep = collect("sweep", sweep_defaults, ALL_SWEEP_KEYS)
    sim = collect("sim", SIM_DEFAULTS, SIM_DEFAULTS.keys())
    for key, value in (overrides or {}).items():
        if value is not None:
            sim[key] = value

    for key in ("omega_c_hz", "kappa_0_hz", "kappa_ex_hz", "omega_m_hz", "gamma_m_hz", "g0_hz"):
        if not system[key] > 0:
            errors.append(f"system.{key}: must be > 0 (got {system[key]})")
    for key in ("c_aux", "noise_quanta_cavity", "noise_quanta_mech"):
        if not system[key] >= 0:
            errors.append(f"system.{key}: must be >= 0 (got {system[key]})")
    kappa_hz = system["kappa_0_hz"] + system["kappa_ex_hz"]
    if kappa_hz > 0 and system["omega_m_hz"] / kappa_hz < MIN_SIDEBAND_RESOLUTION \
            and not system["allow_unresolved"]:
        errors.append(
            f"system.omega_m_hz: sideband resolution Omega_m/kappa = {system['omega_m_hz'] / kappa_hz:.3g} "
            f"is below {MIN_SIDEBAND_RESOLUTION:g}; the rotating-frame model needs a resolved sideband "
            "(set system.allow_unresolved = true to override)")

    for key, value in sweep.items():
        if key in LIST_KEYS and not value:
            errors.append(f"sweep.{key}: grid must not be empty")
    for key in ("cooperativities", "p_inj_ratios"):
        if any(v < 0 for v in sweep.get(key, [])):
            errors.append(f"sweep.{key}: values must be >= 0")
    if "cooperativity" in sweep and not sweep["cooperativity"] >= 0:
        errors.append("sweep.cooperativity: must be >= 0")
    if "alpha" in sweep and not 0 < sweep["alpha"] <= 1:
        errors.append("sweep.alpha: must lie in (0, 1]")
    if sweep.get("detuning_mode", "relative") not in ("relative", "absolute_hz"):
        errors.append("sweep.detuning_mode: must be 'relative' or 'absolute_hz'")
    if sweep.get("model", "nonlinear") not in ("linear", "nonlinear"):
        errors.append("sweep.model: must be 'linear' or 'nonlinear'")
    if scenario in ("injection_power_sweep", "injection_frequency_sweep", "arnold_tongue") \
            and sweep.get("cooperativity", 0) <= 1:
        errors.append("sweep.cooperativity: injection scenarios need a maser above threshold (> 1)")

    if not isinstance(sim["seed"], int):
        errors.append("sim.seed: must be an integer")
    for key in ("duration", "dt"):
        if sim[key] is not None and not sim[key] > 0:
            errors.append(f"sim.{key}: must be > 0")
    if sim["segments"] < 1:
        errors.append("sim.segments: must be >= 1")
    if sim["jobs"] < 1:
        errors.append("sim.jobs: must be >= 1")

    params = None
    if not errors:
        try:
            params = SystemParams(
                omega_c=TWO_PI * system["omega_c_hz"],
                kappa_0=TWO_PI * system["kappa_0_hz"],
                kappa_ex=TWO_PI * system["kappa_ex_hz"],
                Omega_m=TWO_PI * system["omega_m_hz"],
                Gamma_m=TWO_PI * effective_mechanical_damping(system["gamma_m_hz"], system["c_aux"]),
                g0=TWO_PI * system["g0_hz"],
                pump_detuning_delta=TWO_PI * system["pump_detuning_hz"],
                noise_quanta_cavity=system["noise_quanta_cavity"],
                noise_quanta_mech=system["noise_quanta_mech"],
                allow_unresolved=system["allow_unresolved"],
            )
        except ParameterError as exc:
            errors.append(f"system: {exc}")
    if errors:
        raise ConfigError(errors)

    return ScenarioConfig(
        scenario=scenario,
        system=params,
        sweep=sweep,
        sim=SimSettings(**sim),
        output_dir=output_dir,
        source=source,
        effective={"run": {"scenario": scenario, "output_dir": str(output_dir)},
                   "system": system, "sweep": sweep, "sim": dict(sim)},
    )


def validate_config(path, overrides: dict | None = None) -> ScenarioConfig:
    """Load a config file; raises :class:`ConfigError` listing every violation."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from exc
    return parse_config_text(text, source=str(path), overrides=overrides)
