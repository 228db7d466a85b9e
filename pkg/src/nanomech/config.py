"""Run configuration: unit-suffixed quantity parsing and the JSON config
schema that feeds the device model and the simulation pipelines.

Dimensioned fields must carry a unit suffix ("5.23 MHz", "1.0 um"); bare
numbers are rejected for them.  Frequencies given in Hz-family units are
converted to angular units (rad/s) on input; all internal math is angular.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .device import (POLARIZABILITY_UNIT, BeamSpec, CavitySpec, DeviceError,
                     DriveSpec, ElectrodeSpec, GaussianTipField, SofteningSpec)

TWO_PI = 2 * np.pi


class ConfigError(ValueError):
    """Config parse/validation failure, with the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# unit -> (dimension, factor to SI / internal units)
_UNITS = {
    # frequencies: ordinary -> angular
    "Hz": ("frequency", TWO_PI), "kHz": ("frequency", TWO_PI * 1e3),
    "MHz": ("frequency", TWO_PI * 1e6), "GHz": ("frequency", TWO_PI * 1e9),
    "THz": ("frequency", TWO_PI * 1e12),
    "rad/s": ("frequency", 1.0), "krad/s": ("frequency", 1e3),
    "Mrad/s": ("frequency", 1e6), "Grad/s": ("frequency", 1e9),
    # lengths
    "m": ("length", 1.0), "mm": ("length", 1e-3), "um": ("length", 1e-6),
    "nm": ("length", 1e-9), "pm": ("length", 1e-12), "A": ("length", 1e-10),
    # mass and linear density
    "kg": ("mass", 1.0), "g": ("mass", 1e-3),
    "kg/m": ("linear_density", 1.0),
    # speed
    "m/s": ("speed", 1.0), "km/s": ("speed", 1e3),
    # power
    "W": ("power", 1.0), "mW": ("power", 1e-3), "uW": ("power", 1e-6),
    "kW": ("power", 1e3),
    # temperature
    "K": ("temperature", 1.0), "mK": ("temperature", 1e-3),
    "uK": ("temperature", 1e-6),
    # angle
    "rad": ("angle", 1.0), "mrad": ("angle", 1e-3),
    "deg": ("angle", np.pi / 180.0),
    # 2D conductivity
    "S": ("conductance", 1.0), "1/Ohm": ("conductance", 1.0),
    # electric field
    "V/m": ("field", 1.0), "kV/m": ("field", 1e3), "MV/m": ("field", 1e6),
    # polarizability per unit length; the quoted-units convention is
    # multiples of 4 pi eps0 Angstrom^2
    "4pi_eps0_A2": ("polarizability", POLARIZABILITY_UNIT),
    "C*m/V": ("polarizability", 1.0),
}


def parse_quantity(value, dimension: str, path: str) -> float:
    """Parse "number unit" into internal units, enforcing the dimension."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if dimension == "dimensionless":
            return float(value)
        raise ConfigError(path, f"bare number for a {dimension} field; "
                                "write e.g. \"5.23 MHz\"")
    if not isinstance(value, str):
        raise ConfigError(path, f"expected a quantity string, got {type(value).__name__}")
    parts = value.strip().split()
    if dimension == "dimensionless":
        if len(parts) == 1:
            try:
                return float(parts[0])
            except ValueError:
                raise ConfigError(path, f"cannot parse number {value!r}") from None
        raise ConfigError(path, f"dimensionless field must be a bare number, got {value!r}")
    if len(parts) != 2:
        raise ConfigError(path, f"expected \"number unit\", got {value!r}")
    num_s, unit = parts
    try:
        num = float(num_s)
    except ValueError:
        raise ConfigError(path, f"cannot parse number {num_s!r}") from None
    if unit not in _UNITS:
        raise ConfigError(path, f"unknown unit {unit!r}")
    dim, factor = _UNITS[unit]
    if dim != dimension:
        raise ConfigError(path, f"unit {unit!r} has dimension {dim}, expected {dimension}")
    return num * factor


@dataclass(frozen=True)
class SimulationSection:
    mech_truncation: int = 10
    cavity_truncation: int = 2
    solver: str = "auto"
    wigner_half_width: float | None = None
    wigner_points: int = 121
    spectrum_span: float | None = None      # rad/s, centered on the probe
    spectrum_points: int = 20001
    pass_ratio: float = 0.1
    warn_ratio: float = 0.5
    include_reduced_shifts: bool = False
    include_probe_in_linewidth: bool = True


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: tuple[str, ...] = ("json", "csv")


@dataclass(frozen=True)
class RunConfig:
    beam: BeamSpec
    softening: SofteningSpec
    cavity: CavitySpec
    drives: tuple[DriveSpec, ...]
    temperature: float
    probe: DriveSpec | None = None
    electrode: ElectrodeSpec | None = None
    simulation: SimulationSection = field(default_factory=SimulationSection)
    output: OutputSection = field(default_factory=OutputSection)
    raw: dict = field(default_factory=dict, repr=False)


def _get(d: dict, key: str, path: str, required=True, default=None):
    if key in d:
        return d[key]
    if required:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return default


def _parse_beam(d: dict, path: str) -> BeamSpec:
    if "transverse_scale" in d:
        kt = parse_quantity(d["transverse_scale"], "length", f"{path}.transverse_scale")
    elif "radius" in d:
        # nanotube convention: transverse scale R / sqrt(2)
        kt = parse_quantity(d["radius"], "length", f"{path}.radius") / np.sqrt(2.0)
    else:
        raise ConfigError(f"{path}.transverse_scale", "give transverse_scale or radius")
    kwargs = dict(
        length=parse_quantity(_get(d, "length", path), "length", f"{path}.length"),
        kappa_tilde=kt,
        sound_speed=parse_quantity(_get(d, "sound_speed", path), "speed",
                                   f"{path}.sound_speed"),
        quality_factor=parse_quantity(_get(d, "quality_factor", path),
                                      "dimensionless", f"{path}.quality_factor"))
    if "effective_mass" in d:
        kwargs["effective_mass"] = parse_quantity(
            d["effective_mass"], "mass", f"{path}.effective_mass")
    if "linear_mass_density" in d:
        kwargs["linear_mass_density"] = parse_quantity(
            d["linear_mass_density"], "linear_density", f"{path}.linear_mass_density")
    try:
        return BeamSpec(**kwargs)
    except DeviceError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_field_model(d: dict, path: str):
    kind = _get(d, "type", path)
    if kind == "gaussian_tip":
        return GaussianTipField(
            e_par_peak=parse_quantity(_get(d, "e_par_peak", path), "field",
                                      f"{path}.e_par_peak"),
            e_perp_peak=parse_quantity(d.get("e_perp_peak", "0 V/m"), "field",
                                       f"{path}.e_perp_peak"),
            center=parse_quantity(_get(d, "center", path), "length", f"{path}.center"),
            width=parse_quantity(_get(d, "width", path), "length", f"{path}.width"),
            gradient_scale=parse_quantity(_get(d, "gradient_scale", path), "length",
                                          f"{path}.gradient_scale"))
    raise ConfigError(f"{path}.type", f"unknown field model {kind!r}")


def _parse_softening(d: dict, path: str) -> SofteningSpec:
    kwargs = {}
    if "zeta" in d:
        kwargs["zeta"] = parse_quantity(d["zeta"], "dimensionless", f"{path}.zeta")
    if "field_model" in d:
        kwargs["field_model"] = _parse_field_model(d["field_model"],
                                                   f"{path}.field_model")
    for key in ("alpha_par", "alpha_perp"):
        if key in d:
            kwargs[key] = parse_quantity(d[key], "polarizability", f"{path}.{key}")
    try:
        return SofteningSpec(**kwargs)
    except DeviceError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_cavity(d: dict, path: str) -> CavitySpec:
    kwargs = dict(
        bare_finesse=parse_quantity(_get(d, "bare_finesse", path), "dimensionless",
                                    f"{path}.bare_finesse"),
        round_trip_length=parse_quantity(_get(d, "round_trip_length", path), "length",
                                         f"{path}.round_trip_length"),
        refractive_index=parse_quantity(_get(d, "refractive_index", path),
                                        "dimensionless", f"{path}.refractive_index"),
        wavelength=parse_quantity(_get(d, "wavelength", path), "length",
                                  f"{path}.wavelength"),
        waist=parse_quantity(_get(d, "waist", path), "length", f"{path}.waist"),
        surface_field_ratio=parse_quantity(_get(d, "surface_field_ratio", path),
                                           "dimensionless",
                                           f"{path}.surface_field_ratio"),
        gap=parse_quantity(_get(d, "gap", path), "length", f"{path}.gap"),
        external_coupling_fraction=parse_quantity(
            _get(d, "external_coupling_fraction", path), "dimensionless",
            f"{path}.external_coupling_fraction"))
    if "evanescent_decay" in d:
        # stored as an inverse length; accept a decay length instead
        kwargs["evanescent_decay"] = 1.0 / parse_quantity(
            d["evanescent_decay"], "length", f"{path}.evanescent_decay")
    try:
        return CavitySpec(**kwargs)
    except DeviceError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_drive(d: dict, path: str) -> DriveSpec:
    det = _get(d, "detuning", path)
    if isinstance(det, str) and "delta_" in det:
        detuning = det
    else:
        detuning = parse_quantity(det, "frequency", f"{path}.detuning")
    kwargs = dict(
        input_power=parse_quantity(_get(d, "power", path), "power", f"{path}.power"),
        detuning=detuning)
    if "laser_frequency" in d:
        kwargs["laser_frequency"] = parse_quantity(
            d["laser_frequency"], "frequency", f"{path}.laser_frequency")
    try:
        return DriveSpec(**kwargs)
    except DeviceError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_electrode(d: dict, path: str) -> ElectrodeSpec:
    try:
        return ElectrodeSpec(
            diameter=parse_quantity(_get(d, "diameter", path), "length",
                                    f"{path}.diameter"),
            conductivity_2d=parse_quantity(_get(d, "conductivity_2d", path),
                                           "conductance", f"{path}.conductivity_2d"),
            misalignment=parse_quantity(_get(d, "misalignment", path), "angle",
                                        f"{path}.misalignment"))
    except DeviceError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_simulation(d: dict, path: str) -> SimulationSection:
    kwargs = {}
    if "mech_truncation" in d:
        kwargs["mech_truncation"] = int(parse_quantity(
            d["mech_truncation"], "dimensionless", f"{path}.mech_truncation"))
    if "cavity_truncation" in d:
        kwargs["cavity_truncation"] = int(parse_quantity(
            d["cavity_truncation"], "dimensionless", f"{path}.cavity_truncation"))
    if "solver" in d:
        if d["solver"] not in ("auto", "dense", "iterative"):
            raise ConfigError(f"{path}.solver", f"unknown solver {d['solver']!r}")
        kwargs["solver"] = d["solver"]
    wg = d.get("wigner_grid", {})
    if "half_width" in wg:
        kwargs["wigner_half_width"] = parse_quantity(
            wg["half_width"], "dimensionless", f"{path}.wigner_grid.half_width")
    if "points" in wg:
        kwargs["wigner_points"] = int(parse_quantity(
            wg["points"], "dimensionless", f"{path}.wigner_grid.points"))
    sg = d.get("spectrum_grid", {})
    if "span" in sg:
        kwargs["spectrum_span"] = parse_quantity(
            sg["span"], "frequency", f"{path}.spectrum_grid.span")
    if "points" in sg:
        kwargs["spectrum_points"] = int(parse_quantity(
            sg["points"], "dimensionless", f"{path}.spectrum_grid.points"))
    th = d.get("regime_thresholds", {})
    if "pass" in th:
        kwargs["pass_ratio"] = float(th["pass"])
    if "warn" in th:
        kwargs["warn_ratio"] = float(th["warn"])
    for flag in ("include_reduced_shifts", "include_probe_in_linewidth"):
        if flag in d:
            if not isinstance(d[flag], bool):
                raise ConfigError(f"{path}.{flag}", "expected a boolean")
            kwargs[flag] = d[flag]
    sim = SimulationSection(**kwargs)
    if sim.mech_truncation < 3:
        raise ConfigError(f"{path}.mech_truncation", "must be >= 3")
    if sim.cavity_truncation < 2:
        raise ConfigError(f"{path}.cavity_truncation", "must be >= 2")
    return sim


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    dev = _get(data, "device", "<root>")
    beam = _parse_beam(_get(dev, "beam", "device"), "device.beam")
    softening = _parse_softening(_get(dev, "softening", "device"), "device.softening")
    cavity = _parse_cavity(_get(dev, "cavity", "device"), "device.cavity")
    drives_raw = _get(dev, "drives", "device")
    if not isinstance(drives_raw, list):
        raise ConfigError("device.drives", "expected a list")
    drives = tuple(_parse_drive(d, f"device.drives[{i}]")
                   for i, d in enumerate(drives_raw))
    temperature = parse_quantity(_get(dev, "temperature", "device"),
                                 "temperature", "device.temperature")
    probe = None
    if "probe" in dev:
        probe = _parse_drive(dev["probe"], "device.probe")
    electrode = None
    if "electrode" in dev:
        electrode = _parse_electrode(dev["electrode"], "device.electrode")
    simulation = _parse_simulation(data.get("simulation", {}), "simulation")
    out_raw = data.get("output", {})
    output = OutputSection(
        directory=out_raw.get("directory", "out"),
        formats=tuple(out_raw.get("formats", ["json", "csv"])))
    return RunConfig(beam=beam, softening=softening, cavity=cavity,
                     drives=drives, temperature=temperature, probe=probe,
                     electrode=electrode, simulation=simulation, output=output,
                     raw=data)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("<file>", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(data)


CONFIG_SCHEMA = {
    "device": {
        "beam": {
            "length": "quantity, e.g. \"1.0 um\"",
            "radius": "nanotube radius (transverse scale R/sqrt(2)); or give transverse_scale",
            "sound_speed": "e.g. \"21000 m/s\"",
            "quality_factor": "bare number",
            "linear_mass_density": "e.g. \"1.86e-15 kg/m\" (or effective_mass in kg)",
        },
        "softening": {
            "zeta": "softening factor >= 1; or give field_model",
            "field_model": {
                "type": "gaussian_tip",
                "e_par_peak": "e.g. \"1.2e7 V/m\"", "e_perp_peak": "optional",
                "center": "lobe center along the beam, length",
                "width": "lobe width, length",
                "gradient_scale": "transverse growth length",
            },
            "alpha_par": "e.g. \"142 4pi_eps0_A2\" (per unit length)",
            "alpha_perp": "optional, same unit",
        },
        "cavity": {
            "bare_finesse": "bare number", "round_trip_length": "length",
            "refractive_index": "bare number", "wavelength": "length",
            "waist": "length (a_c)", "surface_field_ratio": "bare number (xi)",
            "gap": "length (d)", "external_coupling_fraction": "kappa_ex/kappa in (0,1]",
            "evanescent_decay": "optional decay length; default from the mode index",
        },
        "electrode": {
            "diameter": "length", "conductivity_2d": "e.g. \"2e-5 S\"",
            "misalignment": "angle, e.g. \"1 deg\"",
        },
        "drives": [{"power": "e.g. \"1.2 W\"",
                    "detuning": "frequency or symbolic \"+delta_1\"/\"-delta_2\""}],
        "probe": {"power": "weak probe power", "detuning": "usually \"0 Hz\""},
        "temperature": "e.g. \"20 mK\"",
    },
    "simulation": {
        "mech_truncation": ">= 3 (default 10)",
        "cavity_truncation": ">= 2 (default 2)",
        "solver": "auto | dense | iterative",
        "wigner_grid": {"half_width": "bare number", "points": "odd integer"},
        "spectrum_grid": {"span": "frequency around the probe", "points": "integer"},
        "regime_thresholds": {"pass": 0.1, "warn": 0.5},
        "include_probe_in_linewidth": "bool (default true)",
    },
    "output": {"directory": "path", "formats": ["json", "csv"]},
}
