"""Run configuration: one YAML mapping with a section per subcommand.

Every section is a dataclass. Loading rejects unknown keys and values of
the wrong kind, so a typo fails before anything runs. Precedence, lowest
first: dataclass defaults, preset, config file, command-line flags.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .kinetics import PowerModel, ThreeLevelRates
from .photon_stream import StreamConfig


class ConfigError(ValueError):
    pass


@dataclass
class EmitterSection:
    """Three-level rates (1/s); ``power`` (uW) with ``sigma`` overrides k12."""

    k12: float = 1e8
    k21: float = 1e8
    k23: float = 0.0
    k31: float = 0.0
    sigma: float = 1e7
    eta_det: float = 0.10
    power: float | None = None

    def rates(self) -> ThreeLevelRates:
        k12 = self.sigma * self.power if self.power is not None else self.k12
        return ThreeLevelRates(k12, self.k21, self.k23, self.k31)

    def power_model(self) -> PowerModel:
        return PowerModel(self.sigma, self.eta_det)


@dataclass
class SimulateSection:
    emitter: EmitterSection = field(default_factory=EmitterSection)
    duration: float = 1.0
    background_rate: float = 0.0
    signal_fraction: float | None = None
    jitter_sigma: float = 0.0
    dead_time: float = 0.0
    splitter_ratio: float = 0.5
    dark_rate: float = 0.0
    dark_rate_per_uw: float = 0.0
    dark_recovery: float = 0.0
    bleach_rate: float = 0.0
    bleach_threshold: float = 500.0
    pol_angle: float | None = None
    target_photons: int | None = None
    output: str = "tags.wttag"

    def stream_config(self, seed: int) -> StreamConfig:
        """StreamConfig; ``signal_fraction`` sets the background and
        ``target_photons`` the duration from the expected rates."""
        from .kinetics import detected_rate

        rates, pm = self.emitter.rates(), self.emitter.power_model()
        bg = self.background_rate
        signal = detected_rate(rates, pm)
        if self.signal_fraction is not None:
            if not 0 < self.signal_fraction <= 1:
                raise ConfigError("signal_fraction must lie in (0, 1]")
            bg = signal * (1.0 / self.signal_fraction - 1.0)
        duration = self.duration
        if self.target_photons is not None:
            total = signal + bg
            if total <= 0:
                raise ConfigError("target_photons needs a non-zero expected rate")
            duration = self.target_photons / total
        return StreamConfig(
            rates=rates, power_model=pm, duration=duration, background_rate=bg,
            jitter_sigma=self.jitter_sigma, dead_time=self.dead_time, splitter_ratio=self.splitter_ratio,
            dark_rate=self.dark_rate, dark_rate_per_uw=self.dark_rate_per_uw, dark_recovery=self.dark_recovery,
            bleach_rate=self.bleach_rate, bleach_threshold=self.bleach_threshold, power=self.emitter.power,
            pol_angle=self.pol_angle, seed=seed,
        )


@dataclass
class G2Section:
    input: str | None = None
    bin_width: int = 1000
    tau_range: int = 100_000
    fit: bool = True
    model: str = "g2_three_level"
    k_sigma: float = 2.0
    oracle: bool = False


@dataclass
class LifetimeSection:
    """Fit a decay CSV (``input``) or simulate one decay per lifetime (ns)."""

    input: str | None = None
    lifetimes: list[float] = field(default_factory=lambda: [12.7])
    photons: int = 1_000_000
    eta_det: float = 0.10
    pulse_period: float = 500.0
    pickup_prob: float = 1.0
    bin_width: float = 50.0
    background_rate: float = 0.0
    jitter_sigma: float = 0.0
    window: float | None = None


@dataclass
class SaturationSection:
    """Standard saturation series, plus an optional dark-state variant."""

    input: str | None = None
    emitter: EmitterSection = field(default_factory=EmitterSection)
    powers: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 4.0, 8.0])
    dwell: float = 10.0
    background_rate: float = 0.0
    dark_rate_per_uw: float = 0.0
    dark_recovery: float = 0.0
    trace_power: float | None = None
    trace_duration: float = 60.0
    trace_bin: float = 0.1
    inflation_threshold: float = 5.0


@dataclass
class PolarizationSection:
    input: str | None = None
    n_emitters: int = 47
    angle_step: float = 10.0
    i_max: float = 1000.0
    visibility: float = 0.97
    axes: list[str] = field(default_factory=lambda: ["[111]", "[-111]"])
    noise: bool = True
    stratified: bool = False


@dataclass
class SpectrumSection:
    input: str | None = None
    e_zpl: float = 1.018
    fwhm: float = 0.01
    dw: float = 0.40
    lvm_offset: float = 70.0
    resolution: float = 0.10
    instrument: str = "lorentzian"
    total_counts: float = 1e6
    noise: bool = True
    zpl_half_window: float = 0.5
    n_emitters: int = 27
    inhomogeneous_spread: float = 1.0
    temperatures: list[float] = field(default_factory=list)
    shift_coeffs: list[float] = field(default_factory=lambda: [-2.0e-3, -4.0e-4])
    width_coeffs: list[float] = field(default_factory=lambda: [0.11, 2.0e-3, 3.0e-4])
    law_degree: int = 3


@dataclass
class ScanSection:
    input: str | None = None
    layouts: list[str] = field(default_factory=lambda: ["dozen"])
    n_emitters: int = 12
    extent: list[float] = field(default_factory=lambda: [100.0, 100.0])
    brightness: float = 40e3
    background: float = 5e3
    psf_sigma: float | None = None
    pitch: float = 0.25
    dwell: float = 0.01
    threshold_sigma: float = 5.0


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "out"
    preset: str | None = None
    simulate: SimulateSection = field(default_factory=SimulateSection)
    g2: G2Section = field(default_factory=G2Section)
    lifetime: LifetimeSection = field(default_factory=LifetimeSection)
    saturation: SaturationSection = field(default_factory=SaturationSection)
    polarization: PolarizationSection = field(default_factory=PolarizationSection)
    spectrum: SpectrumSection = field(default_factory=SpectrumSection)
    scan: ScanSection = field(default_factory=ScanSection)


# -- schema checking -----------------------------------------------------------


def _check_scalar(value, hint, where):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_scalar(value, inner[0], where)
    if origin is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list, got {value!r}")
        return [_check_scalar(v, args[0], f"{where}[{i}]") for i, v in enumerate(value)]
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        # YAML 1.1 reads 1e6 (no dot) as a string
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported type {hint}")


def merge(obj, data: dict, where: str = ""):
    """Overlay ``data`` on the dataclass instance ``obj`` in place, validating it."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(type(obj))
    known = {f.name for f in fields(obj)}
    for key, value in data.items():
        path = f"{where}.{key}" if where else str(key)
        if key not in known:
            raise ConfigError(f"unknown key {path!r}; expected one of {sorted(known)}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            merge(current, value, path)
        else:
            setattr(obj, key, _check_scalar(value, hints[key], path))
    return obj


def load_yaml(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return {} if data is None else data


def build(preset: dict | None = None, file_data: dict | None = None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    for layer in (preset, file_data, overrides):
        if layer:
            merge(cfg, layer)
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return cfg


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def dump(cfg, drop=("out",)) -> str:
    """YAML text of ``cfg``; ``drop`` omits location-only keys so reruns elsewhere match byte for byte."""
    d = {k: v for k, v in to_dict(cfg).items() if k not in drop}
    return yaml.safe_dump(d, sort_keys=True, default_flow_style=None)
