"""Pipeline configuration: JSON file plus ``section.key=value`` overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .semantics import NOT_PLANTS_DENSITY, PLANTS_DENSITY, ClassDensityEntry, ClassDensityTable
from .spectral import BandConfig


@dataclass
class RobotConfig:
    mass_kg: float = 250.0
    width_m: float = 0.6
    height_m: float = 1.0


@dataclass
class GridConfig:
    cell_size_m: float = 0.5
    voxel_size_m: float = 0.2


@dataclass
class RansacConfig:
    threshold_m: float = 0.05
    iterations: int = 200


@dataclass
class BandsConfig:
    red_nm: float = 650.0
    nir_nm: float = 810.0
    green_nm: float = 550.0
    blue_nm: float = 470.0


@dataclass
class PipelineConfig:
    robot: RobotConfig = field(default_factory=RobotConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    densities: dict = field(default_factory=lambda: {"Plants": PLANTS_DENSITY, "NotPlants": NOT_PLANTS_DENSITY})
    ransac: RansacConfig = field(default_factory=RansacConfig)
    otsu_bins: int = 256
    bands: BandsConfig = field(default_factory=BandsConfig)
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        positive = {
            "robot.mass_kg": self.robot.mass_kg, "robot.width_m": self.robot.width_m,
            "robot.height_m": self.robot.height_m, "grid.cell_size_m": self.grid.cell_size_m,
            "grid.voxel_size_m": self.grid.voxel_size_m, "ransac.threshold_m": self.ransac.threshold_m,
            "ransac.iterations": self.ransac.iterations,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"config {name} must be positive, got {value}")
        if self.otsu_bins < 2:
            raise ValueError("config otsu_bins must be >= 2")
        if not self.densities:
            raise ValueError("config densities must not be empty")
        if any(v < 0 for v in self.densities.values()):
            raise ValueError("config densities must be >= 0")
        return self

    def density_table(self) -> ClassDensityTable:
        return ClassDensityTable(tuple(ClassDensityEntry(k, float(v)) for k, v in self.densities.items()))

    def band_config(self) -> BandConfig:
        b = self.bands
        return BandConfig(red_nm=b.red_nm, green_nm=b.green_nm, blue_nm=b.blue_nm, nir_nm=b.nir_nm)

    def to_dict(self) -> dict:
        return asdict(self)


def _merge(obj, data: dict, prefix: str = "", replace_dicts: bool = True):
    names = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in names:
            raise ValueError(f"unknown config field {prefix}{key}")
        current = getattr(obj, key)
        if is_dataclass(current):
            if not isinstance(value, dict):
                raise ValueError(f"config {prefix}{key} must be an object")
            _merge(current, value, f"{prefix}{key}.", replace_dicts)
        elif isinstance(current, dict):
            if not isinstance(value, dict):
                raise ValueError(f"config {prefix}{key} must be an object")
            new = {str(k): float(v) for k, v in value.items()}
            setattr(obj, key, new if replace_dicts else {**current, **new})
        else:
            setattr(obj, key, type(current)(value))


def _parse_override(text: str) -> tuple:
    if "=" not in text:
        raise ValueError(f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path=None, overrides=()) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"{p}: no such file")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValueError(f"{p}: invalid JSON ({exc})") from None
        _merge(cfg, data)
    for text in overrides:
        key, value = _parse_override(text)
        nested: dict = {}
        cursor = nested
        parts = key.split(".")
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
        cursor[parts[-1]] = value
        _merge(cfg, nested, replace_dicts=False)
    return cfg.validate()
