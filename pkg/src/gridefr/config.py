"""Study configuration: YAML ingestion, validation, packaged fixtures.

A study file names the scenario, points at an appliance catalog and demand
and wind series, and carries the fleet, storage, frequency, synthesis, and
scenario-tree parameter blocks. Paths are resolved relative to the YAML
file so shipped fixtures work from any working directory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields as dc_fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .demand import ApplianceSpec
from .grid import FrequencyParams, GeneratorClass, StorageUnit, SynthesisParams


@dataclass(frozen=True)
class NetworkSpec:
    """How many feeder fixtures to synthesize and their shape."""

    feeders: int = 2
    cdcs_per_feeder: int = 6
    cdcs_per_lateral: int = 3
    base_mva: float = 1.0
    heavy_tail: bool = False


@dataclass(frozen=True)
class TreeParams:
    horizon: int = 12
    stages: tuple[int, ...] = (2,)
    quantiles: tuple[float, ...] = (0.25, 0.5, 0.75)
    rho: float = 0.8
    sigma: float = 0.1


@dataclass(frozen=True)
class SolverParams:
    backend: str = "highs"
    gap: float = 3e-4


@dataclass(frozen=True)
class StudyConfig:
    scenario: str
    seed: int
    mode: str = "normal"
    ladder: tuple[float, ...] = (0.0, 1.0)
    days: int = 1
    seasons: tuple[str, ...] = ("winter",)
    system_scale: float = 1.0
    run_suc: bool = True
    network: NetworkSpec = field(default_factory=NetworkSpec)
    tree: TreeParams = field(default_factory=TreeParams)
    solver: SolverParams = field(default_factory=SolverParams)
    synthesis: SynthesisParams = field(default_factory=SynthesisParams)
    frequency: FrequencyParams = field(default_factory=FrequencyParams)
    generators: tuple[GeneratorClass, ...] = ()
    storage: tuple[StorageUnit, ...] = ()
    catalog: tuple[ApplianceSpec, ...] = ()
    demand_mw: np.ndarray = field(default_factory=lambda: np.zeros(0))
    wind_mw: np.ndarray = field(default_factory=lambda: np.zeros(0))
    wind_capacity_mw: float = 0.0
    nadir_grid: tuple[int, int] = (20, 20)

    def __post_init__(self):
        if self.mode not in ("normal", "fully-controllable"):
            raise ValueError(f"unknown mode {self.mode!r}")
        lad = self.ladder
        if any(not 0.0 <= f <= 1.0 for f in lad) or any(
            b <= a for a, b in zip(lad, lad[1:])
        ):
            raise ValueError(f"ladder must be strictly increasing within [0, 1]: {lad}")
        if self.days < 1:
            raise ValueError("period must cover at least one day")
        object.__setattr__(self, "demand_mw", np.asarray(self.demand_mw, dtype=float))
        object.__setattr__(self, "wind_mw", np.asarray(self.wind_mw, dtype=float))

    @property
    def hours(self) -> int:
        return self.days * 24


def _build(cls, raw: dict[str, Any], convert: Optional[dict[str, Any]] = None):
    """Construct a dataclass from a mapping, tupling sequences, rejecting unknowns."""
    names = {f.name for f in dc_fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ValueError(f"{cls.__name__}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        if convert and key in convert:
            value = convert[key](value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def load_catalog(path: Path) -> tuple[ApplianceSpec, ...]:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict) or "appliances" not in raw:
        raise ValueError(f"{path}: expected a top-level 'appliances' list")
    out = []
    for entry in raw["appliances"]:
        out.append(
            _build(
                ApplianceSpec,
                entry,
                convert={
                    "zip_p": tuple,
                    "zip_q": tuple,
                    "propensity": tuple,
                    "month_weights": tuple,
                },
            )
        )
    return tuple(out)


def load_series_csv(path: Path, column: str = "mw") -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise ValueError(f"{path}: missing column {column!r}")
        values = [float(row[column]) for row in reader]
    if not values:
        raise ValueError(f"{path}: empty series")
    return np.asarray(values)


def _resolve(base: Path, ref: str) -> Path:
    p = Path(ref)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise FileNotFoundError(f"referenced file not found: {p}")
    return p


def load_config(path: Path | str) -> StudyConfig:
    path = Path(path)
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    base = path.parent

    for key in ("scenario", "seed"):
        if key not in raw:
            raise ValueError(f"{path}: missing required key {key!r}")

    catalog = load_catalog(_resolve(base, raw.pop("appliances")))
    demand_ref = raw.pop("demand_csv", None)
    wind_ref = raw.pop("wind_csv", None)
    demand = load_series_csv(_resolve(base, demand_ref)) if demand_ref else np.zeros(24)
    wind = load_series_csv(_resolve(base, wind_ref)) if wind_ref else np.zeros(24)

    generators = tuple(
        _build(GeneratorClass, g) for g in raw.pop("generators", [])
    )
    storage = tuple(_build(StorageUnit, s) for s in raw.pop("storage", []))

    sections = {
        "network": (NetworkSpec, NetworkSpec()),
        "tree": (TreeParams, TreeParams()),
        "solver": (SolverParams, SolverParams()),
        "synthesis": (SynthesisParams, SynthesisParams()),
        "frequency": (FrequencyParams, FrequencyParams()),
    }
    parsed: dict[str, Any] = {}
    for key, (cls, default) in sections.items():
        parsed[key] = _build(cls, raw.pop(key)) if key in raw else default

    nadir_grid = tuple(raw.pop("nadir_grid", (20, 20)))
    ladder = tuple(raw.pop("ladder", (0.0, 1.0)))
    period = raw.pop("period", {})
    days = int(period.get("days", 1))
    seasons = tuple(period.get("seasons", ["winter"]))

    return StudyConfig(
        scenario=raw.pop("scenario"),
        seed=int(raw.pop("seed")),
        mode=raw.pop("mode", "normal"),
        ladder=ladder,
        days=days,
        seasons=seasons,
        system_scale=float(raw.pop("system_scale", 1.0)),
        run_suc=bool(raw.pop("run_suc", True)),
        generators=generators,
        storage=storage,
        catalog=catalog,
        demand_mw=demand,
        wind_mw=wind,
        wind_capacity_mw=float(raw.pop("wind_capacity_mw", float(np.max(wind)))),
        nadir_grid=(int(nadir_grid[0]), int(nadir_grid[1])),
        **parsed,
        **_reject_leftovers(raw, path),
    )


def _reject_leftovers(raw: dict, path: Path) -> dict:
    if raw:
        raise ValueError(f"{path}: unknown keys {sorted(raw)}")
    return {}


def packaged_fixture(name: str) -> Path:
    """Path to a shipped study fixture, e.g. 'gnw_mini' or 'gnw_sc'."""
    root = resources.files("gridefr") / "data"
    p = Path(str(root / f"{name}.yaml"))
    if not p.exists():
        shipped = sorted(f.name[:-5] for f in Path(str(root)).glob("*.yaml"))
        raise FileNotFoundError(f"no fixture {name!r}; shipped: {shipped}")
    return p
