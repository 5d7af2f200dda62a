"""Vehicle catalog and the discretised lighting/weather grid."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

SUN_ELEVATIONS_DEG = {"Noon": 75.0, "Sunset": 15.0}
SUN_ALIASES = {"Midday": "Noon"}
PRECIPITATION_LEVELS = (0, 15, 30, 60)
DEPOSIT_LEVELS = (0, 50, 100)
CATEGORIES = ("car", "truck", "motorbike", "bike")


@dataclass(frozen=True)
class EnvironmentCondition:
    sun: str = "Noon"
    precipitation_pct: int = 0
    deposit_pct: int = 0

    def __post_init__(self):
        if self.sun not in SUN_ELEVATIONS_DEG:
            raise ValueError(f"unknown sun position {self.sun!r}; expected one of {sorted(SUN_ELEVATIONS_DEG)}")
        if self.precipitation_pct not in PRECIPITATION_LEVELS:
            raise ValueError(f"precipitation must be one of {PRECIPITATION_LEVELS}, got {self.precipitation_pct}")
        if self.deposit_pct not in DEPOSIT_LEVELS:
            raise ValueError(f"deposit must be one of {DEPOSIT_LEVELS}, got {self.deposit_pct}")

    @property
    def sun_elevation_deg(self) -> float:
        return SUN_ELEVATIONS_DEG[self.sun]

    def label(self) -> str:
        return f"{self.sun}_{self.precipitation_pct}_{self.deposit_pct}"

    @classmethod
    def from_label(cls, label: str) -> "EnvironmentCondition":
        """Parse "<Sun>_<precip>_<deposit>"; "Midday" is read as "Noon"."""
        parts = label.split("_")
        if len(parts) != 3:
            raise ValueError(f"malformed environment label {label!r}")
        sun = SUN_ALIASES.get(parts[0], parts[0])
        try:
            precip, deposit = int(parts[1]), int(parts[2])
        except ValueError:
            raise ValueError(f"malformed environment label {label!r}") from None
        return cls(sun, precip, deposit)


def environment_grid() -> list[EnvironmentCondition]:
    """All 2 x 4 x 3 = 24 conditions, in a fixed order."""
    return [
        EnvironmentCondition(sun, p, d)
        for sun, p, d in itertools.product(SUN_ELEVATIONS_DEG, PRECIPITATION_LEVELS, DEPOSIT_LEVELS)
    ]


@dataclass(frozen=True)
class VehicleSpec:
    name: str
    category: str
    length_m: float
    width_m: float
    height_m: float
    color_rgb: tuple[int, int, int]

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown vehicle category {self.category!r}")
        if min(self.length_m, self.width_m, self.height_m) <= 0:
            raise ValueError(f"vehicle {self.name} has non-positive dimensions")
        if len(self.color_rgb) != 3 or any(not 0 <= c <= 255 for c in self.color_rgb):
            raise ValueError(f"vehicle {self.name} has an invalid colour {self.color_rgb}")


# Approximate footprints of the simulator blueprints of the same name.
VEHICLE_CATALOG: tuple[VehicleSpec, ...] = (
    VehicleSpec("audi.a2", "car", 3.71, 1.79, 1.55, (190, 30, 35)),
    VehicleSpec("audi.etron", "car", 4.86, 2.07, 1.65, (235, 235, 240)),
    VehicleSpec("audi.tt", "car", 4.18, 1.99, 1.38, (30, 60, 170)),
    VehicleSpec("bmw.grandtourer", "car", 4.61, 2.24, 1.67, (25, 25, 30)),
    VehicleSpec("chevrolet.impala", "car", 5.36, 2.03, 1.41, (120, 20, 30)),
    VehicleSpec("citroen.c3", "car", 3.99, 1.85, 1.62, (240, 200, 40)),
    VehicleSpec("dodge.charger_police", "car", 5.00, 2.06, 1.56, (15, 15, 20)),
    VehicleSpec("jeep.wrangler_rubicon", "car", 3.87, 1.91, 1.88, (70, 100, 60)),
    VehicleSpec("lincoln.mkz_2017", "car", 4.90, 2.13, 1.49, (160, 165, 175)),
    VehicleSpec("mercedes.coupe", "car", 5.03, 2.16, 1.64, (110, 115, 125)),
    VehicleSpec("mini.cooper_s", "car", 3.81, 1.97, 1.47, (0, 100, 60)),
    VehicleSpec("nissan.micra", "car", 3.63, 1.85, 1.53, (210, 90, 140)),
    VehicleSpec("nissan.patrol", "car", 4.60, 1.93, 1.86, (200, 200, 195)),
    VehicleSpec("seat.leon", "car", 4.18, 1.81, 1.47, (230, 110, 20)),
    VehicleSpec("tesla.model3", "car", 4.79, 2.16, 1.49, (20, 20, 110)),
    VehicleSpec("toyota.prius", "car", 4.51, 2.01, 1.52, (245, 245, 245)),
    VehicleSpec("volkswagen.t2", "car", 4.44, 2.07, 2.04, (90, 160, 210)),
    VehicleSpec("ford.mustang", "car", 4.72, 1.89, 1.39, (200, 20, 20)),
    VehicleSpec("tesla.cybertruck", "truck", 6.36, 2.40, 2.09, (175, 180, 185)),
    VehicleSpec("carlamotors.carlacola", "truck", 5.20, 2.61, 2.47, (200, 40, 40)),
    VehicleSpec("harley-davidson.low_rider", "motorbike", 2.36, 0.80, 1.53, (40, 40, 45)),
    VehicleSpec("kawasaki.ninja", "motorbike", 2.04, 0.80, 1.44, (40, 170, 40)),
    VehicleSpec("yamaha.yzf", "motorbike", 2.19, 0.87, 1.53, (20, 50, 180)),
    VehicleSpec("vespa.zx125", "motorbike", 1.84, 0.77, 1.49, (225, 205, 160)),
    VehicleSpec("bh.crossbike", "bike", 1.50, 0.86, 1.07, (255, 120, 0)),
    VehicleSpec("diamondback.century", "bike", 1.65, 0.40, 1.10, (0, 150, 200)),
    VehicleSpec("gazelle.omafiets", "bike", 1.84, 0.56, 1.13, (20, 80, 40)),
)

VEHICLES_BY_NAME = {v.name: v for v in VEHICLE_CATALOG}


def get_vehicle(name: str) -> VehicleSpec:
    try:
        return VEHICLES_BY_NAME[name]
    except KeyError:
        raise KeyError(f"unknown vehicle {name!r}") from None
