"""Built-in scenarios and the three comparison cases."""

from __future__ import annotations

from .association import AssociationPolicy, Coupled, Dude
from .scenario import Area, Cell, Layer, Scenario, hotspot_raster

# case name -> (policy, pico DL transmit power in dBm)
CASES: dict[str, tuple[AssociationPolicy, float]] = {
    "dl-lp": (Coupled(), 20.0),
    "dl-hp": (Coupled(), 30.0),
    # UL association ignores pico power; 30 dBm only feeds DL association
    "dude": (Dude(), 30.0),
}

_MACROS = [(300.0, 300.0), (700.0, 750.0)]
_PICOS = [
    (500.0, 500.0),
    (150.0, 820.0),
    (850.0, 300.0),
    (320.0, 620.0),
    (620.0, 180.0),
    (880.0, 880.0),
    (120.0, 180.0),
    (460.0, 880.0),
    (880.0, 560.0),
    (560.0, 360.0),
    (140.0, 450.0),
    (300.0, 80.0),
]


def testbed_mini(mean_ue_count: float = 150.0, pico_power: float = 30.0) -> Scenario:
    """1 km x 1 km, 2 macros and 12 picos sited on traffic hotspots."""
    area = Area(0.0, 0.0, 1000.0, 1000.0)
    cells = [Cell(i, Layer.MACRO, x, y, 46.0, 17.8) for i, (x, y) in enumerate(_MACROS)]
    cells += [
        Cell(len(_MACROS) + i, Layer.PICO, x, y, pico_power, 4.0) for i, (x, y) in enumerate(_PICOS)
    ]
    hotspots = [(x, y, 60.0, 3.0) for x, y in _PICOS]
    density = hotspot_raster(area, hotspots, floor=0.3, pixel=10.0)
    return Scenario(cells=tuple(cells), area=area, traffic_density=density, mean_ue_count=mean_ue_count)


SCENARIOS = {"testbed-mini": testbed_mini}


def apply_case(s: Scenario, case: str) -> tuple[Scenario, AssociationPolicy]:
    try:
        policy, pico_power = CASES[case]
    except KeyError:
        raise ValueError(f"unknown case {case!r} (expected one of {', '.join(CASES)})") from None
    return s.with_pico_power(pico_power), policy
