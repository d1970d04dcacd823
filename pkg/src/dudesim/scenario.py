"""Deployments, radio parameters, demand profiles and user drops."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MACRO_TX_DBM = 46.0
MACRO_GAIN_DBI = 17.8
PICO_TX_DBM = 30.0
PICO_GAIN_DBI = 4.0
UE_TX_DBM = 20.0
UE_GAIN_DBI = 0.0


class ScenarioError(ValueError):
    """Invalid scenario content. ``field`` names the offending item."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ParseError(ScenarioError):
    pass


class Layer(enum.Enum):
    MACRO = "macro"
    PICO = "pico"


@dataclass(frozen=True)
class Cell:
    id: int
    layer: Layer
    x: float
    y: float
    tx_power: float = MACRO_TX_DBM
    antenna_gain: float = MACRO_GAIN_DBI
    active: bool = True

    def __post_init__(self):
        if self.id < 0:
            raise ScenarioError(f"cell {self.id}", "id must be non-negative")
        if not -40.0 <= self.tx_power <= 60.0:
            raise ScenarioError(f"cell {self.id}.tx_power", f"{self.tx_power} dBm outside [-40, 60]")
        if not -10.0 <= self.antenna_gain <= 30.0:
            raise ScenarioError(
                f"cell {self.id}.antenna_gain", f"{self.antenna_gain} dBi outside [-10, 30]"
            )

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    @property
    def eirp(self) -> float:
        return self.tx_power + self.antenna_gain

    @property
    def is_pico(self) -> bool:
        return self.layer is Layer.PICO


@dataclass(frozen=True)
class Ue:
    id: int
    x: float
    y: float
    max_tx_power: float = UE_TX_DBM
    antenna_gain: float = UE_GAIN_DBI
    tx_power: float | None = None

    def __post_init__(self):
        if self.tx_power is None:
            object.__setattr__(self, "tx_power", self.max_tx_power)
        if self.tx_power > self.max_tx_power:
            raise ScenarioError(f"ue {self.id}.tx_power", "exceeds max_tx_power")

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class DemandProfile:
    r_min: float = 200e3
    r_max: float = 20e6

    def __post_init__(self):
        if not 0 < self.r_min <= self.r_max:
            raise ScenarioError("demand", f"need 0 < r_min <= r_max, got {self.r_min}, {self.r_max}")


@dataclass(frozen=True)
class Area:
    x_min: float = 0.0
    y_min: float = 0.0
    x_max: float = 1000.0
    y_max: float = 1000.0

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ScenarioError("area", "empty bounding box")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def contains(self, x, y):
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)


@dataclass(frozen=True, eq=False)
class DensityRaster:
    """Non-negative traffic weights on a regular grid.

    Row ``j`` spans ``origin_y + j*pixel_size`` to ``origin_y + (j+1)*pixel_size``;
    row 0 is the southern edge.
    """

    origin_x: float
    origin_y: float
    pixel_size: float
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.size == 0:
            raise ScenarioError("traffic.raster", "weights must be a non-empty 2D grid")
        if not np.all(np.isfinite(w)):
            raise ScenarioError("traffic.raster", "non-finite weight")
        if np.any(w < 0):
            raise ScenarioError("traffic.raster", "negative weight")
        if not np.any(w > 0):
            raise ScenarioError("traffic.raster", "no strictly positive weight")
        if self.pixel_size <= 0:
            raise ScenarioError("traffic.raster", "pixel size must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    def covers(self, area: Area) -> bool:
        return (
            self.origin_x <= area.x_min
            and self.origin_y <= area.y_min
            and self.origin_x + self.width * self.pixel_size >= area.x_max
            and self.origin_y + self.height * self.pixel_size >= area.y_max
        )

    def __eq__(self, other):
        if not isinstance(other, DensityRaster):
            return NotImplemented
        return (
            (self.origin_x, self.origin_y, self.pixel_size)
            == (other.origin_x, other.origin_y, other.pixel_size)
            and np.array_equal(self.weights, other.weights)
        )


def uniform_raster(area: Area, pixel: float = 10.0) -> DensityRaster:
    nx = max(1, math.ceil(area.width / pixel))
    ny = max(1, math.ceil(area.height / pixel))
    return DensityRaster(area.x_min, area.y_min, pixel, np.ones((ny, nx)))


def hotspot_raster(
    area: Area,
    hotspots: Iterable[tuple[float, float, float, float]],
    floor: float = 0.1,
    pixel: float = 10.0,
) -> DensityRaster:
    """Uniform floor plus a sum of Gaussian bumps ``(x, y, sigma, weight)``.

    Each bump has peak height ``weight`` (relative to a floor of ``floor``).
    """
    nx = max(1, math.ceil(area.width / pixel))
    ny = max(1, math.ceil(area.height / pixel))
    xc = area.x_min + (np.arange(nx) + 0.5) * pixel
    yc = area.y_min + (np.arange(ny) + 0.5) * pixel
    X, Y = np.meshgrid(xc, yc)
    w = np.full((ny, nx), float(floor))
    for hx, hy, sigma, weight in hotspots:
        w += weight * np.exp(-((X - hx) ** 2 + (Y - hy) ** 2) / (2.0 * sigma**2))
    return DensityRaster(area.x_min, area.y_min, pixel, w)


@dataclass(frozen=True)
class PowerControlParams:
    interference_limit: float = -105.0  # dBm per RB
    step: float = 1.0
    p_min: float = -40.0
    max_iterations: int = 20
    floor_offset: float = 10.0  # contribution floor = limit - floor_offset

    def __post_init__(self):
        if self.step <= 0:
            raise ScenarioError("radio.pc_step", "must be positive")
        if self.max_iterations < 1:
            raise ScenarioError("radio.pc_max_iterations", "must be >= 1")

    @property
    def contribution_floor(self) -> float:
        return self.interference_limit - self.floor_offset


@dataclass(frozen=True)
class Scenario:
    cells: tuple[Cell, ...]
    area: Area = field(default_factory=Area)
    traffic_density: DensityRaster | None = None
    mean_ue_count: float = 150.0
    fixed_count: bool = False
    demand: DemandProfile = field(default_factory=DemandProfile)
    bandwidth: float = 20e6
    n_rb: int = 100
    rb_bandwidth: float = 180e3
    carrier: float = 2.6e9
    ue_max_power: float = UE_TX_DBM
    ue_antenna_gain: float = UE_GAIN_DBI
    noise_figure: float = 5.0
    min_sinr: float = -7.0
    se_cap: float = 6.0
    exponent_macro: float = 4.0
    exponent_pico: float = 3.6
    ref_loss: float = 38.5
    shadowing_sigma: float = 0.0
    ul_metric: str = "coupling_gain"
    pathloss_raster: object = None  # a PathlossRaster, when imported maps replace the power law
    power_control: PowerControlParams = field(default_factory=PowerControlParams)

    def __post_init__(self):
        cells = tuple(sorted(self.cells, key=lambda c: c.id))
        object.__setattr__(self, "cells", cells)
        ids = [c.id for c in cells]
        if len(set(ids)) != len(ids):
            raise ScenarioError("cells", "duplicate cell id")
        if not any(c.active for c in cells):
            raise ScenarioError("cells", "at least one active cell required")
        if self.n_rb < 1:
            raise ScenarioError("radio.n_rb", "must be >= 1")
        if self.rb_bandwidth <= 0:
            raise ScenarioError("radio.rb_bandwidth", "must be positive")
        if self.n_rb * self.rb_bandwidth > self.bandwidth * (1 + 1e-12):
            raise ScenarioError("radio.n_rb", "n_rb * rb_bandwidth exceeds bandwidth")
        if self.mean_ue_count < 0:
            raise ScenarioError("traffic.mean_ue_count", "must be non-negative")
        if self.ul_metric not in ("coupling_gain", "raw_pathloss"):
            raise ScenarioError("radio.ul_metric", f"unknown metric {self.ul_metric!r}")
        if self.shadowing_sigma < 0:
            raise ScenarioError("radio.shadowing_sigma", "must be non-negative")
        for name in ("exponent_macro", "exponent_pico"):
            if not 2.0 <= getattr(self, name) <= 6.0:
                raise ScenarioError(f"radio.{name}", "must be within [2, 6]")
        if self.ref_loss < 0:
            raise ScenarioError("radio.ref_loss", "must be non-negative")
        if self.power_control.p_min >= self.ue_max_power:
            raise ScenarioError("radio.pc_min_power", "must be below UE max power")
        if self.traffic_density is None:
            object.__setattr__(self, "traffic_density", uniform_raster(self.area))
        elif not self.traffic_density.covers(self.area):
            raise ScenarioError("traffic.raster", "density raster does not cover area")

    @property
    def active_cells(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.active)

    @property
    def picos(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.is_pico)

    def cell(self, cell_id: int) -> Cell:
        for c in self.cells:
            if c.id == cell_id:
                return c
        raise ScenarioError(f"cell {cell_id}", "unknown cell id")

    @property
    def noise_per_rb_dbm(self) -> float:
        return -174.0 + 10.0 * math.log10(self.rb_bandwidth) + self.noise_figure

    def replace(self, **changes) -> Scenario:
        return dataclasses.replace(self, **changes)

    def with_pico_power(self, tx_power: float) -> Scenario:
        cells = tuple(
            dataclasses.replace(c, tx_power=tx_power) if c.is_pico else c for c in self.cells
        )
        return self.replace(cells=cells)

    def with_demand(self, r_min: float | None = None, r_max: float | None = None) -> Scenario:
        d = DemandProfile(
            r_min=self.demand.r_min if r_min is None else r_min,
            r_max=self.demand.r_max if r_max is None else r_max,
        )
        return self.replace(demand=d)


def generate_ues(s: Scenario, seed: int) -> list[Ue]:
    """Drop users for one snapshot.

    The count is Poisson(mean_ue_count) unless ``s.fixed_count``; each user
    picks a pixel with probability proportional to its weight (restricted to
    the part of the pixel inside the area) and is placed uniformly in it.
    """
    rng = np.random.default_rng(seed)
    if s.fixed_count:
        n = int(round(s.mean_ue_count))
    else:
        n = int(rng.poisson(s.mean_ue_count))
    if n == 0:
        return []

    r = s.traffic_density
    a = s.area
    x0 = r.origin_x + np.arange(r.width) * r.pixel_size
    y0 = r.origin_y + np.arange(r.height) * r.pixel_size
    xlo = np.clip(x0, a.x_min, a.x_max)
    xhi = np.clip(x0 + r.pixel_size, a.x_min, a.x_max)
    ylo = np.clip(y0, a.y_min, a.y_max)
    yhi = np.clip(y0 + r.pixel_size, a.y_min, a.y_max)
    overlap = np.outer(yhi - ylo, xhi - xlo) / r.pixel_size**2
    w = (r.weights * overlap).ravel()
    total = w.sum()
    if total <= 0:
        raise ScenarioError("traffic.raster", "no positive weight inside area")

    idx = rng.choice(w.size, size=n, p=w / total)
    row, col = np.divmod(idx, r.width)
    ux = rng.random(n)
    uy = rng.random(n)
    xs = xlo[col] + ux * (xhi[col] - xlo[col])
    ys = ylo[row] + uy * (yhi[row] - ylo[row])
    return [
        Ue(i, float(x), float(y), max_tx_power=s.ue_max_power, antenna_gain=s.ue_antenna_gain)
        for i, (x, y) in enumerate(zip(xs, ys))
    ]


def activate_cells(s: Scenario, active_pico_count: int, order: Sequence[int]) -> Scenario:
    """Copy of ``s`` with exactly the first ``active_pico_count`` picos of ``order`` on."""
    known = {c.id: c for c in s.cells}
    for cid in order:
        if cid not in known:
            raise ScenarioError(f"cell {cid}", "unknown cell id in activation order")
        if not known[cid].is_pico:
            raise ScenarioError(f"cell {cid}", "activation order may only list pico cells")
    if not 0 <= active_pico_count <= len(order):
        raise ScenarioError("active_pico_count", f"must be within [0, {len(order)}]")
    on = set(order[:active_pico_count])
    cells = tuple(
        dataclasses.replace(c, active=(c.id in on)) if c.is_pico else c for c in s.cells
    )
    return s.replace(cells=cells)


# -- config documents -------------------------------------------------------

_SECTIONS = ("area", "radio", "demand", "cells", "traffic")

_RADIO_FLOATS = {
    "bandwidth": "bandwidth",
    "rb_bandwidth": "rb_bandwidth",
    "carrier": "carrier",
    "ue_power": "ue_max_power",
    "ue_gain": "ue_antenna_gain",
    "noise_figure": "noise_figure",
    "min_sinr": "min_sinr",
    "se_cap": "se_cap",
    "exponent_macro": "exponent_macro",
    "exponent_pico": "exponent_pico",
    "ref_loss": "ref_loss",
    "shadowing_sigma": "shadowing_sigma",
}
_PC_KEYS = {
    "interference_limit": ("interference_limit", float),
    "pc_step": ("step", float),
    "pc_min_power": ("p_min", float),
    "pc_max_iterations": ("max_iterations", int),
    "pc_floor_offset": ("floor_offset", float),
}


def _num(value: str, where: str, kind=float):
    try:
        return kind(float(value)) if kind is int else kind(value)
    except ValueError:
        raise ParseError(where, f"not a number: {value!r}") from None


def _bool(value: str, where: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "yes", "1", "on"):
        return True
    if v in ("false", "no", "0", "off"):
        return False
    raise ParseError(where, f"not a boolean: {value!r}")


def _split_sections(text: str) -> dict[str, list[tuple[int, str]]]:
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"line {lineno}", f"malformed section header {raw!r}")
            current = line[1:-1].strip().lower()
            if current not in _SECTIONS:
                raise ParseError(f"line {lineno}", f"unknown section [{current}]")
            if current in sections:
                raise ParseError(f"line {lineno}", f"duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise ParseError(f"line {lineno}", "content before first section")
        sections[current].append((lineno, line))
    return sections


def _key_values(lines, section: str) -> dict[str, tuple[int, str]]:
    out = {}
    for lineno, line in lines:
        if "=" not in line:
            raise ParseError(f"{section} line {lineno}", f"expected key = value, got {line!r}")
        k, v = (p.strip() for p in line.split("=", 1))
        out[k.lower()] = (lineno, v)
    return out


def loads_scenario(text: str, base_dir: str | Path = ".") -> Scenario:
    """Parse a scenario document. Raster paths resolve relative to ``base_dir``."""
    base_dir = Path(base_dir)
    sections = _split_sections(text)
    kw: dict = {}

    area_kv = _key_values(sections.get("area", []), "area")
    area_args = {}
    for k, (ln, v) in area_kv.items():
        if k not in ("x_min", "y_min", "x_max", "y_max"):
            raise ParseError(f"area.{k}", "unknown key")
        area_args[k] = _num(v, f"area.{k}")
    area = Area(**area_args)
    kw["area"] = area

    radio = _key_values(sections.get("radio", []), "radio")
    pc_args = {}
    macro_power = pico_power = None
    for k, (ln, v) in radio.items():
        where = f"radio.{k}"
        if k in _RADIO_FLOATS:
            kw[_RADIO_FLOATS[k]] = _num(v, where)
        elif k == "n_rb":
            kw["n_rb"] = _num(v, where, int)
        elif k in _PC_KEYS:
            name, kind = _PC_KEYS[k]
            pc_args[name] = _num(v, where, kind)
        elif k == "ul_metric":
            kw["ul_metric"] = v
        elif k == "macro_power":
            macro_power = _num(v, where)
        elif k == "pico_power":
            pico_power = _num(v, where)
        elif k == "pathloss_raster":
            from .propagation import load_pathloss_raster

            path = base_dir / v
            if not path.exists():
                raise ScenarioError(where, f"file not found: {path}")
            kw["pathloss_raster"] = load_pathloss_raster(path)
        else:
            raise ParseError(where, "unknown key")
    if pc_args:
        kw["power_control"] = PowerControlParams(**pc_args)

    demand = _key_values(sections.get("demand", []), "demand")
    d_args = {}
    for k, (ln, v) in demand.items():
        if k not in ("r_min", "r_max"):
            raise ParseError(f"demand.{k}", "unknown key")
        d_args[k] = _num(v, f"demand.{k}")
    kw["demand"] = DemandProfile(**d_args)

    cells = []
    for lineno, line in sections.get("cells", []):
        parts = line.split()
        where = f"cells line {lineno}"
        if parts[0].lower() != "cell" or len(parts) not in (5, 6, 7):
            raise ParseError(where, f"expected 'cell <id> <macro|pico> <x> <y> [tx] [gain]', got {line!r}")
        cid = _num(parts[1], where, int)
        try:
            layer = Layer(parts[2].lower())
        except ValueError:
            raise ParseError(f"cell {cid}.layer", f"unknown layer {parts[2]!r}") from None
        x, y = _num(parts[3], where), _num(parts[4], where)
        if layer is Layer.MACRO:
            tx, gain, override = MACRO_TX_DBM, MACRO_GAIN_DBI, macro_power
        else:
            tx, gain, override = PICO_TX_DBM, PICO_GAIN_DBI, pico_power
        if len(parts) >= 6:
            tx = _num(parts[5], where)
        if len(parts) == 7:
            gain = _num(parts[6], where)
        # a layer-wide power in [radio] wins over per-cell values
        if override is not None:
            tx = override
        cells.append(Cell(cid, layer, x, y, tx, gain))
    kw["cells"] = tuple(cells)

    traffic_lines = sections.get("traffic", [])
    hotspots = []
    kv_lines = []
    for lineno, line in traffic_lines:
        if line.lower().startswith("hotspot"):
            parts = line.split()
            if len(parts) != 5:
                raise ParseError(f"traffic line {lineno}", "expected 'hotspot <x> <y> <sigma> <weight>'")
            hotspots.append(tuple(_num(p, f"traffic line {lineno}") for p in parts[1:]))
        else:
            kv_lines.append((lineno, line))
    traffic = _key_values(kv_lines, "traffic")
    pixel = 10.0
    floor = 0.1
    raster = None
    for k, (ln, v) in traffic.items():
        where = f"traffic.{k}"
        if k == "mean_ue_count":
            kw["mean_ue_count"] = _num(v, where)
        elif k == "fixed_count":
            kw["fixed_count"] = _bool(v, where)
        elif k == "pixel":
            pixel = _num(v, where)
        elif k == "floor":
            floor = _num(v, where)
        elif k == "raster":
            path = base_dir / v
            if not path.exists():
                raise ScenarioError(where, f"file not found: {path}")
            raster = load_density_raster(path)
        else:
            raise ParseError(where, "unknown key")
    if raster is not None:
        kw["traffic_density"] = raster
    elif hotspots:
        kw["traffic_density"] = hotspot_raster(area, hotspots, floor=floor, pixel=pixel)
    else:
        kw["traffic_density"] = uniform_raster(area, pixel)

    return Scenario(**kw)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    return loads_scenario(path.read_text(encoding="utf-8"), base_dir=path.parent)


def dumps_scenario(s: Scenario) -> str:
    """Serialize the parts of ``s`` the document format can express.

    The traffic raster is not inlined; write it with :func:`dump_density_raster`
    and add a ``raster =`` line if needed.
    """
    pc = s.power_control
    lines = [
        "[area]",
        f"x_min = {s.area.x_min!r}",
        f"y_min = {s.area.y_min!r}",
        f"x_max = {s.area.x_max!r}",
        f"y_max = {s.area.y_max!r}",
        "",
        "[radio]",
        f"bandwidth = {s.bandwidth!r}",
        f"n_rb = {s.n_rb}",
        f"rb_bandwidth = {s.rb_bandwidth!r}",
        f"carrier = {s.carrier!r}",
        f"ue_power = {s.ue_max_power!r}",
        f"ue_gain = {s.ue_antenna_gain!r}",
        f"noise_figure = {s.noise_figure!r}",
        f"min_sinr = {s.min_sinr!r}",
        f"se_cap = {s.se_cap!r}",
        f"exponent_macro = {s.exponent_macro!r}",
        f"exponent_pico = {s.exponent_pico!r}",
        f"ref_loss = {s.ref_loss!r}",
        f"shadowing_sigma = {s.shadowing_sigma!r}",
        f"ul_metric = {s.ul_metric}",
        f"interference_limit = {pc.interference_limit!r}",
        f"pc_step = {pc.step!r}",
        f"pc_min_power = {pc.p_min!r}",
        f"pc_max_iterations = {pc.max_iterations}",
        f"pc_floor_offset = {pc.floor_offset!r}",
        "",
        "[demand]",
        f"r_min = {s.demand.r_min!r}",
        f"r_max = {s.demand.r_max!r}",
        "",
        "[cells]",
    ]
    for c in s.cells:
        lines.append(f"cell {c.id} {c.layer.value} {c.x!r} {c.y!r} {c.tx_power!r} {c.antenna_gain!r}")
    lines += [
        "",
        "[traffic]",
        f"mean_ue_count = {s.mean_ue_count!r}",
        f"fixed_count = {'true' if s.fixed_count else 'false'}",
    ]
    return "\n".join(lines) + "\n"


def load_density_raster(path: str | Path) -> DensityRaster:
    path = Path(path)
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ParseError(str(path), "empty raster file")
    head = lines[0].split()
    if len(head) != 7 or head[0] != "DENSITY" or head[1] != "v1":
        raise ParseError(f"{path}:1", "expected 'DENSITY v1 <width> <height> <ox> <oy> <pixel>'")
    width, height = _num(head[2], f"{path}:1", int), _num(head[3], f"{path}:1", int)
    ox, oy, pix = (_num(v, f"{path}:1") for v in head[4:7])
    rows = lines[1:]
    if len(rows) != height:
        raise ParseError(str(path), f"expected {height} rows, found {len(rows)}")
    grid = np.empty((height, width))
    for j, row in enumerate(rows):
        vals = row.split()
        if len(vals) != width:
            raise ParseError(f"{path}:{j + 2}", f"expected {width} values, found {len(vals)}")
        grid[j] = [_num(v, f"{path}:{j + 2}") for v in vals]
    return DensityRaster(ox, oy, pix, grid)


def dump_density_raster(r: DensityRaster, path: str | Path) -> None:
    out = [f"DENSITY v1 {r.width} {r.height} {r.origin_x!r} {r.origin_y!r} {r.pixel_size!r}"]
    out += [" ".join(repr(float(v)) for v in row) for row in r.weights]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
