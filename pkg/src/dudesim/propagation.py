"""Link gains between cells and UEs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .scenario import Cell, ParseError, Scenario, ScenarioError, Ue

D_MIN = 1.0  # m, close-in clamp


def pathloss_powerlaw(d, exponent: float, ref_loss: float = 0.0):
    """ref_loss + 10*exponent*log10(max(d, 1 m)). Works on scalars and arrays."""
    d = np.maximum(np.asarray(d, dtype=float), D_MIN)
    pl = ref_loss + 10.0 * exponent * np.log10(d)
    return float(pl) if pl.ndim == 0 else pl


class PathlossProvider(Protocol):
    def pathloss(self, cell: Cell, xy: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class PowerLawModel:
    exponent_macro: float = 4.0
    exponent_pico: float = 3.6
    ref_loss: float = 0.0
    shadowing_sigma: float = 0.0

    def __post_init__(self):
        for name in ("exponent_macro", "exponent_pico"):
            if not 2.0 <= getattr(self, name) <= 6.0:
                raise ValueError(f"{name} must be within [2, 6]")
        if self.ref_loss < 0 or self.shadowing_sigma < 0:
            raise ValueError("ref_loss and shadowing_sigma must be non-negative")

    @classmethod
    def from_scenario(cls, s: Scenario) -> PowerLawModel:
        return cls(s.exponent_macro, s.exponent_pico, s.ref_loss, s.shadowing_sigma)

    def exponent(self, cell: Cell) -> float:
        return self.exponent_pico if cell.is_pico else self.exponent_macro

    def pathloss(self, cell: Cell, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        d = np.hypot(xy[:, 0] - cell.x, xy[:, 1] - cell.y)
        return np.atleast_1d(pathloss_powerlaw(d, self.exponent(cell), self.ref_loss))


@dataclass(frozen=True, eq=False)
class PathlossRaster:
    """Imported per-cell pathloss grids, looked up by nearest pixel.

    Grid row ``j`` covers ``origin_y + j*pixel_size`` upwards, as for
    density rasters.
    """

    origin_x: float
    origin_y: float
    pixel_size: float
    grids: dict  # cell id -> (height, width) array, dB

    def __post_init__(self):
        shapes = {g.shape for g in self.grids.values()}
        if len(shapes) > 1:
            raise ParseError("pathloss raster", "grid dimensions differ between cells")
        for cid, g in self.grids.items():
            if not np.all(np.isfinite(g)):
                raise ParseError(f"pathloss raster cell {cid}", "non-finite value")

    @property
    def shape(self) -> tuple[int, int]:
        return next(iter(self.grids.values())).shape

    def check_cells(self, cells: Sequence[Cell]) -> None:
        missing = [c.id for c in cells if c.id not in self.grids]
        if missing:
            raise ScenarioError(
                f"cell {missing[0]}", f"pathloss raster has no grid for cell(s) {missing}"
            )

    def pixel_index(self, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        h, w = self.shape
        fx = (xy[:, 0] - self.origin_x) / self.pixel_size
        fy = (xy[:, 1] - self.origin_y) / self.pixel_size
        col = np.floor(fx).astype(int)
        row = np.floor(fy).astype(int)
        # points on the far edge belong to the last pixel
        col = np.where((col == w) & np.isclose(fx, w), w - 1, col)
        row = np.where((row == h) & np.isclose(fy, h), h - 1, row)
        bad = (col < 0) | (col >= w) | (row < 0) | (row >= h)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise ScenarioError(
                "pathloss raster", f"position ({xy[i, 0]:g}, {xy[i, 1]:g}) outside raster coverage"
            )
        return row, col

    def pathloss(self, cell: Cell, xy: np.ndarray) -> np.ndarray:
        if cell.id not in self.grids:
            raise ScenarioError(f"cell {cell.id}", "pathloss raster has no grid for this cell")
        row, col = self.pixel_index(xy)
        return self.grids[cell.id][row, col]


def load_pathloss_raster(path: str | Path) -> PathlossRaster:
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise ParseError(str(path), "empty file")
    head = lines[0].split()
    if len(head) != 8 or head[0] != "PLRASTER" or head[1] != "v1":
        raise ParseError(
            f"{path}:1", "expected 'PLRASTER v1 <n_cells> <width> <height> <ox> <oy> <pixel>'"
        )
    try:
        n_cells, width, height = (int(v) for v in head[2:5])
        ox, oy, pix = (float(v) for v in head[5:8])
    except ValueError:
        raise ParseError(f"{path}:1", "malformed header value") from None
    if width < 1 or height < 1 or pix <= 0:
        raise ParseError(f"{path}:1", "raster must have positive size")
    expected = 1 + n_cells * (height + 1)
    if len(lines) != expected:
        raise ParseError(str(path), f"grid size mismatch: expected {expected} lines, found {len(lines)}")
    grids = {}
    pos = 1
    for _ in range(n_cells):
        tag = lines[pos].split()
        if len(tag) != 2 or tag[0] != "CELL":
            raise ParseError(f"{path}", f"expected 'CELL <id>', got {lines[pos]!r}")
        cid = int(tag[1])
        if cid in grids:
            raise ParseError(f"{path}", f"duplicate CELL {cid}")
        rows = []
        for r in lines[pos + 1 : pos + 1 + height]:
            vals = r.split()
            if len(vals) != width:
                raise ParseError(f"{path} CELL {cid}", f"grid size mismatch: row has {len(vals)} values, expected {width}")
            rows.append([float(v) for v in vals])
        grids[cid] = np.array(rows)
        pos += height + 1
    return PathlossRaster(ox, oy, pix, grids)


def dump_pathloss_raster(r: PathlossRaster, path: str | Path) -> None:
    h, w = r.shape
    out = [f"PLRASTER v1 {len(r.grids)} {w} {h} {r.origin_x!r} {r.origin_y!r} {r.pixel_size!r}"]
    for cid in sorted(r.grids):
        out.append(f"CELL {cid}")
        out += [" ".join(repr(float(v)) for v in row) for row in r.grids[cid]]
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def raster_from_model(
    model: PowerLawModel, cells: Sequence[Cell], origin: tuple[float, float], pixel: float, shape: tuple[int, int]
) -> PathlossRaster:
    """Sample a power-law model at pixel centers."""
    h, w = shape
    xc = origin[0] + (np.arange(w) + 0.5) * pixel
    yc = origin[1] + (np.arange(h) + 0.5) * pixel
    X, Y = np.meshgrid(xc, yc)
    xy = np.column_stack([X.ravel(), Y.ravel()])
    grids = {c.id: model.pathloss(c, xy).reshape(h, w) for c in cells}
    return PathlossRaster(origin[0], origin[1], pixel, grids)


def link_shadowing(seed: int, cell_id: int, ue_id: int, sigma: float) -> float:
    """Shadowing draw for one link; depends only on (seed, cell, ue)."""
    if sigma == 0:
        return 0.0
    rng = np.random.default_rng(np.random.SeedSequence([seed, cell_id, ue_id]))
    return float(rng.normal(0.0, sigma))


@dataclass(frozen=True, eq=False)
class CouplingGainMatrix:
    """gain[i, j] = G_cell + G_ue - pathloss[i, j] for cell_ids[i], ue_ids[j], in dB.

    ``pathloss`` includes shadowing. Cells are ordered by ascending id, so argmax over axis 0 breaks ties
    toward the lowest id. UL and DL both read this same matrix.
    """

    cell_ids: np.ndarray
    ue_ids: np.ndarray
    gain: np.ndarray
    pathloss: np.ndarray

    def __post_init__(self):
        for a in (self.cell_ids, self.ue_ids, self.gain, self.pathloss):
            a.setflags(write=False)

    def row(self, cell_id: int) -> int:
        i = np.searchsorted(self.cell_ids, cell_id)
        if i >= len(self.cell_ids) or self.cell_ids[i] != cell_id:
            raise KeyError(f"cell {cell_id} not in gain matrix")
        return int(i)

    def col(self, ue_id: int) -> int:
        hits = np.flatnonzero(self.ue_ids == ue_id)
        if hits.size == 0:
            raise KeyError(f"ue {ue_id} not in gain matrix")
        return int(hits[0])

    def get(self, cell_id: int, ue_id: int) -> float:
        return float(self.gain[self.row(cell_id), self.col(ue_id)])

    def __eq__(self, other):
        if not isinstance(other, CouplingGainMatrix):
            return NotImplemented
        return all(
            np.array_equal(a, b)
            for a, b in (
                (self.cell_ids, other.cell_ids),
                (self.ue_ids, other.ue_ids),
                (self.gain, other.gain),
                (self.pathloss, other.pathloss),
            )
        )


def scenario_provider(s: Scenario) -> PathlossProvider:
    if s.pathloss_raster is not None:
        return s.pathloss_raster
    return PowerLawModel.from_scenario(s)


def build_gain_matrix(
    s: Scenario,
    ues: Sequence[Ue],
    provider: PathlossProvider | None = None,
    seed: int = 0,
    sigma: float | None = None,
) -> CouplingGainMatrix:
    """Coupling gains for every (active cell, UE) pair.

    ``sigma`` defaults to the scenario's shadowing_sigma.
    """
    provider = provider if provider is not None else scenario_provider(s)
    sigma = s.shadowing_sigma if sigma is None else sigma
    cells = s.active_cells
    if isinstance(provider, PathlossRaster):
        provider.check_cells(cells)
    ue_ids = np.array([u.id for u in ues], dtype=int)
    xy = np.array([[u.x, u.y] for u in ues], dtype=float).reshape(-1, 2)
    ue_gain = np.array([u.antenna_gain for u in ues], dtype=float)
    pl = np.empty((len(cells), len(ues)))
    for i, c in enumerate(cells):
        if len(ues):
            pl[i] = provider.pathloss(c, xy)
    if sigma > 0:
        # shadowing is part of the link loss, so the raw-pathloss UL metric sees it too
        pl = pl + np.array(
            [[link_shadowing(seed, c.id, int(uid), sigma) for uid in ue_ids] for c in cells]
        ).reshape(len(cells), len(ues))
    cell_gain = np.array([c.antenna_gain for c in cells])
    gain = cell_gain[:, None] + ue_gain[None, :] - pl
    if not np.all(np.isfinite(gain)):
        raise ScenarioError("pathloss", "non-finite coupling gain")
    return CouplingGainMatrix(np.array([c.id for c in cells], dtype=int), ue_ids, gain, pl)
