"""Coupled (RSRP), decoupled (pathloss) and range-extension cell selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .propagation import CouplingGainMatrix
from .scenario import Cell, Ue


@dataclass(frozen=True)
class Coupled:
    name = "coupled"

    def __str__(self):
        return "coupled"


@dataclass(frozen=True)
class Dude:
    name = "dude"

    def __str__(self):
        return "dude"


@dataclass(frozen=True)
class RangeExtension:
    offset: float = 0.0
    name = "re"

    def __post_init__(self):
        if self.offset < 0:
            raise ValueError("range extension offset must be >= 0 dB")

    def __str__(self):
        return f"re:{self.offset:g}"


AssociationPolicy = Coupled | Dude | RangeExtension


def parse_policy(text: str) -> AssociationPolicy:
    t = text.strip().lower()
    if t == "coupled":
        return Coupled()
    if t == "dude":
        return Dude()
    if t.startswith("re:"):
        try:
            return RangeExtension(float(t[3:]))
        except ValueError as e:
            raise ValueError(f"bad range extension offset in {text!r}: {e}") from None
    raise ValueError(f"unknown policy {text!r} (expected coupled, dude or re:<offset_db>)")


@dataclass(frozen=True, eq=False)
class Association:
    ue_ids: np.ndarray
    dl_cell: np.ndarray
    ul_cell: np.ndarray
    policy: AssociationPolicy

    def __eq__(self, other):
        if not isinstance(other, Association):
            return NotImplemented
        return (
            self.policy == other.policy
            and np.array_equal(self.ue_ids, other.ue_ids)
            and np.array_equal(self.dl_cell, other.dl_cell)
            and np.array_equal(self.ul_cell, other.ul_cell)
        )

    def __len__(self):
        return len(self.ue_ids)


def _cells_in_matrix_order(gains: CouplingGainMatrix, cells: Sequence[Cell]) -> list[Cell]:
    by_id = {c.id: c for c in cells}
    return [by_id[int(cid)] for cid in gains.cell_ids]


def _metric_matrices(gains: CouplingGainMatrix, cells: Sequence[Cell]):
    ordered = _cells_in_matrix_order(gains, cells)
    tx = np.array([c.tx_power for c in ordered])
    pico = np.array([c.is_pico for c in ordered])
    active = np.array([c.active for c in ordered])
    if not active.any():
        raise ValueError("no active cell")
    return tx, pico, active


def _argmax_cells(metric: np.ndarray, active: np.ndarray, cell_ids: np.ndarray) -> np.ndarray:
    m = np.where(active[:, None], metric, -np.inf)
    # np.argmax returns the first maximum: rows are in ascending id order
    return cell_ids[np.argmax(m, axis=0)]


def associate(
    gains: CouplingGainMatrix,
    cells: Sequence[Cell],
    policy: AssociationPolicy,
    ul_metric: str = "coupling_gain",
) -> Association:
    """Associate every UE in ``gains`` under ``policy``."""
    tx, pico, active = _metric_matrices(gains, cells)
    rsrp = tx[:, None] + gains.gain
    if isinstance(policy, RangeExtension):
        biased = rsrp + policy.offset * pico[:, None]
        dl = _argmax_cells(biased, active, gains.cell_ids)
        ul = dl.copy()
    else:
        dl = _argmax_cells(rsrp, active, gains.cell_ids)
        if isinstance(policy, Dude):
            ul_score = gains.gain if ul_metric == "coupling_gain" else -gains.pathloss
            ul = _argmax_cells(ul_score, active, gains.cell_ids)
        else:
            ul = dl.copy()
    return Association(gains.ue_ids.copy(), dl, ul, policy)


def associate_dl(u: Ue, gains: CouplingGainMatrix, cells: Sequence[Cell]) -> int:
    """Cell with the strongest downlink RSRP for ``u``; ties go to the lowest id."""
    tx, pico, active = _metric_matrices(gains, cells)
    j = gains.col(u.id)
    rsrp = tx + gains.gain[:, j]
    return int(_argmax_cells(rsrp[:, None], active, gains.cell_ids)[0])


def associate_ul(
    u: Ue,
    gains: CouplingGainMatrix,
    cells: Sequence[Cell],
    policy: AssociationPolicy,
    ul_metric: str = "coupling_gain",
) -> int:
    tx, pico, active = _metric_matrices(gains, cells)
    j = gains.col(u.id)
    if isinstance(policy, Dude):
        score = gains.gain[:, j] if ul_metric == "coupling_gain" else -gains.pathloss[:, j]
    elif isinstance(policy, RangeExtension):
        score = tx + gains.gain[:, j] + policy.offset * pico
    else:
        score = tx + gains.gain[:, j]
    return int(_argmax_cells(score[:, None], active, gains.cell_ids)[0])


def decoupled_set(a: Association) -> list[int]:
    """UE ids whose UL and DL serving cells differ."""
    return [int(u) for u in a.ue_ids[a.ul_cell != a.dl_cell]]
