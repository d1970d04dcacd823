"""Interference-cap uplink power control.

Each cell has a per-RB interference limit, checked on every RB whether or
not the cell schedules it. While a cell measures more than that, the UEs of
other cells that hit the violated RBs above a contribution floor back off
by a fixed step. Rounds are synchronous: every measurement in a round uses
the previous round's powers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .association import Association
from .propagation import CouplingGainMatrix
from .scenario import PowerControlParams

_TOL_DB = 1e-9


@dataclass
class PowerState:
    tx_power: np.ndarray
    iteration_log: list[float] = field(default_factory=list)
    power_history: list[np.ndarray] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    reason: str = ""


def serving_rows(assoc: Association, gains: CouplingGainMatrix) -> np.ndarray:
    rows = np.searchsorted(gains.cell_ids, assoc.ul_cell)
    if len(rows) and not np.array_equal(gains.cell_ids[rows], assoc.ul_cell):
        raise ValueError("association references a cell missing from the gain matrix")
    return rows


def interference_per_rb(
    tx_power: np.ndarray, gains: CouplingGainMatrix, serving: np.ndarray, occupancy: np.ndarray
) -> np.ndarray:
    """Received interference (mW) at every cell on every RB, own UEs excluded."""
    rx = 10.0 ** ((tx_power[None, :] + gains.gain) / 10.0)
    rx[serving, np.arange(len(serving))] = 0.0
    return rx @ occupancy.astype(float)


def _to_dbm(mw: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(mw)


def violations(
    tx_power: np.ndarray,
    gains: CouplingGainMatrix,
    serving: np.ndarray,
    occupancy: np.ndarray,
    params: PowerControlParams,
):
    """(violated RB mask per cell, contributing-UE mask per cell, interference dBm)."""
    i_dbm = _to_dbm(interference_per_rb(tx_power, gains, serving, occupancy))
    violated = i_dbm > params.interference_limit + _TOL_DB
    rx_dbm = tx_power[None, :] + gains.gain
    external = np.ones_like(rx_dbm, dtype=bool)
    external[serving, np.arange(len(serving))] = False
    on_violated_rb = (violated.astype(float) @ occupancy.T.astype(float)) > 0
    contributing = external & on_violated_rb & (rx_dbm > params.contribution_floor)
    return violated, contributing, i_dbm


def control_uplink_power(
    assoc: Association,
    gains: CouplingGainMatrix,
    occupancy: np.ndarray,
    params: PowerControlParams,
    max_tx_power,
) -> PowerState:
    """Run power control from full power.

    ``occupancy`` is a (n_ue, n_rb) boolean array in the column order of
    ``gains``. Stops when no RB is above the limit, when a round would
    change no power, or after ``params.max_iterations`` reducing rounds.
    """
    serving = serving_rows(assoc, gains)
    n_ue = len(serving)
    p = np.broadcast_to(np.asarray(max_tx_power, dtype=float), (n_ue,)).copy()
    occupancy = np.asarray(occupancy, dtype=bool).reshape(n_ue, -1)
    state = PowerState(tx_power=p)
    if n_ue == 0:
        state.converged, state.reason = True, "no UEs"
        return state
    while True:
        state.power_history.append(p)
        violated, contributing, i_dbm = violations(p, gains, serving, occupancy, params)
        state.iteration_log.append(float(np.max(i_dbm)) if i_dbm.size else float("-inf"))
        if not violated.any():
            state.converged, state.reason = True, "no violation"
            break
        if state.iterations >= params.max_iterations:
            state.reason = "max iterations"
            break
        reduce = contributing.any(axis=0)
        new_p = np.where(reduce, np.maximum(p - params.step, params.p_min), p)
        if np.array_equal(new_p, p):
            state.reason = "no power change"
            break
        p = new_p
        state.iterations += 1
    state.tx_power = p
    return state
