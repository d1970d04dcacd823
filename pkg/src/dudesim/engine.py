"""Monte Carlo snapshot loop, campaign aggregation and coverage maps."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .association import Association, AssociationPolicy, associate
from .powerctl import control_uplink_power, interference_per_rb, serving_rows
from .propagation import build_gain_matrix, scenario_provider
from .scenario import Scenario, Ue, activate_cells, generate_ues
from .scheduler import per_rb_rate, schedule_cell

log = logging.getLogger(__name__)

MAX_ROUNDS = 10
CONVERGENCE_DB = 0.1
PERCENTILES = (5, 50, 90, 98)


def snapshot_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, np.uint64)[0])


def _subseeds(seed: int) -> tuple[int, int, int]:
    """Independent seeds for UE drop, shadowing and RB placement."""
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(int(c.generate_state(1, np.uint64)[0]) for c in children)


@dataclass(eq=False)
class SnapshotResult:
    ue_ids: np.ndarray
    dl_cell: np.ndarray
    ul_cell: np.ndarray
    ul_is_pico: np.ndarray
    throughput: np.ndarray
    outage: np.ndarray
    rb_count: np.ndarray
    sinr_db: np.ndarray
    tx_power: np.ndarray
    cell_ids: np.ndarray
    cell_is_pico: np.ndarray
    ul_load: np.ndarray
    dl_load: np.ndarray
    interference_dbm: np.ndarray
    level_history: list  # per round, per-cell interference-plus-noise in dBm
    rounds: int
    converged: bool

    @property
    def n_ues(self) -> int:
        return len(self.ue_ids)

    @property
    def decoupled(self) -> int:
        return int(np.count_nonzero(self.dl_cell != self.ul_cell))

    def __eq__(self, other):
        if not isinstance(other, SnapshotResult):
            return NotImplemented
        for name in self.__dataclass_fields__:
            a, b = getattr(self, name), getattr(other, name)
            if isinstance(a, np.ndarray):
                if not np.array_equal(a, b):
                    return False
            elif isinstance(a, list):
                if len(a) != len(b) or not all(np.array_equal(x, y) for x, y in zip(a, b)):
                    return False
            elif a != b:
                return False
        return True


def _occupancy(
    serving: np.ndarray, rb_count: np.ndarray, n_cells: int, n_rb: int, orders, offsets
) -> np.ndarray:
    """Contiguous RB blocks per cell, laid out in the cell's fixed random UE order."""
    occ = np.zeros((len(serving), n_rb), dtype=bool)
    for c in range(n_cells):
        start = offsets[c]
        for u in orders[c]:
            n = rb_count[u]
            if n:
                occ[u, (start + np.arange(n)) % n_rb] = True
                start += n
    return occ


def _ue_sinr(tx_power, gains, serving, occ, i_rb, noise_mw):
    """Wideband SINR per UE: mean interference over its RBs, or cell mean if none."""
    n = len(serving)
    cols = np.arange(n)
    signal = tx_power + gains.gain[serving, cols]
    rows = i_rb[serving]  # (n_ue, n_rb)
    counts = occ.sum(axis=1)
    own = np.where(counts > 0, (rows * occ).sum(axis=1) / np.maximum(counts, 1), rows.mean(axis=1))
    return signal - 10.0 * np.log10(noise_mw + own)


def run_snapshot(s: Scenario, policy: AssociationPolicy, seed: int, ues: Sequence[Ue] | None = None) -> SnapshotResult:
    """One Monte Carlo snapshot; deterministic in (s, policy, seed).

    ``ues`` overrides the random drop (the seed still drives shadowing and
    RB placement).
    """
    ue_seed, shadow_seed, occ_seed = _subseeds(seed)
    if ues is None:
        ues = generate_ues(s, ue_seed)
    cells = s.active_cells
    cell_ids = np.array([c.id for c in cells], dtype=int)
    cell_is_pico = np.array([c.is_pico for c in cells], dtype=bool)
    n_cells, n_ue, n_rb = len(cells), len(ues), s.n_rb
    if n_ue == 0:
        empty_i = np.empty(0, dtype=int)
        empty_f = np.empty(0)
        return SnapshotResult(
            empty_i, empty_i, empty_i, np.empty(0, dtype=bool), empty_f, np.empty(0, dtype=bool),
            empty_i, empty_f, empty_f, cell_ids, cell_is_pico,
            np.zeros(n_cells, dtype=int), np.zeros(n_cells, dtype=int),
            np.full(n_cells, -np.inf), [], 0, True,
        )

    gains = build_gain_matrix(s, ues, scenario_provider(s), seed=shadow_seed)
    assoc: Association = associate(gains, cells, policy, s.ul_metric)
    serving = serving_rows(assoc, gains)
    pmax = np.array([u.max_tx_power for u in ues], dtype=float)
    noise_mw = 10.0 ** (s.noise_per_rb_dbm / 10.0)

    orders, offsets = [], []
    for ci, c in enumerate(cells):
        rng = np.random.default_rng(np.random.SeedSequence([occ_seed, c.id]))
        members = np.flatnonzero(serving == ci)
        orders.append(rng.permutation(members))
        offsets.append(int(rng.integers(n_rb)))

    tx = pmax.copy()
    occ = np.zeros((n_ue, n_rb), dtype=bool)
    i_rb = np.zeros((n_cells, n_rb))
    rb_count = np.zeros(n_ue, dtype=int)
    history = []
    converged = False
    for rnd in range(MAX_ROUNDS):
        if rnd > 0:
            occ = _occupancy(serving, rb_count, n_cells, n_rb, orders, offsets)
            tx = control_uplink_power(assoc, gains, occ, s.power_control, pmax).tx_power
            i_rb = interference_per_rb(tx, gains, serving, occ)
        sinr = _ue_sinr(tx, gains, serving, occ, i_rb, noise_mw)
        rates = per_rb_rate(sinr, s.rb_bandwidth, s.min_sinr, s.se_cap)
        rates = np.atleast_1d(rates)
        throughput = np.zeros(n_ue)
        outage = np.zeros(n_ue, dtype=bool)
        rb_count = np.zeros(n_ue, dtype=int)
        for ci in range(n_cells):
            members = np.flatnonzero(serving == ci)
            if members.size == 0:
                continue
            alloc = schedule_cell([(int(u), float(rates[u])) for u in members], n_rb, s.demand)
            for u in members:
                rb_count[u] = alloc.rb_count.get(int(u), 0)
                throughput[u] = alloc.throughput[int(u)]
                outage[u] = int(u) in alloc.outage
        level = 10.0 * np.log10(noise_mw + i_rb.mean(axis=1))
        history.append(level)
        if rnd > 0 and np.max(np.abs(level - history[-2])) < CONVERGENCE_DB:
            converged = True
            break
    if not converged:
        log.debug("snapshot seed=%d: no fixed point after %d rounds", seed, MAX_ROUNDS)

    with np.errstate(divide="ignore"):
        i_dbm = 10.0 * np.log10(i_rb.mean(axis=1))
    return SnapshotResult(
        ue_ids=gains.ue_ids.copy(),
        dl_cell=assoc.dl_cell,
        ul_cell=assoc.ul_cell,
        ul_is_pico=cell_is_pico[serving],
        throughput=throughput,
        outage=outage,
        rb_count=rb_count,
        sinr_db=sinr,
        tx_power=tx,
        cell_ids=cell_ids,
        cell_is_pico=cell_is_pico,
        ul_load=np.bincount(serving, minlength=n_cells),
        dl_load=np.bincount(np.searchsorted(cell_ids, assoc.dl_cell), minlength=n_cells),
        interference_dbm=i_dbm,
        level_history=history,
        rounds=len(history),
        converged=converged,
    )


@dataclass(frozen=True)
class CampaignMetrics:
    p5: float
    p50: float
    p90: float
    p98: float
    outage_macro: float
    outage_pico: float
    mean_ues_macro: float
    mean_ues_pico: float
    decoupled_fraction: float
    snapshots: int
    active_picos: int

    @property
    def percentiles(self) -> tuple[float, float, float, float]:
        return (self.p5, self.p50, self.p90, self.p98)


def _ratio(num: float, den: float) -> float:
    return float(num) / float(den) if den else 0.0


def aggregate(results: Sequence[SnapshotResult], active_picos: int | None = None) -> CampaignMetrics:
    """Pool per-UE samples over snapshots; independent of result order."""
    if not results:
        raise ValueError("need at least one snapshot")
    tput = np.sort(np.concatenate([r.throughput for r in results]))
    if tput.size:
        pct = [float(v) for v in np.percentile(tput, PERCENTILES)]
    else:
        pct = [0.0] * len(PERCENTILES)
    outage = np.concatenate([r.outage for r in results])
    pico = np.concatenate([r.ul_is_pico for r in results])
    n_snap = len(results)
    first = results[0]
    n_macro = int(np.count_nonzero(~first.cell_is_pico))
    n_pico = int(np.count_nonzero(first.cell_is_pico))
    ues_macro = sum(int(r.ul_load[~r.cell_is_pico].sum()) for r in results)
    ues_pico = sum(int(r.ul_load[r.cell_is_pico].sum()) for r in results)
    return CampaignMetrics(
        p5=pct[0],
        p50=pct[1],
        p90=pct[2],
        p98=pct[3],
        outage_macro=_ratio(np.count_nonzero(outage & ~pico), np.count_nonzero(~pico)),
        outage_pico=_ratio(np.count_nonzero(outage & pico), np.count_nonzero(pico)),
        mean_ues_macro=_ratio(ues_macro, n_macro * n_snap),
        mean_ues_pico=_ratio(ues_pico, n_pico * n_snap),
        decoupled_fraction=_ratio(sum(r.decoupled for r in results), outage.size),
        snapshots=n_snap,
        active_picos=n_pico if active_picos is None else active_picos,
    )


def _snapshot_job(args):
    s, policy, seed = args
    return run_snapshot(s, policy, seed)


def run_snapshots(
    s: Scenario, policy: AssociationPolicy, n_snapshots: int, master_seed: int, workers: int = 1
) -> list[SnapshotResult]:
    if n_snapshots < 1:
        raise ValueError("n_snapshots must be >= 1")
    jobs = [(s, policy, snapshot_seed(master_seed, i)) for i in range(n_snapshots)]
    if workers <= 1:
        return [_snapshot_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_snapshot_job, jobs, chunksize=max(1, n_snapshots // (4 * workers))))


def run_campaign(
    s: Scenario, policy: AssociationPolicy, n_snapshots: int, master_seed: int, workers: int = 1
) -> CampaignMetrics:
    return aggregate(run_snapshots(s, policy, n_snapshots, master_seed, workers))


def sweep_pico_activation(
    s: Scenario,
    policy: AssociationPolicy,
    order: Sequence[int] | None,
    n_snapshots: int,
    master_seed: int,
    workers: int = 1,
) -> list[tuple[int, CampaignMetrics]]:
    """Campaign for every prefix of ``order``; all prefixes share snapshot seeds."""
    order = [c.id for c in s.picos] if order is None else list(order)
    if set(order) != {c.id for c in s.picos}:
        raise ValueError("activation order must list every pico cell exactly once")
    out = []
    for k in range(len(order) + 1):
        sk = activate_cells(s, k, order)
        out.append((k, run_campaign(sk, policy, n_snapshots, master_seed, workers)))
    return out


@dataclass(frozen=True, eq=False)
class CoverageRaster:
    """UL serving layer per pixel; row 0 is the southern edge."""

    origin_x: float
    origin_y: float
    pixel: float
    ul_cell: np.ndarray
    is_pico: np.ndarray

    @property
    def pico_fraction(self) -> float:
        return float(np.count_nonzero(self.is_pico)) / self.is_pico.size

    @property
    def macro_fraction(self) -> float:
        return 1.0 - self.pico_fraction


def coverage_raster(s: Scenario, policy: AssociationPolicy, pixel: float = 10.0) -> CoverageRaster:
    """Probe-UE UL association at every pixel center, without shadowing."""
    if pixel <= 0:
        raise ValueError("pixel must be positive")
    a = s.area
    nx = max(1, math.ceil(a.width / pixel - 1e-9))
    ny = max(1, math.ceil(a.height / pixel - 1e-9))
    xc = a.x_min + (np.arange(nx) + 0.5) * pixel
    yc = a.y_min + (np.arange(ny) + 0.5) * pixel
    X, Y = np.meshgrid(np.minimum(xc, a.x_max), np.minimum(yc, a.y_max))
    probes = [
        Ue(i, float(x), float(y), max_tx_power=s.ue_max_power, antenna_gain=s.ue_antenna_gain)
        for i, (x, y) in enumerate(zip(X.ravel(), Y.ravel()))
    ]
    cells = s.active_cells
    gains = build_gain_matrix(s, probes, scenario_provider(s), seed=0, sigma=0.0)
    assoc = associate(gains, cells, policy, s.ul_metric)
    pico_ids = np.array([c.id for c in cells if c.is_pico], dtype=int)
    ul = assoc.ul_cell.reshape(ny, nx)
    return CoverageRaster(a.x_min, a.y_min, pixel, ul, np.isin(ul, pico_ids))


# -- output files ------------------------------------------------------------

CSV_HEADER = (
    "policy,active_picos,snapshots,p5_bps,p50_bps,p90_bps,p98_bps,"
    "outage_macro,outage_pico,mean_ues_macro,mean_ues_pico,decoupled_frac"
)


def metrics_row(label: str, m: CampaignMetrics) -> str:
    return ",".join(
        [
            label,
            str(m.active_picos),
            str(m.snapshots),
            *(str(int(round(v))) for v in m.percentiles),
            f"{m.outage_macro:.4f}",
            f"{m.outage_pico:.4f}",
            f"{m.mean_ues_macro:.4f}",
            f"{m.mean_ues_pico:.4f}",
            f"{m.decoupled_fraction:.4f}",
        ]
    )


def metrics_csv(rows: Sequence[tuple[str, CampaignMetrics]]) -> str:
    return "\n".join([CSV_HEADER, *(metrics_row(lbl, m) for lbl, m in rows)]) + "\n"


def coverage_pgm(cov: CoverageRaster) -> str:
    """Plain PGM, north up: 0 = macro, 255 = pico."""
    h, w = cov.is_pico.shape
    lines = ["P2", f"{w} {h}", "255"]
    for row in cov.is_pico[::-1]:
        lines.append(" ".join("255" if v else "0" for v in row))
    return "\n".join(lines) + "\n"
