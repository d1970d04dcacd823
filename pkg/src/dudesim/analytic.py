"""Two-cell macro/small-cell model with closed-form rates.

The small cell (Scell) sits at x = 0 and the macro (Mcell) at
x = separation. Quantities in dBm are converted to linear milliwatts and
pathloss is ``d**alpha`` with no reference loss.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

PL = "PL"
RP = "RP"

ROLES = ("ue1_s", "ue1_m", "ue2_s", "ue2_m", "ue3_s", "ue3_m", "isd")
CASE2_DISTANCES = (10.0, 25.0, 80.0, 100.0)


class NoDecouplingRegion(ValueError):
    pass


def dbm_to_mw(p):
    return 10.0 ** (np.asarray(p, dtype=float) / 10.0)


@dataclass(frozen=True)
class AnalyticParams:
    p_ue: float = 20.0
    noise: float = 0.0
    p_macro: float = 46.0
    p_small: float = 23.0
    alpha_macro: float = 4.0
    alpha_small: float = 3.6
    separation: float = 100.0
    bw: float = 1.0

    def __post_init__(self):
        if self.separation <= 0:
            raise ValueError("separation must be positive")
        if self.alpha_macro <= 0 or self.alpha_small <= 0:
            raise ValueError("pathloss exponents must be positive")


def _pl_small(p: AnalyticParams, x):
    return 10.0 * p.alpha_small * np.log10(x)


def _pl_macro(p: AnalyticParams, x):
    return 10.0 * p.alpha_macro * np.log10(p.separation - x)


def serving_is_small(p: AnalyticParams, x, mode: str):
    """True where the Scell serves a UE at ``x``; ties go to the Scell."""
    x = np.asarray(x, dtype=float)
    if mode == RP:
        return p.p_small - _pl_small(p, x) >= p.p_macro - _pl_macro(p, x)
    if mode == PL:
        return _pl_small(p, x) <= _pl_macro(p, x)
    raise ValueError(f"mode must be {PL!r} or {RP!r}")


def rate_vs_position(p: AnalyticParams, x, mode: str):
    """Noise-limited UL rate of a UE at ``x`` on the Scell-Mcell axis."""
    x = np.asarray(x, dtype=float)
    if np.any((x <= 0) | (x >= p.separation)):
        raise ValueError("x must lie strictly between the two cells")
    small = serving_is_small(p, x, mode)
    d = np.where(small, x, p.separation - x)
    alpha = np.where(small, p.alpha_small, p.alpha_macro)
    snr = dbm_to_mw(p.p_ue) / (dbm_to_mw(p.noise) * d**alpha)
    r = p.bw * np.log2(1.0 + snr)
    return float(r) if r.ndim == 0 else r


def _bisect(f, lo: float, hi: float, rtol: float = 1e-10) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoDecouplingRegion("no decoupling region: no sign change in search interval")
    for _ in range(200):
        if hi - lo <= rtol * abs(0.5 * (lo + hi)):
            break
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cell_borders(p: AnalyticParams) -> tuple[float, float]:
    """(DL border, UL border) as distances from the Scell."""
    lo, hi = p.separation * 1e-9, p.separation * (1 - 1e-9)

    def rsrp_diff(x):
        return (p.p_small - _pl_small(p, x)) - (p.p_macro - _pl_macro(p, x))

    def pl_diff(x):
        return _pl_macro(p, x) - _pl_small(p, x)

    dl = _bisect(rsrp_diff, lo, hi)
    ul = _bisect(pl_diff, lo, hi)
    if dl > ul * (1 + 1e-9):
        raise NoDecouplingRegion("no decoupling region: Scell EIRP exceeds Mcell EIRP")
    return dl, ul


# -- three-UE interference-limited case ------------------------------------


@dataclass(frozen=True)
class RateBreakdown:
    r_m: float
    r_s: float

    @property
    def r_t(self) -> float:
        return self.r_m + self.r_s


@dataclass(frozen=True)
class ThreeUeGeometry:
    """Four distances and the role each one plays.

    Roles: ``ueK_s`` / ``ueK_m`` is the distance of UE K to the Scell /
    Mcell, ``isd`` the inter-site distance. A UE with one known distance
    sits on the axis between the cells; with both it is placed by
    triangulation, off the axis when the triangle is non-degenerate.
    """

    distances: tuple[float, float, float, float] = CASE2_DISTANCES
    labels: tuple[str, str, str, str] = ("ue1_s", "ue2_s", "ue3_s", "isd")

    def __post_init__(self):
        if len(self.distances) != 4 or len(self.labels) != 4:
            raise ValueError("need exactly four distances and four labels")
        if any(d <= 0 for d in self.distances):
            raise ValueError("distances must be positive")
        if len(set(self.labels)) != 4 or not set(self.labels) <= set(ROLES):
            raise ValueError(f"labels must be four distinct roles from {ROLES}")

    def is_collinear(self, separation: float) -> bool:
        return all(abs(y) < 1e-9 for _, y in self.positions(separation)[1])

    def positions(self, separation: float):
        """((Mcell x), [UE1, UE2, UE3] positions) or raise ValueError."""
        known = dict(zip(self.labels, self.distances))
        D = known.get("isd", separation)
        ues = []
        for k in (1, 2, 3):
            s, m = known.get(f"ue{k}_s"), known.get(f"ue{k}_m")
            if s is None and m is None:
                raise ValueError(f"UE{k} position undetermined")
            if s is not None and m is not None:
                if abs(s + m - D) <= 1e-9 * D:
                    ues.append((s, 0.0))
                    continue
                if not (abs(s - m) < D < s + m):
                    raise ValueError(f"UE{k}: distances violate the triangle inequality")
                x = (s * s - m * m + D * D) / (2 * D)
                ues.append((x, math.sqrt(s * s - x * x)))
                continue
            x = s if s is not None else D - m
            if not 0 < x < D:
                raise ValueError(f"UE{k} not between the cells")
            ues.append((x, 0.0))
        return D, ues


@dataclass(frozen=True)
class InterferenceModel:
    combine: str = "sum"  # "sum" of cross-cell UEs or single "dominant" interferer
    band_share: bool = True  # co-cell UEs split the band equally

    def __post_init__(self):
        if self.combine not in ("sum", "dominant"):
            raise ValueError("combine must be 'sum' or 'dominant'")


def _raw_rates(p: AnalyticParams, g: ThreeUeGeometry, mode: str, model: InterferenceModel, p_int: float):
    D, ues = g.positions(p.separation)
    cells = {"S": (0.0, 0.0), "M": (D, 0.0)}
    alpha = {"S": p.alpha_small, "M": p.alpha_macro}
    serving = ["S", "S" if mode == PL else "M", "M"]
    if mode not in (PL, RP):
        raise ValueError(f"mode must be {PL!r} or {RP!r}")
    p_sig = float(dbm_to_mw(p.p_ue))
    p_i = float(dbm_to_mw(p_int))
    if p_i <= 0:
        raise ValueError("SIR undefined: interfering UEs transmit zero power")
    out = {"S": 0.0, "M": 0.0}
    for k, c in enumerate(serving):
        cx, cy = cells[c]
        d_sig = math.hypot(ues[k][0] - cx, ues[k][1] - cy)
        terms = [
            p_i * math.hypot(ues[v][0] - cx, ues[v][1] - cy) ** -alpha[c]
            for v in range(3)
            if serving[v] != c
        ]
        interference = sum(terms) if model.combine == "sum" else max(terms)
        sir = p_sig * d_sig ** -alpha[c] / interference
        share = serving.count(c) if model.band_share else 1
        out[c] += p.bw / share * math.log2(1.0 + sir)
    return out["M"], out["S"]


def three_ue_total_rate(
    p: AnalyticParams | None = None,
    g: ThreeUeGeometry | None = None,
    mode: str = PL,
    model: InterferenceModel | None = None,
    interferer_power: float | None = None,
) -> RateBreakdown:
    """Cell rates normalized so that the PL-mode total equals 1.

    Geometry and interference model default to the recovered fixture.
    ``interferer_power`` (dBm) defaults to ``p.p_ue``.
    """
    p = p or AnalyticParams()
    if g is None or model is None:
        fx = load_fixture()
        g = g or fx.geometry
        model = model or fx.model
    p_int = p.p_ue if interferer_power is None else interferer_power
    norm = sum(_raw_rates(p, g, PL, model, p_int))
    r_m, r_s = _raw_rates(p, g, mode, model, p_int)
    return RateBreakdown(r_m / norm, r_s / norm)


# -- recovering the labelling -----------------------------------------------

CASE2_TARGETS = (RateBreakdown(0.46, 0.54), RateBreakdown(0.34, 0.33))


@dataclass(frozen=True)
class Candidate:
    geometry: ThreeUeGeometry
    model: InterferenceModel
    pl: RateBreakdown
    rp: RateBreakdown
    residual: float

    @property
    def ratio(self) -> float:
        return self.pl.r_t / self.rp.r_t


def _residual(pl: RateBreakdown, rp: RateBreakdown, targets) -> float:
    t_pl, t_rp = targets
    return max(
        abs(pl.r_m - t_pl.r_m), abs(pl.r_s - t_pl.r_s), abs(rp.r_m - t_rp.r_m), abs(rp.r_s - t_rp.r_s)
    )


def enumerate_candidates(
    targets=CASE2_TARGETS,
    p: AnalyticParams | None = None,
    distances: Sequence[float] = CASE2_DISTANCES,
) -> Iterator[Candidate]:
    """Every geometrically valid labelling crossed with every interference model."""
    p = p or AnalyticParams()
    models = [InterferenceModel(c, s) for c in ("sum", "dominant") for s in (True, False)]
    for labels in itertools.permutations(ROLES, 4):
        g = ThreeUeGeometry(tuple(distances), labels)
        try:
            g.positions(p.separation)
        except ValueError:
            continue
        for m in models:
            pl = three_ue_total_rate(p, g, PL, m)
            rp = three_ue_total_rate(p, g, RP, m)
            yield Candidate(g, m, pl, rp, _residual(pl, rp, targets))


def recover_geometry(
    targets=CASE2_TARGETS,
    p: AnalyticParams | None = None,
    distances: Sequence[float] = CASE2_DISTANCES,
) -> Candidate:
    """Candidate minimizing the max abs error against ``targets`` (first wins on ties)."""
    best = None
    for c in enumerate_candidates(targets, p, distances):
        if best is None or c.residual < best.residual:
            best = c
    if best is None:
        raise ValueError("no valid geometry for these distances")
    return best


# -- fixture file --------------------------------------------------------------

FIXTURE_NAME = "geom_case2.txt"


def dumps_fixture(c: Candidate) -> str:
    g, m = c.geometry, c.model
    return "\n".join(
        [
            "GEOM v1",
            "distances " + " ".join(f"{d:g}" for d in g.distances),
            "labels " + " ".join(g.labels),
            f"interference {m.combine}",
            f"band_share {'equal' if m.band_share else 'none'}",
            f"residual {c.residual:.6f}",
        ]
    ) + "\n"


def loads_fixture(text: str, p: AnalyticParams | None = None) -> Candidate:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ["GEOM", "v1"]:
        raise ValueError("not a GEOM v1 file")
    fields = {ln[0]: ln[1:] for ln in lines[1:]}
    try:
        g = ThreeUeGeometry(tuple(float(v) for v in fields["distances"]), tuple(fields["labels"]))
        m = InterferenceModel(fields["interference"][0], fields["band_share"][0] == "equal")
    except KeyError as e:
        raise ValueError(f"GEOM file missing field {e}") from None
    p = p or AnalyticParams()
    pl = three_ue_total_rate(p, g, PL, m)
    rp = three_ue_total_rate(p, g, RP, m)
    return Candidate(g, m, pl, rp, _residual(pl, rp, CASE2_TARGETS))


def fixture_path() -> Path:
    return Path(str(resources.files("dudesim") / "data" / FIXTURE_NAME))


def load_fixture(path: str | Path | None = None) -> Candidate:
    path = Path(path) if path is not None else fixture_path()
    return loads_fixture(path.read_text(encoding="utf-8"))


def write_fixture(c: Candidate, path: str | Path | None = None) -> Path:
    path = Path(path) if path is not None else fixture_path()
    path.write_text(dumps_fixture(c), encoding="utf-8")
    return path
