"""Command-line front end.

    dudesim simplified --case 1|2 [--out DIR]
    dudesim run      --scenario S [--case C | --policy P] --snapshots N --seed N
    dudesim sweep    --scenario S [--case C | --policy P] --snapshots N --seed N
    dudesim coverage --scenario S [--pixel M]

Exit codes: 0 success, 1 validation or I/O error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analytic, engine, presets
from .association import parse_policy
from .scenario import Scenario, ScenarioError, load_scenario

log = logging.getLogger("dudesim")


def _load(name: str) -> Scenario:
    if name in presets.SCENARIOS:
        return presets.SCENARIOS[name]()
    return load_scenario(name)


def _experiments(args) -> list[tuple[str, Scenario, object]]:
    """(label, scenario, policy) triples selected by --case/--policy/--pico-power."""
    base = _load(args.scenario)
    if args.rmin is not None or args.rmax is not None:
        base = base.with_demand(args.rmin, args.rmax)
    if args.policy is not None:
        runs = [(args.policy, base, parse_policy(args.policy))]
    elif args.case is not None:
        s, pol = presets.apply_case(base, args.case)
        runs = [(args.case, s, pol)]
    else:
        runs = [(case, *presets.apply_case(base, case)) for case in presets.CASES]
    if args.pico_power is not None:
        runs = [(lbl, s.with_pico_power(args.pico_power), pol) for lbl, s, pol in runs]
    return runs


def _emit(text: str, out: Path | None, name: str) -> None:
    sys.stdout.write(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text, encoding="utf-8")


def cmd_simplified(args) -> int:
    p = analytic.AnalyticParams()
    if args.case == 1:
        dl, ul = analytic.cell_borders(p)
        x = np.arange(1, 2 * int(p.separation)) * 0.5
        pl = analytic.rate_vs_position(p, x, analytic.PL)
        rp = analytic.rate_vs_position(p, x, analytic.RP)
        top = max(pl.max(), rp.max())
        lines = ["x,rate_pl,rate_rp,norm_pl,norm_rp"]
        lines += [f"{a:.1f},{b:.6e},{c:.6e},{b / top:.6f},{c / top:.6f}" for a, b, c in zip(x, pl, rp)]
        _emit("\n".join(lines) + "\n", args.out, "case1_rates.csv")
        _emit(f"dl_border={dl:.4f}\nul_border={ul:.4f}\n", args.out, "case1_borders.txt")
        return 0

    path = Path(args.fixture) if args.fixture else analytic.fixture_path()
    if path.exists():
        cand = analytic.load_fixture(path)
    else:
        log.info("no geometry fixture at %s; running the search", path)
        cand = analytic.recover_geometry(p=p)
        analytic.write_fixture(cand, path)
    pl, rp = cand.pl, cand.rp
    table = [
        "mode,r_m,r_s,r_t",
        f"PL,{pl.r_m:.4f},{pl.r_s:.4f},{pl.r_t:.4f}",
        f"RP,{rp.r_m:.4f},{rp.r_s:.4f},{rp.r_t:.4f}",
    ]
    _emit("\n".join(table) + "\n", args.out, "case2_rates.csv")
    sys.stdout.write(
        f"ratio={cand.ratio:.4f} residual={cand.residual:.4f} "
        f"labels={' '.join(cand.geometry.labels)} interference={cand.model.combine} "
        f"band_share={'equal' if cand.model.band_share else 'none'}\n"
    )
    return 0


def cmd_run(args) -> int:
    rows = []
    for label, s, pol in _experiments(args):
        m = engine.run_campaign(s, pol, args.snapshots, args.seed, args.workers)
        rows.append((label, m))
    _emit(engine.metrics_csv(rows), args.out, "metrics.csv")
    return 0


def cmd_sweep(args) -> int:
    rows = []
    for label, s, pol in _experiments(args):
        for _, m in engine.sweep_pico_activation(s, pol, None, args.snapshots, args.seed, args.workers):
            rows.append((label, m))
    _emit(engine.metrics_csv(rows), args.out, "sweep.csv")
    return 0


def cmd_coverage(args) -> int:
    for label, s, pol in _experiments(args):
        cov = engine.coverage_raster(s, pol, args.pixel)
        sys.stdout.write(f"{label}: pico_fraction={cov.pico_fraction:.4f}\n")
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"coverage_{label}.pgm").write_text(engine.coverage_pgm(cov), encoding="utf-8")
            (args.out / f"coverage_{label}.txt").write_text(
                f"pico_fraction={cov.pico_fraction:.4f}\n", encoding="utf-8"
            )
    return 0


def _policy_arg(text: str) -> str:
    try:
        parse_policy(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    return text


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dudesim", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    simp = sub.add_parser("simplified", help="two-cell analytic model")
    simp.add_argument("--case", type=int, choices=(1, 2), required=True)
    simp.add_argument("--fixture", help="GEOM v1 file (default: bundled)")
    simp.add_argument("--out", type=Path)
    simp.set_defaults(func=cmd_simplified)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="testbed-mini", help="preset name or config path")
    sel = common.add_mutually_exclusive_group()
    sel.add_argument("--case", choices=tuple(presets.CASES))
    sel.add_argument("--policy", type=_policy_arg, help="coupled, dude or re:<offset_db>")
    common.add_argument("--pico-power", type=float, dest="pico_power")
    common.add_argument("--rmin", type=float)
    common.add_argument("--rmax", type=float)
    common.add_argument("--out", type=Path)

    campaign = argparse.ArgumentParser(add_help=False)
    campaign.add_argument("--snapshots", type=_positive_int, default=20)
    campaign.add_argument("--seed", type=int, required=True)
    campaign.add_argument("--workers", type=_positive_int, default=1)

    run = sub.add_parser("run", parents=[common, campaign], help="one campaign per case")
    run.set_defaults(func=cmd_run)
    sweep = sub.add_parser("sweep", parents=[common, campaign], help="pico activation sweep")
    sweep.set_defaults(func=cmd_sweep)
    cov = sub.add_parser("coverage", parents=[common], help="UL coverage rasters")
    cov.add_argument("--pixel", type=float, default=10.0)
    cov.set_defaults(func=cmd_coverage)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("DUDESIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (ScenarioError, ValueError) as e:
        print(f"dudesim: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"dudesim: I/O error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
