"""Command-line entry points.

Verbs: validate, synth, efr, schedule, value, study, figures. Worker count
comes only from the GRIDEFR_WORKERS environment variable so a command line
can never make two runs of the same study diverge.
"""

from __future__ import annotations

import argparse
import csv
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import load_config, packaged_fixture
from .grid import validate_plant, validate_system
from .study import StudyError, run_study, stage_one, stage_two, synthesize_region
from .valuation import build_report


def _r(x) -> str:
    """Round-trip float text for CSV cells; numpy scalars included."""
    return repr(float(x) + 0.0)


def _config_path(value: str) -> Path:
    p = Path(value)
    if p.exists():
        return p
    try:
        return packaged_fixture(value)
    except FileNotFoundError:
        raise argparse.ArgumentTypeError(f"no config file or shipped fixture {value!r}")


def _ladder(value: str) -> tuple[float, ...]:
    return tuple(float(x) for x in value.split(","))


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", type=_config_path, help="study YAML or shipped fixture name")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--out", type=Path, default=Path("artifacts"), help="output directory")


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    issues = list(validate_plant(cfg.generators, cfg.storage, cfg.frequency).issues)
    for fx in synthesize_region(cfg):
        for season, profiles in fx.profiles.items():
            issues.extend(validate_system(fx.network, profiles, cfg.synthesis).issues)
    for issue in issues:
        print(issue)
    print(f"{len(issues)} issue(s)")
    return 1 if issues else 0


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    args.out.mkdir(parents=True, exist_ok=True)
    for i, fx in enumerate(synthesize_region(cfg)):
        for season, profiles in fx.profiles.items():
            path = args.out / f"feeder{i}_{season}_cdc.csv"
            with open(path, "w", newline="") as fh:
                fh.write("cdc,t,p_kw,q_kvar,n_p,n_q,households\n")
                for p in profiles:
                    for t in range(p.steps):
                        fh.write(
                            f"{p.cdc_id},{t},{_r(p.p_kw[t])},{_r(p.q_kvar[t])},"
                            f"{_r(p.n_p[t])},{_r(p.n_q[t])},{p.households}\n"
                        )
            print(path)
    return 0


def cmd_efr(args) -> int:
    cfg = load_config(args.config)
    s1 = stage_one(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "efr_profile.csv"
    with open(path, "w", newline="") as fh:
        fh.write("t,season,regional_pvc_mw,regional_vcs_mw,delta_pct,national_pvc_mw\n")
        for t in range(len(s1.regional.pvc_mw)):
            fh.write(
                f"{t},{s1.regional.seasons[t]},{_r(s1.regional.pvc_mw[t])},"
                f"{_r(s1.regional.vcs_mw[t])},{_r(s1.regional.delta_pct[t])},"
                f"{_r(s1.national.pvc_mw[t])}\n"
            )
    print(path)
    for season, bands in s1.national.seasonal_summary().items():
        p5, p50, p95 = bands["pvc"]
        print(f"{season}: national capability {p5:.0f} / {p50:.0f} / {p95:.0f} MW (p5/p50/p95)")
    print(f"converter stock {s1.rating.total_gva:.3f} GVA")
    return 0


def cmd_schedule(args) -> int:
    cfg = load_config(args.config)
    s1 = stage_one(cfg)
    steps = stage_two(cfg, s1, args.fraction, mode=args.mode or cfg.mode)
    total = sum(s.root_cost for s in steps)
    shed = sum(s.values.get("ls[0]", 0.0) for s in steps)
    print(f"{len(steps)} committed hours, realized cost £{total:,.0f}, shed {shed:.3f} MWh")
    return 0


def cmd_value(args) -> int:
    cfg = load_config(args.config)
    s1 = stage_one(cfg)
    base = stage_two(cfg, s1, 0.0)
    case = stage_two(cfg, s1, args.fraction, mode=args.mode or cfg.mode)
    report = build_report(
        cfg.scenario,
        args.fraction,
        case,
        base,
        cfg.generators,
        cfg.frequency,
        rating=s1.rating,
        envelope_mw=(s1.pvc_min_mw, s1.pvc_max_mw),
    )
    print(report.summary())
    return 0


def cmd_study(args) -> int:
    try:
        out = run_study(
            args.config, args.out, seed=args.seed, ladder=args.ladder, days=args.days
        )
    except StudyError as err:
        print(err, file=sys.stderr)
        return 1
    print(out / "manifest.txt")
    return 0


def _read_rows(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_figures(artifacts: Path, out: Path | None = None) -> list[Path]:
    """Turn study artifacts into plot-ready long-format (figure, series, x, y) CSVs."""
    out = out or artifacts / "figures"
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    profile = artifacts / "efr_profile.csv"
    if profile.exists():
        rows = _read_rows(profile)
        by_hour: dict[int, list[float]] = {}
        for r in rows:
            by_hour.setdefault(int(r["t"]) % 24, []).append(float(r["national_pvc_mw"]))
        path = out / "efr_envelope.csv"
        with open(path, "w", newline="") as fh:
            fh.write("figure,series,x,y\n")
            for series, q in (("lb", 5.0), ("median", 50.0), ("ub", 95.0)):
                for hour in sorted(by_hour):
                    y = float(np.percentile(by_hour[hour], q))
                    fh.write(f"efr-envelope,{series},{hour},{y!r}\n")
        written.append(path)
    else:
        warnings.warn(f"missing {profile}; EFR envelope skipped")

    valuation = artifacts / "valuation.csv"
    if valuation.exists():
        rows = _read_rows(valuation)
        split: dict[str, list[dict[str, str]]] = {}
        for r in rows:
            key = r["figure"].split("-")[0] if r["figure"].startswith("payback") else r["figure"]
            split.setdefault(key, []).append(r)
        for key, group in sorted(split.items()):
            path = out / f"{key.replace('-', '_')}.csv"
            with open(path, "w", newline="") as fh:
                fh.write("figure,series,x,y\n")
                for r in group:
                    fh.write(f"{r['figure']},{r['series']},{r['x']},{r['y']}\n")
            written.append(path)
    else:
        warnings.warn(f"missing {valuation}; cost/curtailment/CO2 figures skipped")

    schedules = sorted(artifacts.glob("schedule_*_100.csv")) or sorted(
        artifacts.glob("schedule_*.csv")
    )
    if schedules and valuation.exists():
        sched = _read_rows(schedules[-1])
        cpvc = {
            int(float(r["x"])): float(r["y"])
            for r in _read_rows(valuation)
            if r["figure"] == "c-pvc"
        }
        path = out / "c_pvc_net_demand.csv"
        with open(path, "w", newline="") as fh:
            fh.write("figure,series,x,y\n")
            for t, row in enumerate(sched):
                if t not in cpvc:
                    continue
                net = float(row["demand_total"]) - (
                    float(row["wind"]) - float(row["wc"])
                )
                fh.write(f"c-pvc-net,{schedules[-1].stem},{net!r},{cpvc[t]!r}\n")
        written.append(path)

    if not written:
        warnings.warn(f"no usable study outputs under {artifacts}")
    return written


def cmd_figures(args) -> int:
    for path in emit_figures(args.artifacts, args.out):
        print(path)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gridefr",
        description="Fast frequency response from point-of-load voltage control: "
        "capability synthesis, frequency-constrained scheduling, valuation.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("validate", help="check a study configuration and its fixtures")
    _add_common(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("synth", help="write synthesized cluster demand profiles")
    _add_common(p)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("efr", help="compute the capability profile and ratings")
    _add_common(p)
    p.set_defaults(fn=cmd_efr)

    p = sub.add_parser("schedule", help="roll the commitment at one capability fraction")
    _add_common(p)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--mode", choices=["normal", "fully-controllable"], default=None)
    p.set_defaults(fn=cmd_schedule)

    p = sub.add_parser("value", help="paired-run valuation against the zero baseline")
    _add_common(p)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--mode", choices=["normal", "fully-controllable"], default=None)
    p.set_defaults(fn=cmd_value)

    p = sub.add_parser("study", help="full pipeline with artifacts and manifest")
    _add_common(p)
    p.add_argument("--ladder", type=_ladder, default=None, help="comma-separated fractions")
    p.add_argument("--days", type=int, default=None)
    p.set_defaults(fn=cmd_study)

    p = sub.add_parser("figures", help="emit plot-ready CSVs from study artifacts")
    p.add_argument("artifacts", type=Path)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(fn=cmd_figures)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
