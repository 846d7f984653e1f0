"""End-to-end study pipeline: synthesis, capability, scheduling, valuation.

Stage one synthesizes urban feeders with clustered domestic demand, solves
seasonal power flows, and produces the fast-response capability profile
plus converter ratings, scaled to the national population. Stage two rolls
the frequency-constrained commitment over the study period once per
capability fraction. Everything derives from one master seed and writes
diff-friendly CSV artifacts with a hashed manifest.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import StudyConfig, load_config
from .demand import synth_household, aggregate_cdc
from .efr import (
    EfrProfile,
    PecRating,
    build_profile,
    pec_rating,
    rating_table,
    scale_to_gb,
)
from .grid import OFF_LOAD, CdcProfile, FeederNetwork, validate_system
from .powerflow import TapState, regulate_feeder, seasonal_tap
from .scenarios import CommittedStep, RollingState, build_tree, roll_horizon
from .suc import fleet_inertia_range, linearize_nadir, schedule_step
from .valuation import ValuationReport, build_report, pvc_envelope

SEASON_MONTH = {"winter": 1, "spring": 4, "summer": 7, "autumn": 10}


class StudyError(RuntimeError):
    """Pipeline failure with stage attribution for the manifest."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RegionFixture:
    network: FeederNetwork
    profiles: dict[str, tuple[CdcProfile, ...]]  # season -> one profile per CDC
    households: tuple[int, ...]


@dataclass(frozen=True)
class StageOneResult:
    regional: EfrProfile
    national: EfrProfile
    rating: PecRating
    pvc_base_mw: np.ndarray  # study scale, one value per profiled timestep
    pvc_min_mw: np.ndarray
    pvc_max_mw: np.ndarray
    efr_cap_mw: np.ndarray  # study scale
    n_p: np.ndarray  # consumption-weighted exponent per timestep
    fixtures: tuple[RegionFixture, ...]

    @property
    def block_scale(self) -> float:
        return float(self.pvc_base_mw.max())


def _seasonal_taps(network: FeederNetwork, season: str) -> TapState:
    """Nominal taps with every off-load transformer at its seasonal boost."""
    taps = TapState.nominal(network)
    offset = seasonal_tap(season)
    for tr in network.transformers:
        if tr.mode == OFF_LOAD:
            taps = taps.with_tap(tr.name, 1.0 + offset)
    return taps


def synthesize_region(cfg: StudyConfig) -> tuple[RegionFixture, ...]:
    """Build the feeder fixtures and their per-season clustered demand.

    Structure (feeder layout, household counts, occupancy) is drawn once
    from the master seed; each household-day then gets its own stream, so
    iteration order is fixed and worker counts cannot perturb anything.
    """
    from .grid import synthesize_feeder

    net_seeds = np.random.SeedSequence([cfg.seed, 0x6E75]).generate_state(
        cfg.network.feeders
    )
    struct = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xCDC5]))
    syn = cfg.synthesis
    fixtures = []
    for f in range(cfg.network.feeders):
        network = synthesize_feeder(
            cfg.network.cdcs_per_feeder,
            seed=int(net_seeds[f]),
            base_mva=cfg.network.base_mva,
            cdcs_per_lateral=cfg.network.cdcs_per_lateral,
            heavy_tail=cfg.network.heavy_tail,
        )
        counts = tuple(
            int(
                struct.integers(
                    syn.households_per_cdc_min, syn.households_per_cdc_max + 1
                )
            )
            for _ in network.cdc_ids()
        )
        occupants = tuple(
            tuple(int(struct.integers(1, 5)) for _ in range(n)) for n in counts
        )
        house_seeds = {
            season: np.random.SeedSequence(
                [cfg.seed, 0x11AB, f, SEASON_MONTH[season]]
            ).generate_state(sum(counts))
            for season in cfg.seasons
        }
        per_season: dict[str, tuple[CdcProfile, ...]] = {}
        for season in cfg.seasons:
            month = SEASON_MONTH[season]
            seeds = house_seeds[season]
            cursor = 0
            cdc_profiles = []
            for cdc_id, n_hh in zip(network.cdc_ids(), counts):
                homes = [
                    synth_household(
                        int(seeds[cursor + i]),
                        occupants=occupants[len(cdc_profiles)][i],
                        day="wed",
                        month=month,
                        catalog=cfg.catalog,
                        steps_per_day=syn.steps_per_day,
                    )
                    for i in range(n_hh)
                ]
                cursor += n_hh
                cdc_profiles.append(aggregate_cdc(homes, cdc_id=cdc_id, households=n_hh))
            per_season[season] = tuple(cdc_profiles)
        fixtures.append(
            RegionFixture(network=network, profiles=per_season, households=counts)
        )
    return tuple(fixtures)


def _rate_converters(
    cfg: StudyConfig, fixtures: Sequence[RegionFixture], season: str
) -> PecRating:
    """Size each cluster's converter at its worst boosted operating hour."""
    syn = cfg.synthesis
    fully = cfg.mode == "fully-controllable"
    entries = []
    for fx in fixtures:
        taps = _seasonal_taps(fx.network, season)
        profiles = fx.profiles[season]
        best = {p.cdc_id: None for p in profiles}
        for t in range(profiles[0].steps):
            taps, baseline = regulate_feeder(
                fx.network, profiles, t, taps=taps, loss_fraction=syn.pec_loss_fraction
            )
            for prof in profiles:
                v_b = max(baseline.v[prof.cdc_id], syn.v_min)
                entry = pec_rating(
                    prof.cdc_id,
                    float(prof.p_kw[t]),
                    float(prof.q_kvar[t]),
                    float(prof.n_p[t]),
                    float(prof.n_q[t]),
                    v_b,
                    v_min=syn.v_min,
                    v_max=syn.v_max,
                    fully_controllable=fully,
                )
                cur = best[prof.cdc_id]
                if cur is None or entry.s_c_kva > cur.s_c_kva:
                    best[prof.cdc_id] = entry
        entries.extend(best[p.cdc_id] for p in profiles)
    replication = syn.scale_factor * syn.urban_correction * cfg.system_scale
    return rating_table(entries, syn, replication=replication)


def stage_one(cfg: StudyConfig) -> StageOneResult:
    """Capability stage: synthesis, seasonal power flows, national scaling."""
    fixtures = synthesize_region(cfg)
    for fx in fixtures:
        report = validate_system(fx.network, fx.profiles[cfg.seasons[0]], cfg.synthesis)
        if not report.ok:
            raise ValueError(f"synthesized fixture invalid: {report.issues}")

    steps = cfg.synthesis.steps_per_day
    pvc, vcs, delta = [], [], []
    labels: list[str] = []
    block_kw = np.zeros(steps * len(cfg.seasons))
    np_weighted = np.zeros_like(block_kw)
    nq_weighted = np.zeros_like(block_kw)
    for si, season in enumerate(cfg.seasons):
        season_pvc = np.zeros(steps)
        season_vcs = np.zeros(steps)
        for fx in fixtures:
            profiles = fx.profiles[season]
            prof = build_profile(
                fx.network,
                profiles,
                timesteps=range(steps),
                seasons=[season] * steps,
                taps=_seasonal_taps(fx.network, season),
                loss_fraction=cfg.synthesis.pec_loss_fraction,
                v_min=cfg.synthesis.v_min,
            )
            season_pvc += prof.pvc_mw
            season_vcs += prof.vcs_mw
            sl = slice(si * steps, (si + 1) * steps)
            for p in profiles:
                block_kw[sl] += p.p_kw
                np_weighted[sl] += p.p_kw * p.n_p
                nq_weighted[sl] += p.q_kvar * p.n_q
        pvc.extend(season_pvc)
        vcs.extend(season_vcs)
        delta.extend(
            100.0 * (v - p) / p if p > 0 else np.nan
            for v, p in zip(season_vcs, season_pvc)
        )
        labels.extend([season] * steps)

    regional = EfrProfile(
        pvc_mw=np.array(pvc), vcs_mw=np.array(vcs), delta_pct=np.array(delta),
        seasons=tuple(labels),
    )
    syn = cfg.synthesis
    national = scale_to_gb(regional, syn.scale_factor, syn.urban_correction)
    rating = _rate_converters(cfg, fixtures, cfg.seasons[0])

    k_mw = syn.scale_factor * syn.urban_correction * cfg.system_scale / 1000.0
    base_mw = block_kw * k_mw
    n_p = np.divide(np_weighted, block_kw, out=np.full_like(block_kw, 1.0), where=block_kw > 0)
    lo = np.array([pvc_envelope(b, e, syn.v_min, syn.v_max)[0] for b, e in zip(base_mw, n_p)])
    hi = np.array([pvc_envelope(b, e, syn.v_min, syn.v_max)[1] for b, e in zip(base_mw, n_p)])
    return StageOneResult(
        regional=regional,
        national=national,
        rating=rating,
        pvc_base_mw=base_mw,
        pvc_min_mw=lo,
        pvc_max_mw=hi,
        efr_cap_mw=national.pvc_mw * cfg.system_scale,
        n_p=n_p,
        fixtures=fixtures,
    )


def stage_two(
    cfg: StudyConfig,
    s1: StageOneResult,
    pvc_fraction: float,
    mode: Optional[str] = None,
    storage=None,
    hours: Optional[int] = None,
) -> list[CommittedStep]:
    """Roll the commitment over the period at one capability fraction."""
    mode = mode or cfg.mode
    storage = tuple(storage if storage is not None else cfg.storage)
    gens = cfg.generators
    freq = cfg.frequency
    hours = cfg.hours if hours is None else hours

    block = s1.pvc_base_mw
    demand_excl = np.array(
        [cfg.demand_mw[h % len(cfg.demand_mw)] - block[h % len(block)] for h in range(hours)]
    )
    if np.any(demand_excl < 0):
        worst = int(np.argmin(demand_excl))
        raise ValueError(
            f"voltage-controlled block exceeds total demand at hour {worst}"
        )

    cuts = linearize_nadir(
        freq, fleet_inertia_range(gens, freq), grid=cfg.nadir_grid
    )
    tp = cfg.tree

    def build(k: int):
        return build_tree(
            forecast_mw=cfg.wind_mw,
            quantiles=tp.quantiles,
            stages=tp.stages,
            horizon=tp.horizon,
            rho=tp.rho,
            sigma=tp.sigma,
            capacity_mw=cfg.wind_capacity_mw,
            start_hour=k,
            demand_mw=demand_excl,
            pvc_base_mw=block,
            pvc_min_mw=s1.pvc_min_mw,
            pvc_max_mw=s1.pvc_max_mw,
            efr_cap_mw=s1.efr_cap_mw,
        )

    def scheduler(tree, state: RollingState) -> CommittedStep:
        return schedule_step(
            tree,
            gens,
            storage,
            freq,
            cuts,
            state,
            mode=mode,
            pvc_fraction=pvc_fraction,
            gap=cfg.solver.gap,
            backend=cfg.solver.backend,
        )

    return roll_horizon(hours, build, scheduler, RollingState.initial(gens, storage))


def _csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v) + 0.0)  # plain float text, -0.0 normalized
    return str(v)


def _schedule_rows(cfg: StudyConfig, steps: Sequence[CommittedStep]):
    gens = [g.name for g in cfg.generators]
    stores = [s.name for s in cfg.storage]
    header = (
        ["hour", "objective", "root_cost", "infeasible"]
        + [f"nup_{g}" for g in gens]
        + [f"pg_{g}" for g in gens]
        + [f"dis_{s}" for s in stores]
        + [f"ch_{s}" for s in stores]
        + [f"en_{s}" for s in stores]
        + ["wind", "wc", "ls", "dump", "rg", "re", "epvc", "h", "pvc_actual", "demand_total"]
    )
    rows = []
    for s in steps:
        v = s.values
        rows.append(
            [s.hour, s.objective, s.root_cost, int(s.infeasible)]
            + [v.get(f"nup[{g}][0]", 0.0) for g in gens]
            + [v.get(f"pg[{g}][0]", 0.0) for g in gens]
            + [v.get(f"dis[{st}][0]", 0.0) for st in stores]
            + [v.get(f"ch[{st}][0]", 0.0) for st in stores]
            + [v.get(f"en[{st}][0]", 0.0) for st in stores]
            + [
                v.get("wind-available[0]", 0.0),
                v.get("wc[0]", 0.0),
                v.get("ls[0]", 0.0),
                v.get("dump[0]", 0.0),
                v.get("rg[0]", 0.0),
                v.get("re[0]", 0.0),
                v.get("epvc[0]", 0.0),
                v.get("h[0]", 0.0),
                v.get("pvc-actual[0]", 0.0),
                v.get("demand-total[0]", 0.0),
            ]
        )
    return header, rows


def run_study(
    config_path: Path | str,
    outdir: Path | str,
    seed: Optional[int] = None,
    ladder: Optional[Sequence[float]] = None,
    days: Optional[int] = None,
) -> Path:
    """Execute the full pipeline and write artifacts plus a hashed manifest."""
    from dataclasses import replace

    config_path = Path(config_path)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    cfg = load_config(config_path)
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    if ladder is not None:
        cfg = replace(cfg, ladder=tuple(float(x) for x in ladder))
    if days is not None:
        cfg = replace(cfg, days=int(days))

    manifest: list[str] = [
        f"scenario {cfg.scenario}",
        f"seed {cfg.seed}",
        f"mode {cfg.mode}",
        f"ladder {','.join(repr(f) for f in cfg.ladder)}",
        f"days {cfg.days}",
        f"gridefr {__version__}",
        f"python {sys.version_info.major}.{sys.version_info.minor}",
        f"config-sha256 {hashlib.sha256(config_path.read_bytes()).hexdigest()}",
    ]
    outputs: list[Path] = []

    def fail(stage: str, err: BaseException):
        manifest.append(f"status failed {stage}: {err}")
        (outdir / "manifest.txt").write_text("\n".join(manifest) + "\n")
        raise StudyError(stage, err) from err

    try:
        s1 = stage_one(cfg)
    except Exception as err:  # noqa: BLE001 - attribute any stage failure
        fail("capability", err)

    rows = [
        (
            t,
            s1.regional.seasons[t],
            s1.regional.pvc_mw[t],
            s1.regional.vcs_mw[t],
            s1.regional.delta_pct[t],
            s1.national.pvc_mw[t],
            s1.national.vcs_mw[t],
            s1.efr_cap_mw[t],
            s1.pvc_base_mw[t],
        )
        for t in range(len(s1.regional.pvc_mw))
    ]
    _csv(
        outdir / "efr_profile.csv",
        [
            "t",
            "season",
            "regional_pvc_mw",
            "regional_vcs_mw",
            "delta_pct",
            "national_pvc_mw",
            "national_vcs_mw",
            "study_cap_mw",
            "block_mw",
        ],
        rows,
    )
    outputs.append(outdir / "efr_profile.csv")

    _csv(
        outdir / "ratings.csv",
        ["cdc", "s_c_kva", "v_c", "i_l", "pf_prime", "rating_kva"],
        [
            (e.cdc_id, e.s_c_kva, e.v_c, e.i_l, e.pf_prime, e.rating_kva)
            for e in s1.rating.entries
        ],
    )
    outputs.append(outdir / "ratings.csv")
    _csv(
        outdir / "rating_summary.csv",
        ["total_gva", "capex_low_gbp", "capex_typical_gbp", "capex_high_gbp", "maintenance_gbp_per_year"],
        [
            (
                s1.rating.total_gva,
                s1.rating.capex_low_gbp,
                s1.rating.capex_typical_gbp,
                s1.rating.capex_high_gbp,
                s1.rating.maintenance_gbp_per_year,
            )
        ],
    )
    outputs.append(outdir / "rating_summary.csv")

    reports: list[ValuationReport] = []
    if cfg.run_suc:
        fractions = sorted(set(cfg.ladder) | {0.0})
        runs: dict[float, list[CommittedStep]] = {}
        for frac in fractions:
            try:
                runs[frac] = stage_two(cfg, s1, frac)
            except Exception as err:  # noqa: BLE001
                fail(f"scheduling[{frac}]", err)
            header, rows = _schedule_rows(cfg, runs[frac])
            name = f"schedule_{cfg.mode}_{int(round(frac * 100))}.csv"
            _csv(outdir / name, header, rows)
            outputs.append(outdir / name)

        envelope = (s1.pvc_min_mw, s1.pvc_max_mw)
        for frac in cfg.ladder:
            try:
                reports.append(
                    build_report(
                        cfg.scenario,
                        frac,
                        runs[frac],
                        runs[0.0],
                        cfg.generators,
                        cfg.frequency,
                        rating=s1.rating,
                        envelope_mw=envelope,
                    )
                )
            except Exception as err:  # noqa: BLE001
                fail(f"valuation[{frac}]", err)
        _csv(
            outdir / "valuation.csv",
            ["figure", "series", "x", "y"],
            [row for rep in reports for row in rep.rows()],
        )
        outputs.append(outdir / "valuation.csv")
        (outdir / "report.txt").write_text(
            "\n\n".join(rep.summary() for rep in reports) + "\n"
        )
        outputs.append(outdir / "report.txt")

    manifest.append("status ok")
    for p in sorted(outputs):
        manifest.append(f"file {p.name} sha256 {hashlib.sha256(p.read_bytes()).hexdigest()}")
    (outdir / "manifest.txt").write_text("\n".join(manifest) + "\n")
    return outdir
