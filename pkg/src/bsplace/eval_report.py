"""Link-level reporting: SINR coverage curves, throughput CDFs, a synthetic
scene generator for desk-scale experiments, and the scenario harness that
writes the CSV/JSON bundles for each experiment type.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import optimizer as opt
from . import radio
from .baselines import KmeansConfig, compare_methods, save_comparison_csv
from .radio import LinkGainTable, RadioParams, build_link_table, sinr_from_rx
from .scene import CellClass, ClassRaster, Dsm, Scene


class ReportError(Exception):
    pass


class EmptyInput(ReportError):
    pass


COVERAGE_GRID_LO_DB = -20.0
COVERAGE_GRID_HI_DB = 40.0
COVERAGE_GRID_STEP_DB = 0.5


@dataclass
class CoverageCurve:
    thresholds: np.ndarray  # dB
    prob: np.ndarray  # P(SINR > threshold)

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        self.prob = np.asarray(self.prob, dtype=float)
        if self.prob.min() < 0 or self.prob.max() > 1:
            raise ReportError("coverage probabilities must lie in [0, 1]")
        if np.any(np.diff(self.prob) > 1e-12):
            raise ReportError("coverage curve must be non-increasing")


@dataclass
class ThroughputCdf:
    rates: np.ndarray  # Mbps
    cdf: np.ndarray  # P(throughput <= rate)
    outage_fraction: float  # P(throughput == 0)

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        self.cdf = np.asarray(self.cdf, dtype=float)
        if np.any(np.diff(self.cdf) < -1e-12):
            raise ReportError("CDF must be non-decreasing")
        if abs(self.cdf[-1] - 1.0) > 1e-12:
            raise ReportError("CDF must end at 1")


def coverage_curve(sinrs_db,
                   lo: float = COVERAGE_GRID_LO_DB,
                   hi: float = COVERAGE_GRID_HI_DB,
                   step: float = COVERAGE_GRID_STEP_DB) -> CoverageCurve:
    """Empirical P(SINR > t) on a fixed threshold grid."""
    s = np.asarray(sinrs_db, dtype=float)
    if s.size == 0:
        raise EmptyInput("no SINR samples")
    thresholds = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
    prob = (s[None, :] > thresholds[:, None]).mean(axis=1)
    return CoverageCurve(thresholds, prob)


def throughput_cdf(sinrs_db, attachments, params: RadioParams) -> ThroughputCdf:
    """Per-user throughput CDF under equal sector sharing.

    `attachments` gives each user's serving sector index; users on the
    same sector split its bandwidth.
    """
    s = np.asarray(sinrs_db, dtype=float)
    attach = np.asarray(attachments, dtype=int)
    if s.size == 0:
        raise EmptyInput("no SINR samples")
    if attach.shape != s.shape:
        raise ReportError("attachments must align with SINR samples")
    _, inverse, counts = np.unique(attach, return_inverse=True, return_counts=True)
    thr = radio.throughput_mbps(s, counts[inverse], params)
    top = max(float(thr.max()), params.bandwidth_mhz)
    rates = 0.5 * np.arange(int(np.ceil(top / 0.5)) + 1)
    cdf = (thr[None, :] <= rates[:, None]).mean(axis=1)
    return ThroughputCdf(rates, cdf, outage_fraction=float((thr == 0.0).mean()))


# ---------------------------------------------------------------------------
# Synthetic scenes

@dataclass
class GeneratorConfig:
    width: int = 200
    height: int = 200
    cell_size: float = 1.0
    origin: tuple[float, float] = (0.0, 0.0)
    building_density: float = 0.3
    building_size_range: tuple[int, int] = (6, 20)  # cells per side
    building_height_range: tuple[float, float] = (9.0, 30.0)
    road_period: int = 50  # cells between road centerlines
    road_width: int = 6
    terrain_gaussians: int = 4
    terrain_amp: float = 5.0
    tree_fraction: float = 0.04
    car_fraction: float = 0.01
    clutter_fraction: float = 0.02

    def __post_init__(self):
        if self.width < 10 or self.height < 10:
            raise ReportError("generator grids need at least 10x10 cells")
        if not 0.0 <= self.building_density <= 0.8:
            raise ReportError("building_density must lie in [0, 0.8]")
        if self.building_size_range[0] < 1 or self.building_size_range[0] > self.building_size_range[1]:
            raise ReportError("invalid building_size_range")
        if self.building_height_range[0] <= 0 or self.building_height_range[0] > self.building_height_range[1]:
            raise ReportError("invalid building_height_range")
        if self.road_period < 2 or not 0 < self.road_width < self.road_period:
            raise ReportError("roads must be narrower than their period")


def generate_synthetic_scene(cfg: GeneratorConfig, seed: int) -> tuple[ClassRaster, Dsm]:
    """Random town block: smooth terrain, a road grid, rectangular buildings.

    Buildings land only off the roads and stop once the requested density
    is reached, so the Building cell fraction tracks `building_density`
    (overshoot bounded by one building footprint). Deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    h, w = cfg.height, cfg.width

    yy, xx = np.mgrid[0:h, 0:w]
    terrain = np.zeros((h, w))
    for _ in range(cfg.terrain_gaussians):
        cx = rng.uniform(0, w)
        cy = rng.uniform(0, h)
        sigma = rng.uniform(min(w, h) / 8.0, min(w, h) / 3.0)
        amp = rng.uniform(0.0, cfg.terrain_amp)
        terrain += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma ** 2))

    classes = np.full((h, w), int(CellClass.LOW_VEGETATION), dtype=np.int16)
    road = np.zeros((h, w), dtype=bool)
    half = cfg.road_width // 2
    for c in range(cfg.road_period // 2, w, cfg.road_period):
        road[:, max(0, c - half):c + half + 1] = True
    for c in range(cfg.road_period // 2, h, cfg.road_period):
        road[max(0, c - half):c + half + 1, :] = True
    classes[road] = int(CellClass.IMPERVIOUS_SURFACE)

    heights = np.zeros((h, w))
    building = np.zeros((h, w), dtype=bool)
    target_cells = cfg.building_density * w * h
    attempts = 0
    max_attempts = 200 * max(1, int(target_cells / max(1, cfg.building_size_range[0] ** 2)))
    while building.sum() < target_cells and attempts < max_attempts:
        attempts += 1
        bw = int(rng.integers(cfg.building_size_range[0], cfg.building_size_range[1] + 1))
        bh = int(rng.integers(cfg.building_size_range[0], cfg.building_size_range[1] + 1))
        x0 = int(rng.integers(0, max(1, w - bw)))
        y0 = int(rng.integers(0, max(1, h - bh)))
        patch = np.s_[y0:y0 + bh, x0:x0 + bw]
        if road[patch].any() or building[patch].any():
            continue
        building[patch] = True
        heights[patch] = rng.uniform(*cfg.building_height_range)
    classes[building] = int(CellClass.BUILDING)

    # sprinkle the remaining off-road, off-building classes
    free = ~road & ~building
    noise = rng.random((h, w))
    tree = free & (noise < cfg.tree_fraction)
    car = free & ~tree & (noise < cfg.tree_fraction + cfg.car_fraction)
    clutter = free & ~tree & ~car & (
        noise < cfg.tree_fraction + cfg.car_fraction + cfg.clutter_fraction
    )
    classes[tree] = int(CellClass.TREE)
    classes[car] = int(CellClass.CAR)
    classes[clutter] = int(CellClass.CLUTTER)

    elevation = terrain + heights
    raster = ClassRaster(w, h, cfg.cell_size, cfg.origin, classes)
    dsm = Dsm(w, h, cfg.cell_size, cfg.origin, elevation)
    return raster, dsm


# ---------------------------------------------------------------------------
# CSV / gnuplot emission

def save_coverage_csv(curve: CoverageCurve, path):
    with open(path, "w") as f:
        f.write("threshold_db,prob\n")
        for t, p in zip(curve.thresholds, curve.prob):
            f.write(f"{float(t)!r},{float(p)!r}\n")


def save_throughput_csv(cdf: ThroughputCdf, path):
    with open(path, "w") as f:
        f.write("mbps,cdf\n")
        for r, p in zip(cdf.rates, cdf.cdf):
            f.write(f"{float(r)!r},{float(p)!r}\n")


def save_placement_csv(scene: Scene, bs_positions, path):
    """One row per map element; priority column is set for users only."""
    with open(path, "w") as f:
        f.write("kind,x,y,z,priority\n")
        for u in scene.users:
            x, y, z = (float(v) for v in u.position)
            f.write(f"user,{x!r},{y!r},{z!r},{int(u.priority)}\n")
        for c in scene.candidates:
            x, y, z = (float(v) for v in c.position)
            f.write(f"candidate,{x!r},{y!r},{z!r},\n")
        for p in bs_positions:
            x, y, z = (float(v) for v in p)
            f.write(f"bs,{x!r},{y!r},{z!r},\n")
        for p in scene.fixed_bs:
            x, y, z = (float(v) for v in p)
            f.write(f"fixed_bs,{x!r},{y!r},{z!r},\n")


def _gnuplot_script(csv_names: list[str], ylabel: str, out_name: str) -> str:
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set ylabel '{ylabel}'",
        "set grid",
        "plot " + ", \\\n     ".join(
            f"'{name}' using 1:2 with lines title '{name}'" for name in csv_names
        ),
        f"# pipe through: gnuplot -p {out_name}",
        "",
    ]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Scenario harness

SCENARIO_KINDS = ("no_prior", "with_prior", "blockage_ablation", "method_comparison")


@dataclass
class ScenarioPlan:
    kind: str
    bs_counts: list[int] = field(default_factory=lambda: [3, 4, 5, 6])
    ga: opt.GaConfig = field(default_factory=opt.GaConfig)
    kmeans: KmeansConfig = field(default_factory=KmeansConfig)
    methods: list[str] = field(default_factory=lambda: ["nsga2", "ga", "kmeans"])
    use_blockages: bool = True
    gnuplot: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ReportError(f"unknown scenario kind {self.kind!r}; "
                              f"expected one of {SCENARIO_KINDS}")


def _eval_sites(table: LinkGainTable, ids):
    serving, sinr = sinr_from_rx(table.rx_for(ids), table.noise_dbm)
    return serving, sinr


def _emit_for_solution(scene, table, params, ids, tag, out_dir, written):
    serving, sinr = _eval_sites(table, ids)
    save_coverage_csv(coverage_curve(sinr), out_dir / f"coverage_{tag}.csv")
    save_throughput_csv(throughput_cdf(sinr, serving, params),
                        out_dir / f"throughput_{tag}.csv")
    save_placement_csv(scene, [scene.candidates[i].position for i in ids],
                       out_dir / f"placement_{tag}.csv")
    written += [f"coverage_{tag}.csv", f"throughput_{tag}.csv", f"placement_{tag}.csv"]
    return sinr


def run_scenario(scene: Scene, params: RadioParams, plan: ScenarioPlan, out_dir) -> dict:
    """Run one experiment type and write its report bundle into out_dir.

    Returns a manifest dict with the file list and headline metrics.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    metrics: dict = {}
    threshold = plan.ga.sinr_threshold_db

    table = build_link_table(scene, params, plan.use_blockages, plan.threads)

    if plan.kind in ("no_prior", "with_prior"):
        if plan.kind == "with_prior" and not scene.fixed_bs:
            raise ReportError("with_prior scenario needs fixed BS in the scene")
        archive, history = opt.run_nsga2(scene, params, plan.ga, plan.use_blockages,
                                         table=table, threads=plan.threads)
        opt.save_archive(archive, len(scene.fixed_bs), out_dir / "archive.json")
        _save_history(history, out_dir / "history.json")
        written += ["archive.json", "history.json"]
        for m in plan.bs_counts:
            ind = opt.select_best_for_m(archive, m, allow_fewer=True)
            sinr = _emit_for_solution(scene, table, params, ind.sites,
                                      f"m{m}", out_dir, written)
            metrics[f"covered_m{m}"] = int((sinr > threshold).sum())
        if plan.gnuplot:
            script = _gnuplot_script([f"coverage_m{m}.csv" for m in plan.bs_counts],
                                     "P(SINR > threshold)", "plot_coverage.gp")
            (out_dir / "plot_coverage.gp").write_text(script)
            written.append("plot_coverage.gp")

    elif plan.kind == "blockage_ablation":
        blind_table = build_link_table(scene, params, False, plan.threads)
        archive_aware, _ = opt.run_nsga2(scene, params, plan.ga, True,
                                         table=table, threads=plan.threads)
        archive_blind, _ = opt.run_nsga2(scene, params, plan.ga, False,
                                         table=blind_table, threads=plan.threads)
        opt.save_archive(archive_aware, len(scene.fixed_bs), out_dir / "archive.json")
        written.append("archive.json")
        for m in plan.bs_counts:
            aware = opt.select_best_for_m(archive_aware, m, allow_fewer=True)
            blind = opt.select_best_for_m(archive_blind, m, allow_fewer=True)
            # both placements are judged in the world WITH blockages
            for tag, ind in ((f"m{m}_aware", aware), (f"m{m}_blind", blind)):
                serving, sinr = _eval_sites(table, ind.sites)
                save_coverage_csv(coverage_curve(sinr), out_dir / f"coverage_{tag}.csv")
                written.append(f"coverage_{tag}.csv")
                metrics[f"covered_{tag}"] = int((sinr > threshold).sum())
        if plan.gnuplot:
            names = [f"coverage_m{m}_{v}.csv" for m in plan.bs_counts
                     for v in ("aware", "blind")]
            (out_dir / "plot_coverage.gp").write_text(
                _gnuplot_script(names, "P(SINR > threshold)", "plot_coverage.gp"))
            written.append("plot_coverage.gp")

    else:  # method_comparison
        rows = compare_methods(scene, params, plan.bs_counts, plan.methods,
                               ga_config=plan.ga, kmeans_config=plan.kmeans,
                               use_blockages=plan.use_blockages, table=table,
                               threads=plan.threads)
        save_comparison_csv(rows, out_dir / "comparison.csv")
        written.append("comparison.csv")
        for r in rows:
            _, sinr = _eval_sites(table, r["sites"])
            tag = f"{r['method']}_m{r['m']}"
            save_coverage_csv(coverage_curve(sinr), out_dir / f"coverage_{tag}.csv")
            written.append(f"coverage_{tag}.csv")
        metrics["rows"] = [
            {k: r[k] for k in ("method", "m", "pct_users_above_threshold", "mean_sinr_db")}
            for r in rows
        ]

    return {"kind": plan.kind, "files": written, "metrics": metrics}


def _save_history(history, path):
    with open(path, "w") as f:
        json.dump(history, f, indent=2, sort_keys=True)
        f.write("\n")
