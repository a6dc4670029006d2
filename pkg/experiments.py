"""Experiment runner: instance scans, power-law fits and the invariant suite."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np

import transport
from config import ExperimentConfig, apply_numerics, numerics
from eigenmodel import (
    Eigenfunction,
    ScalarField,
    gamma_norm_ratio,
    gradient_bound_ratio,
    make_gaussian_beam,
    make_sphere_harmonic,
    make_torus_mode,
    mean_zero_defect,
    random_torus_combination,
    residual_check,
    sample,
)
from errors import LabError, ZeroOnBall
from formatters import SCAN_TABLES, error_row, nodal_geometry_json, schema_drift
from growth import (
    ball_mass_ratios,
    build_covering,
    check_almost_monotonicity,
    classify_good_balls,
    doubling_exponent,
    doubling_sandwich,
    frequency_doubling_relation,
    identity_defect,
    lift_frequency,
    linear_harness,
    neighbour_survey,
)
from manifold import ManifoldModel, SampleGrid, build_grid, triangle_defect
from massconc import half_ball_collection, log_delta_grid, retention, tube_mass_profile
from nodal import NodalGeometry, asymmetry_ratio, density_radius, extract_nodal_set, nodal_domains
from report_sink import ReportSink
from utils.fitting import MIN_FIT_POINTS, fit_power_law

logger = logging.getLogger(__name__)

SCANS = tuple(SCAN_TABLES)


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Instance:
    """One eigenfunction of the scan: a family value and a derived seed."""

    index: int
    value: int
    seed: int
    eigenvalue: float
    resolution: int

    def base_row(self, family: str) -> dict:
        return {
            "family": family,
            "value": self.value,
            "seed": self.seed,
            "lambda": self.eigenvalue,
            "resolution": self.resolution,
        }


def instance_seed(root: int, index: int) -> int:
    """Independent 32-bit stream seed for instance ``index``."""
    return int(np.random.SeedSequence([root, index]).generate_state(1)[0])


def build_instances(config: ExperimentConfig) -> List[Instance]:
    family = config.family
    repeats = family.seeds_per_value if family.kind == "torus_random" else 1
    instances = []
    for value in family.values:
        lam = config.eigenvalue_of(value)
        if config.resolution.override is not None:
            n = config.resolution.override
        else:
            n = config.grid_resolution(lam)
        for _ in range(repeats):
            index = len(instances)
            instances.append(Instance(index, value, instance_seed(config.seed, index), lam, n))
    return instances


def make_eigenfunction(config: ExperimentConfig, inst: Instance) -> Eigenfunction:
    m = ManifoldModel.from_spec(config.manifold)
    kind = config.family.kind
    if kind == "torus_sine":
        return make_torus_mode([(inst.value, 0)], m)
    if kind == "torus_random":
        return random_torus_combination(inst.value, inst.seed, m)
    if kind == "gaussian_beam":
        return make_gaussian_beam(inst.value, m)
    return make_sphere_harmonic(inst.value, config.family.order, manifold=m)


@dataclass(frozen=True, eq=False)
class Prepared:
    eigenfunction: Eigenfunction
    grid: SampleGrid
    field: ScalarField
    nodal: NodalGeometry


def prepare(config: ExperimentConfig, inst: Instance) -> Prepared:
    e = make_eigenfunction(config, inst)
    grid = build_grid(e.manifold, inst.resolution, config.resolution.min_resolution)
    f = sample(e, grid)
    return Prepared(e, grid, f, extract_nodal_set(f))


def engine_options(config: ExperimentConfig, inst: Instance) -> dict:
    spec = config.transport
    if spec.engine == "sinkhorn":
        return {
            "max_iter": spec.max_iter,
            "stages": spec.stages,
            "max_atoms": spec.max_atoms,
            "seed": inst.seed,
            "eps_start": spec.eps_start,
            "eps_end": spec.eps_end,
        }
    return {}


def sample_centers(m: ManifoldModel, count: int, seed: int) -> np.ndarray:
    return m.random_points(count, np.random.default_rng(seed))


def l1_norm(f: ScalarField) -> float:
    return float(np.dot(f.grid.weights, np.abs(f.values)))


# ---------------------------------------------------------------------------
# Measurements, one per scan
# ---------------------------------------------------------------------------


def measure_w1(config: ExperimentConfig, inst: Instance) -> Dict[str, List[dict]]:
    prep = prepare(config, inst)
    f, ng = prep.field, prep.nodal
    engine = config.transport.engine
    result = transport.solve_w1(engine, f, ng, **engine_options(config, inst))
    lower = result.lower_bound
    if lower is None:
        try:
            lower = transport.lipschitz_witness(ng, f).lower_bound
        except LabError as exc:
            logger.info("No witness bound for %s: %s", f.label, exc)
    l1 = l1_norm(f)
    row = inst.base_row(config.family.kind)
    row.update(
        engine=engine,
        w1=result.value,
        l1_norm=l1,
        w1_sqrtlambda_over_l1=result.value * math.sqrt(inst.eigenvalue) / l1,
        lower_bound=lower,
        marginal_err=result.marginal_err,
        imbalance=result.imbalance,
        atoms=result.atoms,
        distortion=result.distortion,
        status="ok",
    )
    return {"w1": [row]}


def measure_tube_mass(config: ExperimentConfig, inst: Instance) -> Dict[str, List[dict]]:
    prep = prepare(config, inst)
    f, ng = prep.field, prep.nodal
    grid_spec = config.deltas
    deltas = log_delta_grid(ng, grid_spec.count, grid_spec.lo, grid_spec.hi)
    rows = []
    for report in retention(f, ng, deltas, config.ps):
        fractions = None if math.isinf(report.p) else tube_mass_profile(f, ng, report.p, deltas).fraction()
        for i, row in enumerate(report.rows(config.family.kind, inst.seed)):
            row.update(
                value=inst.value,
                resolution=inst.resolution,
                tube_mass_fraction=None if fractions is None else float(fractions[i]),
                status="ok",
            )
            rows.append(row)
    return {"tube_mass": rows}


def _max_doubling(f: ScalarField, centers: np.ndarray, r: float) -> float:
    best = -math.inf
    for x in centers:
        try:
            best = max(best, doubling_exponent(f, x, r))
        except ZeroOnBall:
            continue
    return best


def measure_doubling(config: ExperimentConfig, inst: Instance) -> Dict[str, List[dict]]:
    prep = prepare(config, inst)
    e, f, ng = prep.eigenfunction, prep.field, prep.nodal
    growth = config.growth
    root = math.sqrt(inst.eigenvalue)
    r = growth.probe_radius / root
    centers = sample_centers(e.manifold, growth.probes, inst.seed)
    max_doubling = _max_doubling(f, centers, r)
    sandwich_centers = sample_centers(e.manifold, growth.sandwich_probes, inst.seed + 1)

    r0 = growth.r0 if growth.r0 is not None else 2.0 * density_radius(ng).constant
    covering = build_covering(e.manifold, ng, inst.eigenvalue, r0)
    finite_ps = [p for p in config.ps if not math.isinf(p)] or [2.0]
    lift = e if growth.with_frequency else None

    rows, ball_rows = [], []
    for p in finite_ps:
        sandwich = doubling_sandwich(f, sandwich_centers, r, p)
        ratios = ball_mass_ratios(f, covering, p)
        for d in config.d_values:
            report = classify_good_balls(f, covering, d, p, lift=lift, ratios=ratios)
            row = inst.base_row(config.family.kind)
            row.update(
                d=d,
                p=p,
                balls=len(covering),
                multiplicity=covering.multiplicity,
                good_count=report.good_count,
                mass_fraction=report.mass_fraction,
                bad_mass_bound=report.bad_mass_bound,
                max_doubling=max_doubling,
                max_doubling_over_sqrtlambda=max_doubling / root,
                sandwich_a=sandwich.a,
                sandwich_b=sandwich.b,
                sandwich_a_prime=sandwich.a_prime,
                sandwich_b_prime=sandwich.b_prime,
                status="ok",
            )
            rows.append(row)
            if p == finite_ps[0]:
                for ball in report.rows():
                    ball.update(family=config.family.kind, value=inst.value, seed=inst.seed, d=d)
                    ball_rows.append(ball)
    return {"doubling": rows, "good_balls": ball_rows}


def measure_uncertainty(config: ExperimentConfig, inst: Instance) -> Dict[str, List[dict]]:
    prep = prepare(config, inst)
    engine = config.transport.engine
    result = transport.uncertainty_product(
        prep.eigenfunction, prep.field, prep.nodal, engine, **engine_options(config, inst)
    )
    row = inst.base_row(config.family.kind)
    row.update(
        engine=engine,
        w1=result.w1,
        nodal_length=result.nodal_length,
        product=result.product,
        l1_norm=result.l1_norm,
        status="ok",
    )
    return {"uncertainty": [row]}


MEASUREMENTS: Dict[str, Callable[[ExperimentConfig, Instance], Dict[str, List[dict]]]] = {
    "scan-w1": measure_w1,
    "scan-tube-mass": measure_tube_mass,
    "scan-doubling": measure_doubling,
    "scan-uncertainty": measure_uncertainty,
}


def run_instance(scan: str, config: ExperimentConfig, inst: Instance) -> Dict[str, List[dict]]:
    """Measure one instance; any failure becomes an error row."""
    try:
        return MEASUREMENTS[scan](config, inst)
    except Exception as exc:
        logger.error("Instance %d (%s=%s) failed: %s", inst.index, config.family.kind, inst.value, exc)
        return {SCAN_TABLES[scan]: [error_row(inst.base_row(config.family.kind), exc)]}


# ---------------------------------------------------------------------------
# Scans
# ---------------------------------------------------------------------------


class ScanOutcome(NamedTuple):
    rows: Dict[str, List[dict]]
    fits: Dict[str, dict]
    summary: Optional[dict]


def _ok(rows: List[dict]) -> List[dict]:
    return [row for row in rows if row.get("status") == "ok"]


def _fit(rows: List[dict], y: str, name: str) -> Optional[dict]:
    # One point per instance
    seen = {}
    for row in _ok(rows):
        if row.get(y) is None or not math.isfinite(row[y]):
            continue
        seen.setdefault((row["value"], row["seed"]), (row["lambda"], row[y]))
    if len(seen) < MIN_FIT_POINTS:
        logger.info("Skipping %s fit: %d instances", name, len(seen))
        return None
    xs, ys = zip(*seen.values())
    try:
        return fit_power_law(xs, ys)._asdict()
    except LabError as exc:
        logger.warning("%s fit failed: %s", name, exc)
        return None


def scan_fits(scan: str, rows: Dict[str, List[dict]]) -> Dict[str, dict]:
    table = rows.get(SCAN_TABLES[scan], [])
    candidates = {
        "scan-w1": [("w1_vs_lambda", "w1"), ("lower_bound_vs_lambda", "lower_bound")],
        "scan-uncertainty": [("product_vs_lambda", "product"), ("w1_vs_lambda", "w1")],
        "scan-doubling": [("max_doubling_vs_lambda", "max_doubling")],
        "scan-tube-mass": [],
    }[scan]
    fits = {}
    for name, column in candidates:
        fit = _fit(table, column, name)
        if fit is not None:
            fits[name] = fit
    return fits


def run(
    config: ExperimentConfig,
    scan: str,
    sink: Optional[ReportSink] = None,
    jobs: int = 1,
) -> ScanOutcome:
    """Run every instance of ``config`` through ``scan``, in order.

    Rows reach ``sink`` in instance order whatever the worker count; a
    failing instance yields an error row and the scan carries on.
    """
    if scan not in MEASUREMENTS:
        raise ValueError(f"unknown scan '{scan}'")
    apply_numerics(config.numerics)
    instances = build_instances(config)
    logger.info("Running %s over %d instances with %d worker(s)", scan, len(instances), jobs)
    task = partial(run_instance, scan, config)

    rows: Dict[str, List[dict]] = {}

    def consume(results):
        for inst, tables in zip(instances, results):
            for table, table_rows in tables.items():
                rows.setdefault(table, []).extend(table_rows)
            if sink is not None:
                sink.write(
                    tables,
                    {
                        "index": inst.index,
                        "seed": inst.seed,
                        "resolution": inst.resolution,
                        "engine": config.transport.engine,
                    },
                )

    if jobs > 1 and len(instances) > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=apply_numerics, initargs=(config.numerics,)
        ) as pool:
            consume(pool.map(task, instances))
    else:
        consume(map(task, instances))

    fits = scan_fits(scan, rows)
    summary = None
    if sink is not None:
        for name, fit in fits.items():
            sink.add_fit(name, fit)
        summary = sink.close()
    return ScanOutcome(rows, fits, summary)


# ---------------------------------------------------------------------------
# Invariant suite
# ---------------------------------------------------------------------------


class CheckResult(NamedTuple):
    name: str
    hard: bool
    passed: bool
    detail: str


@dataclass
class VerifySummary:
    checks: List[CheckResult] = field(default_factory=list)
    # Nodal geometry of each verified instance, keyed by instance label
    geometry: Dict[str, dict] = field(default_factory=dict)

    def add(self, name: str, passed: bool, detail: str = "", hard: bool = True) -> None:
        self.checks.append(CheckResult(name, hard, bool(passed), detail))
        if hard and not passed:
            logger.error("Hard check failed: %s (%s)", name, detail)

    def info(self, name: str, detail: str) -> None:
        self.checks.append(CheckResult(name, False, True, detail))

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if c.hard and not c.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "hard": [c._asdict() for c in self.checks if c.hard],
            "soft": [c._asdict() for c in self.checks if not c.hard],
        }


def _check_grid(summary: VerifySummary, prep: Prepared, label: str) -> None:
    grid = prep.grid
    m = grid.manifold
    total = float(grid.weights.sum())
    refined = float(build_grid(m, 2 * grid.resolution).weights.sum())
    summary.add(
        f"{label}: grid weights",
        abs(total - m.area) <= 1e-6 * m.area and abs(refined - total) <= 1e-6 * total,
        f"sum={total:.12g} area={m.area:.12g} refined={refined:.12g}",
    )
    rng = np.random.default_rng(0)
    center = m.random_points(1, rng)[0]
    radii = np.linspace(grid.spacing, 0.5 * m.diameter, 6)
    balls = [set(grid.ball(center, r).tolist()) for r in radii]
    summary.add(f"{label}: ball monotone", all(a <= b for a, b in zip(balls, balls[1:])))


def _check_eigenfunction(summary: VerifySummary, prep: Prepared, label: str) -> None:
    e, grid, f = prep.eigenfunction, prep.grid, prep.field
    report = residual_check(e, grid)
    summary.add(
        f"{label}: residual",
        report.passed,
        f"relative residual {report.relative_residual:.3e} (tolerance {report.tolerance:g}, n={grid.resolution})",
    )
    ratio = gradient_bound_ratio(e, grid)
    summary.add(f"{label}: gradient bound", ratio <= numerics.gradient_bound, f"ratio {ratio:.4f}")
    defect = mean_zero_defect(f)
    exact_mean = grid.manifold.is_torus or getattr(e.family, "order", 1) != 0
    summary.add(f"{label}: mean zero", defect <= 1e-8 or not exact_mean, f"defect {defect:.2e}", hard=exact_mean)


def _check_nodal(summary: VerifySummary, prep: Prepared, label: str) -> None:
    e, grid, ng = prep.eigenfunction, prep.grid, prep.nodal
    d = ng.distances
    u, v = grid.edges[:, 0], grid.edges[:, 1]
    slack = np.max(np.abs(d[u] - d[v]) - grid.edge_lengths * (1 + 1e-9))
    summary.add(
        f"{label}: distance field",
        slack <= 1e-12 and np.all(d[ng.zero_band] == 0),
        f"worst edge excess {slack:.2e}",
    )
    fine = nodal_domains(sample(e, build_grid(e.manifold, 2 * grid.resolution)))
    summary.add(
        f"{label}: domain count stable",
        fine.count == ng.domain_count,
        f"{ng.domain_count} at n={grid.resolution}, {fine.count} at n={2 * grid.resolution}",
    )
    summary.info(f"{label}: nodal length / sqrt(lambda)", f"{ng.normalized_length():.6g}")
    _check_asymmetry(summary, prep, label)


def _check_asymmetry(summary: VerifySummary, prep: Prepared, label: str, count: int = 8) -> None:
    """Balls of one wavelength centred on nodal segments see both signs."""
    f, ng, grid = prep.field, prep.nodal, prep.grid
    chart = ng.segment_chart()
    if len(chart) == 0:
        return
    picks = np.linspace(0, len(chart) - 1, min(count, len(chart))).astype(int)
    r = max(1.0 / math.sqrt(f.eigenvalue), 2 * grid.spacing)
    results = [asymmetry_ratio(f, grid.ball(chart[i, 0], r)) for i in picks]
    ratios = [res.ratio for res in results]
    summary.add(
        f"{label}: nodal balls meet the nodal set",
        all(res.meets_nodal_set for res in results) and all(0.0 <= q <= 1.0 for q in ratios),
        f"{sum(res.meets_nodal_set for res in results)}/{len(results)} balls",
    )
    summary.info(f"{label}: asymmetry ratio range", f"[{min(ratios):.4f}, {max(ratios):.4f}]")


def _check_retention(summary: VerifySummary, config: ExperimentConfig, prep: Prepared, label: str) -> None:
    f, ng = prep.field, prep.nodal
    deltas = np.concatenate([[0.0], log_delta_grid(ng, config.deltas.count, config.deltas.lo, config.deltas.hi)])
    reports = retention(f, ng, deltas, config.ps)
    for report in reports:
        ratios = np.stack([report.ratio_total, report.ratio_pos, report.ratio_neg])
        monotone = bool(np.all(np.diff(ratios, axis=1) <= 1e-12))
        bounded = bool(np.all((ratios >= 0) & (ratios <= 1 + 1e-12)))
        summary.add(
            f"{label}: retention p={report.p:g}",
            monotone and bounded and report.split_defect() <= 1e-9 and abs(report.ratio_total[0] - 1) <= 1e-12,
            f"split defect {report.split_defect():.2e}",
        )
        small = report.normalized_widths <= 0.3
        if small.any():
            summary.info(
                f"{label}: min retention p={report.p:g} at delta*sqrt(lambda)<=0.3",
                f"{float(report.ratio_total[small].min()):.4f}",
            )


def _check_good_balls(summary: VerifySummary, config: ExperimentConfig, prep: Prepared, label: str) -> None:
    e, f, ng = prep.eigenfunction, prep.field, prep.nodal
    r0 = config.growth.r0 if config.growth.r0 is not None else 2.0 * density_radius(ng).constant
    covering = build_covering(e.manifold, ng, e.eigenvalue, r0)
    summary.add(
        f"{label}: covering multiplicity",
        covering.multiplicity <= numerics.multiplicity_cap,
        f"{covering.multiplicity} (cap {numerics.multiplicity_cap})",
    )
    ratios = ball_mass_ratios(f, covering, 2.0)
    fractions = []
    for d in config.d_values:
        report = classify_good_balls(f, covering, d, 2.0, ratios=ratios)
        fractions.append(report.mass_fraction)
        summary.add(
            f"{label}: good-ball mass d={d}",
            1.0 - report.mass_fraction <= report.bad_mass_bound + 1e-12,
            f"bad mass {1 - report.mass_fraction:.3e} <= {report.bad_mass_bound:.3e}",
        )
    summary.add(f"{label}: good-ball fraction monotone in d", all(a <= b + 1e-12 for a, b in zip(fractions, fractions[1:])))

    collected = half_ball_collection(f, ng, covering.centers, covering.radius, report.good_doubling)
    parts = (collected.pos_fraction, collected.neg_fraction, collected.mass_fraction)
    summary.add(
        f"{label}: half-ball mass d={report.d:g}",
        all(0.0 <= q <= 1.0 + 1e-12 for q in parts)
        and collected.mass_fraction <= collected.pos_fraction + collected.neg_fraction + 1e-12,
        f"{collected.balls_used} half balls, fraction {collected.mass_fraction:.4f}",
    )
    summary.info(
        f"{label}: half-ball clearance * sqrt(lambda)",
        f"{collected.min_clearance:.4f} ({len(collected.skipped)} skipped)",
    )


def _check_lift(summary: VerifySummary, prep: Prepared, label: str, seed: int) -> None:
    e = prep.eigenfunction
    radii = np.linspace(0.1, 1.0, 4) * numerics.lift_radius_cap
    if e.manifold.is_torus:
        radii = radii[1.02 * radii < 0.5 * min(e.manifold.lx, e.manifold.ly)]
    centers = sample_centers(e.manifold, 2, seed)
    violations = 0
    for x in centers:
        try:
            violations += len(check_almost_monotonicity(e, x, radii))
        except LabError as exc:
            summary.add(f"{label}: lift quadrature", False, str(exc))
            return
    summary.add(f"{label}: almost monotonicity", violations == 0, f"{violations} violations")

    if radii.size:
        r = float(radii[-1])
        try:
            defects = [identity_defect(e, x, r) * r for x in centers]
            summary.info(f"{label}: identity defect * r at r={r:.3g}", f"max {max(abs(d) for d in defects):.4g}")
            relation = frequency_doubling_relation(e, prep.field, centers, r)
            summary.info(
                f"{label}: frequency / doubling constant",
                f"{relation.constant:.4g} over {len(relation.pairs)} pairs",
            )
        except LabError as exc:
            summary.info(f"{label}: lift diagnostics", f"skipped ({exc})")
    survey = neighbour_survey(e, pairs=8, seed=seed)
    summary.info(
        f"{label}: neighbour check tau={survey.tau:.3g}",
        f"{survey.passed} passed, {survey.failed} failed, {survey.skipped} skipped",
    )


def _check_transport(summary: VerifySummary, prep: Prepared, label: str) -> Optional[float]:
    f, ng = prep.field, prep.nodal
    mu, nu = transport.signed_measures(f)
    exact = transport.w1_exact(mu, nu, f.grid.manifold, f.grid)
    residual = exact.diagnostics["divergence_residual"]
    summary.add(
        f"{label}: flow feasibility",
        residual <= 1e-9 and exact.marginal_err <= numerics.exact_marginal_tol,
        f"residual {residual:.1e}, marginal error {exact.marginal_err:.1e}",
    )
    try:
        witness = transport.lipschitz_witness(ng, f, measures=(mu, nu))
    except LabError as exc:
        summary.add(f"{label}: witness", False, str(exc))
        return None
    summary.add(
        f"{label}: weak duality",
        witness.lower_bound <= exact.value * (1 + 1e-9) + 1e-12,
        f"witness {witness.lower_bound:.6g} <= exact {exact.value:.6g}",
    )
    measured = transport.edge_lipschitz(f.grid, witness.values.values)
    summary.add(
        f"{label}: witness Lipschitz",
        measured <= 1.0 + numerics.lipschitz_slack,
        f"edge Lipschitz constant {measured:.6f}",
    )
    shifted = transport.w1_exact(*transport.signed_measures(shifted_field(f)), f.grid.manifold, f.grid)
    summary.add(
        f"{label}: W1 translation invariance",
        abs(shifted.value - exact.value) <= 1e-4 * exact.value,
        f"{shifted.value:.8g} shifted vs {exact.value:.8g}",
    )
    _check_entropic_bracket(summary, mu, nu, f.grid.manifold, label)
    l1 = l1_norm(f)
    summary.info(f"{label}: W1 sqrt(lambda) / L1", f"{exact.value * math.sqrt(f.eigenvalue) / l1:.6g}")
    summary.info(f"{label}: witness sqrt(lambda) / L1", f"{witness.lower_bound * math.sqrt(f.eigenvalue) / l1:.6g}")
    return exact.value


def shifted_field(f: ScalarField) -> ScalarField:
    """``f`` moved by a whole number of cells; longitude only on the sphere."""
    grid = f.grid
    n1, n2 = grid.shape
    shifts = (n1 // 3, n2 // 3) if grid.manifold.is_torus else (0, n2 // 3)
    moved = np.roll(grid.as_array(f.values), shifts, axis=(0, 1)).ravel()
    return ScalarField(grid, moved, f.eigenvalue, f"{f.label} shifted")


def _check_entropic_bracket(
    summary: VerifySummary,
    mu: transport.DiscreteMeasure,
    nu: transport.DiscreteMeasure,
    m: ManifoldModel,
    label: str,
    atoms: int = 200,
) -> None:
    """Sinkhorn on the same atoms lies between the dense optimum and its entropic ceiling."""
    dense = transport.w1_dense_exact(mu, nu, m, max_atoms=atoms)
    try:
        entropic = transport.w1_sinkhorn(mu, nu, m, epsilon=0.1, max_iter=20000, stages=3, max_atoms=atoms)
    except LabError as exc:
        summary.add(f"{label}: entropic bracket", False, str(exc))
        return
    slack = entropic.marginal_err * m.diameter * mu.total + 1e-12
    ceiling = dense.value + 2 * entropic.epsilon * math.log(entropic.atoms / 2) * mu.total
    summary.add(
        f"{label}: entropic bracket",
        dense.value - slack <= entropic.value <= ceiling + slack,
        f"{dense.value:.6g} <= sinkhorn {entropic.value:.6g} <= {ceiling:.6g}",
    )


def _check_oracle(summary: VerifySummary) -> None:
    """The 1-D oracle against a dense LP at 512 atoms and against the closed form."""
    for k in (2, 4, 8):
        x = np.arange(512) * (2 * math.pi / 512)
        g = np.sin(k * x)
        fast = transport.w1_oracle_1d(g)
        lp = transport.w1_oracle_lp(g)
        summary.add(f"oracle k={k}: LP at 512 atoms", abs(fast - lp) <= 1e-4 * lp, f"{fast:.8g} vs {lp:.8g}")
        fine = np.arange(2**16) * (2 * math.pi / 2**16)
        refined = transport.w1_oracle_1d(np.sin(k * fine))
        exact = transport.w1_sine_closed_form(k)
        summary.add(f"oracle k={k}: closed form", abs(refined - exact) <= 1e-4 * exact, f"{refined:.8g} vs {exact:.8g}")


def _check_gamma_ratios(summary: VerifySummary, ratios: Dict[float, List[float]]) -> None:
    """The beam norm over the Gamma ratio must not depend on the degree."""
    for p, seen in ratios.items():
        if len(seen) >= 2:
            spread = max(seen) / min(seen) - 1.0
            summary.add(f"Gamma norm ratio p={p:g} independent of degree", spread <= 0.05, f"spread {spread:.3%}")


def verify(config: ExperimentConfig) -> VerifySummary:
    """Run the hard invariants on every instance of ``config``; soft checks are reported only."""
    apply_numerics(config.numerics)
    summary = VerifySummary()

    drift = schema_drift()
    summary.add("csv schema", not drift, "; ".join(drift) or "headers match")
    _check_oracle(summary)

    m = ManifoldModel.from_spec(config.manifold)
    defect = triangle_defect(m, 1000, config.seed % 2**32)
    summary.add("triangle inequality", defect <= 1e-12, f"max defect {defect:.2e}")

    harness = lift_frequency(linear_harness(), (0.0, 0.0), 0.3).N
    summary.add("linear harness frequency", abs(harness - 1.0) <= 1e-2, f"N = {harness:.6f}")
    defect = identity_defect(linear_harness(), (0.0, 0.0), 0.3)
    summary.add("linear harness identity defect", abs(defect) <= 0.05, f"{defect:.3e}")

    w1_points = []
    gamma_ratios: Dict[float, List[float]] = {1.0: [], 2.0: [], 4.0: []}
    for inst in build_instances(config):
        label = f"{config.family.kind}={inst.value}"
        if config.family.kind == "torus_random":
            label += f"/seed={inst.seed}"
        try:
            prep = prepare(config, inst)
            summary.geometry[label] = nodal_geometry_json(prep.nodal)
            _check_grid(summary, prep, label)
            _check_eigenfunction(summary, prep, label)
            _check_nodal(summary, prep, label)
            _check_retention(summary, config, prep, label)
            _check_good_balls(summary, config, prep, label)
            _check_lift(summary, prep, label, inst.seed)
            value = _check_transport(summary, prep, label)
            if value is not None:
                w1_points.append((inst.eigenvalue, value))
            if config.family.kind == "gaussian_beam":
                for p, seen in gamma_ratios.items():
                    seen.append(gamma_norm_ratio(prep.field, inst.value, p))
                    summary.info(f"{label}: Gamma norm ratio p={p:g}", f"{seen[-1]:.6g}")
        except Exception as exc:
            summary.add(f"{label}: instance", False, str(exc))

    _check_gamma_ratios(summary, gamma_ratios)

    if len(w1_points) >= MIN_FIT_POINTS:
        fit = fit_power_law(*zip(*w1_points))
        summary.info("W1 vs lambda slope", f"{fit.exponent:.4f} (r^2 = {fit.r_squared:.5f})")
    status = "passed" if summary.passed else f"{len(summary.failures)} hard failures"
    logger.info("Verify %s: %d checks, %s", config.family.kind, len(summary.checks), status)
    return summary
