"""W1 between the positive and negative parts of a field.

Three engines compute it: an exact minimum-cost flow on the grid graph, a
dense exact LP and an annealed log-domain Sinkhorn on subsampled atoms. A
1-Lipschitz dual witness gives a certified lower bound, and a
one-dimensional circular oracle gives closed forms for fields that depend
on one flat coordinate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import ot
from ortools.graph.python import min_cost_flow
from scipy.sparse.csgraph import dijkstra

from config import numerics
from eigenmodel import Eigenfunction, ScalarField, mean_zero_defect
from errors import (
    EmptySignedRegion,
    InfeasibleFlow,
    NonZeroMean,
    NotConverged,
    OneSignedField,
)
from manifold import ManifoldModel, SampleGrid
from nodal import NodalGeometry, domain_inradii
from utils.resampling import systematic_resample

logger = logging.getLogger(__name__)

# Worst ratio of 8-neighbour graph distance to Euclidean distance on a square lattice
LATTICE_DISTORTION = 1.0 / math.cos(math.pi / 8)

# Integer budget of the flow solver: costs * flows must stay inside int64
_COST_UNITS = 2**16
_FLOW_BUDGET = 2**60
_DENSE_MAX_ITER = 10_000_000


class TransportMethod(str, Enum):
    EXACT_FLOW = "exact_flow"
    DENSE_EXACT = "dense_exact"
    SINKHORN = "sinkhorn"
    DUAL_WITNESS = "dual_witness"
    ORACLE_1D = "oracle_1d"


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Atoms (chart points, optionally grid node ids) with nonnegative masses."""

    points: np.ndarray
    masses: np.ndarray
    nodes: Optional[np.ndarray] = None
    # Relative mass imbalance removed when the pair was rebalanced
    imbalance: float = 0.0

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if points.shape[0] != masses.shape[0]:
            raise ValueError(f"{points.shape[0]} atoms but {masses.shape[0]} masses")
        if np.any(masses < 0):
            raise ValueError("atom masses must be nonnegative")
        if masses.sum() <= 0:
            raise ValueError("a measure needs positive total mass")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "masses", masses)
        if self.nodes is not None:
            object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=np.int64).reshape(-1))

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @property
    def atom_count(self) -> int:
        return int(self.masses.size)

    def scaled(self, factor: float) -> "DiscreteMeasure":
        return DiscreteMeasure(self.points, factor * self.masses, self.nodes, self.imbalance)

    def on_nodes(self, grid: SampleGrid) -> np.ndarray:
        """Mass per grid node; atoms without node ids must sit on a node."""
        nodes = self.nodes
        if nodes is None:
            nodes = np.array([grid.nearest_node(p) for p in self.points], dtype=np.int64)
            off = grid.manifold.distance(grid.nodes[nodes], self.points)
            if np.any(off > 1e-9 * grid.spacing):
                raise ValueError("exact flow needs atoms on grid nodes")
        out = np.zeros(grid.node_count)
        np.add.at(out, nodes, self.masses)
        return out


@dataclass
class TransportResult:
    method: TransportMethod
    value: float
    lower_bound: Optional[float] = None
    marginal_err: float = 0.0
    imbalance: float = 0.0
    seed: Optional[int] = None
    atoms: int = 0
    epsilon: Optional[float] = None
    distortion: Optional[float] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def duality_gap(self) -> Optional[float]:
        if self.lower_bound is None:
            return None
        return self.value - self.lower_bound

    def to_json(self) -> dict:
        return {
            "method": self.method.value,
            "value": self.value,
            "lower_bound": self.lower_bound,
            "marginal_err": self.marginal_err,
            "imbalance": self.imbalance,
            "seed": self.seed,
            "atoms": self.atoms,
        }


# ---------------------------------------------------------------------------
# Measures
# ---------------------------------------------------------------------------


def signed_measures(f: ScalarField) -> Tuple[DiscreteMeasure, DiscreteMeasure]:
    """``(mu, nu)`` from the positive and negative parts of ``f`` on grid nodes.

    nu is rescaled so both totals agree; the relative imbalance before
    rescaling is kept on both measures.
    """
    defect = mean_zero_defect(f)
    if defect > 1e-6:
        logger.warning("Field %s is not mean-zero (relative defect %.2e)", f.label, defect)

    grid = f.grid
    v = f.values
    pos = np.nonzero(v > 0)[0]
    neg = np.nonzero(v < 0)[0]
    mass_pos = grid.weights[pos] * v[pos]
    mass_neg = -grid.weights[neg] * v[neg]
    total_pos = float(mass_pos.sum())
    total_neg = float(mass_neg.sum())
    if total_pos <= 0 or total_neg <= 0:
        raise OneSignedField(f"{f.label or 'field'} has no {'positive' if total_pos <= 0 else 'negative'} part")

    factor = total_pos / total_neg
    imbalance = (total_pos - total_neg) / total_pos
    if abs(factor - 1.0) > numerics.rebalance_tolerance:
        logger.warning("Rebalancing %s by factor %.6f", f.label, factor)
    mu = DiscreteMeasure(grid.nodes[pos], mass_pos, pos, imbalance)
    nu = DiscreteMeasure(grid.nodes[neg], factor * mass_neg, neg, imbalance)
    return mu, nu


def _check_totals(mu: DiscreteMeasure, nu: DiscreteMeasure, rtol: float) -> None:
    if abs(mu.total - nu.total) > rtol * max(mu.total, nu.total):
        raise InfeasibleFlow(f"totals differ: {mu.total:.12g} vs {nu.total:.12g}")


def _largest_remainder(real: np.ndarray, units: int) -> np.ndarray:
    """Integers summing to ``units`` that round ``real`` (which sums to ~units)."""
    base = np.floor(real).astype(np.int64)
    short = units - int(base.sum())
    if short > 0:
        order = np.argsort(-(real - base), kind="stable")
        base[order[:short]] += 1
    elif short < 0:
        order = np.argsort(real - base, kind="stable")
        order = order[base[order] > 0]
        base[order[: -short]] -= 1
    return base


# ---------------------------------------------------------------------------
# Exact flow on the grid graph
# ---------------------------------------------------------------------------


def w1_exact(mu: DiscreteMeasure, nu: DiscreteMeasure, m: ManifoldModel, grid: SampleGrid) -> TransportResult:
    """Beckmann minimum-cost flow on the neighbour graph, solved in integers.

    Edge costs are geodesic edge lengths scaled so the longest edge costs
    2^16 units; masses are scaled so that no flow cost can overflow. The
    value is the flow evaluated with the true edge lengths.
    """
    if grid.manifold != m:
        raise ValueError("grid does not belong to the given manifold")
    _check_totals(mu, nu, numerics.exact_marginal_tol)
    total = mu.total
    mu_nodes = mu.on_nodes(grid)
    nu_nodes = nu.on_nodes(grid) * (total / nu.total)

    n1, n2 = grid.shape
    lengths = grid.edge_lengths
    cost_scale = _COST_UNITS / float(lengths.max())
    costs = np.maximum(np.rint(lengths * cost_scale), 1).astype(np.int64)
    units = _FLOW_BUDGET // (int(costs.max()) * (n1 + n2 + 1))
    mass_scale = units / total

    q_mu = _largest_remainder(mu_nodes * mass_scale, units)
    q_nu = _largest_remainder(nu_nodes * mass_scale, units)
    supplies = q_mu - q_nu
    marginal_err = float(
        (np.abs(q_mu / mass_scale - mu_nodes).sum() + np.abs(q_nu / mass_scale - nu_nodes).sum())
        / (2.0 * total)
    )

    tails = np.concatenate([grid.edges[:, 0], grid.edges[:, 1]]).astype(np.int64)
    heads = np.concatenate([grid.edges[:, 1], grid.edges[:, 0]]).astype(np.int64)
    arc_costs = np.concatenate([costs, costs])
    capacities = np.full(tails.size, units, dtype=np.int64)

    smcf = min_cost_flow.SimpleMinCostFlow()
    arcs = smcf.add_arcs_with_capacity_and_unit_cost(tails, heads, capacities, arc_costs)
    smcf.set_nodes_supplies(np.arange(grid.node_count), supplies)
    status = smcf.solve()
    if status != smcf.OPTIMAL:
        raise InfeasibleFlow(f"min cost flow solver returned status {status}")

    flows = np.asarray(smcf.flows(arcs), dtype=np.int64)
    divergence = np.bincount(tails, weights=flows, minlength=grid.node_count) - np.bincount(
        heads, weights=flows, minlength=grid.node_count
    )
    residual = float(np.max(np.abs(divergence - supplies))) / units
    value = float(np.dot(flows, np.concatenate([lengths, lengths]))) / mass_scale

    logger.debug(
        "Exact flow on %dx%d grid: W1=%.6g, %d mass units, residual %.1e",
        n1, n2, value, units, residual,
    )
    return TransportResult(
        method=TransportMethod.EXACT_FLOW,
        value=value,
        marginal_err=marginal_err,
        imbalance=mu.imbalance,
        atoms=int(np.count_nonzero(supplies)),
        distortion=LATTICE_DISTORTION,
        diagnostics={
            "divergence_residual": residual,
            "integer_cost": int(smcf.optimal_cost()),
            "mass_units": int(units),
        },
    )


# ---------------------------------------------------------------------------
# Dense engines on subsampled atoms
# ---------------------------------------------------------------------------


def _subsample(measure: DiscreteMeasure, count: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    idx, masses = systematic_resample(measure.masses, count, seed)
    return measure.points[idx], masses


def _dense_problem(
    mu: DiscreteMeasure, nu: DiscreteMeasure, m: ManifoldModel, max_atoms: int, seed: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Normalised marginals and the geodesic cost matrix."""
    xs, a = _subsample(mu, max_atoms, seed)
    ys, b = _subsample(nu, max_atoms, seed + 1)
    cost = m.distance(xs[:, None, :], ys[None, :, :])
    return a / a.sum(), b / b.sum(), np.ascontiguousarray(cost)


def w1_dense_exact(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    m: ManifoldModel,
    max_atoms: int = 1500,
    seed: int = 0,
) -> TransportResult:
    """Network simplex on the dense geodesic cost between subsampled atoms."""
    _check_totals(mu, nu, numerics.rebalance_tolerance)
    a, b, cost = _dense_problem(mu, nu, m, max_atoms, seed)
    value = float(ot.emd2(a, b, cost, numItermax=_DENSE_MAX_ITER)) * mu.total
    return TransportResult(
        method=TransportMethod.DENSE_EXACT,
        value=value,
        imbalance=mu.imbalance,
        seed=seed,
        atoms=int(a.size + b.size),
    )


def annealing_schedule(spacing: float, stages: int, start: float = 0.5, end: float = 0.005) -> np.ndarray:
    """Geometric epsilon schedule from ``start`` to ``end`` atom spacings."""
    if stages == 1:
        return np.array([end * spacing])
    return np.geomspace(start * spacing, end * spacing, stages)


def w1_sinkhorn(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    m: ManifoldModel,
    epsilon: Optional[float] = None,
    max_iter: int = 2000,
    stages: int = 6,
    max_atoms: int = 2000,
    seed: int = 0,
    eps_start: float = 0.5,
    eps_end: float = 0.005,
) -> TransportResult:
    """Entropic W1 by log-domain Sinkhorn with epsilon annealing.

    Each stage warm-starts from the previous dual potentials. ``epsilon``
    overrides the final regularisation; the schedule is otherwise measured
    in mean atom spacings sqrt(area / atoms).
    """
    if epsilon is not None and epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _check_totals(mu, nu, numerics.rebalance_tolerance)
    a, b, cost = _dense_problem(mu, nu, m, max_atoms, seed)
    spacing = math.sqrt(m.area / (0.5 * (a.size + b.size)))
    schedule = annealing_schedule(spacing, stages, eps_start, eps_end)
    if epsilon is not None:
        schedule = schedule * (epsilon / schedule[-1])

    warmstart = None
    stage_values: List[float] = []
    plan = None
    for i, reg in enumerate(schedule):
        plan, log = ot.sinkhorn(
            a,
            b,
            cost,
            float(reg),
            method="sinkhorn_log",
            numItermax=max_iter,
            stopThr=0.1 * numerics.sinkhorn_marginal_tol,
            warmstart=warmstart,
            log=True,
            warn=False,
        )
        stage_values.append(float(np.sum(plan * cost)) * mu.total)
        if i + 1 < len(schedule):
            shrink = reg / schedule[i + 1]
            warmstart = (log["log_u"] * shrink, log["log_v"] * shrink)

    marginal_err = 0.5 * float(np.abs(plan.sum(axis=1) - a).sum() + np.abs(plan.sum(axis=0) - b).sum())
    if marginal_err > numerics.sinkhorn_marginal_tol:
        raise NotConverged(
            f"marginal error {marginal_err:.2e} after {max_iter} iterations at eps={schedule[-1]:.3g}"
        )
    logger.debug("Sinkhorn on %d+%d atoms: W1=%.6g (eps=%.3g)", a.size, b.size, stage_values[-1], schedule[-1])
    return TransportResult(
        method=TransportMethod.SINKHORN,
        value=stage_values[-1],
        marginal_err=marginal_err,
        imbalance=mu.imbalance,
        seed=seed,
        atoms=int(a.size + b.size),
        epsilon=float(schedule[-1]),
        diagnostics={"stage_eps": [float(e) for e in schedule], "stage_values": stage_values},
    )


# ---------------------------------------------------------------------------
# One-dimensional circular oracle
# ---------------------------------------------------------------------------


def _check_profile(g: np.ndarray, dx: float) -> None:
    scale = float(np.abs(g).sum()) * dx
    if scale <= 0 or abs(float(g.sum()) * dx) > 1e-9 * scale:
        raise NonZeroMean(f"profile integrates to {float(g.sum()) * dx:.3g}")


def w1_oracle_1d(g: np.ndarray, length: float = 2 * math.pi, transverse: float = 2 * math.pi) -> float:
    """W1 of a field ``g(x)`` constant across a transverse length.

    ``g`` is sampled at ``x_i = i * length / n``. The circular value is
    ``min_c sum |G_i - c| dx`` with G the running mass, attained at the median.
    """
    g = np.asarray(g, dtype=float)
    dx = length / g.size
    _check_profile(g, dx)
    running = np.cumsum(g) * dx
    return transverse * float(np.abs(running - np.median(running)).sum()) * dx


def w1_oracle_lp(g: np.ndarray, length: float = 2 * math.pi, transverse: float = 2 * math.pi) -> float:
    """Same quantity by brute-force LP with circular distances."""
    g = np.asarray(g, dtype=float)
    n = g.size
    dx = length / n
    _check_profile(g, dx)
    x = np.arange(n) * dx
    gap = np.abs(x[:, None] - x[None, :])
    cost = np.minimum(gap, length - gap)
    pos = np.maximum(g, 0.0) * dx
    neg = np.maximum(-g, 0.0) * dx
    mass = float(pos.sum())
    value = float(ot.emd2(pos / mass, neg / neg.sum(), cost, numItermax=_DENSE_MAX_ITER))
    return transverse * mass * value


def w1_sine_closed_form(k: int, length: float = 2 * math.pi, transverse: float = 2 * math.pi) -> float:
    """Exact W1 for sin(2 pi k x / length): ``T L^2 / (pi^2 k)``, so 8 pi / k on the square torus."""
    return transverse * length**2 / (math.pi**2 * k)


# ---------------------------------------------------------------------------
# Dual witness
# ---------------------------------------------------------------------------


def edge_lipschitz(grid: SampleGrid, values: np.ndarray) -> float:
    """Largest |f(u) - f(v)| / length(u, v) over the neighbour edges."""
    u, v = grid.edges[:, 0], grid.edges[:, 1]
    return float(np.max(np.abs(values[u] - values[v]) / grid.edge_lengths))


@dataclass(frozen=True, eq=False)
class WitnessResult:
    values: ScalarField
    lower_bound: float
    radius: float
    tube: float
    lipschitz: float
    raw_lipschitz: float
    scale: float
    positive_nodes: int
    negative_nodes: int

    def as_transport_result(self, imbalance: float = 0.0) -> TransportResult:
        return TransportResult(
            method=TransportMethod.DUAL_WITNESS,
            value=self.lower_bound,
            lower_bound=self.lower_bound,
            imbalance=imbalance,
            atoms=self.positive_nodes + self.negative_nodes,
            diagnostics={
                "radius": self.radius,
                "raw_lipschitz": self.raw_lipschitz,
                "scale": self.scale,
            },
        )


def default_witness_radius(ng: NodalGeometry) -> float:
    """Smallest nodal-domain inradius, ignoring domains thinner than two cells."""
    inradii = domain_inradii(ng)
    usable = inradii[inradii >= 2 * ng.grid.spacing]
    if usable.size == 0:
        raise EmptySignedRegion("no nodal domain is wider than two grid cells")
    return float(usable.min())


def lipschitz_witness(
    ng: NodalGeometry,
    f: ScalarField,
    R: Optional[float] = None,
    measures: Optional[Tuple[DiscreteMeasure, DiscreteMeasure]] = None,
) -> WitnessResult:
    """``R (d_Z - d_Y) / (4 (d_Z + d_Y))`` with Y, Z the signed regions outside T_{R/2}.

    d_Y and d_Z are graph distances. The witness is rescaled when its
    edge-wise Lipschitz constant exceeds one, which keeps the bound certified.
    """
    grid = f.grid
    radius = default_witness_radius(ng) if R is None else float(R)
    if radius <= 0:
        raise ValueError("witness radius must be positive")
    tube = 0.5 * radius
    far = ng.distances > tube
    Y = np.nonzero(far & (f.values > f.node_thresholds))[0]
    Z = np.nonzero(far & (f.values < -f.node_thresholds))[0]
    if Y.size == 0 or Z.size == 0:
        raise EmptySignedRegion(f"tube of width {tube:.3g} swallows the {'positive' if Y.size == 0 else 'negative'} part")

    d_y = dijkstra(grid.adjacency, directed=False, indices=Y, min_only=True)
    d_z = dijkstra(grid.adjacency, directed=False, indices=Z, min_only=True)
    witness = radius * (d_z - d_y) / (4.0 * (d_z + d_y))

    raw = edge_lipschitz(grid, witness)
    scale = 1.0
    if raw > 1.0 + numerics.lipschitz_slack:
        scale = 1.0 / raw
        witness = witness * scale
        logger.info("Witness Lipschitz constant %.4f; rescaled", raw)

    mu, nu = signed_measures(f) if measures is None else measures
    bound = float(np.dot(witness, mu.on_nodes(grid)) - np.dot(witness, nu.on_nodes(grid)))
    return WitnessResult(
        values=ScalarField(grid, witness, f.eigenvalue, f"witness[{f.label}]"),
        lower_bound=bound,
        radius=radius,
        tube=tube,
        lipschitz=raw * scale,
        raw_lipschitz=raw,
        scale=scale,
        positive_nodes=int(Y.size),
        negative_nodes=int(Z.size),
    )


# ---------------------------------------------------------------------------
# Engine dispatch and the uncertainty product
# ---------------------------------------------------------------------------


def solve_w1(
    engine: str,
    f: ScalarField,
    ng: NodalGeometry,
    measures: Optional[Tuple[DiscreteMeasure, DiscreteMeasure]] = None,
    **options: Any,
) -> TransportResult:
    """Run one engine ("exact", "sinkhorn", "dense" or "witness") on ``f``."""
    mu, nu = signed_measures(f) if measures is None else measures
    m = f.grid.manifold
    if engine == "exact":
        return w1_exact(mu, nu, m, f.grid)
    if engine == "sinkhorn":
        return w1_sinkhorn(mu, nu, m, **options)
    if engine == "dense":
        return w1_dense_exact(mu, nu, m, **options)
    if engine == "witness":
        return lipschitz_witness(ng, f, options.get("R"), (mu, nu)).as_transport_result(mu.imbalance)
    raise ValueError(f"unknown transport engine '{engine}'")


class UncertaintyResult(NamedTuple):
    w1: float
    nodal_length: float
    product: float
    l1_norm: float
    transport: TransportResult


def uncertainty_product(
    e: Eigenfunction, f: ScalarField, ng: NodalGeometry, engine: str = "exact", **options: Any
) -> UncertaintyResult:
    """W1(phi+ dx, phi- dx) * H^1(nodal set) with phi scaled to unit L^1 norm."""
    if f.grid.manifold != e.manifold:
        raise ValueError("field and eigenfunction live on different manifolds")
    l1 = float(np.dot(f.grid.weights, np.abs(f.values)))
    normalized = f.scaled(1.0 / l1)
    result = solve_w1(engine, normalized, ng, **options)
    return UncertaintyResult(result.value, ng.length, result.value * ng.length, l1, result)
