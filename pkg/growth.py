"""Doubling exponents, harmonic-lift frequency functions, coverings and good balls.

The lift of an eigenfunction is ``u(x, t) = exp(sqrt(lambda) t) phi(x)`` on
the product M x R. Its boundary and Dirichlet energies on geodesic balls
centred at ``(x, 0)`` are computed by product quadrature in polar
coordinates: Gauss-Legendre in the polar angle, uniform in the azimuth and
Gauss-Legendre in the radius.

The boundary energy H is reported normalised by ``r^-2`` (the lift is
three-dimensional) so that N = r H' / (2 H) equals the degree of a
homogeneous harmonic polynomial; N~ = r D / H uses the raw boundary energy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from config import numerics
from eigenmodel import Eigenfunction, ScalarField, gradients, values
from errors import (
    CoverageGap,
    NeighbourScaleTooLarge,
    QuadratureUnderResolved,
    ResolutionTooCoarse,
    ZeroOnBall,
)
from manifold import ManifoldModel, PointLike, geodesic_distance
from massconc import lp_mass
from nodal import NodalGeometry, distance_to_nodal_set

logger = logging.getLogger(__name__)

# Dimension of M x R
LIFT_DIMENSION = 3
_SUP_FLOOR = 1e-14
_MIN_ANGULAR_NODES = 14
_MIN_RADIAL_NODES = 24


# ---------------------------------------------------------------------------
# Doubling and growth exponents on M
# ---------------------------------------------------------------------------


def _sup_on_ball(f: ScalarField, x: PointLike, r: float) -> float:
    return float(np.max(np.abs(f.values[f.grid.ball(x, r)])))


def growth_exponent(f: ScalarField, x: PointLike, radius: float, fraction: float) -> float:
    """``log(sup_{B(x,R)} |phi| / sup_{B(x, fraction * R)} |phi|)``."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    inner = _sup_on_ball(f, x, fraction * radius)
    if inner < _SUP_FLOOR * f.max_abs:
        raise ZeroOnBall(f"field vanishes on B({tuple(np.round(x, 4))}, {fraction * radius:.3g})")
    return math.log(_sup_on_ball(f, x, radius) / inner)


def doubling_exponent(f: ScalarField, x: PointLike, r: float) -> float:
    """Sup-norm doubling exponent ``log(sup_{B(x,2r)} / sup_{B(x,r)})``."""
    return growth_exponent(f, x, 2 * r, 0.5)


def lp_doubling_exponent(f: ScalarField, x: PointLike, r: float, p: float) -> float:
    """``log(||phi||^p_{L^p(B(x,2r))} / ||phi||^p_{L^p(B(x,r))})``."""
    grid = f.grid
    inner = grid.ball(x, r)
    outer = grid.ball(x, 2 * r)
    w = grid.weights
    m_inner = lp_mass(f.values[inner], w[inner], p)
    if m_inner <= _SUP_FLOOR * lp_mass(f.values, w, p):
        raise ZeroOnBall(f"no L^{p:g} mass on B({tuple(np.round(x, 4))}, {r:.3g})")
    return math.log(lp_mass(f.values[outer], w[outer], p) / m_inner)


class SandwichFit(NamedTuple):
    """Fitted constants in N(x, 3r/4) <= a N_p(x, r) + b and N_p(x, r) <= a' N(x, r) + b'."""

    a: float
    b: float
    a_prime: float
    b_prime: float
    samples: int


def _upper_line(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    slope = max(float(np.polyfit(x, y, 1)[0]), 0.0) if np.ptp(x) > 0 else 0.0
    return slope, float(np.max(y - slope * x))


def doubling_sandwich(
    f: ScalarField, centers: np.ndarray, r: float, p: float
) -> SandwichFit:
    """Fit the comparability constants between sup and L^p doubling exponents."""
    lower, middle, upper = [], [], []
    for x in centers:
        try:
            lower.append(doubling_exponent(f, x, 0.75 * r))
            middle.append(lp_doubling_exponent(f, x, r, p))
            upper.append(doubling_exponent(f, x, r))
        except ZeroOnBall:
            continue
    lower, middle, upper = map(np.asarray, (lower, middle, upper))
    a, b = _upper_line(middle, lower)
    a_prime, b_prime = _upper_line(upper, middle)
    return SandwichFit(a, b, a_prime, b_prime, len(middle))


# ---------------------------------------------------------------------------
# Harmonic lifts
# ---------------------------------------------------------------------------


class HarmonicLift(Protocol):
    """A harmonic function near ``(x, 0)`` in M x R, addressed in polar form.

    ``s`` is the geodesic distance from ``x`` in M, ``beta`` the direction in
    the orthonormal frame at ``x`` and ``t`` the height.
    """

    curvature_radius: Optional[float]
    frequency: float

    def evaluate(
        self, center: np.ndarray, s: np.ndarray, beta: np.ndarray, t: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Return ``(u, |grad u|^2)``."""


@dataclass(frozen=True)
class EigenfunctionLift:
    eigenfunction: Eigenfunction

    @property
    def curvature_radius(self) -> Optional[float]:
        m = self.eigenfunction.manifold
        return None if m.is_torus else m.radius

    @property
    def frequency(self) -> float:
        return self.eigenfunction.frequency

    def locate(self, center: np.ndarray, s: np.ndarray, beta: np.ndarray) -> np.ndarray:
        """Chart coordinates of exp_x(s (cos beta e1 + sin beta e2))."""
        m = self.eigenfunction.manifold
        if m.is_torus:
            return m.reduce(
                np.stack([center[0] + s * np.cos(beta), center[1] + s * np.sin(beta)], -1)
            )
        theta, phi = center
        p = m.to_ambient(np.asarray(center, dtype=float))
        e_theta = np.array([math.cos(theta) * math.cos(phi), math.cos(theta) * math.sin(phi), -math.sin(theta)])
        e_phi = np.array([-math.sin(phi), math.cos(phi), 0.0])
        direction = np.cos(beta)[..., None] * e_theta + np.sin(beta)[..., None] * e_phi
        angle = (s / m.radius)[..., None]
        y = np.cos(angle) * p + m.radius * np.sin(angle) * direction
        return m.from_ambient(y)

    def evaluate(self, center, s, beta, t):
        e = self.eigenfunction
        pts = self.locate(np.asarray(center, dtype=float), s, beta)
        phi = values(e, pts)
        g = gradients(e, pts, at_pole="limit")
        growth = np.exp(e.frequency * t)
        u = growth * phi
        grad_sq = growth**2 * (g[:, 0] ** 2 + g[:, 1] ** 2 + e.eigenvalue * phi**2)
        return u, grad_sq


@dataclass(frozen=True)
class PolynomialLift:
    """Harmonic function of local Cartesian coordinates (X, Y, T) on flat R^3."""

    value: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray, np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]
    curvature_radius: Optional[float] = None
    frequency: float = 0.0

    def evaluate(self, center, s, beta, t):
        x, y = s * np.cos(beta), s * np.sin(beta)
        gx, gy, gt = self.gradient(x, y, t)
        return self.value(x, y, t), gx**2 + gy**2 + gt**2


def linear_harness() -> PolynomialLift:
    """u = X, homogeneous of degree one."""
    return PolynomialLift(
        value=lambda x, y, t: x,
        gradient=lambda x, y, t: (np.ones_like(x), np.zeros_like(x), np.zeros_like(x)),
    )


def cubic_harness(weight: float = 1e-3) -> PolynomialLift:
    """u = X + weight (X^3 - 3 X Y^2); its frequency rises from 1 towards 3."""
    return PolynomialLift(
        value=lambda x, y, t: x + weight * (x**3 - 3 * x * y**2),
        gradient=lambda x, y, t: (
            1 + weight * (3 * x**2 - 3 * y**2),
            -6 * weight * x * y,
            np.zeros_like(x),
        ),
    )


LiftLike = Union[Eigenfunction, HarmonicLift]


def as_lift(e: LiftLike) -> HarmonicLift:
    return EigenfunctionLift(e) if isinstance(e, Eigenfunction) else e


class LiftFrequency(NamedTuple):
    radius: float
    H: float
    H_prime: float
    D: float
    N: float
    N_tilde: float
    H_raw: float
    H_raw_prime: float
    angular_nodes: int


@dataclass(frozen=True)
class _PolarRule:
    alpha: np.ndarray
    beta: np.ndarray
    weights: np.ndarray
    rho: np.ndarray
    rho_weights: np.ndarray

    @classmethod
    def build(cls, angular: int, radial: int) -> "_PolarRule":
        x, w = np.polynomial.legendre.leggauss(angular)
        alpha = 0.5 * math.pi * (x + 1)
        w_alpha = 0.5 * math.pi * w
        n_beta = 2 * angular
        beta = 2 * math.pi * np.arange(n_beta) / n_beta
        a, b = np.meshgrid(alpha, beta, indexing="ij")
        weights = np.outer(w_alpha, np.full(n_beta, 2 * math.pi / n_beta))
        xr, wr = np.polynomial.legendre.leggauss(radial)
        return cls(a.ravel(), b.ravel(), weights.ravel(), 0.5 * (xr + 1), 0.5 * wr)


def _area_factor(s: np.ndarray, curvature_radius: Optional[float]) -> np.ndarray:
    if curvature_radius is None:
        return s
    return curvature_radius * np.sin(s / curvature_radius)


def _boundary_energy(lift: HarmonicLift, center: np.ndarray, r: float, rule: _PolarRule) -> float:
    s = r * np.sin(rule.alpha)
    t = r * np.cos(rule.alpha)
    u, _ = lift.evaluate(center, s, rule.beta, t)
    return float(np.sum(u**2 * r * _area_factor(s, lift.curvature_radius) * rule.weights))


def _dirichlet_energy(lift: HarmonicLift, center: np.ndarray, r: float, rule: _PolarRule) -> float:
    total = 0.0
    for rho_unit, w_rho in zip(rule.rho, rule.rho_weights):
        rho = r * rho_unit
        s = rho * np.sin(rule.alpha)
        t = rho * np.cos(rule.alpha)
        _, grad_sq = lift.evaluate(center, s, rule.beta, t)
        total += r * w_rho * float(
            np.sum(grad_sq * rho * _area_factor(s, lift.curvature_radius) * rule.weights)
        )
    return total


def _angular_nodes(lift: HarmonicLift, r: float) -> int:
    return max(_MIN_ANGULAR_NODES, math.ceil(2 * lift.frequency * r) + 12)


def _frequency_at(
    lift: HarmonicLift, center: np.ndarray, r: float, scale: int, dirichlet: bool = True
) -> LiftFrequency:
    base = _angular_nodes(lift, r)
    angular = scale * base
    radial = scale * max(_MIN_RADIAL_NODES, base)
    rule = _PolarRule.build(angular, radial)
    step = r / 50.0
    h_minus, h_mid, h_plus = (
        _boundary_energy(lift, center, radius, rule) for radius in (r - step, r, r + step)
    )
    if h_mid <= 0:
        raise ZeroOnBall(f"lift vanishes on the sphere of radius {r:.3g}")
    power = LIFT_DIMENSION - 1
    H = h_mid / r**power
    H_prime = (h_plus / (r + step) ** power - h_minus / (r - step) ** power) / (2 * step)
    raw_prime = (h_plus - h_minus) / (2 * step)
    D = _dirichlet_energy(lift, center, r, rule) if dirichlet else math.nan
    return LiftFrequency(
        radius=r,
        H=H,
        H_prime=H_prime,
        D=D,
        N=r * H_prime / (2 * H),
        N_tilde=r * D / h_mid,
        H_raw=h_mid,
        H_raw_prime=raw_prime,
        angular_nodes=angular,
    )


def _check_radius(lift: HarmonicLift, r: float, manifold: Optional[ManifoldModel] = None) -> None:
    if r <= 0:
        raise ValueError("lift radius must be positive")
    if r > numerics.lift_radius_cap * (1 + 1e-12):
        raise ValueError(f"lift radius {r:.3g} exceeds the cap {numerics.lift_radius_cap}")
    if manifold is not None and manifold.is_torus and 1.02 * r >= 0.5 * min(manifold.lx, manifold.ly):
        raise ValueError("lift ball wraps around the torus")


def lift_frequency(
    e: LiftLike, x: PointLike, r: float, check: bool = True, dirichlet: bool = True
) -> LiftFrequency:
    """Boundary energy, Dirichlet energy and both frequency functions at (x, 0).

    With ``check`` the angular and radial resolution are doubled; a relative
    shift of N above the quadrature tolerance raises QuadratureUnderResolved,
    otherwise the refined values are returned. ``dirichlet=False`` skips the
    Dirichlet energy; D and N~ are then nan.
    """
    lift = as_lift(e)
    manifold = e.manifold if isinstance(e, Eigenfunction) else None
    _check_radius(lift, r, manifold)
    center = np.asarray(x, dtype=float)
    coarse = _frequency_at(lift, center, r, scale=1, dirichlet=dirichlet)
    if not check:
        return coarse
    fine = _frequency_at(lift, center, r, scale=2, dirichlet=dirichlet)
    shift = abs(fine.N - coarse.N) / max(abs(fine.N), 1.0)
    if shift > numerics.quadrature_tolerance:
        raise QuadratureUnderResolved(
            f"N moved by {shift:.2%} under refinement at r={r:.3g} ({coarse.angular_nodes} nodes)"
        )
    return fine


def identity_defect(e: LiftLike, x: PointLike, r: float) -> float:
    """Bounded term in H'_raw = (2/r + O(1)) H_raw + 2 D; zero for flat lifts."""
    freq = lift_frequency(e, x, r)
    return (freq.H_raw_prime - 2 * freq.D) / freq.H_raw - (LIFT_DIMENSION - 1) / r


class MonotonicityViolation(NamedTuple):
    r1: float
    r2: float
    n1: float
    n2: float


def check_almost_monotonicity(
    e: LiftLike,
    x: PointLike,
    radii: Sequence[float],
    epsilon: Optional[float] = None,
    tolerance: Optional[float] = None,
) -> List[MonotonicityViolation]:
    """Pairs r1 < r2 with N(x, r1) > N(x, r2)(1 + epsilon) beyond quadrature tolerance."""
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    eps = numerics.monotonicity_epsilon if epsilon is None else epsilon
    tol = numerics.quadrature_tolerance if tolerance is None else tolerance
    freqs = [lift_frequency(e, x, r).N for r in radii]
    violations = []
    for i in range(len(radii)):
        for j in range(i + 1, len(radii)):
            if freqs[i] > freqs[j] * (1 + eps) * (1 + tol) + 1e-12:
                violations.append(MonotonicityViolation(radii[i], radii[j], freqs[i], freqs[j]))
    if violations:
        logger.info("%d almost-monotonicity violations at %s", len(violations), tuple(np.round(x, 4)))
    return violations


class NeighbourCheck(NamedTuple):
    status: str  # "pass", "fail" or "skipped"
    n1: float
    n2: float


def neighbour_tau_limit(c_star: Optional[float] = None) -> float:
    """Largest tau for which both lifts of the neighbour check stay within the lift cap."""
    c_star = numerics.neighbour_constant if c_star is None else c_star
    return min(numerics.neighbour_radius, numerics.lift_radius_cap / c_star)


def neighbor_frequency_check(
    e: Eigenfunction,
    x1: PointLike,
    x2: PointLike,
    tau: float,
    c_star: Optional[float] = None,
    n0: Optional[float] = None,
) -> NeighbourCheck:
    """Is N(x2, C* tau) > 0.99 N(x1, tau) when both points have large frequency?"""
    c_star = numerics.neighbour_constant if c_star is None else c_star
    n0 = numerics.frequency_threshold if n0 is None else n0
    if c_star < 1:
        raise ValueError("C* must be at least 1")
    limit = neighbour_tau_limit(c_star)
    if tau > limit * (1 + 1e-12):
        raise NeighbourScaleTooLarge(
            f"tau {tau:.3g} exceeds {limit:.3g} (C* tau must stay within the lift cap "
            f"{numerics.lift_radius_cap:g})"
        )
    if geodesic_distance(e.manifold, x1, x2) >= tau:
        raise ValueError("points must be closer than tau")
    n1 = lift_frequency(e, x1, tau, dirichlet=False).N
    n2 = lift_frequency(e, x2, c_star * tau, dirichlet=False).N
    gate = lift_frequency(e, x2, tau, dirichlet=False).N if not np.allclose(x1, x2) else n1
    if n1 < n0 or gate < n0:
        return NeighbourCheck("skipped", n1, n2)
    return NeighbourCheck("pass" if n2 > 0.99 * n1 else "fail", n1, n2)


class NeighbourSurvey(NamedTuple):
    tau: float
    c_star: float
    passed: int
    failed: int
    skipped: int

    @property
    def pairs(self) -> int:
        return self.passed + self.failed + self.skipped

    @property
    def pass_rate(self) -> float:
        """Share of passes among the pairs that were decided."""
        decided = self.passed + self.failed
        return self.passed / decided if decided else math.nan


def neighbour_survey(
    e: Eigenfunction,
    pairs: int = 100,
    tau: Optional[float] = None,
    separation: Optional[float] = None,
    c_star: Optional[float] = None,
    n0: Optional[float] = None,
    seed: int = 0,
) -> NeighbourSurvey:
    """Run the neighbour check on ``pairs`` seeded random pairs.

    The first point is uniform on M; the second lies ``separation`` away
    (uniform in [0, 0.9 tau) when omitted) in a uniform direction. ``tau``
    defaults to the largest admissible value. Pairs whose lift is under
    resolved count as skipped.
    """
    c_star = numerics.neighbour_constant if c_star is None else c_star
    tau = neighbour_tau_limit(c_star) if tau is None else tau
    if separation is not None and not 0 <= separation < tau:
        raise ValueError("separation must lie in [0, tau)")
    rng = np.random.default_rng(seed)
    lift = EigenfunctionLift(e)
    counts = {"pass": 0, "fail": 0, "skipped": 0}
    for x1 in e.manifold.random_points(pairs, rng):
        s = separation if separation is not None else 0.9 * tau * rng.uniform()
        beta = rng.uniform(0.0, 2 * math.pi)
        x2 = lift.locate(x1, np.array([s]), np.array([beta]))[0]
        try:
            status = neighbor_frequency_check(e, x1, x2, tau, c_star, n0).status
        except (QuadratureUnderResolved, ZeroOnBall) as exc:
            logger.debug("Neighbour pair at %s skipped: %s", tuple(np.round(x1, 4)), exc)
            status = "skipped"
        counts[status] += 1
    survey = NeighbourSurvey(tau, c_star, counts["pass"], counts["fail"], counts["skipped"])
    logger.info(
        "Neighbour survey %s: %d pass, %d fail, %d skipped (tau=%.3g, C*=%g)",
        e.label,
        survey.passed,
        survey.failed,
        survey.skipped,
        tau,
        c_star,
    )
    return survey


@dataclass(frozen=True)
class FrequencyDoublingFit:
    """Smallest measured N~(x, r) / N(x, r') with r' a fraction of r."""

    constant: float
    pairs: List[Tuple[float, float]] = field(default_factory=list)


def frequency_doubling_relation(
    e: Eigenfunction,
    f: ScalarField,
    centers: np.ndarray,
    r: float,
    fractions: Sequence[float] = (0.25, 0.5),
) -> FrequencyDoublingFit:
    pairs = []
    for x in centers:
        n_tilde = lift_frequency(e, x, r).N_tilde
        for frac in fractions:
            try:
                doubling = doubling_exponent(f, x, frac * r)
            except ZeroOnBall:
                continue
            if doubling > 1e-9:
                pairs.append((n_tilde, doubling))
    if not pairs:
        return FrequencyDoublingFit(float("nan"), [])
    return FrequencyDoublingFit(min(a / b for a, b in pairs), pairs)


# ---------------------------------------------------------------------------
# Coverings and good balls
# ---------------------------------------------------------------------------


def _tree_points(m: ManifoldModel, points: np.ndarray) -> np.ndarray:
    return m.reduce(points) if m.is_torus else m.to_ambient(points)


def _tree(m: ManifoldModel, points: np.ndarray) -> cKDTree:
    if m.is_torus:
        return cKDTree(m.reduce(points), boxsize=m.periods)
    return cKDTree(m.to_ambient(points))


def _tree_radius(m: ManifoldModel, r: float) -> float:
    if m.is_torus:
        return r
    return 2 * m.radius * math.sin(min(r, math.pi * m.radius) / (2 * m.radius))


def _lattice(m: ManifoldModel, spacing: float) -> np.ndarray:
    if m.is_torus:
        nx = max(1, math.ceil(m.lx / spacing - 1e-9))
        ny = max(1, math.ceil(m.ly / spacing - 1e-9))
        x, y = np.meshgrid(np.arange(nx) * m.lx / nx, np.arange(ny) * m.ly / ny, indexing="ij")
        return np.stack([x.ravel(), y.ravel()], -1)
    rings = max(1, math.ceil(math.pi * m.radius / spacing))
    d_theta = math.pi / rings
    centers = []
    for i in range(rings):
        theta = (i + 0.5) * d_theta
        lo, hi = theta - 0.5 * d_theta, theta + 0.5 * d_theta
        widest = 1.0 if lo <= math.pi / 2 <= hi else max(math.sin(lo), math.sin(hi))
        count = max(1, math.ceil(2 * math.pi * m.radius * widest / spacing))
        phi = 2 * math.pi * np.arange(count) / count
        centers.append(np.stack([np.full(count, theta), phi], -1))
    return np.concatenate(centers)


@dataclass(frozen=True, eq=False)
class Covering:
    centers: np.ndarray
    radius: float
    spacing: float
    multiplicity: int
    deep_flags: np.ndarray
    shifted: int = 0

    def __len__(self) -> int:
        return len(self.centers)


def build_covering(
    m: ManifoldModel,
    ng: NodalGeometry,
    eigenvalue: float,
    r0: float,
    spacing_factor: Optional[float] = None,
) -> Covering:
    """Cover M by balls of radius r0 / sqrt(lambda) whose half balls meet the nodal set.

    Centres start on a lattice of spacing ``spacing_factor * r`` (the numerics
    default keeps the doubled-ball multiplicity under its cap); a centre whose
    half ball misses the nodal set moves to the nearest grid node within half
    a radius of it.
    """
    grid = ng.grid
    r = r0 / math.sqrt(eigenvalue)
    if r < 3 * grid.spacing:
        raise ResolutionTooCoarse(f"covering radius {r:.3g} below three mesh sizes")
    factor = numerics.covering_spacing_factor if spacing_factor is None else spacing_factor
    if factor <= 0:
        raise ValueError("covering spacing factor must be positive")
    spacing = factor * r
    centers = _lattice(m, spacing)

    shallow = distance_to_nodal_set(ng, centers) > 0.5 * r
    shifted = int(shallow.sum())
    if shifted:
        deep_nodes = np.nonzero(ng.distances <= 0.5 * r)[0]
        _, nearest = _tree(m, grid.nodes[deep_nodes]).query(_tree_points(m, centers[shallow]))
        centers = centers.copy()
        centers[shallow] = grid.nodes[deep_nodes[nearest]]
        _, first = np.unique(np.round(centers, 12), axis=0, return_index=True)
        centers = centers[np.sort(first)]
        logger.debug("Covering: moved %d shallow centres", shifted)

    deep = distance_to_nodal_set(ng, centers) <= 0.5 * r * (1 + 1e-9)
    tree = _tree(m, centers)
    node_points = _tree_points(m, grid.nodes)
    nearest, _ = tree.query(node_points)
    uncovered = nearest > _tree_radius(m, r) * (1 + 1e-9)
    if uncovered.any():
        raise CoverageGap(f"{int(uncovered.sum())} nodes outside every ball of radius {r:.3g}")
    counts = tree.query_ball_point(node_points, _tree_radius(m, 2 * r), return_length=True)
    return Covering(
        centers=centers,
        radius=r,
        spacing=spacing,
        multiplicity=int(np.max(counts)),
        deep_flags=deep,
        shifted=shifted,
    )


def ball_mass_ratios(f: ScalarField, covering: Covering, p: float) -> np.ndarray:
    """``||phi||^p_{L^p(2B)} / ||phi||^p_{L^p(B)}`` for every ball (inf on empty mass)."""
    grid = f.grid
    w = grid.weights
    ratios = np.empty(len(covering))
    for i, c in enumerate(covering.centers):
        inner = grid.ball(c, covering.radius)
        outer = grid.ball(c, 2 * covering.radius)
        m_inner = lp_mass(f.values[inner], w[inner], p)
        m_outer = lp_mass(f.values[outer], w[outer], p)
        ratios[i] = m_outer / m_inner if m_inner > 0 else math.inf
    return ratios


@dataclass(frozen=True, eq=False)
class GoodBallReport:
    d: float
    p: float
    covering: Covering
    ratios: np.ndarray
    good_doubling: np.ndarray
    n_lift: np.ndarray
    good_frequency: List[Optional[bool]]
    mass_fraction: float

    @property
    def good_count(self) -> int:
        return int(self.good_doubling.sum())

    @property
    def bad_count(self) -> int:
        return len(self.good_doubling) - self.good_count

    @property
    def bad_mass_bound(self) -> float:
        """Covering multiplicity times 2^-d, the ceiling on the mass outside G_d."""
        return self.covering.multiplicity * 2.0 ** (-self.d)

    def rows(self) -> List[dict]:
        rows = []
        for i, center in enumerate(self.covering.centers):
            rows.append(
                {
                    "ball_index": i,
                    "center": [float(c) for c in center],
                    "r": self.covering.radius,
                    "Np_ratio": float(self.ratios[i]),
                    "good_doubling": bool(self.good_doubling[i]),
                    "N_lift": None if np.isnan(self.n_lift[i]) else float(self.n_lift[i]),
                    "good_frequency": self.good_frequency[i],
                    "deep_flag": bool(self.covering.deep_flags[i]),
                }
            )
        return rows


def classify_good_balls(
    f: ScalarField,
    covering: Covering,
    d: float,
    p: float = 2.0,
    lift: Optional[Eigenfunction] = None,
    ratios: Optional[np.ndarray] = None,
) -> GoodBallReport:
    """Doubling verdicts (mass ratio <= 2^d) and the L^p mass share of G_d.

    With ``lift`` each ball also gets a frequency verdict N(x, r) <= d when
    its radius is within the lift radius cap.
    """
    grid = f.grid
    if ratios is None:
        ratios = ball_mass_ratios(f, covering, p)
    good = ratios <= 2.0**d
    union = np.zeros(grid.node_count, dtype=bool)
    for i in np.nonzero(good)[0]:
        union[grid.ball(covering.centers[i], covering.radius)] = True
    w = grid.weights
    fraction = lp_mass(f.values[union], w[union], p) / lp_mass(f.values, w, p)

    n_lift = np.full(len(covering), np.nan)
    verdicts: List[Optional[bool]] = [None] * len(covering)
    if lift is not None and covering.radius <= numerics.lift_radius_cap:
        for i, c in enumerate(covering.centers):
            try:
                n_lift[i] = lift_frequency(lift, c, covering.radius).N
            except QuadratureUnderResolved as exc:
                logger.warning("Ball %d: %s", i, exc)
                continue
            verdicts[i] = bool(n_lift[i] <= d)
    return GoodBallReport(
        d=d,
        p=p,
        covering=covering,
        ratios=ratios,
        good_doubling=good,
        n_lift=n_lift,
        good_frequency=verdicts,
        mass_fraction=float(fraction),
    )


def smallest_good_threshold(reports: Sequence[GoodBallReport], target: float = 0.9) -> Optional[float]:
    """Smallest d whose good union carries at least ``target`` of the mass."""
    for report in sorted(reports, key=lambda rep: rep.d):
        if report.mass_fraction >= target:
            return report.d
    return None
