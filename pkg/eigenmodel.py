"""Closed-form Laplace eigenfunctions on the torus and the sphere.

Torus modes are finite sums ``sum a_i sin(k_i x' + l_i y' + psi_i)`` with
``x' = 2 pi x / lx`` and ``y' = 2 pi y / ly``; every summand must share the
eigenvalue. Sphere families are real spherical harmonics of degree ``l`` and
order ``m`` and the highest-weight beams ``Re(x1 + i x2)^l``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln, lpmv

from config import numerics
from errors import DegenerateEigenfunction, MixedEigenvalue, PoleGradient
from manifold import ManifoldModel, PointLike, SampleGrid
from manifold import default_resolution as _resolution_for

logger = logging.getLogger(__name__)

# Two eigenvalues closer than this (relative) are considered equal
_EIGENVALUE_RTOL = 1e-12


@dataclass(frozen=True)
class TorusTerm:
    k: int
    l: int
    amplitude: float = 1.0
    phase: float = 0.0


@dataclass(frozen=True)
class TorusMode:
    terms: Tuple[TorusTerm, ...]

    name = "torus_mode"


@dataclass(frozen=True)
class SphereHarmonic:
    degree: int
    order: int
    amplitude: float = 1.0

    name = "sphere_harmonic"


@dataclass(frozen=True)
class GaussianBeam:
    degree: int

    name = "gaussian_beam"


Family = Union[TorusMode, SphereHarmonic, GaussianBeam]


@dataclass(frozen=True)
class Eigenfunction:
    manifold: ManifoldModel
    eigenvalue: float
    family: Family
    seed: Optional[int] = None

    @property
    def frequency(self) -> float:
        return math.sqrt(self.eigenvalue)

    @property
    def label(self) -> str:
        fam = self.family
        if isinstance(fam, TorusMode):
            if len(fam.terms) == 1 and fam.terms[0].l == 0 and fam.terms[0].phase == 0.0:
                return f"sin{fam.terms[0].k}x"
            return f"torus[{len(fam.terms)} terms, lambda={self.eigenvalue:g}]"
        if isinstance(fam, GaussianBeam):
            return f"beam{fam.degree}"
        return f"Y{fam.degree},{fam.order}"


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Values sampled on the nodes of a grid."""

    grid: SampleGrid
    values: np.ndarray
    eigenvalue: Optional[float] = None
    label: str = ""
    # Closed form the values were sampled from, when known
    source: Optional[Eigenfunction] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.node_count,):
            raise ValueError(
                f"field has {values.size} values for {self.grid.node_count} grid nodes"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def zero_threshold(self) -> float:
        """Values below this magnitude are treated as lying on the nodal set."""
        return numerics.zero_band * self.max_abs

    @property
    def node_thresholds(self) -> np.ndarray:
        """Zero band per node.

        A beam is a product sin^l(theta) cos(l phi), so its sign stays exact
        where the envelope is far below the global band; the band follows the
        envelope there.
        """
        scale = np.full(self.grid.node_count, self.max_abs)
        if self.source is not None and isinstance(self.source.family, GaussianBeam):
            scale *= np.abs(np.sin(self.grid.nodes[:, 0])) ** self.source.family.degree
        return numerics.zero_band * scale

    def scaled(self, factor: float) -> "ScalarField":
        source = self.source if factor > 0 else None
        return ScalarField(self.grid, factor * self.values, self.eigenvalue, self.label, source)

    def integral(self, mask: Optional[np.ndarray] = None) -> float:
        w = self.grid.weights if mask is None else self.grid.weights[mask]
        v = self.values if mask is None else self.values[mask]
        return float(np.dot(w, v))


def _coerce_term(term: Union[TorusTerm, Sequence[float]]) -> TorusTerm:
    if isinstance(term, TorusTerm):
        return term
    k, l, *rest = term
    amplitude = float(rest[0]) if len(rest) > 0 else 1.0
    phase = float(rest[1]) if len(rest) > 1 else 0.0
    return TorusTerm(int(k), int(l), amplitude, phase)


def _torus_eigenvalue(m: ManifoldModel, term: TorusTerm) -> float:
    return (2 * math.pi * term.k / m.lx) ** 2 + (2 * math.pi * term.l / m.ly) ** 2


def make_torus_mode(
    spec: Iterable[Union[TorusTerm, Sequence[float]]], manifold: Optional[ManifoldModel] = None
) -> Eigenfunction:
    """Build ``sum a_i sin(k_i x + l_i y + psi_i)`` from ``(k, l, amplitude, phase)`` tuples."""
    m = manifold or ManifoldModel.flat_torus()
    if not m.is_torus:
        raise ValueError("torus modes need a flat torus")
    terms = tuple(_coerce_term(t) for t in spec)
    if not terms:
        raise DegenerateEigenfunction("empty mode list")
    if all(t.amplitude == 0 for t in terms):
        raise DegenerateEigenfunction("all amplitudes are zero")

    eigenvalues = [_torus_eigenvalue(m, t) for t in terms]
    lam = eigenvalues[0]
    for term, other in zip(terms[1:], eigenvalues[1:]):
        if abs(other - lam) > _EIGENVALUE_RTOL * max(lam, other):
            raise MixedEigenvalue(
                f"({term.k},{term.l}) has eigenvalue {other:g}, first term has {lam:g}"
            )
    if lam == 0:
        raise DegenerateEigenfunction("constant mode (k = l = 0) is excluded")
    return Eigenfunction(m, lam, TorusMode(terms))


def lattice_points(lam: int) -> List[Tuple[int, int]]:
    """Integer (k, l) with k^2 + l^2 = lam, one representative per +/- pair."""
    points = []
    top = math.isqrt(lam)
    for k in range(0, top + 1):
        rest = lam - k * k
        l = math.isqrt(rest)
        if l * l != rest:
            continue
        for ll in {l, -l}:
            if k > 0 or ll > 0:
                points.append((k, ll))
    return sorted(points)


def random_torus_combination(
    lam: int, seed: int, manifold: Optional[ManifoldModel] = None
) -> Eigenfunction:
    """Seeded generic element of the eigenspace ``k^2 + l^2 = lam``.

    Amplitudes are standard normal and phases uniform on [0, 2 pi).
    """
    points = lattice_points(int(lam))
    if not points:
        raise DegenerateEigenfunction(f"{lam} is not a sum of two squares")
    rng = np.random.default_rng(seed)
    amplitudes = rng.standard_normal(len(points))
    phases = rng.uniform(0.0, 2 * math.pi, len(points))
    terms = [
        TorusTerm(k, l, float(a), float(psi))
        for (k, l), a, psi in zip(points, amplitudes, phases)
    ]
    e = make_torus_mode(terms, manifold)
    logger.debug("Random torus combination lambda=%s seed=%s (%d terms)", lam, seed, len(terms))
    return Eigenfunction(e.manifold, e.eigenvalue, e.family, seed=seed)


def make_gaussian_beam(degree: int, manifold: Optional[ManifoldModel] = None) -> Eigenfunction:
    """``sin^l(theta) cos(l phi)`` with sup norm 1 and eigenvalue l(l+1)/R^2."""
    m = manifold or ManifoldModel.round_sphere()
    if m.is_torus:
        raise ValueError("Gaussian beams live on the sphere")
    if degree < 1:
        raise DegenerateEigenfunction("beam degree must be at least 1")
    return Eigenfunction(m, degree * (degree + 1) / m.radius**2, GaussianBeam(degree))


def make_sphere_harmonic(
    degree: int, order: int, amplitude: float = 1.0, manifold: Optional[ManifoldModel] = None
) -> Eigenfunction:
    """Real orthonormal spherical harmonic; negative orders use sin(|m| phi)."""
    m = manifold or ManifoldModel.round_sphere()
    if m.is_torus:
        raise ValueError("spherical harmonics live on the sphere")
    if degree < 1:
        raise DegenerateEigenfunction("degree 0 is the constant function")
    if abs(order) > degree:
        raise ValueError(f"order {order} exceeds degree {degree}")
    if amplitude == 0:
        raise DegenerateEigenfunction("amplitude is zero")
    return Eigenfunction(
        m, degree * (degree + 1) / m.radius**2, SphereHarmonic(degree, order, amplitude)
    )


def _harmonic_norm(degree: int, order: int) -> float:
    am = abs(order)
    log_ratio = gammaln(degree - am + 1) - gammaln(degree + am + 1)
    factor = math.sqrt((2 * degree + 1) / (4 * math.pi)) * math.exp(0.5 * log_ratio)
    return factor * (math.sqrt(2.0) if order != 0 else 1.0)


def _legendre(order: int, degree: int, x: np.ndarray) -> np.ndarray:
    if order > degree or order < 0:
        return np.zeros_like(x)
    return lpmv(order, degree, x)


def _legendre_dtheta(order: int, degree: int, theta: np.ndarray) -> np.ndarray:
    """d/dtheta of P_l^m(cos theta), Condon-Shortley phase."""
    x = np.cos(theta)
    if order == 0:
        return _legendre(1, degree, x)
    return 0.5 * (
        _legendre(order + 1, degree, x)
        - (degree + order) * (degree - order + 1) * _legendre(order - 1, degree, x)
    )


def values(e: Eigenfunction, points: np.ndarray) -> np.ndarray:
    """Vectorised evaluation at an (N, 2) array of chart points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a1, a2 = pts[:, 0], pts[:, 1]
    fam = e.family
    m = e.manifold
    if isinstance(fam, TorusMode):
        out = np.zeros(len(pts))
        for t in fam.terms:
            out += t.amplitude * np.sin(
                2 * math.pi * t.k / m.lx * a1 + 2 * math.pi * t.l / m.ly * a2 + t.phase
            )
        return out
    if isinstance(fam, GaussianBeam):
        return np.sin(a1) ** fam.degree * np.cos(fam.degree * a2)
    am = abs(fam.order)
    radial = fam.amplitude * _harmonic_norm(fam.degree, fam.order) * _legendre(am, fam.degree, np.cos(a1))
    if fam.order > 0:
        return radial * np.cos(am * a2)
    if fam.order < 0:
        return radial * np.sin(am * a2)
    return radial


def gradients(e: Eigenfunction, points: np.ndarray, at_pole: str = "raise") -> np.ndarray:
    """Gradient components in the orthonormal frame, shape (N, 2).

    Torus: (d/dx, d/dy). Sphere: (d/dtheta, d/dphi / sin theta) / R. At the
    poles the second frame vector is undefined; ``at_pole="limit"`` evaluates
    just off the pole along the same meridian instead of raising PoleGradient.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
    fam = e.family
    m = e.manifold
    if isinstance(fam, TorusMode):
        out = np.zeros_like(pts)
        for t in fam.terms:
            kx = 2 * math.pi * t.k / m.lx
            ky = 2 * math.pi * t.l / m.ly
            c = t.amplitude * np.cos(kx * pts[:, 0] + ky * pts[:, 1] + t.phase)
            out[:, 0] += kx * c
            out[:, 1] += ky * c
        return out

    order = fam.degree if isinstance(fam, GaussianBeam) else fam.order
    sin_t = np.sin(pts[:, 0])
    at_poles = np.abs(sin_t) < 1e-12
    if np.any(at_poles) and order != 0:
        if at_pole != "limit":
            raise PoleGradient("frame (d_theta, d_phi / sin theta) is undefined at the poles")
        theta = pts[:, 0]
        pts[at_poles, 0] = np.where(theta[at_poles] < 1.0, 1e-9, math.pi - 1e-9)
        sin_t = np.sin(pts[:, 0])

    theta, phi = pts[:, 0], pts[:, 1]
    out = np.zeros_like(pts)
    if isinstance(fam, GaussianBeam):
        ell = fam.degree
        base = ell * sin_t ** (ell - 1)
        out[:, 0] = base * np.cos(theta) * np.cos(ell * phi)
        out[:, 1] = -base * np.sin(ell * phi)
        return out / m.radius

    am = abs(fam.order)
    norm = fam.amplitude * _harmonic_norm(fam.degree, fam.order)
    radial = norm * _legendre(am, fam.degree, np.cos(theta))
    d_radial = norm * _legendre_dtheta(am, fam.degree, theta)
    if fam.order > 0:
        out[:, 0] = d_radial * np.cos(am * phi)
        dphi = -am * radial * np.sin(am * phi)
    elif fam.order < 0:
        out[:, 0] = d_radial * np.sin(am * phi)
        dphi = am * radial * np.cos(am * phi)
    else:
        out[:, 0] = d_radial
        dphi = np.zeros_like(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[:, 1] = np.where(at_poles & (order == 0), 0.0, dphi / sin_t)
    return out / m.radius


def evaluate(e: Eigenfunction, p: PointLike) -> float:
    return float(values(e, np.asarray(p, dtype=float)[None, :])[0])


def gradient(e: Eigenfunction, p: PointLike, at_pole: str = "raise") -> np.ndarray:
    return gradients(e, np.asarray(p, dtype=float)[None, :], at_pole=at_pole)[0]


def chart_gradients(e: Eigenfunction, points: np.ndarray) -> np.ndarray:
    """Partial derivatives in chart coordinates, shape (N, 2).

    Equal to :func:`gradients` on the torus; (d/dtheta, d/dphi) on the sphere.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    g = gradients(e, pts, at_pole="limit")
    if e.manifold.is_torus:
        return g
    r = e.manifold.radius
    return np.stack([r * g[:, 0], r * np.sin(pts[:, 0]) * g[:, 1]], axis=-1)


def chart_hessians(e: Eigenfunction, points: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Second partial derivatives in chart coordinates, shape (N, 2, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    fam = e.family
    if isinstance(fam, TorusMode):
        m = e.manifold
        out = np.zeros((len(pts), 2, 2))
        for t in fam.terms:
            k = np.array([2 * math.pi * t.k / m.lx, 2 * math.pi * t.l / m.ly])
            s = t.amplitude * np.sin(k[0] * pts[:, 0] + k[1] * pts[:, 1] + t.phase)
            out -= s[:, None, None] * np.outer(k, k)[None]
        return out

    # central differences of the closed-form chart gradient
    columns = []
    for axis in range(2):
        shift = np.zeros(2)
        shift[axis] = step
        columns.append((chart_gradients(e, pts + shift) - chart_gradients(e, pts - shift)) / (2 * step))
    hess = np.stack(columns, axis=-1)
    return 0.5 * (hess + np.swapaxes(hess, 1, 2))


def sample(e: Eigenfunction, grid: SampleGrid) -> ScalarField:
    """Evaluate ``e`` on every node of ``grid``."""
    if grid.manifold != e.manifold:
        raise ValueError("grid and eigenfunction live on different manifolds")
    return ScalarField(grid, values(e, grid.nodes), e.eigenvalue, e.label, e)


def default_resolution(e: Eigenfunction, nodes_per_wavelength: Optional[float] = None) -> int:
    return _resolution_for(e.manifold, e.eigenvalue, nodes_per_wavelength)


@dataclass(frozen=True)
class ResidualReport:
    eigenvalue: float
    resolution: int
    max_residual: float
    relative_residual: float
    tolerance: float = field(default_factory=lambda: numerics.residual_tolerance)

    @property
    def passed(self) -> bool:
        return self.relative_residual <= self.tolerance


def discrete_laplacian(grid: SampleGrid, values_: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Second-order finite-difference Laplacian and the mask of nodes it is defined on."""
    u = grid.as_array(values_)
    m = grid.manifold
    n1, n2 = grid.shape
    if m.is_torus:
        hx, hy = m.lx / n1, m.ly / n2
        lap = (np.roll(u, -1, 0) - 2 * u + np.roll(u, 1, 0)) / hx**2
        lap += (np.roll(u, -1, 1) - 2 * u + np.roll(u, 1, 1)) / hy**2
        return lap.ravel(), np.ones(grid.node_count, dtype=bool)

    d_theta = math.pi / n1
    d_phi = 2 * math.pi / n2
    theta = grid.axis1[:, None]
    sin_t = np.sin(theta)
    up = np.sin(theta + 0.5 * d_theta)
    down = np.sin(theta - 0.5 * d_theta)
    radial = (up * (np.roll(u, -1, 0) - u) - down * (u - np.roll(u, 1, 0))) / (sin_t * d_theta**2)
    angular = (np.roll(u, -1, 1) - 2 * u + np.roll(u, 1, 1)) / (sin_t**2 * d_phi**2)
    lap = (radial + angular) / m.radius**2
    mask = np.zeros(grid.shape, dtype=bool)
    mask[1:-1, :] = True
    return lap.ravel(), mask.ravel()


def residual_check(e: Eigenfunction, grid: SampleGrid) -> ResidualReport:
    """Max of |Delta_h phi + lambda phi| over interior stencils.

    The relative residual divides by ``lambda * max|phi|``; it is what the
    pass/fail tolerance applies to.
    """
    field_ = sample(e, grid)
    lap, mask = discrete_laplacian(grid, field_.values)
    residual = np.abs(lap + e.eigenvalue * field_.values)[mask]
    worst = float(residual.max())
    relative = worst / (e.eigenvalue * field_.max_abs)
    logger.debug("Residual %s n=%d: %.3e (relative %.3e)", e.label, grid.resolution, worst, relative)
    return ResidualReport(e.eigenvalue, grid.resolution, worst, relative)


def gradient_bound_ratio(e: Eigenfunction, grid: SampleGrid) -> float:
    """max |grad phi| / (sqrt(lambda) max |phi|) over the grid nodes."""
    g = gradients(e, grid.nodes, at_pole="limit")
    field_ = sample(e, grid)
    return float(np.max(np.hypot(g[:, 0], g[:, 1])) / (e.frequency * field_.max_abs))


def mean_zero_defect(f: ScalarField) -> float:
    """|integral of phi| relative to the integral of |phi|."""
    w = f.grid.weights
    return abs(float(np.dot(w, f.values))) / float(np.dot(w, np.abs(f.values)))


def gamma_norm_ratio(f: ScalarField, degree: int, p: float) -> float:
    """``||phi||_p^p`` divided by Gamma(l p/2 + 1) / Gamma(l p/2 + 3/2)."""
    mass = float(np.dot(f.grid.weights, np.abs(f.values) ** p))
    a = degree * p / 2.0
    return mass / math.exp(gammaln(a + 1.0) - gammaln(a + 1.5))


def to_descriptor(e: Eigenfunction) -> dict:
    """JSON-ready descriptor ``{"manifold", "family", "params", "seed"}``."""
    fam = e.family
    if isinstance(fam, TorusMode):
        params = {
            "terms": [[t.k, t.l, t.amplitude, t.phase] for t in fam.terms],
        }
    elif isinstance(fam, GaussianBeam):
        params = {"degree": fam.degree}
    else:
        params = {"degree": fam.degree, "order": fam.order, "amplitude": fam.amplitude}
    return {"manifold": e.manifold.describe(), "family": fam.name, "params": params, "seed": e.seed}


def from_descriptor(data: dict) -> Eigenfunction:
    md = data["manifold"]
    if md["kind"] == "flat_torus":
        m = ManifoldModel.flat_torus(md.get("lx", 2 * math.pi), md.get("ly", 2 * math.pi))
    else:
        m = ManifoldModel.round_sphere(md.get("radius", 1.0))
    params = data.get("params", {})
    family = data["family"]
    if family == TorusMode.name:
        e = make_torus_mode(params["terms"], m)
    elif family == GaussianBeam.name:
        e = make_gaussian_beam(params["degree"], m)
    elif family == SphereHarmonic.name:
        e = make_sphere_harmonic(params["degree"], params["order"], params.get("amplitude", 1.0), m)
    else:
        raise ValueError(f"unknown eigenfunction family '{family}'")
    seed = data.get("seed")
    return Eigenfunction(e.manifold, e.eigenvalue, e.family, seed=seed)
