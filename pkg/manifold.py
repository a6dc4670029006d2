"""Explicit closed surfaces: the flat torus and the round sphere.

Supplies geodesic distance, area quadrature grids and metric balls to every
other module. All objects here are immutable after construction and may be
shared read-only between worker processes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from config import numerics
from errors import EmptyBall, ResolutionTooCoarse

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

EDGE_AXIS = 0
EDGE_DIAGONAL = 1
EDGE_POLAR = 2


class ManifoldKind(str, Enum):
    FLAT_TORUS = "flat_torus"
    ROUND_SPHERE = "round_sphere"


class Point(NamedTuple):
    """Chart coordinates: (x, y) on the torus, (colatitude, longitude) on the sphere."""

    x1: float
    x2: float


PointLike = Union[Point, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class ManifoldModel:
    """One of the explicit closed surfaces with its metric and area form."""

    kind: ManifoldKind
    lx: float = TWO_PI
    ly: float = TWO_PI
    radius: float = 1.0

    def __post_init__(self) -> None:
        if self.lx <= 0 or self.ly <= 0 or self.radius <= 0:
            raise ValueError("side lengths and radius must be positive")

    @classmethod
    def flat_torus(cls, lx: float = TWO_PI, ly: float = TWO_PI) -> "ManifoldModel":
        return cls(ManifoldKind.FLAT_TORUS, lx=lx, ly=ly)

    @classmethod
    def round_sphere(cls, radius: float = 1.0) -> "ManifoldModel":
        return cls(ManifoldKind.ROUND_SPHERE, radius=radius)

    @classmethod
    def from_spec(cls, spec) -> "ManifoldModel":
        if spec.kind == ManifoldKind.FLAT_TORUS.value:
            return cls.flat_torus(spec.lx, spec.ly)
        return cls.round_sphere(spec.radius)

    @property
    def dimension(self) -> int:
        return 2

    @property
    def is_torus(self) -> bool:
        return self.kind == ManifoldKind.FLAT_TORUS

    @property
    def area(self) -> float:
        if self.is_torus:
            return self.lx * self.ly
        return 4.0 * math.pi * self.radius**2

    @property
    def diameter(self) -> float:
        if self.is_torus:
            return 0.5 * math.hypot(self.lx, self.ly)
        return math.pi * self.radius

    @property
    def periods(self) -> np.ndarray:
        return np.array([self.lx, self.ly])

    def describe(self) -> dict:
        if self.is_torus:
            return {"kind": self.kind.value, "lx": self.lx, "ly": self.ly}
        return {"kind": self.kind.value, "radius": self.radius}

    def reduce(self, points: PointLike) -> np.ndarray:
        """Reduce chart coordinates to the fundamental domain."""
        pts = np.array(points, dtype=float, copy=True)
        if self.is_torus:
            pts = np.mod(pts, self.periods)
            # mod can return the period itself for tiny negative inputs
            pts[..., 0] = np.where(pts[..., 0] >= self.lx, 0.0, pts[..., 0])
            pts[..., 1] = np.where(pts[..., 1] >= self.ly, 0.0, pts[..., 1])
            return pts
        theta = np.mod(pts[..., 0], TWO_PI)
        flipped = theta > math.pi
        theta = np.where(flipped, TWO_PI - theta, theta)
        phi = np.mod(pts[..., 1] + np.where(flipped, math.pi, 0.0), TWO_PI)
        pts[..., 0] = theta
        pts[..., 1] = phi
        return pts

    def minimal_image(self, delta: np.ndarray) -> np.ndarray:
        """Torus only: shift chart displacements into [-L/2, L/2)."""
        periods = self.periods
        return delta - periods * np.floor(delta / periods + 0.5)

    def to_ambient(self, points: PointLike) -> np.ndarray:
        """Sphere only: chart (theta, phi) to ambient R^3 on the sphere of radius R."""
        pts = np.asarray(points, dtype=float)
        theta, phi = pts[..., 0], pts[..., 1]
        sin_t = np.sin(theta)
        return self.radius * np.stack(
            [sin_t * np.cos(phi), sin_t * np.sin(phi), np.cos(theta)], axis=-1
        )

    def from_ambient(self, xyz: np.ndarray) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=float)
        norm = np.linalg.norm(xyz, axis=-1)
        theta = np.arccos(np.clip(xyz[..., 2] / norm, -1.0, 1.0))
        phi = np.mod(np.arctan2(xyz[..., 1], xyz[..., 0]), TWO_PI)
        return np.stack([theta, phi], axis=-1)

    def distance(self, a: PointLike, b: PointLike) -> np.ndarray:
        """Vectorised geodesic distance; broadcasts over leading axes."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.is_torus:
            delta = np.abs(a - b)
            delta = np.mod(delta, self.periods)
            delta = np.minimum(delta, self.periods - delta)
            return np.hypot(delta[..., 0], delta[..., 1])
        ua = self.to_ambient(a) / self.radius
        ub = self.to_ambient(b) / self.radius
        cross = np.linalg.norm(np.cross(ua, ub), axis=-1)
        dot = np.sum(ua * ub, axis=-1)
        return self.radius * np.arctan2(cross, dot)

    def random_points(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples with respect to the area form."""
        if self.is_torus:
            return rng.uniform(0.0, 1.0, size=(count, 2)) * self.periods
        theta = np.arccos(1.0 - 2.0 * rng.uniform(0.0, 1.0, size=count))
        phi = rng.uniform(0.0, TWO_PI, size=count)
        return np.stack([theta, phi], axis=-1)


def geodesic_distance(m: ManifoldModel, a: PointLike, b: PointLike) -> float:
    """Geodesic distance between two points of ``m``."""
    return float(m.distance(a, b))


@dataclass(frozen=True, eq=False)
class SampleGrid:
    """Quadrature nodes, positive area weights and the neighbour graph.

    Nodes are stored row-major: node ``i * shape[1] + j`` sits at
    ``(axis1[i], axis2[j])``. Edges carry their geodesic lengths; ``edge_kind``
    marks axis, diagonal and across-the-pole edges.
    """

    manifold: ManifoldModel
    shape: Tuple[int, int]
    axis1: np.ndarray
    axis2: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    spacing: float
    edges: np.ndarray
    edge_lengths: np.ndarray
    edge_kind: np.ndarray

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    @property
    def resolution(self) -> int:
        return self.shape[0]

    def index(self, i: int, j: int) -> int:
        return (i % self.shape[0]) * self.shape[1] + (j % self.shape[1])

    def as_array(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    def _graph(self, mask: np.ndarray) -> sparse.csr_matrix:
        rows = self.edges[mask, 0]
        cols = self.edges[mask, 1]
        lengths = self.edge_lengths[mask]
        n = self.node_count
        graph = sparse.coo_matrix(
            (np.concatenate([lengths, lengths]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(n, n),
        )
        return graph.tocsr()

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Full 8-neighbour graph (plus polar edges) weighted by edge length."""
        return self._graph(np.ones(len(self.edges), dtype=bool))

    @cached_property
    def axis_adjacency(self) -> sparse.csr_matrix:
        """4-neighbour graph used for flood fill."""
        return self._graph(self.edge_kind != EDGE_DIAGONAL)

    @cached_property
    def polar_rings(self) -> Tuple[np.ndarray, np.ndarray]:
        """Sphere only: node indices of the northernmost and southernmost rings."""
        n1, n2 = self.shape
        top = np.arange(n2)
        return top, (n1 - 1) * n2 + top

    @cached_property
    def _tree(self) -> cKDTree:
        if self.manifold.is_torus:
            return cKDTree(self.nodes, boxsize=self.manifold.periods)
        return cKDTree(self.manifold.to_ambient(self.nodes))

    def distances_from(self, center: PointLike) -> np.ndarray:
        return self.manifold.distance(self.nodes, np.asarray(center, dtype=float))

    def nearest_node(self, point: PointLike) -> int:
        point = self.manifold.reduce(np.asarray(point, dtype=float))
        if self.manifold.is_torus:
            _, idx = self._tree.query(point)
        else:
            _, idx = self._tree.query(self.manifold.to_ambient(point))
        return int(idx)

    def ball(self, center: PointLike, r: float) -> np.ndarray:
        """Sorted indices of nodes within geodesic distance ``r`` of ``center``."""
        if r < 0.5 * self.spacing:
            raise EmptyBall(f"radius {r:.3g} below half the mesh size {self.spacing:.3g}")
        m = self.manifold
        center = m.reduce(np.asarray(center, dtype=float))
        slack = 1e-9 * self.spacing
        if r + slack >= m.diameter:
            return np.arange(self.node_count)
        if m.is_torus:
            candidates = self._tree.query_ball_point(center, r + 2 * slack)
        else:
            chord = 2.0 * m.radius * math.sin(min(r + 2 * slack, m.diameter) / (2.0 * m.radius))
            candidates = self._tree.query_ball_point(m.to_ambient(center), chord * (1 + 1e-12))
        candidates = np.asarray(candidates, dtype=np.int64)
        if candidates.size:
            d = m.distance(self.nodes[candidates], center)
            candidates = np.sort(candidates[d <= r + slack])
        if candidates.size == 0:
            raise EmptyBall(f"no grid node within {r:.3g} of {tuple(center)}")
        return candidates


def build_grid(
    m: ManifoldModel, resolution: int, min_resolution: Optional[int] = None
) -> SampleGrid:
    """Build the quadrature grid of ``m`` with ``resolution`` nodes per axis.

    The torus gets a uniform n x n lattice. The sphere gets n colatitude rings
    offset by half a cell from the poles and 2n longitudes; each node carries
    the exact area of its latitude-longitude cell.
    """
    floor = numerics.min_grid_resolution if min_resolution is None else min_resolution
    if resolution < floor:
        raise ResolutionTooCoarse(f"resolution {resolution} < {floor}")

    if m.is_torus:
        n1 = n2 = resolution
        axis1 = np.arange(n1) * (m.lx / n1)
        axis2 = np.arange(n2) * (m.ly / n2)
        weights = np.full(n1 * n2, (m.lx / n1) * (m.ly / n2))
        spacing = max(m.lx / n1, m.ly / n2)
    else:
        n1, n2 = resolution, 2 * resolution
        d_theta = math.pi / n1
        d_phi = TWO_PI / n2
        axis1 = (np.arange(n1) + 0.5) * d_theta
        axis2 = np.arange(n2) * d_phi
        band = m.radius**2 * d_phi * (np.cos(axis1 - 0.5 * d_theta) - np.cos(axis1 + 0.5 * d_theta))
        weights = np.repeat(band, n2)
        spacing = m.radius * d_theta

    a1, a2 = np.meshgrid(axis1, axis2, indexing="ij")
    nodes = np.stack([a1.ravel(), a2.ravel()], axis=-1)

    edges, kinds = _stencil_edges(n1, n2, periodic_rows=m.is_torus)
    lengths = m.distance(nodes[edges[:, 0]], nodes[edges[:, 1]])

    total = float(weights.sum())
    if abs(total - m.area) > numerics.grid_weight_rtol * m.area:
        logger.warning("Grid weights sum to %.12g, area is %.12g", total, m.area)

    logger.debug("Built %s grid %dx%d (h=%.4g)", m.kind.value, n1, n2, spacing)
    return SampleGrid(
        manifold=m,
        shape=(n1, n2),
        axis1=axis1,
        axis2=axis2,
        nodes=nodes,
        weights=weights,
        spacing=spacing,
        edges=edges,
        edge_lengths=lengths,
        edge_kind=kinds,
    )


def _stencil_edges(n1: int, n2: int, periodic_rows: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Undirected 8-neighbour edges on an n1 x n2 lattice, periodic in j.

    Rows wrap on the torus. On the sphere the first and last rings are joined
    across the pole instead (node j to node j + n2/2).
    """
    i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    i = i.ravel()
    j = j.ravel()
    idx = i * n2 + j

    pieces = []
    kinds = []

    def add(mask: np.ndarray, di: int, dj: int, kind: int) -> None:
        ii = i[mask] + di
        jj = (j[mask] + dj) % n2
        if periodic_rows:
            ii = ii % n1
        pieces.append(np.stack([idx[mask], ii * n2 + jj], axis=-1))
        kinds.append(np.full(int(mask.sum()), kind, dtype=np.int8))

    everything = np.ones_like(i, dtype=bool)
    below_last = everything if periodic_rows else i < n1 - 1

    add(everything, 0, 1, EDGE_AXIS)
    add(below_last, 1, 0, EDGE_AXIS)
    add(below_last, 1, 1, EDGE_DIAGONAL)
    add(below_last, 1, -1, EDGE_DIAGONAL)

    if not periodic_rows:
        half = n2 // 2
        for ring in (0, n1 - 1):
            mask = (i == ring) & (j < half)
            pieces.append(np.stack([idx[mask], ring * n2 + j[mask] + half], axis=-1))
            kinds.append(np.full(int(mask.sum()), EDGE_POLAR, dtype=np.int8))

    return np.concatenate(pieces).astype(np.int64), np.concatenate(kinds)


def metric_ball(m: ManifoldModel, grid: SampleGrid, center: PointLike, r: float) -> np.ndarray:
    """All grid nodes at geodesic distance <= r from ``center``."""
    if grid.manifold != m:
        raise ValueError("grid was built on a different manifold")
    return grid.ball(center, r)


def default_resolution(
    m: ManifoldModel,
    eigenvalue: float,
    nodes_per_wavelength: Optional[float] = None,
    min_resolution: Optional[int] = None,
) -> int:
    """Nodes per axis such that the mesh size is at most one twelfth of a wavelength."""
    per_wavelength = nodes_per_wavelength or numerics.nodes_per_wavelength
    floor = numerics.min_grid_resolution if min_resolution is None else min_resolution
    wavelength = TWO_PI / math.sqrt(eigenvalue)
    extent = max(m.lx, m.ly) if m.is_torus else math.pi * m.radius
    return max(floor, math.ceil(extent * per_wavelength / wavelength - 1e-9))


def triangle_defect(m: ManifoldModel, triples: int = 1000, seed: int = 0) -> float:
    """Largest violation d(a,c) - d(a,b) - d(b,c) over random triples (<= 0 when sound)."""
    rng = np.random.default_rng(seed)
    a, b, c = (m.random_points(triples, rng) for _ in range(3))
    return float(np.max(m.distance(a, c) - m.distance(a, b) - m.distance(b, c)))
