"""Nodal sets, nodal domains, tubes and the nodal distance field.

The nodal set is traced by marching squares on the quadrature grid. On the
sphere the two polar caps, which the latitude-longitude lattice leaves open,
are closed by fans of triangles whose apex carries the mean of the adjacent
ring. Segments are stored in chart coordinates on the torus and in ambient
R^3 coordinates on the sphere.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from config import numerics
from eigenmodel import ScalarField, chart_gradients, chart_hessians, values
from errors import BallMissesNodalSet, EmptyBall, NoSignPresent, NoZeroCrossing
from manifold import EDGE_AXIS, EDGE_POLAR, PointLike, Point, SampleGrid

logger = logging.getLogger(__name__)

_QUAD_EDGES = (np.array([0, 1, 2, 3]), np.array([1, 2, 3, 0]))
_TRIANGLE_EDGES = (np.array([0, 1, 2]), np.array([1, 2, 0]))


class NodalDomains(NamedTuple):
    labels: np.ndarray
    signs: np.ndarray
    count: int


class DensityRadius(NamedTuple):
    radius: float
    constant: float


class AsymmetryResult(NamedTuple):
    ratio: float
    meets_nodal_set: bool


class InscribedBall(NamedTuple):
    node: int
    center: Point
    radius: float


@dataclass(frozen=True, eq=False)
class NodalGeometry:
    """Everything derived from the zero set of one sampled field.

    ``domain_labels`` uses 0 for zero-band nodes; ``domain_signs[label]`` is
    +1 or -1 (index 0 holds 0).
    """

    field: ScalarField
    segments: np.ndarray
    length: float
    distance_field: ScalarField
    domain_labels: np.ndarray
    domain_signs: np.ndarray
    zero_band: np.ndarray

    @property
    def grid(self) -> SampleGrid:
        return self.field.grid

    @property
    def domain_count(self) -> int:
        return len(self.domain_signs) - 1

    @property
    def distances(self) -> np.ndarray:
        return self.distance_field.values

    @cached_property
    def segment_index(self) -> "_SegmentIndex":
        return _SegmentIndex(self.grid, self.segments)

    def normalized_length(self) -> float:
        """Nodal length divided by sqrt(lambda)."""
        return self.length / math.sqrt(self.field.eigenvalue)

    def segment_chart(self) -> np.ndarray:
        """Segments as chart coordinate pairs, shape (S, 2, 2)."""
        m = self.grid.manifold
        if m.is_torus:
            return m.reduce(self.segments)
        return m.from_ambient(self.segments)

    def describe(self) -> dict:
        return {
            "segments": self.segment_chart().tolist(),
            "domain_count": self.domain_count,
            "length": self.length,
            "density_radius": density_radius(self).radius,
        }


def _band_values(f: ScalarField) -> Tuple[np.ndarray, np.ndarray]:
    v = f.values.copy()
    band = np.abs(v) < f.node_thresholds
    v[band] = 0.0
    return v, band


def _pole_values(grid: SampleGrid, v: np.ndarray, threshold: float) -> Tuple[float, float]:
    north, south = grid.polar_rings
    poles = []
    for ring in (north, south):
        value = float(np.mean(v[ring]))
        poles.append(0.0 if abs(value) < threshold else value)
    return poles[0], poles[1]


def _march(points: np.ndarray, vals: np.ndarray, edges: Tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    """Segments of the {v > 0} boundary in each polygon, shape (S, 2, D).

    Nodes are split into v > 0 and v <= 0. Quads with four crossings are
    resolved by the sign of the average of their corners.
    """
    start, end = edges
    pos = vals > 0
    cross = pos[:, start] != pos[:, end]
    va, vb = vals[:, start], vals[:, end]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(cross, va / (va - vb), 0.0)
    crossings = points[:, start] + t[..., None] * (points[:, end] - points[:, start])
    count = cross.sum(axis=1)

    pieces = []
    rows = np.nonzero(count == 2)[0]
    if rows.size:
        order = np.argsort(~cross[rows], axis=1, kind="stable")[:, :2]
        pieces.append(
            np.stack([crossings[rows, order[:, 0]], crossings[rows, order[:, 1]]], axis=1)
        )

    rows = np.nonzero(count == 4)[0]
    if rows.size:
        centre_pos = vals[rows].mean(axis=1) > 0
        # corners 0 and 2 connect through the centre: cut off corners 1 and 3
        joined = centre_pos == pos[rows, 0]
        first = (np.where(joined, 0, 3), np.where(joined, 1, 0))
        second = (np.where(joined, 2, 1), np.where(joined, 3, 2))
        for ea, eb in (first, second):
            pieces.append(np.stack([crossings[rows, ea], crossings[rows, eb]], axis=1))

    if not pieces:
        return np.zeros((0, 2, points.shape[-1]))
    return np.concatenate(pieces)


def _torus_segments(grid: SampleGrid, v: np.ndarray) -> np.ndarray:
    m = grid.manifold
    n1, n2 = grid.shape
    hx, hy = m.lx / n1, m.ly / n2
    i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    i, j = i.ravel(), j.ravel()
    ip, jp = (i + 1) % n1, (j + 1) % n2
    corners = np.stack([i * n2 + j, ip * n2 + j, ip * n2 + jp, i * n2 + jp], axis=1)
    x, y = grid.axis1[i], grid.axis2[j]
    points = np.stack(
        [
            np.stack([x, y], -1),
            np.stack([x + hx, y], -1),
            np.stack([x + hx, y + hy], -1),
            np.stack([x, y + hy], -1),
        ],
        axis=1,
    )
    return _march(points, v[corners], _QUAD_EDGES)


def _sphere_segments(grid: SampleGrid, v: np.ndarray, poles: Tuple[float, float]) -> np.ndarray:
    m = grid.manifold
    n1, n2 = grid.shape
    d_phi = 2 * math.pi / n2
    i, j = np.meshgrid(np.arange(n1 - 1), np.arange(n2), indexing="ij")
    i, j = i.ravel(), j.ravel()
    jp = (j + 1) % n2
    corners = np.stack([i * n2 + j, (i + 1) * n2 + j, (i + 1) * n2 + jp, i * n2 + jp], axis=1)
    theta0, theta1 = grid.axis1[i], grid.axis1[i + 1]
    phi0 = grid.axis2[j]
    phi1 = phi0 + d_phi
    chart = np.stack(
        [
            np.stack([theta0, phi0], -1),
            np.stack([theta1, phi0], -1),
            np.stack([theta1, phi1], -1),
            np.stack([theta0, phi1], -1),
        ],
        axis=1,
    )
    interior = _march(chart, v[corners], _QUAD_EDGES)
    pieces = [m.to_ambient(interior)] if len(interior) else []

    ring_xyz = m.to_ambient(grid.nodes)
    for ring, pole_value, z in zip(grid.polar_rings, poles, (1.0, -1.0)):
        apex = np.array([0.0, 0.0, z * m.radius])
        nxt = np.roll(ring, -1)
        points = np.stack(
            [np.broadcast_to(apex, (n2, 3)), ring_xyz[ring], ring_xyz[nxt]], axis=1
        )
        vals = np.stack([np.full(n2, pole_value), v[ring], v[nxt]], axis=1)
        cap = _march(points, vals, _TRIANGLE_EDGES)
        if len(cap):
            norms = np.linalg.norm(cap, axis=-1, keepdims=True)
            pieces.append(m.radius * cap / np.where(norms > 0, norms, 1.0))
    if not pieces:
        return np.zeros((0, 2, 3))
    return np.concatenate(pieces)


def _segment_lengths(grid: SampleGrid, segments: np.ndarray) -> np.ndarray:
    m = grid.manifold
    chord = np.linalg.norm(segments[:, 1] - segments[:, 0], axis=-1)
    if m.is_torus:
        return chord
    return 2 * m.radius * np.arcsin(np.clip(chord / (2 * m.radius), 0.0, 1.0))


class _SegmentIndex:
    """Exact point-to-segment distances through a KD-tree on segment midpoints."""

    def __init__(self, grid: SampleGrid, segments: np.ndarray) -> None:
        self.m = grid.manifold
        self.segments = segments
        if self.m.is_torus:
            mid = 0.5 * (segments[:, 0] + segments[:, 1])
            self.mid = mid
            self.half = 0.5 * (segments[:, 1] - segments[:, 0])
            self.extent = np.linalg.norm(self.half, axis=-1)
            self.tree = cKDTree(self.m.reduce(mid), boxsize=self.m.periods)
        else:
            r = self.m.radius
            a = segments[:, 0] / r
            b = segments[:, 1] / r
            mid = a + b
            mid_norm = np.linalg.norm(mid, axis=-1, keepdims=True)
            mid = r * mid / np.where(mid_norm > 0, mid_norm, 1.0)
            self.a, self.b = a, b
            self.extent = np.linalg.norm(segments[:, 0] - mid, axis=-1)
            self.tree = cKDTree(mid)
        self.max_extent = float(self.extent.max()) if len(self.extent) else 0.0

    def embed(self, points: np.ndarray) -> np.ndarray:
        """Chart points to the coordinates the tree is built in."""
        if self.m.is_torus:
            return self.m.reduce(points)
        return self.m.to_ambient(points)

    def to_tree_metric(self, d: np.ndarray) -> np.ndarray:
        """Geodesic distance to the metric the tree measures in (chord on the sphere)."""
        if self.m.is_torus:
            return d
        r = self.m.radius
        return 2 * r * np.sin(np.minimum(d, math.pi * r) / (2 * r))

    def exact(self, queries: np.ndarray, seg_idx: np.ndarray) -> np.ndarray:
        if self.m.is_torus:
            q = self.m.minimal_image(queries - self.mid[seg_idx])
            u = self.half[seg_idx]
            uu = np.sum(u * u, axis=-1)
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(uu > 0, np.sum(q * u, axis=-1) / uu, 0.0)
            t = np.clip(t, -1.0, 1.0)
            return np.linalg.norm(q - t[..., None] * u, axis=-1)

        r = self.m.radius
        p = queries / r
        a, b = self.a[seg_idx], self.b[seg_idx]
        normal = np.cross(a, b)
        nn = np.linalg.norm(normal, axis=-1)
        good = nn > 1e-15
        normal = normal / np.where(good, nn, 1.0)[..., None]
        s = np.sum(p * normal, axis=-1)
        q = p - s[..., None] * normal
        inside = (np.sum(np.cross(a, q) * normal, axis=-1) >= 0) & (
            np.sum(np.cross(q, b) * normal, axis=-1) >= 0
        )
        to_line = np.arcsin(np.clip(np.abs(s), 0.0, 1.0))

        def angle(u, w):
            return np.arctan2(np.linalg.norm(np.cross(u, w), axis=-1), np.sum(u * w, axis=-1))

        to_ends = np.minimum(angle(p, a), angle(p, b))
        return r * np.where(good & inside, to_line, to_ends)

    def nearest(self, queries: np.ndarray) -> np.ndarray:
        """Exact distance from each embedded query point to the nearest segment.

        Candidates are the k nearest midpoints; k grows until no unseen
        segment can be closer than the best one found.
        """
        total = len(self.segments)
        out = np.empty(len(queries))
        pending = np.arange(len(queries))
        k = min(8, total)
        while pending.size:
            pts = queries[pending]
            bound, cand = self.tree.query(pts, k=list(range(1, k + 1)))
            d = self.exact(pts[:, None, :], cand)
            found = d.min(axis=1)
            out[pending] = found
            if k >= total:
                break
            done = self.to_tree_metric(found) + self.max_extent <= bound[:, -1]
            pending = pending[~done]
            k = min(4 * k, total)
        return out


def _distance_field(
    grid: SampleGrid, segments: np.ndarray, band: np.ndarray, eigenvalue: Optional[float]
) -> np.ndarray:
    index = _SegmentIndex(grid, segments)
    n = grid.node_count
    all_nodes = np.arange(n)
    if eigenvalue:
        cap = numerics.distance_cap_wavelengths * 2 * math.pi / math.sqrt(eigenvalue)
    else:
        cap = math.inf

    queries = index.embed(grid.nodes)
    first, _ = index.tree.query(queries, k=1)
    near = first - index.max_extent <= index.to_tree_metric(np.asarray(cap))
    d = np.full(n, np.inf)
    d[near] = index.nearest(queries[near])

    far = ~near
    if far.any():
        # One super-source joined to every exactly resolved node; the unit
        # offset keeps zero distances from vanishing as sparse entries.
        offset = 1.0
        sources = all_nodes[near]
        extra = sparse.coo_matrix(
            (d[near] + offset, (np.full(len(sources), n), sources)), shape=(n + 1, n + 1)
        )
        base = sparse.bmat([[grid.adjacency, None], [None, sparse.csr_matrix((1, 1))]])
        graph = (base + extra).tocsr()
        reach = dijkstra(graph, directed=True, indices=n)[:n] - offset
        d[far] = reach[far]
        logger.debug("Distance field: %d nodes beyond the exact cap", int(far.sum()))

    d[band] = 0.0
    return d


class Saddles(NamedTuple):
    """Non-degenerate saddle points of the source field near its nodal set.

    ``axes[:, :, 0]`` is the chart direction of negative curvature and
    ``axes[:, :, 1]`` the direction of positive curvature.
    """

    points: np.ndarray
    values: np.ndarray
    axes: np.ndarray

    @property
    def count(self) -> int:
        return len(self.values)


_NEWTON_STEPS = 12


def _chart_offsets(grid: SampleGrid, points: np.ndarray, origin: np.ndarray) -> np.ndarray:
    """Chart displacements ``points - origin``, wrapped across the periodic axes."""
    m = grid.manifold
    delta = np.asarray(points, dtype=float) - origin
    if m.is_torus:
        return m.minimal_image(delta)
    delta[..., 1] = np.mod(delta[..., 1] + math.pi, 2 * math.pi) - math.pi
    return delta


def _window_extremes(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Min and max over the 4 x 4 nodes around every cell (i, i+1) x (j, j+1)."""
    shifted = np.stack(
        [np.roll(a, (-di, -dj), axis=(0, 1)) for di in range(-1, 3) for dj in range(-1, 3)]
    )
    return shifted.min(axis=0), shifted.max(axis=0)


def _source_scale(f: ScalarField) -> float:
    return float(np.max(np.abs(values(f.source, f.grid.nodes))))


def nodal_saddles(f: ScalarField) -> Saddles:
    """Locate the saddles of ``f.source`` that sit between nodes of both signs.

    Newton's method on the chart gradient starts from every cell whose
    surrounding nodes see both signs of each gradient component and of the
    field. Saddles within two cells of a pole are left to the polar fans.
    """
    e = f.source
    if e is None:
        raise ValueError(f"field '{f.label}' carries no closed form to search for saddles")
    grid = f.grid
    m = grid.manifold
    n1, n2 = grid.shape
    steps = np.array([m.lx / n1, m.ly / n2]) if m.is_torus else np.array([math.pi / n1, 2 * math.pi / n2])

    grad = chart_gradients(e, grid.nodes)
    candidate = np.ones(grid.shape, dtype=bool)
    for column in (grad[:, 0], grad[:, 1], f.values):
        lo, hi = _window_extremes(grid.as_array(column))
        candidate &= (lo <= 0) & (hi >= 0)
    if not m.is_torus:
        candidate[:1] = False
        candidate[n1 - 2 :] = False
    cells = np.argwhere(candidate)
    empty = Saddles(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2, 2)))
    if cells.size == 0:
        return empty

    start = np.stack([grid.axis1[cells[:, 0]], grid.axis2[cells[:, 1]]], axis=-1) + 0.5 * steps
    scale = _source_scale(f)
    lam = e.eigenvalue
    x = start.copy()
    solvable = np.ones(len(x), dtype=bool)
    for _ in range(_NEWTON_STEPS):
        g = chart_gradients(e, x)
        hess = chart_hessians(e, x)
        det = hess[:, 0, 0] * hess[:, 1, 1] - hess[:, 0, 1] * hess[:, 1, 0]
        solvable &= np.abs(det) > 1e-12 * (lam * scale) ** 2
        safe = np.where(solvable, det, 1.0)
        step = np.stack(
            [
                (hess[:, 1, 1] * g[:, 0] - hess[:, 0, 1] * g[:, 1]) / safe,
                (hess[:, 0, 0] * g[:, 1] - hess[:, 1, 0] * g[:, 0]) / safe,
            ],
            axis=-1,
        )
        step[~solvable] = 0.0
        # at most one cell per iteration
        shrink = np.maximum(1.0, np.max(np.abs(step) / steps, axis=1))
        x = x - step / shrink[:, None]

    g = chart_gradients(e, x)
    hess = chart_hessians(e, x)
    det = hess[:, 0, 0] * hess[:, 1, 1] - hess[:, 0, 1] * hess[:, 1, 0]
    near = np.all(np.abs(_chart_offsets(grid, x, start)) <= 2 * steps, axis=1)
    accept = solvable & near & (det < 0)
    accept &= np.hypot(g[:, 0], g[:, 1]) <= 1e-8 * math.sqrt(lam) * scale
    if not m.is_torus:
        accept &= (x[:, 0] > steps[0]) & (x[:, 0] < math.pi - steps[0])
    x, hess = m.reduce(x[accept]), hess[accept]
    if len(x) == 0:
        return empty

    # several starting cells converge onto the same saddle
    embedded = x if m.is_torus else m.to_ambient(x)
    tree = cKDTree(embedded, boxsize=m.periods if m.is_torus else None)
    pairs = tree.query_pairs(1e-6 * grid.spacing, output_type="ndarray")
    link = sparse.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(x), len(x))
    )
    _, cluster = connected_components(link, directed=False)
    _, keep = np.unique(cluster, return_index=True)
    x, hess = x[keep], hess[keep]

    _, axes = np.linalg.eigh(hess)
    found = Saddles(x, values(e, x), axes)
    logger.debug("Found %d saddles of %s near its nodal set", found.count, f.label or "field")
    return found


def _saddle_sides(
    grid: SampleGrid, saddles: Saddles, sign: np.ndarray, axis: int, target: int
) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """Side of each nearby ``target``-signed node relative to every saddle.

    Returns a (saddle x node) matrix holding ``2 + sign(offset . axis)`` for
    the nodes within two mesh sizes of each saddle, and rows
    ``(saddle, node, node)`` naming the nearest node on either side.
    """
    rows, cols, data, links = [], [], [], []
    for s in range(saddles.count):
        point = saddles.points[s]
        near = grid.ball(point, 2 * grid.spacing)
        near = near[sign[near] == target]
        if near.size == 0:
            continue
        offsets = _chart_offsets(grid, grid.nodes[near], point)
        side = np.sign(offsets @ saddles.axes[s][:, axis]).astype(np.int64)
        rows.append(np.full(near.size, s))
        cols.append(near)
        data.append(side + 2)
        dist = grid.distances_from(point)[near]
        ahead, behind = side > 0, side < 0
        if ahead.any() and behind.any():
            links.append(
                (s, near[ahead][np.argmin(dist[ahead])], near[behind][np.argmin(dist[behind])])
            )
    shape = (saddles.count, grid.node_count)
    links = np.asarray(links, dtype=np.int64).reshape(-1, 3)
    if not rows:
        return sparse.csr_matrix(shape), links
    sides = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    ).tocsr()
    return sides, links


def _split_at_saddles(
    f: ScalarField, sign: np.ndarray, pairs: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Apply the saddle values of ``f.source`` to same-sign node pairs.

    Near a saddle the two wedges of one sign are separated by the line
    through it along the other sign's curvature axis. A pair straddling that
    line is dropped unless the saddle value has the pair's sign; then the
    wedges meet through the saddle and the nearest nodes on either side are
    linked instead. A saddle value inside the zero band separates both signs.

    Returns the mask of pairs to keep and the extra links, shape (L, 2).
    """
    saddles = nodal_saddles(f)
    keep = np.ones(len(pairs), dtype=bool)
    extra = [np.zeros((0, 2), dtype=np.int64)]
    if saddles.count == 0:
        return keep, extra[0]
    tol = numerics.zero_band * _source_scale(f)
    # positive wedges open along the positive-curvature axis (column 1)
    for target, axis in ((1, 1), (-1, 0)):
        joined = target * saddles.values > tol
        sides, links = _saddle_sides(f.grid, saddles, sign, axis, target)
        extra.append(links[joined[links[:, 0]], 1:])
        of_sign = np.nonzero(sign[pairs[:, 0]] == target)[0]
        split = sides[np.nonzero(~joined)[0]].tocsc()
        if of_sign.size == 0 or split.nnz == 0:
            continue
        product = split[:, pairs[of_sign, 0]].multiply(split[:, pairs[of_sign, 1]]).tocoo()
        # sides +1 and -1 are stored as 3 and 1
        keep[of_sign[np.unique(product.col[product.data == 3])]] = False
    return keep, np.concatenate(extra)


def nodal_domains(f: ScalarField) -> NodalDomains:
    """Connected components of same-sign nodes, zero-band nodes excluded.

    Nodes join along axis edges and across the poles. When ``f`` was
    sampled from a closed form, pairs passing a saddle of the nodal set are
    settled by the saddle value, so the count does not depend on where the
    grid happens to fall.
    """
    grid = f.grid
    v, band = _band_values(f)
    sign = np.sign(v).astype(np.int8)
    e = grid.edges
    same = (sign[e[:, 0]] == sign[e[:, 1]]) & (sign[e[:, 0]] != 0)
    keep = same & (grid.edge_kind == EDGE_AXIS)
    if not grid.manifold.is_torus:
        north, south = _pole_values(grid, v, f.zero_threshold)
        polar = (grid.edge_kind == EDGE_POLAR) & same
        n2 = grid.shape[1]
        first_ring = e[:, 0] < n2
        pole_sign = np.where(first_ring, np.sign(north), np.sign(south))
        keep |= polar & (pole_sign == sign[e[:, 0]])
    pairs = e[keep]
    if f.source is not None:
        kept, links = _split_at_saddles(f, sign, pairs)
        pairs = np.concatenate([pairs[kept], links])
    n = grid.node_count
    graph = sparse.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
    ).tocsr()
    _, components = connected_components(graph, directed=False)

    # Labels follow the order in which domains first appear in node order
    labels = np.zeros(n, dtype=np.int64)
    nodes = np.nonzero(~band)[0]
    comps = components[nodes]
    uniq, first = np.unique(comps, return_index=True)
    order = np.argsort(first)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[order] = np.arange(1, len(uniq) + 1)
    labels[nodes] = rank[np.searchsorted(uniq, comps)]
    signs = np.concatenate([[0], sign[nodes[first[order]]]]).astype(np.int8)
    return NodalDomains(labels, signs, len(uniq))


def extract_nodal_set(f: ScalarField) -> NodalGeometry:
    """Trace the zero set of ``f`` and derive its distance field and domains."""
    grid = f.grid
    v, band = _band_values(f)
    if not (v > 0).any() or not (v <= 0).any():
        raise NoZeroCrossing(f"field '{f.label}' has constant sign")

    if grid.manifold.is_torus:
        segments = _torus_segments(grid, v)
    else:
        segments = _sphere_segments(grid, v, _pole_values(grid, v, f.zero_threshold))
    if len(segments) == 0:
        raise NoZeroCrossing(f"field '{f.label}' has no sign-changing grid edge")

    length = float(_segment_lengths(grid, segments).sum())
    distances = _distance_field(grid, segments, band, f.eigenvalue)
    domains = nodal_domains(f)
    logger.info(
        "Nodal set of %s: %d segments, length %.6g, %d domains",
        f.label or "field",
        len(segments),
        length,
        domains.count,
    )
    return NodalGeometry(
        field=f,
        segments=segments,
        length=length,
        distance_field=ScalarField(grid, distances, None, f"dist({f.label})"),
        domain_labels=domains.labels,
        domain_signs=domains.signs,
        zero_band=band,
    )


def distance_to_nodal_set(ng: NodalGeometry, points: np.ndarray) -> np.ndarray:
    """Exact geodesic distance from arbitrary chart points to the traced nodal set."""
    index = ng.segment_index
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return index.nearest(index.embed(pts))


def tube_mask(ng: NodalGeometry, delta: float) -> np.ndarray:
    """Boolean mask of T_delta; ``~mask`` is its complement."""
    if delta < 0:
        raise ValueError("tube width must be non-negative")
    if delta == 0:
        return ng.zero_band.copy()
    return ng.distances <= delta


def density_radius(ng: NodalGeometry) -> DensityRadius:
    radius = float(ng.distances.max())
    lam = ng.field.eigenvalue
    return DensityRadius(radius, radius * math.sqrt(lam) if lam else float("nan"))


def domain_inradii(ng: NodalGeometry) -> np.ndarray:
    """Largest distance to the nodal set inside each domain, indexed by label - 1."""
    labels = ng.domain_labels
    out = np.zeros(ng.domain_count)
    mask = labels > 0
    np.maximum.at(out, labels[mask] - 1, ng.distances[mask])
    return out


def asymmetry_ratio(
    f: ScalarField,
    ball: np.ndarray,
    half_ball: Optional[np.ndarray] = None,
    strict: bool = False,
) -> AsymmetryResult:
    """Weighted share of {phi > 0} in ``ball``; zero-band nodes are left out.

    The precondition is that ``half_ball`` (the ball itself when omitted)
    meets the nodal set. A miss is reported through ``meets_nodal_set``, or
    raised as BallMissesNodalSet when ``strict``.
    """
    v, band = _band_values(f)
    inner = ball if half_ball is None else half_ball
    pv = v[inner]
    meets = bool(band[inner].any() or ((pv > 0).any() and (pv < 0).any()))
    if not meets and strict:
        raise BallMissesNodalSet(f"ball of {len(ball)} nodes misses the nodal set")

    w = f.grid.weights[ball]
    bv = v[ball]
    total = float(w[bv != 0].sum())
    if total == 0:
        return AsymmetryResult(0.5, meets)
    return AsymmetryResult(float(w[bv > 0].sum()) / total, meets)


def inscribed_sign_ball(
    f: ScalarField, ng: NodalGeometry, center: PointLike, r: float, sign: int
) -> InscribedBall:
    """Largest ball of constant sign inside B(center, r) centred on a grid node.

    Maximises ``min(d(p, N), r - d(p, center))`` over nodes ``p`` of the
    requested sign; ties go to the smallest node in chart order.
    """
    grid = f.grid
    if r < 2 * grid.spacing:
        raise EmptyBall(f"radius {r:.3g} below twice the mesh size")
    nodes = grid.ball(center, r)
    v, _ = _band_values(f)
    chosen = nodes[np.sign(v[nodes]) == np.sign(sign)]
    if chosen.size == 0:
        raise NoSignPresent(f"no {'positive' if sign > 0 else 'negative'} node in the ball")
    clearance = np.minimum(ng.distances[chosen], r - grid.distances_from(center)[chosen])
    best = int(np.argmax(clearance))
    node = int(chosen[best])
    return InscribedBall(node, Point(*grid.nodes[node]), float(clearance[best]))
