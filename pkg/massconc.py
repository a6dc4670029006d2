"""L^p mass on regions, tube mass profiles and retention outside nodal tubes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from eigenmodel import ScalarField
from errors import EmptyBall, EmptyRegionSup, NoSignPresent
from nodal import NodalGeometry, density_radius, inscribed_sign_ball, tube_mask

logger = logging.getLogger(__name__)

Region = Union[None, np.ndarray, Sequence[int]]


def _region_mask(f: ScalarField, region: Region) -> np.ndarray:
    if region is None:
        return np.ones(f.grid.node_count, dtype=bool)
    region = np.asarray(region)
    if region.dtype == bool:
        return region
    mask = np.zeros(f.grid.node_count, dtype=bool)
    mask[region.astype(np.int64)] = True
    return mask


def lp_mass(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    """``sum w |v|^p`` for finite p."""
    return float(np.dot(weights, np.abs(values) ** p))


def lp_norm(f: ScalarField, region: Region = None, p: float = 2.0) -> float:
    """L^p norm of ``f`` over a node subset (mask or indices); ``p`` may be inf."""
    mask = _region_mask(f, region)
    if math.isinf(p):
        if not mask.any():
            raise EmptyRegionSup("sup over an empty region")
        return float(np.max(np.abs(f.values[mask])))
    if not mask.any():
        return 0.0
    return lp_mass(f.values[mask], f.grid.weights[mask], p) ** (1.0 / p)


def _signed_norm(values: np.ndarray, weights: np.ndarray, mask: np.ndarray, p: float) -> float:
    """Norm of the part selected by ``mask`` (zero elsewhere) over the given nodes."""
    if math.isinf(p):
        if values.size == 0:
            raise EmptyRegionSup("sup over an empty region")
        return float(np.max(np.where(mask, np.abs(values), 0.0)))
    if not mask.any():
        return 0.0
    return lp_mass(values[mask], weights[mask], p) ** (1.0 / p)


@dataclass(frozen=True)
class RetentionReport:
    """Share of the L^p norm that survives outside the tube T_delta."""

    eigenvalue: float
    p: float
    deltas: np.ndarray
    ratio_total: np.ndarray
    ratio_pos: np.ndarray
    ratio_neg: np.ndarray

    @property
    def normalized_widths(self) -> np.ndarray:
        return self.deltas * math.sqrt(self.eigenvalue)

    def split_defect(self) -> float:
        """max of ratio_total^p - ratio_pos^p - ratio_neg^p (<= 0 up to rounding)."""
        if math.isinf(self.p):
            return 0.0
        p = self.p
        return float(np.max(self.ratio_total**p - self.ratio_pos**p - self.ratio_neg**p))

    def rows(self, family: str, seed: Optional[int]) -> List[dict]:
        return [
            {
                "family": family,
                "seed": seed,
                "lambda": self.eigenvalue,
                "p": self.p,
                "delta": float(d),
                "delta_sqrtlambda": float(s),
                "ratio_total": float(t),
                "ratio_pos": float(a),
                "ratio_neg": float(b),
            }
            for d, s, t, a, b in zip(
                self.deltas,
                self.normalized_widths,
                self.ratio_total,
                self.ratio_pos,
                self.ratio_neg,
            )
        ]


def log_delta_grid(
    ng: NodalGeometry, count: int = 24, lo: float = 1e-2, hi: Optional[float] = None
) -> np.ndarray:
    """``count`` tube widths with delta*sqrt(lambda) log-spaced in [lo, hi].

    ``hi`` defaults to just below the measured density constant, where the
    tube would fill M.
    """
    top = density_radius(ng).constant * (1 - 1e-6) if hi is None else hi
    if top <= lo:
        raise ValueError(f"delta grid upper end {top:.3g} is not above {lo:.3g}")
    return np.geomspace(lo, top, count) / math.sqrt(ng.field.eigenvalue)


def retention(
    f: ScalarField, ng: NodalGeometry, deltas: Iterable[float], ps: Iterable[float]
) -> List[RetentionReport]:
    """One RetentionReport per p over the given tube widths."""
    deltas = np.sort(np.asarray(list(deltas), dtype=float))
    v = f.values
    w = f.grid.weights
    positive = v > f.node_thresholds
    negative = v < -f.node_thresholds
    reports = []
    for p in ps:
        full = lp_norm(f, None, p)
        total, pos, neg = [], [], []
        for delta in deltas:
            outside = ~tube_mask(ng, delta)
            vo, wo = v[outside], w[outside]
            if math.isinf(p) and not outside.any():
                raise EmptyRegionSup(f"tube of width {delta:.3g} covers the manifold")
            total.append(_signed_norm(vo, wo, np.ones(vo.size, dtype=bool), p) / full)
            pos.append(_signed_norm(vo, wo, positive[outside], p) / full)
            neg.append(_signed_norm(vo, wo, negative[outside], p) / full)
        reports.append(
            RetentionReport(
                eigenvalue=f.eigenvalue,
                p=float(p),
                deltas=deltas,
                ratio_total=np.asarray(total),
                ratio_pos=np.asarray(pos),
                ratio_neg=np.asarray(neg),
            )
        )
    logger.debug("Retention for %s at %d widths, p in %s", f.label, len(deltas), list(ps))
    return reports


class TubeMassProfile(NamedTuple):
    deltas: np.ndarray
    normalized_widths: np.ndarray
    mass: np.ndarray
    total: float

    def fraction(self) -> np.ndarray:
        return self.mass / self.total


def tube_mass_profile(
    f: ScalarField, ng: NodalGeometry, p: float, deltas: Optional[Iterable[float]] = None
) -> TubeMassProfile:
    """``||phi||^p_{L^p(T_delta)}`` as a nondecreasing function of delta."""
    if math.isinf(p):
        raise ValueError("tube mass profile needs a finite p")
    if deltas is None:
        deltas = log_delta_grid(ng)
    deltas = np.sort(np.asarray(list(deltas), dtype=float))
    order = np.argsort(ng.distances, kind="stable")
    dist = ng.distances[order]
    density = f.grid.weights[order] * np.abs(f.values[order]) ** p
    cumulative = np.concatenate([[0.0], np.cumsum(density)])
    mass = cumulative[np.searchsorted(dist, deltas, side="right")]
    total = float(cumulative[-1])
    return TubeMassProfile(deltas, deltas * math.sqrt(f.eigenvalue), mass, total)


@dataclass(frozen=True)
class HalfBallCollection:
    """L^p mass collected by half sign balls inscribed in good balls."""

    p: float
    balls_used: int
    mass_fraction: float
    pos_fraction: float
    neg_fraction: float
    # Smallest half-ball radius times sqrt(lambda); their nodal clearance
    min_clearance: float
    skipped: List[str] = field(default_factory=list)


def half_ball_collection(
    f: ScalarField,
    ng: NodalGeometry,
    centers: np.ndarray,
    radius: float,
    good: np.ndarray,
    p: float = 2.0,
) -> HalfBallCollection:
    """Inscribe a positive and a negative ball in each good ball and keep their halves.

    The concentric half balls stay at least half their radius away from the
    nodal set; the returned fractions are shares of ``||phi||^p_{L^p(M)}``
    carried by their union.
    """
    grid = f.grid
    collected_pos = np.zeros(grid.node_count, dtype=bool)
    collected_neg = np.zeros(grid.node_count, dtype=bool)
    clearances = []
    skipped = []
    for idx in np.nonzero(np.asarray(good))[0]:
        for sign, target in ((1, collected_pos), (-1, collected_neg)):
            try:
                inscribed = inscribed_sign_ball(f, ng, centers[idx], radius, sign)
                half = grid.ball(inscribed.center, 0.5 * inscribed.radius)
            except (NoSignPresent, EmptyBall) as exc:
                skipped.append(f"ball {idx} sign {sign:+d}: {exc}")
                continue
            target[half] = True
            clearances.append(0.5 * inscribed.radius)

    w = grid.weights
    v = f.values
    total = lp_mass(v, w, p)
    pos_mass = lp_mass(v[collected_pos], w[collected_pos], p)
    neg_mass = lp_mass(v[collected_neg], w[collected_neg], p)
    union = collected_pos | collected_neg
    union_mass = lp_mass(v[union], w[union], p)
    lam_root = math.sqrt(f.eigenvalue)
    return HalfBallCollection(
        p=p,
        balls_used=len(clearances),
        mass_fraction=union_mass / total,
        pos_fraction=pos_mass / total,
        neg_fraction=neg_mass / total,
        min_clearance=min(clearances) * lam_root if clearances else 0.0,
        skipped=skipped,
    )
