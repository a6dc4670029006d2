"""Exceptions raised by the laboratory modules.

Every error carries a short ``detail`` string so that the experiment runner
can turn it into an error row without further formatting.
"""

from __future__ import annotations

from typing import Iterable, List, Optional


class LabError(Exception):
    """Base class for all laboratory errors."""

    def __init__(self, detail: str = "") -> None:
        super().__init__(detail)
        self.detail = detail

    def __str__(self) -> str:
        return f"{type(self).__name__}: {self.detail}" if self.detail else type(self).__name__


# manifold
class ResolutionTooCoarse(LabError):
    pass


class EmptyBall(LabError):
    pass


# eigenmodel
class MixedEigenvalue(LabError):
    pass


class DegenerateEigenfunction(LabError):
    pass


class PoleGradient(LabError):
    pass


# nodal
class NoZeroCrossing(LabError):
    pass


class BallMissesNodalSet(LabError):
    pass


class NoSignPresent(LabError):
    pass


# massconc
class EmptyRegionSup(LabError):
    pass


# growth
class ZeroOnBall(LabError):
    pass


class QuadratureUnderResolved(LabError):
    pass


class NeighbourScaleTooLarge(LabError, ValueError):
    pass


class CoverageGap(LabError):
    pass


# transport
class OneSignedField(LabError):
    pass


class InfeasibleFlow(LabError):
    pass


class NonZeroMean(LabError):
    pass


class NotConverged(LabError):
    pass


class EmptySignedRegion(LabError):
    pass


# experiments
class NonPositiveValue(LabError):
    pass


class ConfigInvalid(LabError):
    """Configuration rejected; ``messages`` holds one entry per failing field."""

    def __init__(self, messages: Iterable[str], detail: Optional[str] = None) -> None:
        self.messages: List[str] = list(messages)
        super().__init__(detail or "; ".join(self.messages))
