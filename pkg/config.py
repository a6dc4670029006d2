"""Configuration for the nodal-transport laboratory.

Three layers:

* :class:`LabSettings` -- process settings from the environment (only the
  worker count, used as the ``--jobs`` default).
* :class:`Numerics` -- numerical defaults shared by every module.
* :class:`ExperimentConfig` -- the JSON experiment document; the config is
  the experiment.
"""

from __future__ import annotations

import json
import math
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_serializer, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from errors import ConfigInvalid

CONFIG_DIR = Path(__file__).resolve().parent / "config"
DEFAULT_EXPERIMENT_FILE = CONFIG_DIR / "default_experiment.json"
CSV_SCHEMA_FILE = CONFIG_DIR / "csv_schema.json"


class LabSettings(BaseSettings):
    """Process settings loaded from environment variables."""

    # Default for --jobs
    jobs: int = Field(default=1, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="NODALLAB_", env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )


class Numerics(BaseModel):
    """Numerical defaults. Library functions take these unless told otherwise."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # Grids and eigenfunctions
    zero_band: float = 1e-12
    nodes_per_wavelength: float = 12.0
    min_grid_resolution: int = 8
    grid_weight_rtol: float = 1e-6
    residual_tolerance: float = 0.03
    gradient_bound: float = 2.0

    # Nodal geometry
    distance_cap_wavelengths: float = 3.0

    # Harmonic lift and frequency functions
    lift_radius_cap: float = 1.0
    frequency_threshold: float = 10.0
    monotonicity_epsilon: float = 0.1
    quadrature_tolerance: float = 0.01
    neighbour_constant: float = 4.0
    # Largest tau of the neighbour check; C* tau must stay within the lift cap
    neighbour_radius: float = 0.25

    # Coverings and good balls
    multiplicity_cap: int = 16
    # Lattice spacing of covering centres in units of the ball radius. At 0.5
    # the doubled balls overlap about 50 times, so 1.0 is what keeps the
    # multiplicity under the cap.
    covering_spacing_factor: float = Field(default=1.0, gt=0)

    # Transport
    lipschitz_slack: float = 1e-6
    exact_marginal_tol: float = 1e-6
    sinkhorn_marginal_tol: float = 1e-4
    rebalance_tolerance: float = 1e-4

    @model_validator(mode="after")
    def _neighbour_scale_fits_lift(self) -> "Numerics":
        if self.neighbour_constant * self.neighbour_radius > self.lift_radius_cap * (1 + 1e-12):
            raise ValueError(
                f"neighbour_constant * neighbour_radius = "
                f"{self.neighbour_constant * self.neighbour_radius:g} exceeds lift_radius_cap "
                f"{self.lift_radius_cap:g}"
            )
        return self


class NumericsHolder:
    """Module-level handle on the active :class:`Numerics`.

    Modules import the holder once; attribute reads go to whichever frozen
    instance is installed, so a swap is seen everywhere.
    """

    def __init__(self, values: Numerics) -> None:
        self.current = values

    def __getattr__(self, name: str):
        return getattr(self.current, name)

    def install(self, values: Numerics) -> Numerics:
        previous, self.current = self.current, values.model_copy()
        return previous


numerics = NumericsHolder(Numerics())


def apply_numerics(values: Numerics) -> None:
    """Install ``values`` as the shared defaults."""
    numerics.install(values)


@contextmanager
def numerics_override(**changes) -> Iterator[Numerics]:
    """Temporarily install the active defaults with ``changes`` applied."""
    updated = Numerics.model_validate({**numerics.current.model_dump(), **changes})
    previous = numerics.install(updated)
    try:
        yield numerics.current
    finally:
        numerics.install(previous)


class ManifoldSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["flat_torus", "round_sphere"] = "flat_torus"
    lx: float = Field(default=2 * math.pi, gt=0)
    ly: float = Field(default=2 * math.pi, gt=0)
    radius: float = Field(default=1.0, gt=0)


class FamilySpec(BaseModel):
    """Which eigenfunctions to scan.

    ``values`` holds k for ``torus_sine`` (sin kx), the eigenvalue for
    ``torus_random`` and the degree for ``gaussian_beam``/``sphere_harmonic``.
    """

    model_config = ConfigDict(extra="forbid")

    kind: Literal["torus_sine", "torus_random", "gaussian_beam", "sphere_harmonic"] = "torus_sine"
    values: List[int] = Field(default_factory=lambda: [2, 4, 8, 16, 32])
    order: int = 0
    seeds_per_value: int = Field(default=1, ge=1)

    @field_validator("values")
    @classmethod
    def _values_nonempty(cls, values: List[int]) -> List[int]:
        if not values:
            raise ValueError("range must not be empty")
        if any(v <= 0 for v in values):
            raise ValueError("all values must be positive")
        return values


class ResolutionSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    nodes_per_wavelength: float = Field(default=12.0, ge=12.0)
    min_resolution: int = Field(default=8, ge=4)
    max_resolution: int = Field(default=768, ge=8)
    # Absolute node count per axis; bypasses the wavelength rule
    override: Optional[int] = Field(default=None, ge=4)


class DeltaGridSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    count: int = Field(default=24, ge=2)
    lo: float = Field(default=1e-2, gt=0)
    # None means "up to the measured density constant"
    hi: Optional[float] = Field(default=None, gt=0)


class TransportSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    engine: Literal["exact", "sinkhorn", "witness"] = "exact"
    max_atoms: int = Field(default=2000, ge=2, le=5000)
    max_iter: int = Field(default=2000, ge=10)
    stages: int = Field(default=6, ge=1)
    eps_start: float = Field(default=0.5, gt=0)
    eps_end: float = Field(default=0.005, gt=0)


class GrowthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    probes: int = Field(default=200, ge=1)
    sandwich_probes: int = Field(default=500, ge=1)
    # Probe radius in wavelengths (units of lambda^{-1/2})
    probe_radius: float = Field(default=1.0, gt=0)
    # Covering radius r0; None picks twice the measured density constant
    r0: Optional[float] = Field(default=None, gt=0)
    with_frequency: bool = False


class OutputSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = "results"
    format: Literal["csv", "json"] = "csv"


class ExperimentConfig(BaseModel):
    """A complete experiment description."""

    model_config = ConfigDict(extra="forbid")

    manifold: ManifoldSpec = Field(default_factory=ManifoldSpec)
    family: FamilySpec = Field(default_factory=FamilySpec)
    resolution: ResolutionSpec = Field(default_factory=ResolutionSpec)
    deltas: DeltaGridSpec = Field(default_factory=DeltaGridSpec)
    ps: List[float] = Field(default_factory=lambda: [1.0, 2.0, math.inf])
    d_values: List[int] = Field(default_factory=lambda: [4, 6, 8, 10])
    transport: TransportSpec = Field(default_factory=TransportSpec)
    growth: GrowthSpec = Field(default_factory=GrowthSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    seed: int = Field(default=0, ge=0, lt=2**64)
    numerics: Numerics = Field(default_factory=Numerics)

    @field_validator("ps", mode="before")
    @classmethod
    def _parse_ps(cls, value: List[Union[float, str]]) -> List[float]:
        parsed = []
        for p in value:
            if isinstance(p, str) and p.strip().lower() in {"inf", "infinity"}:
                parsed.append(math.inf)
            else:
                parsed.append(p)
        return parsed

    @field_validator("ps")
    @classmethod
    def _check_ps(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("p list must not be empty")
        if any(p < 1 for p in value):
            raise ValueError("every p must be >= 1")
        return value

    @field_validator("d_values")
    @classmethod
    def _check_d(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("d list must not be empty")
        return sorted(value)

    @field_serializer("ps")
    def _dump_ps(self, value: List[float]) -> List[Union[float, str]]:
        return ["inf" if math.isinf(p) else p for p in value]

    @model_validator(mode="after")
    def _check_compatibility(self) -> "ExperimentConfig":
        torus_family = self.family.kind in {"torus_sine", "torus_random"}
        if torus_family != (self.manifold.kind == "flat_torus"):
            raise ValueError(
                f"family '{self.family.kind}' does not live on manifold '{self.manifold.kind}'"
            )
        if self.family.kind == "sphere_harmonic" and any(abs(self.family.order) > v for v in self.family.values):
            raise ValueError("sphere harmonic order must satisfy |m| <= degree")
        if self.resolution.override is None:
            needed = self.grid_resolution(self.largest_eigenvalue())
            if needed > self.resolution.max_resolution:
                raise ValueError(
                    f"resolution rule needs {needed} nodes per axis at the largest eigenvalue, "
                    f"above max_resolution={self.resolution.max_resolution}"
                )
        return self

    def eigenvalue_of(self, value: int) -> float:
        """Eigenvalue addressed by one entry of ``family.values``."""
        kind = self.family.kind
        if kind == "torus_sine":
            return (2 * math.pi * value / self.manifold.lx) ** 2
        if kind == "torus_random":
            return float(value)
        return value * (value + 1) / self.manifold.radius**2

    def largest_eigenvalue(self) -> float:
        return max(self.eigenvalue_of(v) for v in self.family.values)

    def grid_resolution(self, eigenvalue: float) -> int:
        """Nodes per axis at ``eigenvalue`` under the wavelength rule of ``resolution``."""
        # manifold imports this module for the shared numerics
        from manifold import ManifoldModel, default_resolution

        return default_resolution(
            ManifoldModel.from_spec(self.manifold),
            eigenvalue,
            self.resolution.nodes_per_wavelength,
            self.resolution.min_resolution,
        )


def _field_messages(exc: ValidationError) -> List[str]:
    messages = []
    for err in exc.errors():
        location = ".".join(str(part) for part in err.get("loc", ())) or "<root>"
        messages.append(f"{location}: {err.get('msg', 'invalid value')}")
    return messages


def parse_experiment_config(data: dict) -> ExperimentConfig:
    """Validate a decoded JSON document, raising ConfigInvalid on failure."""
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigInvalid(_field_messages(exc)) from exc


def load_experiment_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """Load an experiment config from ``path`` (default config when None)."""
    path = Path(path) if path is not None else DEFAULT_EXPERIMENT_FILE
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigInvalid([f"config: file not found: {path}"]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigInvalid([f"config: invalid JSON ({exc.msg} at line {exc.lineno})"]) from exc
    if not isinstance(data, dict):
        raise ConfigInvalid(["config: top-level JSON value must be an object"])
    return parse_experiment_config(data)


# Global settings instance
settings = LabSettings()
