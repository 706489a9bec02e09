"""Data types shared by every camm-vp module, plus the exception family."""

import math
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (
  BaseModel,
  ConfigDict,
  Field,
  computed_field,
  field_validator,
  model_validator,
)

from cammvp.config import (
  DEFAULT_F0_THRESHOLD,
  DEFAULT_PARTICLES,
  DIAGNOSTIC_CADENCE,
  EPS_R_FACTOR,
  FAR_SHELL_FRACTION,
  MIN_RADIAL_NODES,
  ODE_ATOL,
  ODE_RTOL,
  PHASE_GRID_SHAPE,
  RADIAL_NODES,
  SCF_DAMPING,
  SCF_MAX_ITER,
  SCF_TOL,
  SIM_TDYN,
  STEPS_PER_TDYN,
  WITNESS_GAMMAS,
)

# ============================================================================
# ERRORS
# ============================================================================


class CammError(Exception):
  """Base class of every error raised by the package."""


class DomainError(CammError, ValueError):
  """An operation was called outside its domain (negative phi, D_M >= 0, ...)."""


class SolverError(CammError, RuntimeError):
  """An ODE integration or fixed-point iteration failed."""

  def __init__(self, message: str, last_radius: Optional[float] = None, trace=None):
    super().__init__(message)
    self.last_radius = last_radius
    self.trace = list(trace) if trace is not None else []


class SamplingError(CammError, RuntimeError):
  """Rejection sampling accepted too few proposals."""


class FormatError(CammError, ValueError):
  """A persisted file has the wrong version, a bad checksum or is truncated."""


class ConfigError(CammError, ValueError):
  """An experiment file failed validation. `errors` holds line-numbered messages."""

  def __init__(self, errors: List[str]):
    super().__init__("; ".join(errors))
    self.errors = list(errors)


def _readonly(values: Any) -> np.ndarray:
  arr = np.array(values, dtype=float)
  arr.flags.writeable = False
  return arr


class ArrayModel(BaseModel):
  model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


# ============================================================================
# CASIMIR
# ============================================================================


class CasimirModel(BaseModel):
  """Q(f) = c1 f^(1+1/k1) + c2 f^(1+1/k2) together with the Camm parameters."""

  model_config = ConfigDict(frozen=True)

  c1: float
  c2: float = 0.0
  k1: float
  k2: Optional[float] = None
  l: float = 0.0  # noqa: E741
  gamma: float = 0.0
  f0_threshold: float = DEFAULT_F0_THRESHOLD

  @model_validator(mode="after")
  def _check_signs(self):
    problems = []
    if not self.c1 > 0:
      problems.append(f"c1 must be > 0 (got {self.c1})")
    if not self.c2 >= 0:
      problems.append(f"c2 must be >= 0 (got {self.c2})")
    if not self.k1 > 0:
      problems.append(f"k1 must be > 0 (got {self.k1})")
    if self.c2 > 0 and (self.k2 is None or not self.k2 > 0):
      problems.append(f"k2 must be > 0 when c2 > 0 (got {self.k2})")
    if not self.l > -1:
      problems.append(f"l must be > -1 (got {self.l})")
    if not self.gamma >= 0:
      problems.append(f"gamma must be >= 0 (got {self.gamma})")
    if not self.f0_threshold > 0:
      problems.append(f"f0_threshold must be > 0 (got {self.f0_threshold})")
    if problems:
      raise ValueError("; ".join(problems))
    return self

  @property
  def terms(self) -> List[Tuple[float, float]]:
    """Active (coefficient, exponent) pairs."""
    if self.c2 > 0:
      return [(self.c1, self.k1), (self.c2, self.k2)]
    return [(self.c1, self.k1)]

  @computed_field
  @property
  def k3(self) -> float:
    if self.c2 > 0:
      return min(self.k1, self.k2)
    return self.k1

  @property
  def small_f_exponent(self) -> float:
    """Exponent that governs Q near f = 0: the largest k_i."""
    return max(k for _, k in self.terms)

  @property
  def is_pure_power(self) -> bool:
    return self.c2 == 0

  def exponent_range_ok(self) -> bool:
    upper = self.l + 1.5
    return all(0 < k < upper for _, k in self.terms) and 0 < self.k3 < upper


class AssumptionReport(BaseModel):
  q1: bool
  q2: bool
  q3: bool
  q4: bool
  exponent_range: bool
  witnesses: Dict[str, Dict[str, float]] = Field(default_factory=dict)
  c1_const: Optional[float] = None
  c2_const: Optional[float] = None
  messages: List[str] = Field(default_factory=list)

  @property
  def passed(self) -> bool:
    return self.q1 and self.q2 and self.q3 and self.q4 and self.exponent_range


# ============================================================================
# RADIAL PROFILES
# ============================================================================


class RadialGrid(ArrayModel):
  nodes: np.ndarray

  @field_validator("nodes", mode="before")
  @classmethod
  def _nodes(cls, v):
    arr = _readonly(v)
    if arr.ndim != 1 or arr.size < MIN_RADIAL_NODES:
      raise ValueError(f"radial grid needs >= {MIN_RADIAL_NODES} nodes")
    if arr[0] != 0.0:
      raise ValueError("radial grid must start at r = 0")
    if np.any(np.diff(arr) <= 0):
      raise ValueError("radial grid must be strictly increasing")
    return arr

  @property
  def r_max(self) -> float:
    return float(self.nodes[-1])


class SpatialDensity(ArrayModel):
  grid: RadialGrid
  values: np.ndarray
  rule: Literal["cubic", "trapezoid"] = "cubic"
  signed: bool = False

  @field_validator("values", mode="before")
  @classmethod
  def _values(cls, v):
    return _readonly(v)

  @model_validator(mode="after")
  def _check(self):
    if self.values.shape != self.grid.nodes.shape:
      raise ValueError("density values must match the grid")
    if not self.signed and np.any(self.values < 0):
      raise ValueError("physical densities must be nonnegative")
    return self


class MassFunction(ArrayModel):
  grid: RadialGrid
  values: np.ndarray

  @field_validator("values", mode="before")
  @classmethod
  def _values(cls, v):
    return _readonly(v)

  @property
  def total(self) -> float:
    return float(self.values[-1])


class Potential(ArrayModel):
  grid: RadialGrid
  values: np.ndarray
  total_mass: float
  warning: Optional[str] = None

  @field_validator("values", mode="before")
  @classmethod
  def _values(cls, v):
    return _readonly(v)

  def at(self, r) -> np.ndarray:
    """U at arbitrary radii, with the exterior tail -M/r beyond the grid."""
    r = np.asarray(r, dtype=float)
    inside = np.interp(r, self.grid.nodes, self.values)
    with np.errstate(divide="ignore"):
      outside = -self.total_mass / r
    return np.where(r <= self.grid.r_max, inside, outside)


# ============================================================================
# PHASE SPACE
# ============================================================================


class GridDensity(ArrayModel):
  """f on the tensor grid (r, u = v_r, w = v_t >= 0)."""

  r: np.ndarray
  u: np.ndarray
  w: np.ndarray
  values: np.ndarray

  @field_validator("r", "u", "w", "values", mode="before")
  @classmethod
  def _arrays(cls, v):
    return _readonly(v)

  @model_validator(mode="after")
  def _check(self):
    shape = (self.r.size, self.u.size, self.w.size)
    if self.values.shape != shape:
      raise ValueError(f"values shape {self.values.shape} != axes {shape}")
    for name, axis in (("r", self.r), ("u", self.u), ("w", self.w)):
      if axis.size < 2 or np.any(np.diff(axis) <= 0):
        raise ValueError(f"axis {name} must be strictly increasing")
    if self.r[0] < 0 or self.w[0] < 0:
      raise ValueError("r and w axes must be nonnegative")
    if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
      raise ValueError("f must be finite and nonnegative")
    return self

  @property
  def shape(self) -> Tuple[int, int, int]:
    return self.values.shape

  @property
  def L(self) -> np.ndarray:
    """L = r^2 w^2 on the (r, w) plane, broadcastable against values."""
    return (self.r[:, None, None] ** 2) * (self.w[None, None, :] ** 2)

  def with_values(self, values) -> "GridDensity":
    return GridDensity(r=self.r, u=self.u, w=self.w, values=values)


class FunctionalReport(BaseModel):
  mass: float
  kinetic: float
  potential: float
  casimir: float
  angular: float
  positive: float
  total: float

  @classmethod
  def assemble(
    cls, mass: float, kinetic: float, potential: float, casimir: float, angular: float
  ) -> "FunctionalReport":
    positive = angular + casimir + kinetic
    return cls(
      mass=mass,
      kinetic=kinetic,
      potential=potential,
      casimir=casimir,
      angular=angular,
      positive=positive,
      total=positive + potential,
    )


# ============================================================================
# STEADY STATES
# ============================================================================


class AnsatzState(ArrayModel):
  """A constructed steady state with its tabulated profiles.

  `psi` is the solver variable E0 - U as integrated; f0 is rebuilt from it,
  so an edited E0 shows up as an Euler-Lagrange residual.
  """

  model: CasimirModel
  E0: float
  r: np.ndarray
  psi: np.ndarray
  U: np.ndarray
  rho: np.ndarray
  m: np.ndarray
  R_supp: float
  M: float
  compact: bool
  admissible: bool
  report: Optional[FunctionalReport] = None
  meta: Dict[str, Any] = Field(default_factory=dict)

  @field_validator("r", "psi", "U", "rho", "m", mode="before")
  @classmethod
  def _arrays(cls, v):
    return _readonly(v)

  @property
  def grid(self) -> RadialGrid:
    return RadialGrid(nodes=self.r)

  @property
  def extent(self) -> float:
    """Finite outer radius of the tabulation (R_supp when compact)."""
    return float(self.r[-1])

  @property
  def t_dyn(self) -> float:
    return 2.0 * math.pi * math.sqrt(self.extent**3 / self.M)


# ============================================================================
# SCALING
# ============================================================================


class WitnessResult(BaseModel):
  gamma: float
  found: bool
  eta: Optional[float] = None
  b: Optional[float] = None
  c: Optional[float] = None
  a: Optional[float] = None
  D: Optional[float] = None
  a_bound: Optional[float] = None
  failure: Optional[str] = None
  sweep: List[Tuple[float, float]] = Field(default_factory=list)


class CheckResult(BaseModel):
  name: str
  passed: bool
  value: Optional[float] = None
  threshold: Optional[float] = None
  detail: str = ""


class ScalingReport(BaseModel):
  alpha: float
  C_alpha: float
  R_M: Optional[float] = None
  D_M: Optional[float] = None
  D_M_source: str = ""
  witnesses: List[WitnessResult] = Field(default_factory=list)
  checks: List[CheckResult] = Field(default_factory=list)
  notes: List[str] = Field(default_factory=list)

  @model_validator(mode="after")
  def _check(self):
    if not (self.alpha > 0 and self.C_alpha > 0):
      raise ValueError("alpha and C_alpha must be positive")
    return self


# ============================================================================
# DYNAMICS
# ============================================================================


class ParticleEnsemble(ArrayModel):
  """Weighted spherical shells (r, v_r, L = |x x v|^2, mass)."""

  r: np.ndarray
  u: np.ndarray
  L: np.ndarray
  w: np.ndarray
  t: float = 0.0

  @field_validator("r", "u", "L", "w", mode="before")
  @classmethod
  def _arrays(cls, v):
    return _readonly(v)

  @model_validator(mode="after")
  def _check(self):
    n = self.r.size
    if not (self.u.size == self.L.size == self.w.size == n):
      raise ValueError("particle arrays must have equal length")
    if np.any(self.r <= 0) or np.any(self.L < 0) or np.any(self.w <= 0):
      raise ValueError("need r > 0, L >= 0 and w > 0 for every shell")
    return self

  @property
  def n(self) -> int:
    return int(self.r.size)

  @property
  def mass(self) -> float:
    return float(np.sum(self.w))


class SimConfig(BaseModel):
  dt: float
  t_end: float
  cadence: int = DIAGNOSTIC_CADENCE
  seed: int = 0
  eps_r: float = 0.0
  n_particles: int = DEFAULT_PARTICLES

  @model_validator(mode="after")
  def _check(self):
    if not self.dt > 0:
      raise ValueError("dt must be > 0")
    if not self.eps_r >= 0:
      raise ValueError("eps_r must be >= 0")
    return self


DIAGNOSTIC_COLUMNS = (
  "t",
  "Ekin",
  "Epot",
  "Etot",
  "d_surrogate",
  "field_dist",
  "lyapunov_sum",
  "mass",
  "L_drift_max",
)


class DiagnosticSample(BaseModel):
  t: float
  Ekin: float
  Epot: float
  Etot: float
  d_surrogate: float
  field_dist: float
  lyapunov_sum: float
  mass: float
  L_drift_max: float

  def row(self) -> List[float]:
    return [getattr(self, name) for name in DIAGNOSTIC_COLUMNS]


class DiagnosticSeries(BaseModel):
  samples: List[DiagnosticSample] = Field(default_factory=list)
  notes: List[str] = Field(default_factory=list)

  def column(self, name: str) -> np.ndarray:
    return np.array([getattr(s, name) for s in self.samples])


# ============================================================================
# EXPERIMENT CONFIG AND MANIFEST
# ============================================================================

ExperimentKind = Literal["steady", "scaling", "stability", "checks", "sim"]


class _Section(BaseModel):
  model_config = ConfigDict(extra="forbid")


class ExperimentSection(_Section):
  kind: ExperimentKind = "steady"
  seed: int = 0
  out: str = "runs/latest"
  allow_out_of_range: bool = False


class ModelSection(_Section):
  c1: float = 1.0
  c2: float = 0.0
  k1: float = 1.0
  k2: Optional[float] = None
  l: float = 0.0  # noqa: E741
  gamma: float = 0.0
  f0_threshold: float = DEFAULT_F0_THRESHOLD

  def to_model(self) -> CasimirModel:
    return CasimirModel(**self.model_dump())


class GridSection(_Section):
  n_radial: int = RADIAL_NODES
  n_r: int = PHASE_GRID_SHAPE[0]
  n_u: int = PHASE_GRID_SHAPE[1]
  n_w: int = PHASE_GRID_SHAPE[2]
  r_max: Optional[float] = None
  v_max: Optional[float] = None


class SolverSection(_Section):
  method: Literal["shoot", "match_mass", "scf"] = "shoot"
  central_psi: float = 1.0
  mass: Optional[float] = None
  rtol: float = ODE_RTOL
  atol: float = ODE_ATOL
  scf_damping: float = SCF_DAMPING
  scf_tol: float = SCF_TOL
  scf_max_iter: int = SCF_MAX_ITER


class SimSection(_Section):
  n_particles: int = DEFAULT_PARTICLES
  steps_per_tdyn: int = STEPS_PER_TDYN
  t_end_tdyn: float = SIM_TDYN
  cadence: int = DIAGNOSTIC_CADENCE
  eps_r_factor: float = EPS_R_FACTOR
  mass: float = 1.0
  snapshot: Optional[str] = None


class PerturbationSection(_Section):
  kind: Literal["dilation", "modulation"] = "dilation"
  amplitude: float = 0.0


def _split_list(v):
  if isinstance(v, str):
    return [item.strip() for item in v.split(",") if item.strip()]
  return v


class ScalingSection(_Section):
  M1: float = 0.5
  M2: float = 1.0
  gamma_grid: List[float] = Field(default_factory=lambda: list(WITNESS_GAMMAS))
  split_radii: List[float] = Field(default_factory=list)  # multiples of R_M
  split_moved: float = Field(default=FAR_SHELL_FRACTION, ge=0.0, lt=1.0)

  @field_validator("gamma_grid", "split_radii", mode="before")
  @classmethod
  def _lists(cls, v):
    return _split_list(v)


class ExperimentConfig(BaseModel):
  experiment: ExperimentSection = Field(default_factory=ExperimentSection)
  model: ModelSection = Field(default_factory=ModelSection)
  grid: GridSection = Field(default_factory=GridSection)
  solver: SolverSection = Field(default_factory=SolverSection)
  sim: SimSection = Field(default_factory=SimSection)
  perturbation: PerturbationSection = Field(default_factory=PerturbationSection)
  scaling: ScalingSection = Field(default_factory=ScalingSection)
  sections_present: List[str] = Field(default_factory=list)

  @property
  def kind(self) -> str:
    return self.experiment.kind


class FileEntry(BaseModel):
  path: str
  sha256: str
  size: int


class RunManifest(BaseModel):
  config: Dict[str, Any]
  version: str
  started: str
  finished: str = ""
  files: List[FileEntry] = Field(default_factory=list)
  checks: List[CheckResult] = Field(default_factory=list)
  errors: List[str] = Field(default_factory=list)
  exit_code: int = 0

  def summary(self) -> Dict[str, int]:
    passed = sum(1 for c in self.checks if c.passed)
    return {"passed": passed, "failed": len(self.checks) - passed}
