"""
Spherically symmetric Vlasov-Poisson flow with weighted shell particles.

Each particle is a shell (r, u = v_r, L = |x x v|^2, w = mass) moving in
r'' = L/r^3 - m(r)/r^2, with m(r_i) the mass strictly inside plus half the
shell's own mass. The integrator is kick-drift-kick leapfrog with one force
evaluation per step.
"""

import hashlib
import json
import math
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel

from cammvp.casimir import qprime_inverse
from cammvp.config import (
  DEFAULT_PARTICLES,
  DIAGNOSTIC_CADENCE,
  ENERGY_DRIFT_TOL,
  EPS_R_FACTOR,
  MODULATION_MODES,
  PHASE_GRID_SHAPE,
  PROFILE_VERSION,
  REJECTION_FLOOR,
  SIM_LOG_EVERY,
  SIM_TDYN,
  STABILITY_BOUND_FACTOR,
  STEPS_PER_TDYN,
)
from cammvp.models import (
  AnsatzState,
  CasimirModel,
  DiagnosticSample,
  DiagnosticSeries,
  DomainError,
  FormatError,
  GridDensity,
  ParticleEnsemble,
  SamplingError,
  SimConfig,
)
from cammvp.phasespace import (
  _measure,
  casimir_functional,
  d_distance,
  field_distance,
  linear_energy_term,
  mass_of,
  sample_state,
)
from cammvp.radialfield import FOUR_PI, potential_at, psi_at, spline_integral
from cammvp.steadystate import match_mass

MassProfile = Callable[[np.ndarray], np.ndarray]

# ============================================================================
# FORCES AND STEPPING
# ============================================================================


def _enclosed_mass(
  r: np.ndarray, w: np.ndarray, order: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
  """(m_i, new order); order is re-sorted by radius with a stable sort."""
  order = order[np.argsort(r[order], kind="stable")]
  sorted_w = w[order]
  inside = np.cumsum(sorted_w) - sorted_w
  m = np.empty_like(r)
  m[order] = inside + 0.5 * sorted_w
  return m, order


def _acceleration(
  r: np.ndarray,
  L: np.ndarray,
  w: np.ndarray,
  order: np.ndarray,
  mass_profile: Optional[MassProfile],
) -> Tuple[np.ndarray, np.ndarray]:
  if mass_profile is not None:
    m = np.broadcast_to(mass_profile(r), r.shape)
  else:
    m, order = _enclosed_mass(r, w, order)
  return (L / r - m) / r**2, order


def _reflect(r: np.ndarray, u: np.ndarray, eps_r: float) -> None:
  inner = r < eps_r
  if np.any(inner):
    r[inner] = 2.0 * eps_r - r[inner]
    u[inner] = -u[inner]


def step(
  ensemble: ParticleEnsemble,
  dt: float,
  eps_r: float = 0.0,
  mass_profile: Optional[MassProfile] = None,
) -> ParticleEnsemble:
  """One kick-drift-kick step. L and w are carried over untouched."""
  r, u = ensemble.r.copy(), ensemble.u.copy()
  order = np.arange(ensemble.n)
  acc, order = _acceleration(r, ensemble.L, ensemble.w, order, mass_profile)
  u += 0.5 * dt * acc
  r += dt * u
  _reflect(r, u, eps_r)
  acc, _ = _acceleration(r, ensemble.L, ensemble.w, order, mass_profile)
  u += 0.5 * dt * acc
  return ParticleEnsemble(r=r, u=u, L=ensemble.L, w=ensemble.w, t=ensemble.t + dt)


def ensemble_energy(
  ensemble: ParticleEnsemble, mass_profile: Optional[MassProfile] = None
) -> Tuple[float, float]:
  """(E_kin, E_pot) of the shells; a frozen profile gives E_pot = -sum w M(r)/r."""
  r, w = ensemble.r, ensemble.w
  kinetic = float(np.sum(w * 0.5 * (ensemble.u**2 + ensemble.L / r**2)))
  if mass_profile is not None:
    return kinetic, float(-np.sum(w * np.broadcast_to(mass_profile(r), r.shape) / r))
  m, _ = _enclosed_mass(r, w, np.arange(ensemble.n))
  return kinetic, float(-np.sum(w * m / r))


# ============================================================================
# SAMPLING AND PERTURBATIONS
# ============================================================================


def _speed_fraction(
  model: CasimirModel, psi: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
  """z = s^2 on [0, 1] with density g(psi (1 - z)) z^(l + 1/2), g = (Q')^-1.

  Proposals come from Beta(l + 3/2, k3 + 1), which is exact for a pure power.
  Otherwise g(psi t) <= t^k3 g(psi) for t <= 1 bounds the acceptance ratio by 1.
  """
  a, b = model.l + 1.5, model.k3 + 1.0
  n = psi.size
  if model.is_pure_power:
    return rng.beta(a, b, n)
  g_center = qprime_inverse(model, psi)
  z = np.empty(n)
  pending = np.arange(n)
  proposed = accepted = 0
  while pending.size:
    trial = rng.beta(a, b, pending.size)
    t = 1.0 - trial
    with np.errstate(divide="ignore", invalid="ignore"):
      ratio = qprime_inverse(model, psi[pending] * t) / (
        g_center[pending] * t**model.k3
      )
    keep = rng.random(pending.size) < np.nan_to_num(ratio)
    proposed += pending.size
    accepted += int(keep.sum())
    if proposed >= n and accepted < REJECTION_FLOOR * proposed:
      raise SamplingError(
        f"rejection efficiency {accepted / proposed:.2e} is below "
        f"{REJECTION_FLOOR:g}; adjust the proposal envelope"
      )
    z[pending[keep]] = trial[keep]
    pending = pending[~keep]
  return z


def _sample_state(state: AnsatzState, n: int, rng: np.random.Generator):
  model = state.model
  # inverse transform in m0
  targets = state.M * (1.0 - rng.random(n))
  increasing = np.concatenate([[True], np.diff(state.m) > 0])
  r = np.interp(targets, state.m[increasing], state.r[increasing])
  psi = np.clip(psi_at(state, r), 0.0, None)
  if np.any(psi <= 0):
    raise SamplingError("sampled radius outside the support of f0")
  stretch = 0.5 + model.gamma * r**2

  # u = sqrt(2 psi) s cos(theta), w = sqrt(psi / stretch) s sin(theta); the
  # velocity density then separates into sin^(2l+1)(theta) and a law for s
  cos_t = 2.0 * rng.beta(model.l + 1.0, model.l + 1.0, n) - 1.0
  s = np.sqrt(_speed_fraction(model, psi, rng))
  u = np.sqrt(2.0 * psi) * s * cos_t
  w = np.sqrt(psi / stretch) * s * np.sqrt(1.0 - cos_t**2)
  return r, u, w, state.M


def _dual_cell(axis: np.ndarray, index: np.ndarray, rng: np.random.Generator):
  mids = 0.5 * (axis[1:] + axis[:-1])
  lo = np.concatenate([[axis[0]], mids])[index]
  hi = np.concatenate([mids, [axis[-1]]])[index]
  return rng.uniform(lo, hi)


def _sample_grid(f: GridDensity, n: int, rng: np.random.Generator):
  weights = (_measure(f) * f.values).ravel()
  total = weights.sum()
  if not total > 0:
    raise SamplingError("grid density has no mass")
  flat = rng.choice(weights.size, size=n, p=weights / total)
  i, j, k = np.unravel_index(flat, f.shape)
  r = _dual_cell(f.r, i, rng)
  u = _dual_cell(f.u, j, rng)
  w = _dual_cell(f.w, k, rng)
  r = np.where(r > 0, r, f.r[1] * 1e-6)
  return r, u, w, mass_of(f)


def sample_from(
  source: Union[AnsatzState, GridDensity], n: int = DEFAULT_PARTICLES, seed: int = 0
) -> ParticleEnsemble:
  """n equal-weight shells drawn from f (deterministic in seed)."""
  if n < 1:
    raise DomainError("need at least one particle")
  rng = np.random.default_rng(seed)
  if isinstance(source, AnsatzState):
    r, u, w, M = _sample_state(source, n, rng)
  else:
    r, u, w, M = _sample_grid(source, n, rng)
  return ParticleEnsemble(r=r, u=u, L=r**2 * w**2, w=np.full(n, M / n))


def _modulation(r: np.ndarray, radius: float) -> np.ndarray:
  return np.cos(math.pi * MODULATION_MODES * np.clip(r / radius, 0.0, 1.0))


def perturb(
  data: Union[ParticleEnsemble, GridDensity],
  kind: str,
  amplitude: float,
  radius: Optional[float] = None,
):
  """Mass-preserving perturbation: `dilation` (u -> (1 + delta) u) or
  `modulation` (f -> f (1 + delta g) with g a mass-neutral radial cosine)."""
  if kind not in ("dilation", "modulation"):
    raise DomainError(f"unknown perturbation kind {kind!r}")
  if not amplitude >= 0:
    raise DomainError("amplitude must be >= 0")
  if amplitude == 0:
    return data
  scale = 1.0 + amplitude

  if isinstance(data, ParticleEnsemble):
    if kind == "dilation":
      return ParticleEnsemble(r=data.r, u=data.u * scale, L=data.L, w=data.w, t=data.t)
    g = _modulation(data.r, radius or float(np.max(data.r)))
    g = g - np.sum(data.w * g) / data.mass
    w = data.w * (1.0 + amplitude * g)
    w = w * (data.mass / np.sum(w))
    return ParticleEnsemble(r=data.r, u=data.u, L=data.L, w=w, t=data.t)

  mass = mass_of(data)
  if kind == "dilation":
    source = data.u / scale
    j = np.clip(np.searchsorted(data.u, source) - 1, 0, data.u.size - 2)
    t = (source - data.u[j]) / (data.u[j + 1] - data.u[j])
    inside = (source >= data.u[0]) & (source <= data.u[-1])
    values = (1.0 - t)[None, :, None] * data.values[:, j, :] + t[
      None, :, None
    ] * data.values[:, j + 1, :]
    values = np.where(inside[None, :, None], values, 0.0) / scale
  else:
    g = _modulation(data.r, radius or float(data.r[-1]))[:, None, None]
    g = g - float(np.sum(_measure(data) * data.values * g)) / mass
    values = data.values * (1.0 + amplitude * g)
  perturbed = data.with_values(values)
  return perturbed.with_values(values * (mass / mass_of(perturbed)))


# ============================================================================
# DIAGNOSTICS
# ============================================================================


class DistanceBaseline(BaseModel):
  """Steady-state constants subtracted in the particle d-surrogate.

  d = C_initial - casimir_steady + sum_i w_i (E_i + gamma L_i - E0) - linear_steady
  """

  casimir_steady: float
  linear_steady: float
  source: str = "state"

  @classmethod
  def from_state(cls, state: AnsatzState) -> "DistanceBaseline":
    """C(f0) and int int (E + gamma L - E0) f0 from the state's own report."""
    report = state.report
    if report is None:
      raise DomainError("the state carries no functional report")
    integrand = FOUR_PI * state.r**2 * state.U * state.rho
    integrand[0] = 0.0
    field_work = spline_integral(state.r, integrand)
    linear = report.kinetic + field_work + report.angular - state.E0 * state.M
    return cls(casimir_steady=report.casimir, linear_steady=linear, source="state")


def particle_linear_term(ensemble: ParticleEnsemble, state: AnsatzState) -> float:
  """sum_i w_i (1/2 (u_i^2 + L_i/r_i^2) + U0(r_i) + gamma L_i - E0)."""
  r = ensemble.r
  energy = 0.5 * (ensemble.u**2 + ensemble.L / r**2) + potential_at(state, r)
  excess = energy + state.model.gamma * ensemble.L - state.E0
  return float(np.sum(ensemble.w * excess))


def diagnostics(
  ensemble: ParticleEnsemble,
  steady: AnsatzState,
  C_initial: float,
  baseline: Optional[DistanceBaseline] = None,
  L_initial: Optional[np.ndarray] = None,
) -> DiagnosticSample:
  """Energies, d-surrogate and field distance of the shells at one time."""
  baseline = baseline or DistanceBaseline.from_state(steady)
  kinetic, potential = ensemble_energy(ensemble)
  d = (
    C_initial
    - baseline.casimir_steady
    + particle_linear_term(ensemble, steady)
    - baseline.linear_steady
  )
  field = field_distance(ensemble, steady)
  drift = 0.0
  if L_initial is not None:
    drift = float(np.max(np.abs(ensemble.L - L_initial)))
  return DiagnosticSample(
    t=ensemble.t,
    Ekin=kinetic,
    Epot=potential,
    Etot=kinetic + potential,
    d_surrogate=d,
    field_dist=field,
    lyapunov_sum=d + field / (8.0 * math.pi),
    mass=ensemble.mass,
    L_drift_max=drift,
  )


def evolve(
  ensemble: ParticleEnsemble,
  steady: AnsatzState,
  config: SimConfig,
  C_initial: float,
  baseline: Optional[DistanceBaseline] = None,
  mass_profile: Optional[MassProfile] = None,
) -> Tuple[ParticleEnsemble, DiagnosticSeries]:
  """Leapfrog from ensemble.t to config.t_end, sampling every config.cadence steps."""
  baseline = baseline or DistanceBaseline.from_state(steady)
  dt = config.dt
  n_steps = max(int(round((config.t_end - ensemble.t) / dt)), 0)
  r, u = ensemble.r.copy(), ensemble.u.copy()
  L, w = ensemble.L, ensemble.w
  L_initial = L.copy()
  t0 = ensemble.t
  order = np.arange(ensemble.n)
  acc, order = _acceleration(r, L, w, order, mass_profile)
  series = DiagnosticSeries()

  def snapshot(n_done: int) -> ParticleEnsemble:
    return ParticleEnsemble(r=r.copy(), u=u.copy(), L=L, w=w, t=t0 + n_done * dt)

  def record(n_done: int) -> None:
    sample = diagnostics(snapshot(n_done), steady, C_initial, baseline, L_initial)
    series.samples.append(sample)
    if len(series.samples) % SIM_LOG_EVERY == 1:
      print(
        f"[Sim] t={sample.t:.4g} Etot={sample.Etot:.10g} "
        f"d={sample.d_surrogate:.3e} field={sample.field_dist:.3e}"
      )

  record(0)
  for n_done in range(1, n_steps + 1):
    u += 0.5 * dt * acc
    r += dt * u
    _reflect(r, u, config.eps_r)
    acc, order = _acceleration(r, L, w, order, mass_profile)
    u += 0.5 * dt * acc
    if n_done % config.cadence == 0 or n_done == n_steps:
      record(n_done)
  return snapshot(n_steps), series


# ============================================================================
# STABILITY EXPERIMENT
# ============================================================================


def perturbed_start(
  state: AnsatzState,
  kind: str,
  amplitude: float,
  n_particles: int = DEFAULT_PARTICLES,
  seed: int = 0,
  grid_shape: Tuple[int, int, int] = PHASE_GRID_SHAPE,
) -> Tuple[ParticleEnsemble, DistanceBaseline, float, float]:
  """(perturbed shells, grid-calibrated baseline, C_initial, grid d at t = 0).

  The same perturbation is applied to the shells and to f0 on a phase-space
  grid; the baseline is chosen so the particle d-surrogate at t = 0 equals
  the grid d-distance of the perturbed data.
  """
  model = state.model
  f0_grid = sample_state(state, shape=grid_shape)
  f_init = perturb(f0_grid, kind, amplitude, radius=state.R_supp)
  particles = perturb(
    sample_from(state, n_particles, seed), kind, amplitude, radius=state.R_supp
  )
  U_grid = potential_at(state, f0_grid.r)
  linear_init = linear_energy_term(f_init, U_grid, state.E0, model.gamma)
  linear_steady = linear_energy_term(f0_grid, U_grid, state.E0, model.gamma)
  baseline = DistanceBaseline(
    casimir_steady=casimir_functional(f0_grid, model),
    linear_steady=particle_linear_term(particles, state)
    - (linear_init - linear_steady),
    source="grid",
  )
  C_initial = casimir_functional(f_init, model)
  return particles, baseline, C_initial, d_distance(f_init, state)


def run_stability(
  model: CasimirModel,
  M: float = 1.0,
  kind: str = "dilation",
  amplitude: float = 0.01,
  n_particles: int = DEFAULT_PARTICLES,
  steps_per_tdyn: int = STEPS_PER_TDYN,
  t_end_tdyn: float = SIM_TDYN,
  cadence: int = DIAGNOSTIC_CADENCE,
  eps_r_factor: float = EPS_R_FACTOR,
  seed: int = 0,
  grid_shape: Tuple[int, int, int] = PHASE_GRID_SHAPE,
  allow_out_of_range: bool = False,
) -> Tuple[DiagnosticSeries, Dict]:
  """Perturb the mass-M minimizer, evolve the shells and summarize the deviation.

  The d-surrogate baseline is calibrated on the phase-space grid at t = 0, so
  the first sample equals the grid d-distance of the perturbed data.
  """
  state = match_mass(model, M, allow_out_of_range=allow_out_of_range)
  particles, baseline, C_initial, d_grid = perturbed_start(
    state, kind, amplitude, n_particles, seed, grid_shape
  )

  t_dyn = state.t_dyn
  config = SimConfig(
    dt=t_dyn / steps_per_tdyn,
    t_end=t_end_tdyn * t_dyn,
    cadence=cadence,
    seed=seed,
    eps_r=eps_r_factor * state.R_supp,
    n_particles=n_particles,
  )
  print(
    f"[Sim] stability run: {kind} delta={amplitude:g} N={n_particles} "
    f"t_dyn={t_dyn:.6g} steps={int(round(config.t_end / config.dt))}"
  )
  _, series = evolve(particles, state, config, C_initial, baseline)

  lyapunov = series.column("lyapunov_sum")
  energy = series.column("Etot")
  drift = float(np.max(np.abs(energy - energy[0])) / abs(energy[0]))
  ratio = float(np.max(lyapunov) / lyapunov[0]) if lyapunov[0] > 0 else math.inf
  asserted = state.admissible and amplitude > 0
  summary = {
    "kind": kind,
    "amplitude": amplitude,
    "t_dyn": t_dyn,
    "d_grid_initial": d_grid,
    "lyapunov_initial": float(lyapunov[0]),
    "lyapunov_max": float(np.max(lyapunov)),
    "deviation_ratio": ratio,
    "energy_drift": drift,
    "asserted": asserted,
    "bounded": ratio <= STABILITY_BOUND_FACTOR,
    "energy_ok": drift < ENERGY_DRIFT_TOL,
  }
  series.notes.append(
    "numerical evidence on a particle approximation, not verification"
  )
  series.notes.append(
    "the Casimir term is carried as the conserved constant of the initial grid data"
  )
  if not asserted:
    series.notes.append("no bound asserted for this run; recorded for the report only")
  print(
    f"[Sim] deviation ratio={ratio:.4g} energy drift={drift:.2e} "
    f"({'asserted' if asserted else 'recorded only'})"
  )
  return series, summary


# ============================================================================
# SNAPSHOTS
# ============================================================================

SNAPSHOT_HEADER = "# camm-vp snapshot v"
SNAPSHOT_COLUMNS = ("r", "u", "L", "w")


def store_snapshot(
  ensemble: ParticleEnsemble, path: Union[str, Path], meta: Optional[Dict] = None
) -> Path:
  """Header line with JSON metadata, then a little-endian float64 block (n x 4)."""
  path = Path(path)
  block = np.stack([ensemble.r, ensemble.u, ensemble.L, ensemble.w], axis=1)
  payload = block.astype("<f8").tobytes()
  header = {
    "n": ensemble.n,
    "t": ensemble.t,
    "columns": list(SNAPSHOT_COLUMNS),
    "dtype": "<f8",
    "sha256": hashlib.sha256(payload).hexdigest(),
    "meta": meta or {},
  }
  path.parent.mkdir(parents=True, exist_ok=True)
  with open(path, "wb") as f:
    f.write(f"{SNAPSHOT_HEADER}{PROFILE_VERSION} {json.dumps(header)}\n".encode())
    f.write(payload)
  return path


def load_snapshot(path: Union[str, Path]) -> Tuple[ParticleEnsemble, Dict]:
  with open(path, "rb") as f:
    line = f.readline().decode()
    payload = f.read()
  if not line.startswith(SNAPSHOT_HEADER):
    raise FormatError(f"{path}: not a camm-vp snapshot")
  version, _, rest = line[len(SNAPSHOT_HEADER) :].partition(" ")
  if version != str(PROFILE_VERSION):
    raise FormatError(f"{path}: snapshot version {version} is not supported")
  header = json.loads(rest)
  if hashlib.sha256(payload).hexdigest() != header["sha256"]:
    raise FormatError(f"{path}: checksum mismatch (truncated or edited)")
  block = np.frombuffer(payload, dtype="<f8")
  block = block.reshape(header["n"], len(SNAPSHOT_COLUMNS))
  ensemble = ParticleEnsemble(
    r=block[:, 0], u=block[:, 1], L=block[:, 2], w=block[:, 3], t=header["t"]
  )
  return ensemble, header["meta"]
