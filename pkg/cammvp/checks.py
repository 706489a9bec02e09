"""
The invariant suite run by `camm-vp checks`.

Each group returns CheckResults; a failed check is reported, never raised.
"""

import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import dblquad

from cammvp.casimir import qprime_inverse
from cammvp.config import (
  DEBUG_MAX_WORKERS,
  FAR_SHELL_FRACTION,
  MAX_WORKERS,
  SUITE_SAMPLES,
)
from cammvp.dynamics import ensemble_energy, perturb, sample_from, step
from cammvp.models import (
  AnsatzState,
  CasimirModel,
  CheckResult,
  GridDensity,
  ParticleEnsemble,
  RadialGrid,
  SpatialDensity,
)
from cammvp.phasespace import (
  bump_mixture,
  d_distance,
  energy_casimir_identity_residual,
  functional_report,
  mass_of,
  phase_grid,
  rescale,
  sample_state,
)
from cammvp.radialfield import (
  green_identity_residual,
  mass_bound,
  radial_grid,
  split_bound,
  velocity_bound,
)
from cammvp.scalinglab import concentration_constant, scaling_report, split_family
from cammvp.steadystate import (
  e0_consistency,
  el_residual,
  match_mass,
  plummer_reference,
  rho_of_potential,
  solve_steady,
  virial_residual,
)

print_lock = threading.Lock()


def thread_safe_print(*args, **kwargs):
  """Thread-safe print function."""
  with print_lock:
    print(*args, **kwargs)


STEADY_CASES: Dict[str, CasimirModel] = {
  "k1=1": CasimirModel(c1=1.0, k1=1.0),
  "k1=0.5": CasimirModel(c1=1.0, k1=0.5),
  "gamma=0.1": CasimirModel(c1=1.0, k1=1.0, gamma=0.1),
  "l=0.5": CasimirModel(c1=1.0, k1=1.2, l=0.5),
  "two-term": CasimirModel(c1=1.0, k1=0.6, c2=0.5, k2=1.0),
}
"""Admissible parameter sets of the Euler-Lagrange suite."""

POLYTROPE = CasimirModel(c1=1.0, k1=1.0)
PLUMMER = CasimirModel(c1=1.0, k1=3.5)
SMALL_PHASE_SHAPE = (40, 32, 24)


def _result(
  name: str, value: float, threshold: float, passed: bool, detail: str = ""
) -> CheckResult:
  return CheckResult(
    name=name,
    passed=bool(passed),
    value=float(value),
    threshold=threshold,
    detail=detail,
  )


# ============================================================================
# RANDOM INPUTS AND ORACLES
# ============================================================================


def random_density(
  rng: np.random.Generator,
  rule: str = "cubic",
  n_nodes: int = 1025,
  grid: Optional[RadialGrid] = None,
) -> SpatialDensity:
  """Sum of one to three positive Gaussian shells (on a fresh grid by default)."""
  grid = grid or radial_grid(float(rng.uniform(1.0, 5.0)), n_nodes)
  r = grid.nodes
  r_max = grid.r_max
  values = np.zeros_like(r)
  for _ in range(rng.integers(1, 4)):
    center = rng.uniform(0.0, 0.5) * r_max
    width = rng.uniform(0.05, 0.2) * r_max
    values += rng.uniform(0.2, 2.0) * np.exp(-(((r - center) / width) ** 2))
  return SpatialDensity(grid=grid, values=values, rule=rule)


def random_model(rng: np.random.Generator) -> CasimirModel:
  """Admissible single power model with random (k, l, gamma)."""
  l = float(rng.uniform(-0.4, 1.5))  # noqa: E741
  k = float(rng.uniform(0.2, l + 1.45))
  gamma = float(rng.choice([0.0, rng.uniform(0.0, 2.0)]))
  return CasimirModel(c1=float(rng.uniform(0.5, 2.0)), k1=k, l=l, gamma=gamma)


def density_oracle(model: CasimirModel, psi: float, r: float) -> float:
  """rho by adaptive 2D quadrature of 2 pi int int f0 w dw du (oracle only)."""
  if psi <= 0:
    return 0.0
  stretch = 0.5 + model.gamma * r**2
  l = model.l  # noqa: E741

  def integrand(w, u):
    arg = psi - 0.5 * u**2 - stretch * w**2
    if arg <= 0:
      return 0.0
    return qprime_inverse(model, arg) * (r * r * w * w) ** l * w

  def w_top(u):
    return math.sqrt(max(psi - 0.5 * u**2, 0.0) / stretch)

  half, _ = dblquad(
    integrand, 0.0, math.sqrt(2.0 * psi), 0.0, w_top, epsabs=0.0, epsrel=1e-12
  )
  return 4.0 * math.pi * half


def _kepler_drift(dt: float, t_end: float, L: float = 0.5) -> float:
  """Max relative energy error of one test shell around a unit point mass."""
  ensemble = ParticleEnsemble(r=[1.0], u=[0.0], L=[L], w=[1.0])
  unit = lambda r: np.ones_like(r)  # noqa: E731
  kinetic, potential = ensemble_energy(ensemble, unit)
  E0 = kinetic + potential
  worst = 0.0
  for _ in range(int(round(t_end / dt))):
    ensemble = step(ensemble, dt, mass_profile=unit)
    kinetic, potential = ensemble_energy(ensemble, unit)
    worst = max(worst, abs(kinetic + potential - E0))
  return worst / abs(E0)


# ============================================================================
# CHECK GROUPS
# ============================================================================


def check_plummer(rng: np.random.Generator, samples: int) -> List[CheckResult]:
  state = solve_steady(PLUMMER, 1.0, allow_out_of_range=True)
  M_inf, a = plummer_reference(PLUMMER, 1.0)
  inside = (state.m <= 0.999 * M_inf) & (state.r > 0)
  exact = M_inf / np.sqrt(a**2 + state.r[inside] ** 2)
  error = float(np.max(np.abs(state.psi[inside] - exact) / exact))
  return [_result("plummer_potential", error, 1e-5, error < 1e-5)]


def check_ansatz_reduction(rng: np.random.Generator, samples: int) -> List[CheckResult]:
  worst = 0.0
  for _ in range(samples):
    model = random_model(rng)
    psi, r = float(rng.uniform(0.05, 2.0)), float(rng.uniform(0.05, 2.0))
    closed = rho_of_potential(model, psi, r)
    oracle = density_oracle(model, psi, r)
    worst = max(worst, abs(closed - oracle) / abs(oracle))
  return [
    _result("ansatz_reduction", worst, 1e-8, worst < 1e-8, f"{samples} random points")
  ]


def check_steady_states(rng: np.random.Generator, samples: int) -> List[CheckResult]:
  results = []
  for label, model in STEADY_CASES.items():
    state = solve_steady(model, 1.0)
    scale = abs(state.E0)
    sup_on, min_off = el_residual(state)
    mismatch = e0_consistency(state)
    results += [
      _result(f"el_support[{label}]", sup_on, 1e-6 * scale, sup_on < 1e-6 * scale),
      _result(f"el_off_support[{label}]", min_off, -1e-10, min_off >= -1e-10),
      _result(f"e0_consistency[{label}]", mismatch, 1e-6, mismatch < 1e-6),
      _result(
        f"negative_energies[{label}]",
        state.report.total,
        0.0,
        state.E0 < 0 and state.report.total < 0,
        f"E0={state.E0:.8g}",
      ),
    ]
    if state.compact:
      virial = virial_residual(state)
      results.append(_result(f"virial[{label}]", virial, 1e-4, virial <= 1e-4))
  return results


def check_radial_inequalities(
  rng: np.random.Generator, samples: int
) -> List[CheckResult]:
  mass_margin = math.inf
  split_margin = math.inf
  green = 0.0
  for _ in range(samples):
    rho = random_density(rng)
    n1 = float(rng.uniform(0.5, 3.0))
    l = float(rng.uniform(0.0, min(1.0, 1.4 * n1)))  # noqa: E741
    m, bound = mass_bound(rho, n1, l)
    mass_margin = min(mass_margin, float(np.min(bound - m)))
    R = float(rng.uniform(0.1, 1.5)) * rho.grid.r_max
    lhs, rhs = split_bound(rho, R)
    split_margin = min(split_margin, (rhs - lhs) / (1.0 + abs(lhs)))
    other = random_density(rng, grid=rho.grid)
    green = max(green, green_identity_residual(rho, other))
  return [
    _result("mass_bound", mass_margin, -1e-10, mass_margin >= -1e-10),
    _result("field_split_bound", split_margin, -1e-10, split_margin >= -1e-10),
    _result("green_identity", green, 1e-6, green < 1e-6),
  ]


def _polytrope_grid() -> Tuple[AnsatzState, GridDensity]:
  state = match_mass(POLYTROPE, 1.0)
  grid = phase_grid(state.extent, velocity_bound(state), SMALL_PHASE_SHAPE)
  return state, sample_state(state, like=grid)


def check_d_distance(rng: np.random.Generator, samples: int) -> List[CheckResult]:
  state, f0 = _polytrope_grid()
  self_distance = abs(d_distance(f0, state))
  support = (state.extent, velocity_bound(state))
  lowest = math.inf
  identity = 0.0
  for _ in range(samples):
    f = bump_mixture(f0, mass_of(f0), rng, support=support)
    lowest = min(lowest, d_distance(f, state))
    identity = max(identity, energy_casimir_identity_residual(f, state))
  delta = 1e-3
  small = d_distance(perturb(f0, "modulation", delta, radius=state.R_supp), state)
  double = d_distance(perturb(f0, "modulation", 2 * delta, radius=state.R_supp), state)
  ratio = double / small
  return [
    _result("d_self", self_distance, 1e-10, self_distance < 1e-10),
    _result("d_nonnegative", lowest, -1e-12, lowest >= -1e-12),
    _result("d_quadratic", ratio, 4.0, 3.5 <= ratio <= 4.5, "d(2 delta) / d(delta)"),
    _result("energy_casimir_identity", identity, 1e-8, identity < 1e-8),
  ]


def check_scaling(rng: np.random.Generator, samples: int) -> List[CheckResult]:
  report = scaling_report(POLYTROPE, 0.5, 1.0, (0.0, 1e-3), use_scf=False)
  results = list(report.checks)
  for witness in report.witnesses:
    results.append(
      _result(
        f"witness_found[gamma={witness.gamma:g}]",
        witness.D if witness.found else math.nan,
        0.0,
        witness.found,
        witness.failure or "",
      )
    )
  C1 = concentration_constant(1.0)
  results.append(_result("concentration_constant_alpha1", C1, 2.0, C1 == 2.0))

  state, f0 = _polytrope_grid()
  f = bump_mixture(f0, 1.0, rng, support=(state.extent, velocity_bound(state)))
  a, b, c = 2.0, 1.5, 0.7
  scaled = rescale(f, a, b, c)
  mass_error = abs(mass_of(scaled) / (a * b**-3 * c**-3 * mass_of(f)) - 1.0)
  base = functional_report(f, POLYTROPE)
  lift = a * (b * c) ** (2 * POLYTROPE.l)
  predicted = (
    b**-3 * c**-3 * lift ** (1.0 + 1.0 / POLYTROPE.k1) * base.casimir
    + a * b**-3 * c**-5 * base.kinetic
    + a**2 * b**-5 * c**-6 * base.potential
  )
  actual = functional_report(scaled, POLYTROPE).total
  d_error = abs(actual - predicted) / abs(predicted)
  results += [
    _result("mass_scaling_identity", mass_error, 1e-12, mass_error < 1e-12),
    _result("functional_scaling_identity", d_error, 1e-6, d_error < 1e-6),
  ]

  D_M = min(state.report.total, functional_report(f0, POLYTROPE).total)
  rows = split_family(state, D_M, moved=(0.05, FAR_SHELL_FRACTION, 0.2))
  worst = min(row["margin"] for row in rows)
  positive = min(row["rhs"] for row in rows)
  results += [
    _result("split_estimate", worst, -1e-8, worst >= -1e-8),
    _result("split_estimate_nontrivial", positive, 0.0, positive > 0.0),
  ]
  return results


def check_simulator(rng: np.random.Generator, samples: int) -> List[CheckResult]:
  state = match_mass(POLYTROPE, 1.0)
  ensemble = sample_from(state, 2000, seed=int(rng.integers(1 << 31)))
  start_L, start_mass = ensemble.L, ensemble.mass
  dt = state.t_dyn / 2000
  for _ in range(100):
    ensemble = step(ensemble, dt, eps_r=1e-6 * state.R_supp)
  L_drift = float(np.max(np.abs(ensemble.L - start_L)))
  mass_drift = abs(ensemble.mass - start_mass)

  coarse = _kepler_drift(2e-3, 10.0)
  fine = _kepler_drift(1e-3, 10.0)
  order = coarse / fine

  unit = lambda r: np.ones_like(r)  # noqa: E731
  shell = ParticleEnsemble(r=[1.0], u=[0.1], L=[0.6], w=[1.0])
  moved = shell
  for _ in range(1000):
    moved = step(moved, 1e-3, mass_profile=unit)
  for _ in range(1000):
    moved = step(moved, -1e-3, mass_profile=unit)
  reversal = max(abs(moved.r[0] - shell.r[0]), abs(moved.u[0] - shell.u[0]))
  return [
    _result("angular_momentum_drift", L_drift, 0.0, L_drift == 0.0),
    _result("mass_drift", mass_drift, 0.0, mass_drift == 0.0),
    _result("kepler_order", order, 4.0, 3.5 <= order <= 4.5, "drift(dt) / drift(dt/2)"),
    _result("reversibility", reversal, 1e-10, reversal < 1e-10),
  ]


SUITE: Dict[str, Callable[[np.random.Generator, int], List[CheckResult]]] = {
  "plummer": check_plummer,
  "ansatz": check_ansatz_reduction,
  "steady": check_steady_states,
  "radial": check_radial_inequalities,
  "distance": check_d_distance,
  "scaling": check_scaling,
  "simulator": check_simulator,
}


def run_suite(
  seed: int = 0,
  samples: int = SUITE_SAMPLES,
  groups: Optional[List[str]] = None,
  max_workers: Optional[int] = None,
) -> List[CheckResult]:
  """Run the selected check groups concurrently; results come back in suite order.

  Each group draws from its own generator seeded from (seed, group index), so
  results do not depend on scheduling.
  """
  names = groups or list(SUITE)
  if max_workers is None:
    max_workers = DEBUG_MAX_WORKERS if os.environ.get("DEBUG") else MAX_WORKERS

  def run_group(index: int, name: str) -> List[CheckResult]:
    rng = np.random.default_rng([seed, index])
    try:
      results = SUITE[name](rng, samples)
    except Exception as e:
      detail = f"{type(e).__name__}: {e}"
      results = [CheckResult(name=name, passed=False, detail=detail)]
    passed = sum(r.passed for r in results)
    thread_safe_print(f"[Checks] {name}: {passed}/{len(results)} passed")
    return results

  collected: Dict[str, List[CheckResult]] = {}
  with ThreadPoolExecutor(max_workers=max_workers) as executor:
    futures = {
      executor.submit(run_group, i, name): name for i, name in enumerate(names)
    }
    for future in as_completed(futures):
      collected[futures[future]] = future.result()
  return [result for name in names for result in collected[name]]
