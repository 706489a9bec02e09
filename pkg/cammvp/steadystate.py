"""
Camm-type steady states f0 = (Q')^{-1}((E0 - E - gamma L)_+) L^l.

Velocity integrals of f0 reduce to one-dimensional radial integrals in
psi = E0 - U (see LOGIC.md). The Poisson equation is then integrated as an
ODE in (psi, m), so E0 only enters through the exterior match.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import beta, roots_jacobi

from cammvp.casimir import (
  density_constant,
  q_eval,
  qprime_eval,
  qprime_inverse,
  validate_assumptions,
)
from cammvp.config import (
  DEBUG_MAX_WORKERS,
  GAMMA_SCAN,
  JACOBI_NODES,
  MATCH_MASS_MAX_EXPANSIONS,
  MATCH_MASS_RTOL,
  MAX_WORKERS,
  ODE_ATOL,
  ODE_METHOD,
  ODE_RTOL,
  PROFILE_NODES,
  R_MAX_FACTOR,
  SCF_DAMPING,
  SCF_LOG_EVERY,
  SCF_MAX_ITER,
  SCF_RADIUS_FACTOR,
  SCF_TOL,
  START_FRACTION,
)
from cammvp.models import (
  AnsatzState,
  CasimirModel,
  DomainError,
  FunctionalReport,
  RadialGrid,
  SolverError,
  SpatialDensity,
)
from cammvp.radialfield import (
  FOUR_PI,
  mass_function,
  potential_at,
  potential_from_density,
  psi_at,
  radial_grid,
  spline_integral,
  velocity_bound,
)

MOMENT_KINDS = ("density", "kinetic", "angular", "casimir", "qprime")


@lru_cache(maxsize=64)
def _jacobi(n: int, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
  return roots_jacobi(n, a, b)


def velocity_moment(
  model: CasimirModel,
  psi,
  r,
  kind: str = "density",
  scale: float = 1.0,
  nodes: int = JACOBI_NODES,
):
  """Velocity integral of f0 at radius r with psi = E0 - U(r).

  kind:
    density   int f0 dv
    kinetic   int 1/2 |v|^2 f0 dv
    angular   int L f0 dv
    casimir   int Q(L^-l f0) L^l dv
    qprime    int Q'(L^-l s f0) s f0 dv, s = scale

  With beta = 1/2 + gamma r^2 and w' = sqrt(2 beta) w, every moment is
  2 pi r^2l (1 + 2 gamma r^2)^-(l+1) * angular * int_0^inf g(psi - s^2/2) s^n ds;
  the last integral is done by Gauss-Jacobi in x = s^2 / (2 psi), which is
  exact for a single power term.
  """
  if kind not in MOMENT_KINDS:
    raise DomainError(f"unknown moment kind {kind!r}")
  psi_arr, r_arr = np.broadcast_arrays(
    np.asarray(psi, dtype=float), np.asarray(r, dtype=float)
  )
  if np.any(r_arr < 0):
    raise DomainError("r must be >= 0")
  l, gamma = model.l, model.gamma
  stretch = 1.0 + 2.0 * gamma * r_arr**2
  k_max = max(k for _, k in model.terms)

  if kind == "density":
    angular, n, a = beta(l + 1.0, 0.5), 2.0 * l + 2.0, k_max
  elif kind == "kinetic":
    angular = 0.5 * (beta(l + 1.0, 1.5) + beta(l + 2.0, 0.5) / stretch)
    n, a = 2.0 * l + 4.0, k_max
  elif kind == "angular":
    angular = r_arr**2 / stretch * beta(l + 2.0, 0.5)
    n, a = 2.0 * l + 4.0, k_max
  else:
    angular, n, a = beta(l + 1.0, 0.5), 2.0 * l + 2.0, k_max + 1.0

  def integrand(y):
    phi = qprime_inverse(model, y)
    if kind == "casimir":
      return q_eval(model, phi)
    if kind == "qprime":
      return qprime_eval(model, scale * phi) * scale * phi
    return phi

  b = 0.5 * (n - 1.0)
  X, weights = _jacobi(nodes, a, b)
  x = 0.5 * (1.0 + X)
  positive = psi_arr > 0
  radial = np.zeros_like(psi_arr)
  if np.any(positive):
    p = psi_arr[positive][:, None]
    values = integrand(p * (1.0 - x[None, :])) / (1.0 - X[None, :]) ** a
    unit = 2.0 ** (-b - 1.0) * values @ weights
    radial[positive] = 2.0**b * p[:, 0] ** (0.5 * (n + 1.0)) * unit

  with np.errstate(divide="ignore", invalid="ignore"):
    prefactor = 2.0 * math.pi * r_arr ** (2.0 * l) * stretch ** (-(l + 1.0))
  result = np.where(positive, prefactor * angular * radial, 0.0)
  if np.ndim(psi) == 0 and np.ndim(r) == 0:
    return float(result)
  return result


def rho_of_potential(model: CasimirModel, psi, r):
  """rho(r) for psi = E0 - U(r); zero where psi <= 0."""
  if not model.is_pure_power:
    return velocity_moment(model, psi, r, "density")
  psi_arr, r_arr = np.broadcast_arrays(
    np.asarray(psi, dtype=float), np.asarray(r, dtype=float)
  )
  if np.any(r_arr < 0):
    raise DomainError("r must be >= 0")
  l, gamma = model.l, model.gamma
  exponent = model.k1 + l + 1.5
  with np.errstate(divide="ignore", invalid="ignore"):
    value = (
      density_constant(model)
      * r_arr ** (2.0 * l)
      * (1.0 + 2.0 * gamma * r_arr**2) ** (-(l + 1.0))
      * np.clip(psi_arr, 0.0, None) ** exponent
    )
  value = np.where(psi_arr > 0, value, 0.0)
  if np.ndim(psi) == 0 and np.ndim(r) == 0:
    return float(value)
  return value


def _central_density(model: CasimirModel, central_psi: float) -> float:
  """rho / r^2l as r -> 0."""
  flat = model.model_copy(update={"gamma": 0.0})
  return float(rho_of_potential(flat, central_psi, 1.0))


def _check_model(model: CasimirModel, allow_out_of_range: bool) -> bool:
  report = validate_assumptions(model)
  if not report.passed and not allow_out_of_range:
    raise DomainError(
      "model violates the structural assumptions: "
      + "; ".join(report.messages or [str(report.witnesses)])
    )
  return report.passed


def profile_report(
  model: CasimirModel,
  r: np.ndarray,
  psi: np.ndarray,
  m: np.ndarray,
) -> FunctionalReport:
  """Functional report of f0 from radial profiles by moment quadrature."""

  def volume(kind: str) -> float:
    moment = velocity_moment(model, psi, r, kind)
    integrand = FOUR_PI * r**2 * moment
    integrand[0] = 0.0
    return spline_integral(r, integrand)

  field = np.zeros_like(r)
  field[1:] = (m[1:] / r[1:]) ** 2
  total = float(m[-1])
  potential = -0.5 * spline_integral(r, field) - total**2 / (2.0 * r[-1])
  return FunctionalReport.assemble(
    mass=total,
    kinetic=volume("kinetic"),
    potential=potential,
    casimir=volume("casimir"),
    angular=model.gamma * volume("angular") if model.gamma else 0.0,
  )


def _profile_rho(model: CasimirModel, psi: np.ndarray, r: np.ndarray) -> np.ndarray:
  rho = np.asarray(rho_of_potential(model, psi, r), dtype=float)
  if model.l < 0:
    # r^(2l) diverges at the origin; the node carries no mass
    rho[0] = 0.0
  return rho


def solve_steady(
  model: CasimirModel,
  central_psi: float,
  allow_out_of_range: bool = False,
  rtol: float = ODE_RTOL,
  atol: float = ODE_ATOL,
  n_profile: int = PROFILE_NODES,
) -> AnsatzState:
  """Shoot the radial Poisson equation outward from psi(0) = central_psi.

  psi' = -m/r^2, m' = 4 pi r^2 rho(psi, r). Integration stops at the first
  zero of psi (compact support, E0 = -M/R) or at R_MAX_FACTOR central
  length scales (non-compact, E0 from the last point).
  """
  if not central_psi > 0:
    raise DomainError("central_psi must be > 0")
  admissible = _check_model(model, allow_out_of_range)
  l = model.l  # noqa: E741

  rho_hat = _central_density(model, central_psi)
  r_c = (
    central_psi * (2 * l + 3) * (2 * l + 2) / (FOUR_PI * rho_hat)
  ) ** (1.0 / (2 * l + 2))
  r0 = START_FRACTION * r_c
  r_end = R_MAX_FACTOR * r_c

  def series(r):
    m = FOUR_PI * rho_hat * r ** (2 * l + 3) / (2 * l + 3)
    psi = central_psi - FOUR_PI * rho_hat * r ** (2 * l + 2) / (
      (2 * l + 3) * (2 * l + 2)
    )
    return psi, m

  def rhs(r, y):
    psi, m = y
    rho = rho_of_potential(model, psi, r) if psi > 0 else 0.0
    return [-m / r**2, FOUR_PI * r**2 * rho]

  def edge(r, y):
    return y[0]

  edge.terminal = True
  edge.direction = -1

  sol = solve_ivp(
    rhs,
    (r0, r_end),
    list(series(r0)),
    method=ODE_METHOD,
    rtol=rtol,
    atol=atol,
    events=edge,
    dense_output=True,
  )
  if sol.status == -1:
    raise SolverError(f"ODE integration failed: {sol.message}", last_radius=sol.t[-1])

  compact = sol.status == 1 and sol.t_events[0].size > 0
  if compact:
    R = float(sol.t_events[0][0])
    M = float(sol.y_events[0][0][1])
    E0 = -M / R
  else:
    R = float(sol.t[-1])
    psi_end, M = float(sol.y[0, -1]), float(sol.y[1, -1])
    E0 = psi_end - M / R

  r = radial_grid(R, n_profile).nodes
  psi = np.empty_like(r)
  m = np.empty_like(r)
  inner = r < r0
  psi[inner], m[inner] = series(r[inner])
  dense = sol.sol(r[~inner])
  psi[~inner], m[~inner] = dense[0], dense[1]
  if compact:
    psi[-1], m[-1] = 0.0, M
  psi = np.where(psi > 0, psi, 0.0) if compact else psi
  U = E0 - psi
  rho = _profile_rho(model, psi, r)
  report = profile_report(model, r, psi, m)

  print(
    f"[Steady] k1={model.k1:g} l={l:g} gamma={model.gamma:g} psi0={central_psi:g}: "
    f"{'R_supp=' + format(R, '.6g') if compact else 'non-compact'} "
    f"M={M:.8g} E0={E0:.8g} D={report.total:.6g}"
  )
  return AnsatzState(
    model=model,
    E0=E0,
    r=r,
    psi=psi,
    U=U,
    rho=rho,
    m=m,
    R_supp=R if compact else math.inf,
    M=M,
    compact=compact,
    admissible=admissible,
    report=report,
    meta={
      "method": "shoot",
      "central_psi": central_psi,
      "r_c": r_c,
      "nfev": int(sol.nfev),
      "r_end": R,
    },
  )


def match_mass(
  model: CasimirModel,
  M_target: float,
  mass_rtol: float = MATCH_MASS_RTOL,
  allow_out_of_range: bool = False,
) -> AnsatzState:
  """Root-find the central value so the state has mass M_target."""
  if not M_target > 0:
    raise DomainError("M_target must be > 0")
  _check_model(model, allow_out_of_range)
  diagnostics: List[str] = []
  cache: Dict[float, AnsatzState] = {}

  def state_at(log_psi: float) -> AnsatzState:
    if log_psi not in cache:
      cache[log_psi] = solve_steady(
        model, math.exp(log_psi), allow_out_of_range=allow_out_of_range
      )
      if not cache[log_psi].compact:
        diagnostics.append(f"psi0={math.exp(log_psi):.4g}: non-compact")
    return cache[log_psi]

  def gap(log_psi: float) -> float:
    return state_at(log_psi).M / M_target - 1.0

  base = gap(0.0)
  bracket = None
  up, down = 0.0, 0.0
  for _ in range(MATCH_MASS_MAX_EXPANSIONS):
    if abs(base) <= mass_rtol:
      bracket = (0.0, 0.0)
      break
    step_up, step_down = up + math.log(2.0), down - math.log(2.0)
    if gap(step_up) * base <= 0:
      bracket = (up, step_up)
      break
    if gap(step_down) * base <= 0:
      bracket = (step_down, down)
      break
    up, down = step_up, step_down

  if bracket is None:
    if cache and all(not s.compact for s in cache.values()):
      raise SolverError(
        "match_mass saw only non-compact states: " + "; ".join(diagnostics[:10])
      )
    raise SolverError(f"could not bracket mass {M_target:g} in the central value")

  lo, hi = bracket
  root = lo if lo == hi else brentq(gap, lo, hi, xtol=1e-13, rtol=1e-15)
  state = state_at(root)
  if not state.compact:
    raise SolverError(
      "mass-matched state has non-compact support: " + "; ".join(diagnostics[:10])
    )
  if abs(state.M / M_target - 1.0) > mass_rtol:
    raise SolverError(f"mass mismatch {state.M:.12g} vs {M_target:.12g}")
  print(f"[Steady] match_mass M={M_target:g}: psi0={math.exp(root):.10g}")
  return state.model_copy(update={"meta": {**state.meta, "method": "match_mass"}})


def el_residual(
  state: AnsatzState, shape: Tuple[int, int, int] = (64, 48, 32)
) -> Tuple[float, float]:
  """(sup |Q'(L^-l f0) + E + gamma L - E0| on supp f0, min (E + gamma L - E0) off it).

  f0 is rebuilt from the tabulated psi and E from the tabulated U, so the two
  only agree when E0 = U + psi.
  """
  model = state.model
  v = velocity_bound(state)
  r = np.linspace(0.0, state.extent, shape[0])
  u = np.linspace(-v, v, shape[1])
  w = np.linspace(0.0, v, shape[2])
  R, Uu, W = np.meshgrid(r, u, w, indexing="ij")
  L = R**2 * W**2

  arg = psi_at(state, R) - 0.5 * Uu**2 - (0.5 + model.gamma * R**2) * W**2
  phi = qprime_inverse(model, np.clip(arg, 0.0, None))
  excess = 0.5 * (Uu**2 + W**2) + potential_at(state, R) + model.gamma * L - state.E0

  on = arg > 0
  if model.l != 0:
    on &= L > 0
  off = arg <= 0
  sup_on = 0.0
  if on.any():
    sup_on = float(np.max(np.abs(qprime_eval(model, phi[on]) + excess[on])))
  min_off = float(np.min(excess[off])) if off.any() else math.inf
  return sup_on, min_off


def e0_consistency(state: AnsatzState, scale: float = 1.0) -> float:
  """|(1/M) int int (Q'(L^-l s f0) + E + gamma L) s f0 - E0| / |E0| with s = scale.

  Returns inf (and warns) when E0 >= 0.
  """
  if not state.E0 < 0:
    print(f"[Steady] Warning: E0 = {state.E0:.6g} is not negative")
    return math.inf
  model, r = state.model, state.r

  def volume(values: np.ndarray) -> float:
    integrand = FOUR_PI * r**2 * values
    integrand[0] = 0.0
    return spline_integral(r, integrand)

  qprime = velocity_moment(model, state.psi, r, "qprime", scale=scale)
  kinetic = velocity_moment(model, state.psi, r, "kinetic")
  density = velocity_moment(model, state.psi, r, "density")
  linear = kinetic + state.U * density
  if model.gamma:
    linear = linear + model.gamma * velocity_moment(model, state.psi, r, "angular")
  value = (volume(qprime) + scale * volume(linear)) / state.M
  return abs(value - state.E0) / abs(state.E0)


def virial_residual(state: AnsatzState) -> float:
  """|2 E_kin + E_pot| / |E_pot|."""
  report = state.report or profile_report(state.model, state.r, state.psi, state.m)
  return abs(2.0 * report.kinetic + report.potential) / abs(report.potential)


def _uniform_ball(r: np.ndarray, M: float, R0: float) -> np.ndarray:
  with np.errstate(divide="ignore"):
    outside = -M / r
  return np.where(r < R0, -M * (3.0 * R0**2 - r**2) / (2.0 * R0**3), outside)


def scf_iterate(
  model: CasimirModel,
  M_target: float,
  r: np.ndarray,
  U: np.ndarray,
  damping: float = SCF_DAMPING,
  tol: float = SCF_TOL,
  max_iter: int = SCF_MAX_ITER,
) -> Tuple[np.ndarray, float, List[Dict[str, float]]]:
  """Damped fixed-point iteration U <- (1 - theta) U + theta U[f(U)] on grid r.

  Returns the converged potential, E0 and the per-iteration trace.
  """
  nodes = np.asarray(r, dtype=float)
  grid = RadialGrid(nodes=nodes)
  U = np.asarray(U, dtype=float).copy()
  trace: List[Dict[str, float]] = []

  def density(E0: float) -> SpatialDensity:
    values = _profile_rho(model, E0 - U, nodes)
    return SpatialDensity(grid=grid, values=values)

  for iteration in range(1, max_iter + 1):
    lo, hi = float(np.min(U)), float(U[-1])
    if mass_function(density(hi)).total < M_target:
      raise SolverError(
        "support reaches the SCF grid edge; increase r_max",
        last_radius=float(nodes[-1]),
        trace=trace,
      )
    E0 = brentq(
      lambda e: mass_function(density(e)).total - M_target,
      lo,
      hi,
      xtol=1e-15,
      rtol=1e-14,
    )
    rho = density(E0)
    candidate = potential_from_density(rho).values
    U_new = (1.0 - damping) * U + damping * candidate
    change = float(np.max(np.abs(U_new - U)))
    m = mass_function(rho).values
    D = profile_report(model, nodes, np.clip(E0 - U, 0.0, None), m).total
    trace.append({"iteration": iteration, "change": change, "E0": E0, "D": D})
    if iteration % SCF_LOG_EVERY == 0:
      print(f"[SCF] iter {iteration}: change={change:.3e} E0={E0:.10g} D={D:.8g}")
    if change < tol:
      print(f"[SCF] converged after {iteration} iterations (change={change:.2e})")
      return U, E0, trace
    U = U_new
  raise SolverError(
    f"SCF did not converge in {max_iter} iterations", trace=trace
  )


def scf_minimize(
  model: CasimirModel,
  M_target: float,
  n_nodes: int = PROFILE_NODES,
  r_max: Optional[float] = None,
  damping: float = SCF_DAMPING,
  tol: float = SCF_TOL,
  max_iter: int = SCF_MAX_ITER,
  allow_out_of_range: bool = False,
) -> AnsatzState:
  """Self-consistent-field construction of the minimizer with mass M_target.

  The grid extent defaults to SCF_RADIUS_FACTOR times a coarse mass-matched
  support estimate; the iteration itself starts from a uniform ball.
  """
  if not M_target > 0:
    raise DomainError("M_target must be > 0")
  admissible = _check_model(model, allow_out_of_range)
  if r_max is None:
    hint = match_mass(model, M_target, mass_rtol=1e-3, allow_out_of_range=True)
    r_max = SCF_RADIUS_FACTOR * hint.R_supp
  r = radial_grid(r_max, n_nodes).nodes
  U0 = _uniform_ball(r, M_target, r_max / SCF_RADIUS_FACTOR)
  U, E0, trace = scf_iterate(model, M_target, r, U0, damping, tol, max_iter)

  spline = CubicSpline(r, E0 - U)
  outside = np.nonzero(E0 - U <= 0)[0]
  if outside.size == 0:
    raise SolverError("SCF state fills the grid; increase r_max", trace=trace)
  i = int(outside[0])
  R = brentq(spline, r[i - 1], r[i]) if i > 0 else r[1]
  r_new = radial_grid(R, n_nodes).nodes
  psi = np.clip(spline(r_new), 0.0, None)
  psi[-1] = 0.0
  rho = _profile_rho(model, psi, r_new)
  m = mass_function(SpatialDensity(grid=RadialGrid(nodes=r_new), values=rho)).values
  M = float(m[-1])
  report = profile_report(model, r_new, psi, m)
  print(
    f"[SCF] state M={M:.10g} R_supp={R:.8g} E0={E0:.10g} D={report.total:.8g}"
  )
  return AnsatzState(
    model=model,
    E0=E0,
    r=r_new,
    psi=psi,
    U=E0 - psi,
    rho=rho,
    m=m,
    R_supp=R,
    M=M,
    compact=True,
    admissible=admissible,
    report=report,
    meta={
      "method": "scf",
      "iterations": len(trace),
      "r_max": r_max,
      "D_trace": [row["D"] for row in trace],
    },
  )


def gamma_support_scan(
  model: CasimirModel,
  central_psi: float,
  gammas=GAMMA_SCAN,
  allow_out_of_range: bool = False,
) -> Dict:
  """Compact-support diagnostic over gamma at a fixed central value."""
  max_workers = DEBUG_MAX_WORKERS if os.environ.get("DEBUG") else MAX_WORKERS

  def one(gamma: float) -> Dict:
    varied = model.model_copy(update={"gamma": float(gamma)})
    try:
      state = solve_steady(varied, central_psi, allow_out_of_range=allow_out_of_range)
    except SolverError as e:
      return {"gamma": float(gamma), "compact": False, "error": str(e)}
    return {
      "gamma": float(gamma),
      "compact": state.compact,
      "R_supp": state.R_supp if state.compact else None,
      "M": state.M,
      "E0": state.E0,
    }

  rows = []
  with ThreadPoolExecutor(max_workers=max_workers) as executor:
    futures = {executor.submit(one, g): g for g in gammas}
    for future in as_completed(futures):
      rows.append(future.result())
  rows.sort(key=lambda row: row["gamma"])

  threshold = None
  last_compact = None
  for row in rows:
    if not row["compact"]:
      threshold = row["gamma"]
      break
    last_compact = row["gamma"]
  print(
    f"[Steady] gamma scan: compact up to {last_compact}, "
    f"first non-compact at {threshold}"
  )
  return {"rows": rows, "threshold": threshold, "last_compact": last_compact}


def plummer_reference(model: CasimirModel, central_psi: float) -> Tuple[float, float]:
  """(M_inf, a) of the analytic psi = psi0 (1 + r^2/a^2)^-1/2 for k = 7/2, l = 0."""
  plummer = model.is_pure_power and model.k1 == 3.5 and model.l == 0
  if not (plummer and model.gamma == 0):
    raise DomainError("the Plummer reference needs k1 = 7/2, l = 0, gamma = 0")
  c = density_constant(model)
  a = math.sqrt(3.0 / (FOUR_PI * c * central_psi**4))
  return central_psi * a, a
