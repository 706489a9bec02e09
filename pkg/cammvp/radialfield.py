"""
Spatial quantities of spherically symmetric densities: mass function,
potential, field energy, weighted norms and the explicit inequalities.

Two quadrature rules are supported, selected by `SpatialDensity.rule`:

  cubic      spline antiderivatives (high-order radial oracles)
  trapezoid  each node is a shell of mass q_i = 4 pi W_i r_i^2 rho_i and all
             field quantities use the exact shell kernel 1/max(r_i, r_j);
             Green's identity then holds to round-off. Phase-space grids use
             this rule.

Beyond the last node the density is zero and the field is the exterior
point-mass field. `psi_at`, `potential_at` and `velocity_bound` read the same
exterior continuation off a tabulated steady state.
"""

import math
from typing import Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from cammvp.config import (
  MASS_CONTAINMENT,
  RADIAL_LINEAR_FRACTION,
  RADIAL_LINEAR_NODES,
  RADIAL_NODES,
  VELOCITY_MARGIN,
)
from cammvp.models import (
  AnsatzState,
  DomainError,
  MassFunction,
  Potential,
  RadialGrid,
  SpatialDensity,
)

FOUR_PI = 4.0 * math.pi


def radial_grid(
  r_max: float,
  n_nodes: int = RADIAL_NODES,
  linear_nodes: int = RADIAL_LINEAR_NODES,
  linear_fraction: float = RADIAL_LINEAR_FRACTION,
) -> RadialGrid:
  """Linear patch on [0, r_max * linear_fraction], geometric beyond."""
  if not r_max > 0:
    raise DomainError("r_max must be > 0")
  linear_nodes = min(linear_nodes, n_nodes // 2)
  r_lin = r_max * linear_fraction
  head = np.linspace(0.0, r_lin, linear_nodes)
  tail = np.geomspace(r_lin, r_max, n_nodes - linear_nodes + 1)[1:]
  return RadialGrid(nodes=np.concatenate([head, tail]))


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
  """Weights W with sum(W * g) the composite trapezoid integral of g over x."""
  x = np.asarray(x, dtype=float)
  h = np.diff(x)
  weights = np.zeros_like(x)
  weights[:-1] += 0.5 * h
  weights[1:] += 0.5 * h
  return weights


def _spline_cumulative(r: np.ndarray, values: np.ndarray) -> np.ndarray:
  anti = CubicSpline(r, values).antiderivative()
  return anti(r) - anti(r[0])


def spline_integral(
  r: np.ndarray, values: np.ndarray, upper: Optional[float] = None
) -> float:
  """int_r0^upper of the cubic spline through (r, values); upper defaults to r[-1]."""
  anti = CubicSpline(r, values).antiderivative()
  top = r[-1] if upper is None else min(upper, r[-1])
  return float(anti(top) - anti(r[0]))


def shell_masses(rho: SpatialDensity) -> np.ndarray:
  """Nodal shell masses q_i = 4 pi W_i r_i^2 rho_i of the trapezoid rule."""
  r = rho.grid.nodes
  return FOUR_PI * trapezoid_weights(r) * r**2 * rho.values


def mass_function(rho: SpatialDensity) -> MassFunction:
  """m(r_i) = 4 pi int_0^r_i s^2 rho(s) ds.

  Under the trapezoid rule m(r_i) is the mass of the shells at r_j <= r_i.
  """
  if rho.rule == "trapezoid":
    return MassFunction(grid=rho.grid, values=np.cumsum(shell_masses(rho)))
  r = rho.grid.nodes
  m = _spline_cumulative(r, FOUR_PI * r**2 * rho.values)
  return MassFunction(grid=rho.grid, values=m)


def field_strength(mass: MassFunction) -> np.ndarray:
  """U'(r) = m(r)/r^2, continued by 0 at the origin."""
  r = mass.grid.nodes
  g = np.zeros_like(r)
  g[1:] = mass.values[1:] / r[1:] ** 2
  return g


def shell_potential(r: np.ndarray, q: np.ndarray) -> np.ndarray:
  """U_i = -(1/r_i) sum_{j<=i} q_j - sum_{j>i} q_j / r_j."""
  inner = np.cumsum(q)
  q_over_r = np.zeros_like(q)
  q_over_r[1:] = q[1:] / r[1:]
  outer = np.cumsum(q_over_r[::-1])[::-1] - q_over_r
  first = np.zeros_like(q)
  first[1:] = inner[1:] / r[1:]
  return -(first + outer)


def potential_from_density(rho: SpatialDensity) -> Potential:
  """U with U' = m/r^2 and U(r) = -M/r beyond the last node."""
  r = rho.grid.nodes
  if rho.rule == "trapezoid":
    q = shell_masses(rho)
    total = float(np.sum(q))
    values = shell_potential(r, q)
  else:
    mass = mass_function(rho)
    total = mass.total
    g = field_strength(mass)
    cumulative = _spline_cumulative(r, g)
    values = -total / r[-1] - (cumulative[-1] - cumulative)

  warning = None
  edge_mass = FOUR_PI * r[-1] ** 3 * abs(rho.values[-1])
  if total > 0 and edge_mass > (1.0 - MASS_CONTAINMENT) * abs(total):
    warning = (
      f"density at r_max={r[-1]:.4g} is not negligible; the grid may hold "
      f"less than {MASS_CONTAINMENT:.1%} of the mass"
    )
    print(f"[RadialField] Warning: {warning}")
  return Potential(grid=rho.grid, values=values, total_mass=total, warning=warning)


def field_energy(rho: SpatialDensity) -> float:
  """E_pot = -(1/8 pi) int |grad U|^2 = -1/2 int_0^inf m^2/r^2 dr."""
  r = rho.grid.nodes
  if rho.rule == "trapezoid":
    q = shell_masses(rho)
    return 0.5 * float(np.sum(q * shell_potential(r, q)))
  mass = mass_function(rho)
  g = field_strength(mass)
  interior = spline_integral(r, (g * r) ** 2)
  return -0.5 * interior - mass.total**2 / (2.0 * r[-1])


def _shell_field_product(r: np.ndarray, q1: np.ndarray, q2: np.ndarray) -> float:
  """int_0^inf m1 m2 / r^2 dr for nodal shells (piecewise-constant m)."""
  m1 = np.cumsum(q1)
  m2 = np.cumsum(q2)
  inv = np.zeros_like(r)
  inv[1:] = 1.0 / r[1:]
  gaps = inv[1:-1] - inv[2:]
  inner = float(np.sum(m1[1:-1] * m2[1:-1] * gaps))
  return inner + m1[-1] * m2[-1] * inv[-1]


def _same_grid(rho1: SpatialDensity, rho2: SpatialDensity) -> None:
  if rho1.rule != rho2.rule or not np.array_equal(
    rho1.grid.nodes, rho2.grid.nodes
  ):
    raise DomainError("densities must share grid and quadrature rule")


def green_identity_residual(rho1: SpatialDensity, rho2: SpatialDensity) -> float:
  """Relative gap between int grad U1 . grad U2 and -4 pi int U1 rho2."""
  _same_grid(rho1, rho2)
  r = rho1.grid.nodes
  if rho1.rule == "trapezoid":
    q1, q2 = shell_masses(rho1), shell_masses(rho2)
    left = FOUR_PI * _shell_field_product(r, q1, q2)
    right = -FOUR_PI * float(np.sum(q2 * shell_potential(r, q1)))
  else:
    m1, m2 = mass_function(rho1), mass_function(rho2)
    g1, g2 = field_strength(m1), field_strength(m2)
    tail = m1.total * m2.total / r[-1]
    left = FOUR_PI * (spline_integral(r, g1 * g2 * r**2) + tail)
    u1 = potential_from_density(rho1).values
    right = -FOUR_PI * spline_integral(r, FOUR_PI * u1 * rho2.values * r**2)
  scale = max(abs(left), abs(right))
  if scale == 0.0:
    return 0.0
  return abs(left - right) / scale


def rho_norm(rho: SpatialDensity, n1: float, l: float) -> float:  # noqa: E741
  """(int rho^(1+1/n1) |x|^(-2l/n1) dx)^(n1/(n1+1))."""
  if not n1 > 0 or not l > -1:
    raise DomainError("need n1 > 0 and l > -1")
  r = rho.grid.nodes
  p = 1.0 + 1.0 / n1
  e = 2.0 - 2.0 * l / n1
  base = np.abs(rho.values) ** p
  if e <= -1.0 and base[0] > 0:
    raise DomainError(f"weight r^{e:g} is not integrable at 0 for rho(0) > 0")

  if rho.rule == "trapezoid" or e >= 0:
    weight = np.zeros_like(r)
    weight[1:] = r[1:] ** e
    if e == 0:
      weight[0] = 1.0
    integrand = FOUR_PI * base * weight
    if rho.rule == "trapezoid":
      total = float(np.sum(trapezoid_weights(r) * integrand))
    else:
      total = spline_integral(r, integrand)
  else:
    # singular but integrable weight: first cell exactly with rho frozen
    head = FOUR_PI * base[0] * r[1] ** (e + 1.0) / (e + 1.0)
    integrand = FOUR_PI * base[1:] * r[1:] ** e
    total = head + spline_integral(r[1:], integrand)
  return total ** (n1 / (n1 + 1.0))


def mass_bound(
  rho: SpatialDensity, n1: float, l: float  # noqa: E741
) -> Tuple[np.ndarray, np.ndarray]:
  """(|m(r_i)|, (4 pi)^(1/(1+n1)) ||rho||_{n1,l} r_i^((2l+3)/(n1+1)))."""
  m = np.abs(mass_function(rho).values)
  norm = rho_norm(rho, n1, l)
  r = rho.grid.nodes
  bound = FOUR_PI ** (1.0 / (1.0 + n1)) * norm * r ** ((2.0 * l + 3.0) / (n1 + 1.0))
  return m, bound


def _field_integral_to(rho: SpatialDensity, R: float) -> Tuple[float, float]:
  """(int_0^R m^2/r^2 dr, M)."""
  r = rho.grid.nodes
  if rho.rule == "trapezoid":
    m = mass_function(rho).values
    total = float(m[-1])
    inv = np.zeros_like(r)
    inv[1:] = 1.0 / r[1:]
    inside = 0.0
    for i in range(1, r.size):
      lo = r[i]
      hi = r[i + 1] if i + 1 < r.size else math.inf
      if lo >= R:
        break
      top = min(hi, R)
      inside += m[i] ** 2 * (1.0 / lo - 1.0 / top)
    return inside, total
  mass = mass_function(rho)
  g = field_strength(mass)
  inside = spline_integral(r, (g * r) ** 2, R)
  if R > r[-1]:
    inside += mass.total**2 * (1.0 / r[-1] - 1.0 / R)
  return inside, mass.total


def split_bound(rho: SpatialDensity, R: float) -> Tuple[float, float]:
  """(int |grad U|^2, 4 pi int_0^R m^2/r^2 dr + 4 pi M^2 / R)."""
  if not R > 0:
    raise DomainError("R must be > 0")
  lhs = -8.0 * math.pi * field_energy(rho)
  inside, total = _field_integral_to(rho, R)
  rhs = FOUR_PI * inside + FOUR_PI * total**2 / R
  return lhs, rhs


def psi_at(state: AnsatzState, r) -> np.ndarray:
  """Tabulated psi at arbitrary radii; E0 + M/r beyond the tabulation."""
  r = np.asarray(r, dtype=float)
  inside = CubicSpline(state.r, state.psi)(np.clip(r, 0.0, state.extent))
  with np.errstate(divide="ignore"):
    outside = state.E0 + state.M / r
  return np.where(r <= state.extent, inside, outside)


def potential_at(state: AnsatzState, r) -> np.ndarray:
  """Tabulated U at arbitrary radii; -M/r beyond the tabulation."""
  r = np.asarray(r, dtype=float)
  inside = CubicSpline(state.r, state.U)(np.clip(r, 0.0, state.extent))
  with np.errstate(divide="ignore"):
    outside = -state.M / r
  return np.where(r <= state.extent, inside, outside)


def velocity_bound(state: AnsatzState) -> float:
  """Velocity box half-width covering supp f0."""
  return VELOCITY_MARGIN * math.sqrt(2.0 * max(float(np.max(state.psi)), 0.0))
