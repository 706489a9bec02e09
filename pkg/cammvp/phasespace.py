"""
Spherically symmetric phase-space densities on the tensor grid (r, u, w) with
u = v_r and w = v_t >= 0, and the functionals built on them.

The phase-space measure is 8 pi^2 r^2 w dr du dw; every integral is the
tensor trapezoid rule in that measure, and the spatial density handed to
radialfield uses the matching `trapezoid` rule. With l > 0 the first w-cell
of L^(-l/k) weighted integrals is done in closed form with f frozen at the
cell average.
"""

import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.special import beta

from cammvp.casimir import qprime_inverse
from cammvp.config import PHASE_GRID_SHAPE
from cammvp.models import (
  AnsatzState,
  CasimirModel,
  DomainError,
  FunctionalReport,
  GridDensity,
  ParticleEnsemble,
  RadialGrid,
  SpatialDensity,
)
from cammvp.radialfield import (
  FOUR_PI,
  field_energy,
  mass_function,
  potential_from_density,
  shell_masses,
  potential_at,
  psi_at,
  shell_potential,
  trapezoid_weights,
  velocity_bound,
)

# ============================================================================
# GRIDS
# ============================================================================


def phase_grid(
  r_max: float, v_max: float, shape: Tuple[int, int, int] = PHASE_GRID_SHAPE
) -> GridDensity:
  """Zero density on [0, r_max] x [-v_max, v_max] x [0, v_max]."""
  if not (r_max > 0 and v_max > 0):
    raise DomainError("r_max and v_max must be > 0")
  n_r, n_u, n_w = shape
  return GridDensity(
    r=np.linspace(0.0, r_max, n_r),
    u=np.linspace(-v_max, v_max, n_u),
    w=np.linspace(0.0, v_max, n_w),
    values=np.zeros(shape),
  )


def _measure(f: GridDensity) -> np.ndarray:
  """Trapezoid weights times 8 pi^2 r^2 w on the full grid."""
  wr = trapezoid_weights(f.r) * f.r**2
  ww = trapezoid_weights(f.w) * f.w
  wu = trapezoid_weights(f.u)
  return 8.0 * math.pi**2 * wr[:, None, None] * wu[None, :, None] * ww[None, None, :]


def integrate(f: GridDensity, values) -> float:
  """int int values dv dx for nodal values on the grid of f (any sign)."""
  return float(np.sum(_measure(f) * np.broadcast_to(values, f.shape)))


def _velocity_integral(f: GridDensity, values) -> np.ndarray:
  """2 pi int int values w du dw at each radial node."""
  wu = trapezoid_weights(f.u)
  ww = trapezoid_weights(f.w) * f.w
  return 2.0 * math.pi * np.einsum(
    "iuw,u,w->i", np.broadcast_to(values, f.shape), wu, ww
  )


def bump_mixture(
  like: GridDensity,
  mass: float,
  rng: np.random.Generator,
  n_bumps: int = 3,
  support: Optional[Tuple[float, float]] = None,
) -> GridDensity:
  """Random positive Gaussian bumps on the grid of `like`, scaled to `mass`.

  Bump centres lie inside the box (or inside the (r_max, v_max) pair given as
  `support`) so the density is negligible at the box edges.
  """
  r_top, v_top = support or (float(like.r[-1]), float(like.w[-1]))
  R, U, W = np.meshgrid(like.r, like.u, like.w, indexing="ij")
  values = np.zeros(like.shape)
  for _ in range(n_bumps):
    r0 = rng.uniform(0.2, 0.6) * r_top
    u0 = rng.uniform(-0.3, 0.3) * v_top
    w0 = rng.uniform(0.1, 0.4) * v_top
    sr = rng.uniform(0.08, 0.15) * r_top
    sv = rng.uniform(0.08, 0.15) * v_top
    height = rng.uniform(0.5, 1.5)
    values += height * np.exp(
      -0.5 * ((R - r0) / sr) ** 2 - 0.5 * ((U - u0) ** 2 + (W - w0) ** 2) / sv**2
    )
  f = like.with_values(values)
  return f.with_values(values * (mass / mass_of(f)))


# ============================================================================
# SPATIAL REDUCTIONS
# ============================================================================


def rho_from_f(f: GridDensity) -> SpatialDensity:
  """rho(r_i) = 2 pi int int f w dw du, as a trapezoid-rule SpatialDensity."""
  if f.r[0] != 0.0:
    raise DomainError("the radial axis must start at r = 0")
  values = _velocity_integral(f, f.values)
  return SpatialDensity(grid=RadialGrid(nodes=f.r), values=values, rule="trapezoid")


def mass_of(f: GridDensity) -> float:
  return integrate(f, f.values)


def kinetic_energy(f: GridDensity) -> float:
  """1/2 int int |v|^2 f dv dx."""
  speed2 = f.u[None, :, None] ** 2 + f.w[None, None, :] ** 2
  return 0.5 * integrate(f, speed2 * f.values)


def angular_integral(f: GridDensity) -> float:
  """int int L f dv dx."""
  return integrate(f, f.L * f.values)


def _weighted_power(f: GridDensity, p: float, e: float) -> np.ndarray:
  """2 pi int int f^p L^-e w du dw at each radial node.

  For e > 0 the first w-cell [0, w1] is integrated exactly with f frozen at
  the cell average; when the weight w^(1-2e) is not integrable there the cell
  is dropped (principal value) and a warning is printed. The r = 0 node
  contributes nothing.
  """
  base = f.values**p
  r, w = f.r, f.w
  if e <= 0:
    velocity = _velocity_integral(f, base * w[None, None, :] ** (-2.0 * e))
    return r ** (-2.0 * e) * velocity

  wu = trapezoid_weights(f.u)
  ww = trapezoid_weights(w)
  singular_first_cell = w[0] == 0.0
  with np.errstate(divide="ignore"):
    weight = ww * w ** (1.0 - 2.0 * e)
  if singular_first_cell:
    weight[0] = 0.0
    weight[1] = 0.5 * (w[2] - w[1]) * w[1] ** (1.0 - 2.0 * e) if w.size > 2 else 0.0
  per_r = 2.0 * math.pi * np.einsum("iuw,u,w->i", base, wu, weight)

  if singular_first_cell:
    power = 2.0 - 2.0 * e
    f_bar = 0.5 * (f.values[:, :, 0] + f.values[:, :, 1])
    if power > 0:
      cell = f_bar**p * w[1] ** power / power
      per_r = per_r + 2.0 * math.pi * cell @ wu
    elif np.any(f_bar > 0):
      print(
        f"[PhaseSpace] Warning: weight w^{1.0 - 2.0 * e:g} diverges at w = 0; "
        "first cell dropped"
      )

  radial = np.zeros_like(r)
  radial[r > 0] = r[r > 0] ** (-2.0 * e)
  return radial * per_r


def _radial_total(f: GridDensity, per_r: np.ndarray) -> float:
  return float(np.sum(FOUR_PI * trapezoid_weights(f.r) * f.r**2 * per_r))


def casimir_functional(f: GridDensity, model: CasimirModel) -> float:
  """C(f) = int int Q(L^-l f) L^l = sum_i c_i int int f^(1+1/k_i) L^(-l/k_i)."""
  total = 0.0
  for c, k in model.terms:
    total += c * _radial_total(f, _weighted_power(f, 1.0 + 1.0 / k, model.l / k))
  return total


def f_norm(f: GridDensity, k1: float, l: float) -> float:  # noqa: E741
  """(int int f^(1+1/k1) L^(-l/k1))^(k1/(k1+1))."""
  if not k1 > 0:
    raise DomainError("k1 must be > 0")
  value = _radial_total(f, _weighted_power(f, 1.0 + 1.0 / k1, l / k1))
  return value ** (k1 / (k1 + 1.0))


def functional_report(f: GridDensity, model: CasimirModel) -> FunctionalReport:
  return FunctionalReport.assemble(
    mass=mass_of(f),
    kinetic=kinetic_energy(f),
    potential=field_energy(rho_from_f(f)),
    casimir=casimir_functional(f, model),
    angular=model.gamma * angular_integral(f) if model.gamma else 0.0,
  )


def rescale(f: GridDensity, a: float, b: float, c: float) -> GridDensity:
  """f_bar(x, v) = a f(b x, c v) by remapping nodes (no interpolation)."""
  if not (a > 0 and b > 0 and c > 0):
    raise DomainError("a, b, c must be > 0")
  return GridDensity(r=f.r / b, u=f.u / c, w=f.w / c, values=a * f.values)


# ============================================================================
# STEADY-STATE COMPARISONS
# ============================================================================


def sample_state(
  state: AnsatzState,
  like: Optional[GridDensity] = None,
  shape: Tuple[int, int, int] = PHASE_GRID_SHAPE,
  r_max: Optional[float] = None,
  v_max: Optional[float] = None,
) -> GridDensity:
  """f0 of a state on a phase-space grid (the grid of `like` when given)."""
  if like is None:
    like = phase_grid(r_max or state.extent, v_max or velocity_bound(state), shape)
  model = state.model
  R, U, W = np.meshgrid(like.r, like.u, like.w, indexing="ij")
  arg = psi_at(state, R) - 0.5 * U**2 - (0.5 + model.gamma * R**2) * W**2
  phi = qprime_inverse(model, np.clip(arg, 0.0, None))
  L = R**2 * W**2
  if model.l == 0:
    values = phi
  else:
    with np.errstate(divide="ignore", invalid="ignore"):
      values = np.where(L > 0, phi * L**model.l, 0.0)
  return like.with_values(values)


def linear_energy_term(
  f: GridDensity, potential: np.ndarray, E0: float, gamma: float, values=None
) -> float:
  """int int (1/2 |v|^2 + U(r) + gamma L - E0) g with g = values (default f)."""
  g = f.values if values is None else values
  speed2 = f.u[None, :, None] ** 2 + f.w[None, None, :] ** 2
  excess = 0.5 * speed2 + potential[:, None, None] + gamma * f.L - E0
  return integrate(f, excess * g)


def d_distance(
  f: GridDensity, steady: AnsatzState, self_consistent: bool = False
) -> float:
  """d(f, f0) = [C(f) - C(f0)] + int int (E + gamma L - E0)(f - f0).

  E uses the steady potential U0 at the grid radii. With `self_consistent`,
  U0 is instead the discrete potential of the grid-sampled f0, which makes the
  energy-Casimir identity exact on the grid.
  """
  model = steady.model
  f0 = sample_state(steady, like=f)
  if self_consistent:
    U0 = potential_from_density(rho_from_f(f0)).values
  else:
    U0 = potential_at(steady, f.r)
  excess = casimir_functional(f, model) - casimir_functional(f0, model)
  linear = linear_energy_term(
    f, U0, steady.E0, model.gamma, values=f.values - f0.values
  )
  return excess + linear


def _mass_gap_integral(s: np.ndarray, m_f: np.ndarray, m_0: np.ndarray) -> float:
  """4 pi int_0^inf (m_f - m_0)^2 / r^2 dr on nodes s, masses constant beyond."""
  gap = np.zeros_like(s)
  positive = s > 0
  gap[positive] = (m_f[positive] - m_0[positive]) ** 2 / s[positive] ** 2
  inner = float(np.sum(trapezoid_weights(s) * gap))
  return FOUR_PI * (inner + (m_f[-1] - m_0[-1]) ** 2 / s[-1])


def field_distance(
  f: Union[GridDensity, ParticleEnsemble],
  steady: AnsatzState,
  reference: Optional[GridDensity] = None,
) -> float:
  """int |grad U_f - grad U_0|^2 = 4 pi int (m_f - m_0)^2 / r^2 dr.

  With a grid `reference` on the same grid as f the shell kernel is used, so
  the value is exact for the trapezoid representation.
  """
  if reference is not None:
    if not isinstance(f, GridDensity):
      raise DomainError("a grid reference needs a grid density")
    r = f.r
    dq = shell_masses(rho_from_f(f)) - shell_masses(rho_from_f(reference))
    return -FOUR_PI * float(np.sum(dq * shell_potential(r, dq)))

  if isinstance(f, ParticleEnsemble):
    order = np.argsort(f.r, kind="stable")
    r_sorted = f.r[order]
    cumulative = np.cumsum(f.w[order])
    s = np.union1d(np.concatenate([[0.0], r_sorted]), steady.r)
    index = np.searchsorted(r_sorted, s, side="right")
    m_f = np.where(index > 0, cumulative[np.maximum(index - 1, 0)], 0.0)
  else:
    m_nodes = mass_function(rho_from_f(f)).values
    s = np.union1d(f.r, steady.r)
    m_f = np.interp(s, f.r, m_nodes)
  m_0 = np.interp(s, steady.r, steady.m)
  return _mass_gap_integral(s, m_f, m_0)


def energy_casimir_identity_residual(f: GridDensity, steady: AnsatzState) -> float:
  """|[D(f) - D(f0)] - [d(f, f0) - field/8 pi]| / (1 + |D(f)|) on the grid of f.

  f is first rescaled to the grid mass of f0.
  """
  model = steady.model
  f0 = sample_state(steady, like=f)
  f = f.with_values(f.values * (mass_of(f0) / mass_of(f)))
  D_f = functional_report(f, model).total
  D_0 = functional_report(f0, model).total
  d = d_distance(f, steady, self_consistent=True)
  field = field_distance(f, steady, reference=f0)
  return abs((D_f - D_0) - (d - field / (8.0 * math.pi))) / (1.0 + abs(D_f))


# ============================================================================
# INTERPOLATION ESTIMATES
# ============================================================================


def interpolation_ratio(f: GridDensity, model: CasimirModel) -> Tuple[float, float]:
  """(int int f^(1+1/k1) L^(-l/k1) / (1 + P(f)), C) with C a valid bound.

  Q >= c1 phi^(1+1/k1) gives the integral <= C(f)/c1; for l = 0 the part with
  f < F0 is at most F0^(1/k1) M, so C = max(1/c1, F0^(1/k1) M) there.
  """
  k1, l = model.k1, model.l
  value = _radial_total(f, _weighted_power(f, 1.0 + 1.0 / k1, l / k1))
  positive = functional_report(f, model).positive
  bound = 1.0 / model.c1
  if l == 0:
    bound = max(bound, model.f0_threshold ** (1.0 / k1) * mass_of(f))
  return value / (1.0 + positive), bound


def pointwise_constant(k1: float, l: float) -> float:  # noqa: E741
  """C of rho(r) <= C r^(2l/(k1+l+5/2)) (A + B)^(n1/(n1+1)).

  Holder with the L weight on |v| <= R, Chebyshev with |v|^2 outside and the
  optimal R give K^(2/(2k1+2l+5)) [(2/s)^(s/(s+2)) + (s/2)^(2/(s+2))] with
  K = 2 pi B(l+1, 1/2) / (2l+3) and s = (2l+3)/(k1+1).
  """
  K = 2.0 * math.pi * beta(l + 1.0, 0.5) / (2.0 * l + 3.0)
  s = (2.0 * l + 3.0) / (k1 + 1.0)
  shape = (2.0 / s) ** (s / (s + 2.0)) + (s / 2.0) ** (2.0 / (s + 2.0))
  return K ** (2.0 / (2.0 * k1 + 2.0 * l + 5.0)) * shape


def pointwise_density_bound(
  f: GridDensity, k1: float, l: float  # noqa: E741
) -> Tuple[np.ndarray, np.ndarray]:
  """(rho_f(r_i), bound_i).

  A = int f^(1+1/k1) L^(-l/k1) dv and B = int |v|^2 f dv at each node.
  """
  n1 = k1 + l + 1.5
  A = _weighted_power(f, 1.0 + 1.0 / k1, l / k1)
  speed2 = f.u[None, :, None] ** 2 + f.w[None, None, :] ** 2
  B = _velocity_integral(f, speed2 * f.values)
  rho = _velocity_integral(f, f.values)
  with np.errstate(divide="ignore"):
    radial = f.r ** (2.0 * l / (k1 + l + 2.5))
  bound = pointwise_constant(k1, l) * radial * (A + B) ** (n1 / (n1 + 1.0))
  if l != 0 and f.r[0] == 0.0:
    # A diverges at the origin when l != 0
    bound[0] = np.inf
  return rho, bound
