"""
Tests for the radial field quantities and the explicit inequalities.

Run with: pytest cammvp/test_radialfield.py
"""

import math

import numpy as np
import pytest

from cammvp.checks import POLYTROPE, random_density
from cammvp.models import DomainError, SpatialDensity
from cammvp.radialfield import (
  field_energy,
  green_identity_residual,
  mass_bound,
  mass_function,
  potential_at,
  potential_from_density,
  psi_at,
  radial_grid,
  rho_norm,
  shell_masses,
  split_bound,
  velocity_bound,
)
from cammvp.steadystate import solve_steady

BALL_MASS = 4.0 * math.pi / 3.0


@pytest.fixture
def unit_ball():
  grid = radial_grid(1.0, 1025)
  return SpatialDensity(grid=grid, values=np.ones_like(grid.nodes))


def test_radial_grid_layout():
  grid = radial_grid(3.0, 513)
  assert grid.nodes.size == 513
  assert grid.nodes[0] == 0.0
  assert grid.r_max == pytest.approx(3.0, rel=1e-15)
  assert np.all(np.diff(grid.nodes) > 0)
  with pytest.raises(DomainError):
    radial_grid(0.0)


def test_uniform_ball_mass_and_potential(unit_ball):
  r = unit_ball.grid.nodes
  assert mass_function(unit_ball).total == pytest.approx(BALL_MASS, rel=1e-10)

  potential = potential_from_density(unit_ball)
  exact = -(2.0 * math.pi / 3.0) * (3.0 - r**2)
  np.testing.assert_allclose(potential.values, exact, rtol=1e-9)
  # the density does not vanish at the last node
  assert potential.warning is not None
  assert float(potential.at(2.0)) == pytest.approx(-BALL_MASS / 2.0, rel=1e-10)


def test_uniform_ball_field_energy(unit_ball):
  assert field_energy(unit_ball) == pytest.approx(-0.6 * BALL_MASS**2, rel=1e-7)


def test_contained_density_has_no_warning():
  grid = radial_grid(10.0, 1025)
  rho = SpatialDensity(grid=grid, values=np.exp(-(grid.nodes**2)))
  assert potential_from_density(rho).warning is None


def test_trapezoid_shells_match_trapezoid_mass():
  rng = np.random.default_rng(1)
  rho = random_density(rng, rule="trapezoid")
  q = shell_masses(rho)
  m = mass_function(rho).values
  np.testing.assert_allclose(m, np.cumsum(q), rtol=1e-14, atol=0.0)
  assert m[-1] == pytest.approx(np.sum(q), rel=1e-12)
  # the shell field m(r_i)/r_i^2 is the one the shell potential differentiates
  r = rho.grid.nodes
  U = potential_from_density(rho).values
  slope = (U[2:] - U[1:-1]) / (1.0 / r[1:-1] - 1.0 / r[2:])
  np.testing.assert_allclose(slope, m[1:-1], rtol=1e-8, atol=1e-12 * m[-1])


def test_green_identity():
  rng = np.random.default_rng(2)
  for rule, tolerance in (("trapezoid", 1e-12), ("cubic", 1e-6)):
    for _ in range(5):
      rho1 = random_density(rng, rule=rule)
      rho2 = random_density(rng, rule=rule, grid=rho1.grid)
      assert green_identity_residual(rho1, rho2) < tolerance


def test_green_identity_needs_shared_grid():
  rng = np.random.default_rng(3)
  rho1 = random_density(rng)
  rho2 = random_density(rng, rule="trapezoid", grid=rho1.grid)
  with pytest.raises(DomainError):
    green_identity_residual(rho1, rho2)


def test_rho_norm_of_uniform_ball(unit_ball):
  assert rho_norm(unit_ball, 1.0, 0.0) == pytest.approx(
    math.sqrt(BALL_MASS), rel=1e-10
  )


def test_rho_norm_rejects_nonintegrable_weight(unit_ball):
  # n1 = 1/2, l = 1 gives the weight r^-2 against rho(0) > 0
  with pytest.raises(DomainError):
    rho_norm(unit_ball, 0.5, 1.0)


def test_mass_bound_holds():
  rng = np.random.default_rng(4)
  for _ in range(10):
    rho = random_density(rng)
    n1 = float(rng.uniform(0.5, 3.0))
    l = float(rng.uniform(0.0, 1.0))  # noqa: E741
    m, bound = mass_bound(rho, n1, l)
    assert np.all(bound - m >= -1e-10)


def test_split_bound():
  rng = np.random.default_rng(5)
  for _ in range(10):
    rho = random_density(rng)
    R = float(rng.uniform(0.1, 1.0)) * rho.grid.r_max
    lhs, rhs = split_bound(rho, R)
    assert lhs <= rhs + 1e-10 * (1.0 + abs(lhs))
  with pytest.raises(DomainError):
    split_bound(rho, 0.0)


def test_split_bound_is_sharp_outside_the_support(unit_ball):
  lhs, rhs = split_bound(unit_ball, 1.0)
  assert lhs == pytest.approx(rhs, rel=1e-7)
  lhs, rhs = split_bound(unit_ball, 3.0)
  assert lhs == pytest.approx(rhs, rel=1e-7)


def test_state_profiles_continue_as_point_mass():
  state = solve_steady(POLYTROPE, 1.0)
  R = state.extent
  r = np.array([0.0, 0.5 * R, R, 2.0 * R, 10.0 * R])
  psi = psi_at(state, r)
  U = potential_at(state, r)
  np.testing.assert_allclose(psi + U, state.E0, rtol=1e-9)
  assert psi[0] == pytest.approx(state.psi[0], rel=1e-12)
  np.testing.assert_allclose(U[3:], -state.M / r[3:], rtol=1e-14)
  assert np.all(psi[3:] < 0)
  assert velocity_bound(state) ** 2 >= 2.0 * state.psi[0]


if __name__ == "__main__":
  import sys

  sys.exit(pytest.main([__file__, "-v"]))
