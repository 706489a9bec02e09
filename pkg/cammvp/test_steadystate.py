"""
Tests for the steady-state constructions and their validation diagnostics.

Run with: pytest cammvp/test_steadystate.py
"""

import numpy as np
import pytest

from cammvp.checks import POLYTROPE, density_oracle, random_model
from cammvp.config import SCF_DAMPING, SCF_MAX_ITER, SCF_RADIUS_FACTOR, SCF_TOL
from cammvp.models import CasimirModel, DomainError, SolverError
from cammvp.radialfield import potential_at, radial_grid
from cammvp.steadystate import (
  e0_consistency,
  el_residual,
  gamma_support_scan,
  match_mass,
  plummer_reference,
  rho_of_potential,
  scf_iterate,
  scf_minimize,
  solve_steady,
  velocity_moment,
  virial_residual,
)

TWO_TERM = CasimirModel(c1=1.0, k1=0.6, c2=0.5, k2=1.0)
PLUMMER = CasimirModel(c1=1.0, k1=3.5)


@pytest.fixture(scope="module")
def polytrope():
  return match_mass(POLYTROPE, 1.0)


def test_closed_form_density_matches_quadrature_oracle():
  rng = np.random.default_rng(0)
  for _ in range(5):
    model = random_model(rng)
    psi, r = float(rng.uniform(0.05, 2.0)), float(rng.uniform(0.05, 2.0))
    oracle = density_oracle(model, psi, r)
    assert rho_of_potential(model, psi, r) == pytest.approx(oracle, rel=1e-7)


def test_moment_density_matches_closed_form():
  model = CasimirModel(c1=1.3, k1=0.8, l=0.4, gamma=0.2)
  psi = np.linspace(0.01, 2.0, 25)
  r = np.linspace(0.1, 3.0, 25)
  np.testing.assert_allclose(
    velocity_moment(model, psi, r, "density"),
    rho_of_potential(model, psi, r),
    rtol=1e-10,
  )


def test_two_term_density_matches_oracle():
  for psi, r in ((0.3, 0.5), (1.5, 1.0)):
    oracle = density_oracle(TWO_TERM, psi, r)
    assert rho_of_potential(TWO_TERM, psi, r) == pytest.approx(oracle, rel=1e-6)


def test_density_vanishes_outside_support():
  assert rho_of_potential(POLYTROPE, -0.2, 1.0) == 0.0
  assert rho_of_potential(TWO_TERM, 0.0, 1.0) == 0.0
  with pytest.raises(DomainError):
    velocity_moment(POLYTROPE, 1.0, 1.0, "entropy")


def test_polytrope_state(polytrope):
  state = polytrope
  assert state.compact and state.admissible
  assert state.M == pytest.approx(1.0, rel=1e-8)
  assert state.E0 == pytest.approx(-state.M / state.R_supp, rel=1e-14)
  assert state.E0 < 0
  assert state.report.total < 0
  assert state.psi[-1] == 0.0
  assert virial_residual(state) <= 1e-4
  assert e0_consistency(state) < 1e-6


def test_euler_lagrange_residuals(polytrope):
  scale = abs(polytrope.E0)
  sup_on, min_off = el_residual(polytrope)
  assert sup_on < 1e-6 * scale
  assert min_off >= -1e-10


def test_edited_E0_is_detected(polytrope):
  edited = polytrope.model_copy(update={"E0": polytrope.E0 + 1e-3})
  sup_on, _ = el_residual(edited)
  assert sup_on > 1e-6 * abs(polytrope.E0)


@pytest.mark.parametrize(
  "model",
  [
    CasimirModel(c1=1.0, k1=0.5),
    CasimirModel(c1=1.0, k1=1.0, gamma=0.1),
    CasimirModel(c1=1.0, k1=1.2, l=0.5),
    TWO_TERM,
  ],
)
def test_admissible_family(model):
  state = solve_steady(model, 1.0)
  assert state.E0 < 0
  assert state.report.total < 0
  sup_on, min_off = el_residual(state)
  assert sup_on < 1e-6 * abs(state.E0)
  assert min_off >= -1e-10
  assert e0_consistency(state) < 1e-6


@pytest.mark.parametrize(
  "model",
  [
    POLYTROPE,
    CasimirModel(c1=1.0, k1=1.0, gamma=0.1),
    CasimirModel(c1=1.0, k1=0.6, c2=0.5, k2=1.0, gamma=0.1),
  ],
)
def test_e0_recovered_from_energy_casimir_identity(model):
  state = solve_steady(model, 1.0)
  assert e0_consistency(state) < 1e-6


def test_two_term_with_smaller_second_exponent():
  model = CasimirModel(c1=1.0, k1=1.0, c2=1.0, k2=0.5)
  state = solve_steady(model, 1.0)
  assert state.admissible
  assert state.compact
  assert state.E0 < 0
  sup_on, _ = el_residual(state)
  assert sup_on < 1e-6 * abs(state.E0)
  assert e0_consistency(state) < 1e-6


def test_homology_of_pure_power_states():
  # psi -> 4 psi scales M by 4^((3 - n)/2) and R by 4^((1 - n)/2), n = k + 3/2
  low = solve_steady(POLYTROPE, 1.0)
  high = solve_steady(POLYTROPE, 4.0)
  assert high.M / low.M == pytest.approx(4.0**0.25, rel=1e-7)
  assert high.R_supp / low.R_supp == pytest.approx(4.0**-0.75, rel=1e-7)


def test_plummer_potential():
  state = solve_steady(PLUMMER, 1.0, allow_out_of_range=True)
  assert not state.compact
  assert not state.admissible
  M_inf, a = plummer_reference(PLUMMER, 1.0)
  inside = (state.m <= 0.999 * M_inf) & (state.r > 0)
  exact = M_inf / np.sqrt(a**2 + state.r[inside] ** 2)
  np.testing.assert_allclose(state.psi[inside], exact, rtol=1e-5)


def test_out_of_range_models_need_the_flag():
  with pytest.raises(DomainError):
    solve_steady(CasimirModel(c1=1.0, k1=2.0), 1.0)
  with pytest.raises(DomainError):
    plummer_reference(POLYTROPE, 1.0)
  with pytest.raises(DomainError):
    solve_steady(POLYTROPE, 0.0)


def test_match_mass_rejects_noncompact_family():
  with pytest.raises(SolverError):
    match_mass(PLUMMER, 1.0, allow_out_of_range=True)
  with pytest.raises(DomainError):
    match_mass(POLYTROPE, -1.0)


def test_gamma_support_scan_rows():
  scan = gamma_support_scan(POLYTROPE, 1.0, gammas=(1e-2, 0.0))
  assert [row["gamma"] for row in scan["rows"]] == [0.0, 1e-2]
  assert scan["rows"][0]["compact"]


@pytest.mark.slow
def test_scf_agrees_with_mass_matched_shooting(polytrope):
  state = scf_minimize(POLYTROPE, 1.0)
  assert state.meta["method"] == "scf"
  assert state.M == pytest.approx(1.0, rel=1e-4)
  assert state.E0 == pytest.approx(polytrope.E0, rel=1e-3)
  assert state.report.total == pytest.approx(polytrope.report.total, rel=1e-3)
  assert np.max(np.abs(state.U - potential_at(polytrope, state.r))) < 1e-6


def test_scf_stops_at_its_fixed_point(polytrope):
  r = radial_grid(SCF_RADIUS_FACTOR * polytrope.R_supp, 512).nodes
  start = potential_at(polytrope, r)
  U, E0, trace = scf_iterate(
    POLYTROPE, 1.0, r, start, SCF_DAMPING, SCF_TOL, SCF_MAX_ITER
  )
  assert trace[-1]["change"] < SCF_TOL
  again, E0_again, second = scf_iterate(
    POLYTROPE, 1.0, r, U, SCF_DAMPING, SCF_TOL, SCF_MAX_ITER
  )
  assert len(second) == 1
  assert second[0]["change"] < SCF_TOL
  assert np.array_equal(again, U)
  assert E0_again == E0


if __name__ == "__main__":
  import sys

  sys.exit(pytest.main([__file__, "-v"]))
