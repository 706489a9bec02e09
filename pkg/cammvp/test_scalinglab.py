"""
Tests for the scaling laboratory.

Run with: pytest cammvp/test_scalinglab.py
"""

import numpy as np
import pytest

from cammvp.casimir import q_eval
from cammvp.checks import POLYTROPE
from cammvp.models import CasimirModel, DomainError
from cammvp.phasespace import bump_mixture, mass_of, phase_grid, rho_from_f
from cammvp.radialfield import mass_function
from cammvp.scalinglab import (
  NOT_INFIMA_NOTE,
  base_test_function,
  concentration_constant,
  far_shell_density,
  negativity_witness,
  r_m,
  rescaled_D,
  scaling_exponent_alpha,
  scaling_inequality_check,
  scaling_parameters,
  scaling_report,
  split_family,
  split_gap,
)
from cammvp.steadystate import match_mass


def test_alpha():
  assert scaling_exponent_alpha(0.0, 1.0) == pytest.approx(4.0)
  assert scaling_exponent_alpha(0.5, 1.2) == pytest.approx(3.0 / 0.8)
  with pytest.raises(DomainError):
    scaling_exponent_alpha(0.0, 1.5)


def test_concentration_constant_alpha_one():
  assert concentration_constant(1.0) == 2.0


@pytest.mark.parametrize("alpha", [0.5, 2.0, 4.0, 7.5])
def test_concentration_inequality(alpha):
  C = concentration_constant(alpha)
  assert 0 < C <= 1.0 + alpha
  x = np.linspace(0.0, 1.0, 100_001)
  gap = (1 - x) ** (1 + alpha) + x ** (1 + alpha) - 1 + C * (1 - x) * x
  assert np.max(gap) <= 1e-12


def test_r_m():
  assert r_m(1.0, -0.5, 2.0) == pytest.approx(1.0)
  with pytest.raises(DomainError):
    r_m(1.0, 0.0, 2.0)


def test_scaling_parameters_identities():
  params = scaling_parameters(0.3, 1.0, 0.5, 1.2)
  a, b, c = params["a"], params["b"], params["c"]
  assert a * b**-3 * c**-3 == pytest.approx(0.3, rel=1e-12)
  assert params["bc"] == pytest.approx(params["bc_expected"], rel=1e-12)
  assert params["lift"] == pytest.approx(params["lift_expected"], rel=1e-12)
  with pytest.raises(DomainError):
    scaling_parameters(2.0, 1.0, 0.0, 1.0)


def test_rescaled_D_identity_scaling():
  base = base_test_function(POLYTROPE)
  expected = (
    q_eval(POLYTROPE, base["h"]) * base["I_l"] + base["kinetic"] + base["potential"]
  )
  assert rescaled_D(POLYTROPE, base, 1.0, 1.0, 1.0) == pytest.approx(expected)
  # uniform ball
  assert base["potential"] == pytest.approx(-0.6 / base["R"])


def test_witness_found_for_small_gamma():
  for witness in negativity_witness(POLYTROPE, 1.0, (0.0, 1e-3)):
    assert witness.found, witness.failure
    assert witness.D < 0
    assert witness.a_bound <= 1.0
    assert 1.0 < witness.eta < 2.0
    assert len(witness.sweep) > 0


def test_witness_failure_is_reported():
  # k2 >= (2l + 3)/2 leaves no admissible eta
  results = negativity_witness(CasimirModel(c1=1.0, k1=1.6), 1.0, (0.0, 0.1))
  assert [w.found for w in results] == [False, False]
  assert all("no eta" in w.failure for w in results)


def test_witness_eta_follows_largest_exponent():
  # max(k1, k2) = 1 leaves eta in ]1, 4/3[ whichever term carries it
  model = CasimirModel(c1=1.0, k1=1.0, c2=1.0, k2=0.5)
  (witness,) = negativity_witness(model, 1.0, (0.0,))
  assert witness.failure is None or "no eta" not in witness.failure
  assert 1.0 < witness.eta < 4.0 / 3.0


def test_scaling_inequality_polytrope():
  # pure powers follow D_M ~ M^(1 + alpha), so the margin is numerically zero
  margin = scaling_inequality_check(POLYTROPE, 0.5, 1.0)
  assert margin >= -1e-6
  assert abs(margin) < 1e-5


def test_split_gap_rejects_zero_radius():
  rng = np.random.default_rng(0)
  f = bump_mixture(phase_grid(2.0, 2.0, (24, 20, 16)), 1.0, rng)
  with pytest.raises(DomainError):
    split_gap(f, -0.2, 0.0, POLYTROPE)


@pytest.fixture(scope="module")
def polytrope():
  return match_mass(POLYTROPE, 1.0)


def test_far_shell_keeps_mass_and_moves_it_past_R_M(polytrope):
  D_M = polytrope.report.total
  f, R_M = far_shell_density(polytrope, D_M, moved=0.1)
  # M = 1: R_supp = 0.0632 < R_M = 0.0843
  assert R_M == pytest.approx(0.0843, rel=5e-2)
  assert R_M > polytrope.R_supp
  M = mass_of(f)
  assert M == pytest.approx(1.0, rel=3e-2)
  m = mass_function(rho_from_f(f)).values
  inner = float(np.interp(2.0 * R_M, f.r, m))
  assert inner / M == pytest.approx(0.9, abs=1e-3)


def test_split_estimate_beyond_concentration_radius(polytrope):
  D_M = polytrope.report.total
  rows = split_family(polytrope, D_M, moved=(0.05, 0.1, 0.2))
  assert len(rows) == 9
  for row in rows:
    assert row["R_over_RM"] > 1.0
    assert row["rhs"] > 0.0
    assert row["lhs"] >= row["rhs"] - 1e-8 * (1.0 + abs(row["lhs"]))


def test_far_shell_rejects_bad_fraction(polytrope):
  with pytest.raises(DomainError):
    far_shell_density(polytrope, polytrope.report.total, moved=1.0)


def test_scaling_report_polytrope():
  report = scaling_report(POLYTROPE, 0.5, 1.0, (0.0,), use_scf=False)
  assert report.alpha == pytest.approx(4.0)
  assert report.C_alpha == concentration_constant(4.0)
  assert report.D_M < 0 and report.R_M > 0
  assert report.D_M_source == "match_mass"
  failed = [c.name for c in report.checks if not c.passed]
  assert failed == []
  if any(c.value < 0 for c in report.checks if c.name == "scaling_inequality"):
    assert NOT_INFIMA_NOTE in report.notes


if __name__ == "__main__":
  import sys

  sys.exit(pytest.main([__file__, "-v"]))
