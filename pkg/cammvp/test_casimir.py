"""
Tests for the Casimir integrand and the structural assumption checks.

Run with: pytest cammvp/test_casimir.py
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from cammvp.casimir import (
  density_constant,
  q_eval,
  qprime_eval,
  qprime_inverse,
  qsecond_eval,
  validate_assumptions,
)
from cammvp.models import CasimirModel, DomainError

POLYTROPE = CasimirModel(c1=1.0, k1=1.0)
TWO_TERM = CasimirModel(c1=1.0, k1=0.6, c2=0.5, k2=1.0)


def test_pure_power_values():
  assert q_eval(POLYTROPE, 2.0) == pytest.approx(4.0)
  assert qprime_eval(POLYTROPE, 2.0) == pytest.approx(4.0)
  assert qsecond_eval(POLYTROPE, 2.0) == pytest.approx(2.0)
  assert isinstance(q_eval(POLYTROPE, 1.5), float)


def test_array_shape_is_preserved():
  phi = np.linspace(0.0, 3.0, 12).reshape(3, 4)
  assert q_eval(TWO_TERM, phi).shape == (3, 4)
  assert qprime_inverse(TWO_TERM, phi).shape == (3, 4)


def test_negative_argument_raises():
  with pytest.raises(DomainError):
    q_eval(POLYTROPE, -1.0)
  with pytest.raises(DomainError):
    qprime_inverse(TWO_TERM, np.array([0.5, -1e-3]))


@pytest.mark.parametrize("model", [POLYTROPE, TWO_TERM, CasimirModel(c1=2.0, k1=0.3)])
def test_qprime_inverse_inverts(model):
  y = np.logspace(-6, 4, 200)
  phi = qprime_inverse(model, y)
  np.testing.assert_allclose(qprime_eval(model, phi), y, rtol=1e-10)
  assert qprime_inverse(model, 0.0) == 0.0


def test_qprime_inverse_is_increasing():
  y = np.linspace(0.0, 10.0, 500)
  assert np.all(np.diff(qprime_inverse(TWO_TERM, y)) > 0)


def test_density_constant_polytrope():
  # direct velocity integral of (psi - v^2/2)/2 over the ball |v| < sqrt(2 psi)
  expected = 8.0 * math.sqrt(2.0) * math.pi / 15.0
  assert density_constant(POLYTROPE) == pytest.approx(expected, rel=1e-12)


def test_density_constant_needs_one_term():
  with pytest.raises(DomainError):
    density_constant(TWO_TERM)


def test_admissible_models_pass():
  for model in (POLYTROPE, TWO_TERM, CasimirModel(c1=1.0, k1=1.2, l=0.5)):
    report = validate_assumptions(model)
    assert report.passed, report.messages


def test_exponent_range_violation_is_reported():
  report = validate_assumptions(CasimirModel(c1=1.0, k1=2.0))
  assert not report.exponent_range
  assert not report.passed
  assert report.witnesses["exponent_range"]["upper"] == pytest.approx(1.5)
  assert any("l + 3/2" in message for message in report.messages)


def test_small_f_bound_uses_largest_exponent():
  # Q(f) = f^2 + f^3, so Q(f)/f^2 = 1 + f <= 2 on [0, 1]
  model = CasimirModel(c1=1.0, k1=1.0, c2=1.0, k2=0.5)
  assert model.small_f_exponent == 1.0
  report = validate_assumptions(model)
  assert report.q2
  assert report.passed
  assert "q2" not in report.witnesses
  assert 1.0 <= report.c2_const <= 2.0 + 1e-12
  swapped = validate_assumptions(CasimirModel(c1=1.0, k1=0.5, c2=1.0, k2=1.0))
  assert swapped.c2_const == pytest.approx(report.c2_const)


def test_model_validation_messages():
  with pytest.raises(ValidationError, match="c1 must be > 0"):
    CasimirModel(c1=0.0, k1=1.0)
  with pytest.raises(ValidationError, match="k2 must be > 0"):
    CasimirModel(c1=1.0, k1=1.0, c2=1.0)
  assert TWO_TERM.k3 == pytest.approx(0.6)


if __name__ == "__main__":
  import sys

  sys.exit(pytest.main([__file__, "-v"]))
