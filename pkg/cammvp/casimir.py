"""
The Casimir integrand Q of the two-term power family, its derivative and
inverse derivative, and the structural assumption checks.

All evaluators accept scalars or numpy arrays and return the same shape
(floats for scalar input).
"""

import math

import numpy as np
from scipy.special import beta

from cammvp.config import (
  ASSUMPTION_LATTICE_POINTS,
  QPRIME_BISECTION_STEPS,
  QPRIME_INVERSE_RTOL,
  QPRIME_NEWTON_STEPS,
)
from cammvp.models import AssumptionReport, CasimirModel, DomainError


def _nonnegative(x, name: str) -> np.ndarray:
  arr = np.asarray(x, dtype=float)
  if np.any(arr < 0) or np.any(np.isnan(arr)):
    raise DomainError(f"{name} must be >= 0")
  return arr


def _out(arr: np.ndarray, like):
  if np.ndim(like) == 0:
    return float(arr)
  return arr


def q_eval(model: CasimirModel, phi):
  """Q(phi) = sum_i c_i phi^(1 + 1/k_i)."""
  x = _nonnegative(phi, "phi")
  total = np.zeros_like(x)
  for c, k in model.terms:
    total = total + c * x ** (1.0 + 1.0 / k)
  return _out(total, phi)


def qprime_eval(model: CasimirModel, phi):
  """Q'(phi) = sum_i c_i (1 + 1/k_i) phi^(1/k_i)."""
  x = _nonnegative(phi, "phi")
  total = np.zeros_like(x)
  for c, k in model.terms:
    total = total + c * (1.0 + 1.0 / k) * x ** (1.0 / k)
  return _out(total, phi)


def qsecond_eval(model: CasimirModel, phi):
  """Q''(phi); infinite at 0 when some k_i < 1."""
  x = _nonnegative(phi, "phi")
  total = np.zeros_like(x)
  with np.errstate(divide="ignore"):
    for c, k in model.terms:
      total = total + c * (1.0 + 1.0 / k) / k * x ** (1.0 / k - 1.0)
  return _out(total, phi)


def qprime_inverse(model: CasimirModel, y):
  """The unique phi >= 0 with Q'(phi) = y.

  One term: closed form. Two terms: each term alone bounds phi from above and
  the larger half-term bounds it from below, so the bracket
  [min_i (y/2a_i)^k_i, min_i (y/a_i)^k_i] is bisected geometrically and then
  polished with safeguarded Newton steps.
  """
  target = _nonnegative(y, "y")
  coeffs = [(c * (1.0 + 1.0 / k), k) for c, k in model.terms]

  if len(coeffs) == 1:
    a, k = coeffs[0]
    return _out((target / a) ** k, y)

  flat = np.atleast_1d(target).astype(float)
  result = np.zeros_like(flat)
  pos = flat > 0
  if np.any(pos):
    yy = flat[pos]
    hi = np.minimum.reduce([(yy / a) ** k for a, k in coeffs])
    lo = np.minimum.reduce([(yy / (2.0 * a)) ** k for a, k in coeffs])
    for _ in range(QPRIME_BISECTION_STEPS):
      mid = np.sqrt(lo * hi)
      too_big = qprime_eval(model, mid) > yy
      hi = np.where(too_big, mid, hi)
      lo = np.where(too_big, lo, mid)
    phi = np.sqrt(lo * hi)
    for _ in range(QPRIME_NEWTON_STEPS):
      step = (qprime_eval(model, phi) - yy) / qsecond_eval(model, phi)
      candidate = phi - step
      phi = np.where((candidate > lo) & (candidate < hi), candidate, phi)
      if np.all(np.abs(step) <= QPRIME_INVERSE_RTOL * phi):
        break
    result[pos] = phi
  return _out(result.reshape(np.shape(target)), y)


def density_constant(model: CasimirModel) -> float:
  """c_{k,l} of rho = c_{k,l} r^(2l) (1 + 2 gamma r^2)^-(l+1) psi_+^(k+l+3/2).

  Only defined for a single power term, where
  (Q')^{-1}(y) = (y / (c1 (1 + 1/k)))^k.
  """
  if not model.is_pure_power:
    raise DomainError("density_constant needs c2 = 0")
  k, l = model.k1, model.l
  amplitude = (model.c1 * (1.0 + 1.0 / k)) ** (-k)
  return (
    amplitude
    * 2.0
    * math.pi
    * beta(l + 1.0, 0.5)
    * 2.0 ** (l + 0.5)
    * beta(k + 1.0, l + 1.5)
  )


def validate_assumptions(model: CasimirModel) -> AssumptionReport:
  """Check the four structural assumptions and the exponent range on lattices.

  Violations are reported with a witness (sample point and margin).
  """
  witnesses = {}
  messages = []
  n = ASSUMPTION_LATTICE_POINTS
  phis = np.logspace(-8, 8, n)
  lambdas = np.linspace(1.0 / n, 1.0, n)

  # large-f lower bound with C1 = c1; only above F0 when l = 0
  c1_const = model.c1
  lower = phis if model.l != 0 else phis[phis >= model.f0_threshold]
  margin1 = q_eval(model, lower) - c1_const * lower ** (1.0 + 1.0 / model.k1)
  q1 = bool(np.all(margin1 >= -1e-12 * np.abs(q_eval(model, lower))))
  if not q1:
    i = int(np.argmin(margin1))
    witnesses["q1"] = {"phi": float(lower[i]), "margin": float(margin1[i])}

  # small-f upper bound on [0, F0] with the best constant on the lattice
  k2 = model.small_f_exponent
  small = phis[phis <= model.f0_threshold]
  ratio = q_eval(model, small) / small ** (1.0 + 1.0 / k2)
  q2 = bool(np.all(np.isfinite(ratio)))
  c2_const = float(np.max(ratio)) if ratio.size and q2 else None
  if not q2:
    witnesses["q2"] = {"phi": float(small[0]), "ratio": float(ratio[0])}
    messages.append(f"Q(f)/f^(1+1/{k2:g}) is unbounded as f -> 0")

  # homogeneity bound Q(lambda f) >= lambda^(1+1/k3) Q(f)
  lam, phi = np.meshgrid(lambdas, phis, indexing="ij")
  lhs = q_eval(model, lam * phi)
  rhs = lam ** (1.0 + 1.0 / model.k3) * q_eval(model, phi)
  margin3 = lhs - rhs
  q3 = bool(np.all(margin3 >= -1e-12 * np.abs(rhs)))
  if not q3:
    i = np.unravel_index(int(np.argmin(margin3)), margin3.shape)
    witnesses["q3"] = {
      "lambda": float(lam[i]),
      "phi": float(phi[i]),
      "margin": float(margin3[i]),
    }

  # C1 with Q'' > 0 and Q'(0) = 0 follows from the power form
  q4 = model.c1 > 0 and model.c2 >= 0 and all(k > 0 for _, k in model.terms)
  q4 = q4 and qprime_eval(model, 0.0) == 0.0

  exponent_range = model.exponent_range_ok()
  if not exponent_range:
    upper = model.l + 1.5
    worst = max(k for _, k in model.terms)
    witnesses["exponent_range"] = {"k": float(worst), "upper": float(upper)}
    messages.append(f"exponents must satisfy 0 < k_i, k3 < l + 3/2 = {upper:g}")

  return AssumptionReport(
    q1=q1,
    q2=q2,
    q3=q3,
    q4=q4,
    exponent_range=exponent_range,
    witnesses=witnesses,
    c1_const=c1_const,
    c2_const=c2_const,
    messages=messages,
  )
