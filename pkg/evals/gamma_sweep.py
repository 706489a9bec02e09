"""
Eval script for the role of gamma and of the exponent range.

This script measures:
- Where compact support is lost as gamma grows, at several central values
- Which gamma still admit the negativity witness for D_M
- The contrast between admissible exponents and exponents above l + 3/2
  (support, mass and D of the shooting solution)

Usage:
    uv run python evals/gamma_sweep.py
    uv run python evals/gamma_sweep.py --k1 0.5 --l 0.5
    uv run python evals/gamma_sweep.py --save
"""

import argparse
import json
import os
import sys
from datetime import datetime
from typing import Any, Dict

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cammvp.config import GAMMA_SCAN, WITNESS_GAMMAS
from cammvp.harness import _jsonable
from cammvp.models import CammError, CasimirModel
from cammvp.scalinglab import negativity_witness
from cammvp.steadystate import gamma_support_scan, solve_steady

CENTRAL_VALUES = (0.25, 1.0, 4.0)
CONTRAST_EXPONENTS = (0.5, 1.0, 1.4, 2.0, 3.5, 4.5)


def run_eval(k1: float = 1.0, l: float = 0.0) -> Dict[str, Any]:  # noqa: E741
  """Run the sweeps and collect the results."""
  model = CasimirModel(c1=1.0, k1=k1, l=l)
  print(f"\n{'=' * 60}")
  print(f"RUNNING EVALUATION: k1={k1:g} l={l:g}")
  print(f"{'=' * 60}\n")

  results: Dict[str, Any] = {
    "timestamp": datetime.now().isoformat(),
    "config": {"k1": k1, "l": l, "gammas": list(GAMMA_SCAN)},
    "support": {},
    "witness": [],
    "contrast": [],
  }

  for psi0 in CENTRAL_VALUES:
    scan = gamma_support_scan(model, psi0)
    results["support"][f"psi0={psi0:g}"] = scan

  for witness in negativity_witness(model, 1.0, WITNESS_GAMMAS):
    results["witness"].append(witness.model_dump(exclude={"sweep"}))

  for k in CONTRAST_EXPONENTS:
    varied = model.model_copy(update={"k1": k})
    row: Dict[str, Any] = {"k1": k, "in_range": varied.exponent_range_ok()}
    try:
      state = solve_steady(varied, 1.0, allow_out_of_range=True)
      row.update(
        compact=state.compact,
        R_supp=state.R_supp,
        M=state.M,
        E0=state.E0,
        D=state.report.total,
      )
    except CammError as e:
      row["error"] = str(e)
    results["contrast"].append(row)
  return results


def print_summary(results: Dict[str, Any]) -> None:
  print(f"\n{'=' * 60}")
  print("SUMMARY")
  print(f"{'=' * 60}")
  print("\nCompact support against gamma:")
  for label, scan in results["support"].items():
    print(
      f"  {label}: compact up to gamma={scan['last_compact']}, "
      f"first non-compact at {scan['threshold']}"
    )
  print("\nNegativity witness:")
  for w in results["witness"]:
    status = f"D={w['D']:.4g} at b={w['b']:.3g}" if w["found"] else w["failure"]
    print(f"  gamma={w['gamma']:g}: {status}")
  print("\nExponent contrast (psi0 = 1):")
  for row in results["contrast"]:
    if "error" in row:
      print(f"  k1={row['k1']:g}: {row['error']}")
      continue
    support = f"R={row['R_supp']:.4g}" if row["compact"] else "non-compact"
    print(
      f"  k1={row['k1']:g} ({'in' if row['in_range'] else 'out of'} range): "
      f"{support} M={row['M']:.5g} D={row['D']:.5g}"
    )


def save_results(results: Dict[str, Any]) -> str:
  """Save results to JSON file."""
  output_dir = os.path.join(os.path.dirname(__file__), "eval_results")
  os.makedirs(output_dir, exist_ok=True)
  timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
  filepath = os.path.join(output_dir, f"gamma_sweep_{timestamp}.json")
  with open(filepath, "w") as f:
    json.dump(_jsonable(results), f, indent=2)
  print(f"\nResults saved to: {filepath}")
  return filepath


def main():
  parser = argparse.ArgumentParser(description="Sweep gamma and the exponent range")
  parser.add_argument("--k1", type=float, default=1.0, help="Exponent k1")
  parser.add_argument("--l", type=float, default=0.0, help="Angular exponent l")
  parser.add_argument("--save", action="store_true", help="Save results to JSON file")
  args = parser.parse_args()

  results = run_eval(args.k1, args.l)
  print_summary(results)
  if args.save:
    save_results(results)


if __name__ == "__main__":
  main()
