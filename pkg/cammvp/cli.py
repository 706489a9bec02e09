#!/usr/bin/env python3
"""
Command line entry point of the camm-vp laboratory.

Usage:
  # Steady state from an experiment file
  camm-vp steady --config experiments/polytrope.cfg

  # Plummer validation (k = 7/2 lies outside the admissible range)
  camm-vp steady --config experiments/plummer.cfg --allow-out-of-range

  # Scaling laboratory and the stability experiment
  camm-vp scaling --config experiments/scaling.cfg
  camm-vp stability --config experiments/stability.cfg --seed 3 --out runs/dilation

  # Plain simulation with a snapshot, then continue it
  camm-vp sim run --config experiments/sim.cfg --out runs/sim
  camm-vp sim resume --config experiments/sim.cfg --out runs/sim

  # Full invariant suite (config optional)
  camm-vp checks

The exit code is 0 exactly when every executed check passed. Set
CAMMVP_MAX_WORKERS to bound the worker count (DEBUG=1 forces one worker).
"""

import argparse
import sys
from typing import List, Optional

from cammvp.harness import format_errors, load_config, parse_config
from cammvp.logic import run_experiment
from cammvp.models import CammError, ConfigError

VERBS = ("steady", "scaling", "stability", "checks", "sim")
SIM_ACTIONS = ("run", "resume")


def build_parser() -> argparse.ArgumentParser:
  parser = argparse.ArgumentParser(
    prog="camm-vp",
    description="Numerical laboratory for Camm-type Vlasov-Poisson steady states",
  )
  parser.add_argument("verb", choices=VERBS, help="Experiment to run")
  parser.add_argument(
    "action",
    nargs="?",
    choices=SIM_ACTIONS,
    help="For `sim`: run (default) or resume from the snapshot",
  )
  parser.add_argument("--config", help="Experiment file (section.key = value lines)")
  parser.add_argument(
    "--allow-out-of-range",
    action="store_true",
    help="Accept exponents outside 0 < k < l + 3/2 (contrast runs, Plummer)",
  )
  parser.add_argument("--seed", type=int, help="Override experiment.seed")
  parser.add_argument("--out", help="Override the output directory")
  return parser


def main(argv: Optional[List[str]] = None) -> int:
  args = build_parser().parse_args(argv)
  if args.action and args.verb != "sim":
    print(f"[Harness] `{args.action}` only applies to the sim command")
    return 2

  try:
    if args.config:
      config = load_config(
        args.config, allow_out_of_range=args.allow_out_of_range, kind=args.verb
      )
    elif args.verb == "checks":
      config = parse_config("", kind="checks")
    else:
      print(f"[Harness] --config is required for `{args.verb}`")
      return 2
  except ConfigError as e:
    print(f"[Harness] Invalid experiment file:\n{format_errors(e.errors)}")
    return 2
  except (OSError, CammError) as e:
    print(f"[Harness] Could not read the experiment file: {e}")
    return 2

  overrides = {}
  if args.seed is not None:
    overrides["seed"] = args.seed
  if args.out:
    overrides["out"] = args.out
  if overrides:
    config = config.model_copy(
      update={"experiment": config.experiment.model_copy(update=overrides)}
    )

  manifest = run_experiment(config, action=args.action or "run")
  if manifest.errors:
    print(f"[Harness] Errors:\n{format_errors(manifest.errors)}")
  return manifest.exit_code


if __name__ == "__main__":
  sys.exit(main())
