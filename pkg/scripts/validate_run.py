#!/usr/bin/env python3
"""
Run Directory Validation Script for camm-vp

This script re-checks finished run directories:
1. Every file listed in manifest.json exists and matches its sha256
2. The recorded exit code agrees with the recorded checks and errors
3. Persisted profiles, grids and diagnostics load back (versions and checksums)

Usage:
  # Check every run directory below runs/
  uv run python scripts/validate_run.py

  # Check specific run directories
  uv run python scripts/validate_run.py runs/polytrope runs/dilation

  # Use more workers and print every check
  uv run python scripts/validate_run.py --workers 8 --verbose
"""

import argparse
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List

from dotenv import load_dotenv

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from cammvp.dynamics import load_snapshot
from cammvp.harness import (
  MANIFEST_NAME,
  load_grid,
  load_manifest,
  load_state,
  read_diagnostics,
  verify_manifest,
)
from cammvp.models import CammError

load_dotenv()

print_lock = threading.Lock()


def thread_safe_print(*args, **kwargs):
  """Thread-safe print function."""
  with print_lock:
    print(*args, **kwargs)


LOADERS = {
  "profile.txt": load_state,
  "f0_grid.txt": load_grid,
  "diagnostics.csv": read_diagnostics,
  "snapshot.bin": load_snapshot,
}


def find_runs(root: Path) -> List[Path]:
  return sorted(p.parent for p in root.rglob(MANIFEST_NAME))


def validate_run(run: Path, verbose: bool = False) -> Dict[str, Any]:
  """Manifest and artifact problems of one run directory."""
  problems = verify_manifest(run)
  manifest = load_manifest(run / MANIFEST_NAME)
  for name, loader in LOADERS.items():
    path = run / name
    if not path.exists():
      continue
    try:
      loader(path)
      if verbose:
        thread_safe_print(f"  {run}: {name} ok")
    except (CammError, OSError, ValueError) as e:
      problems.append(f"{name}: {e}")
  return {
    "run": str(run),
    "kind": manifest.config.get("experiment", {}).get("kind"),
    "exit_code": manifest.exit_code,
    "summary": manifest.summary(),
    "problems": problems,
  }


def main():
  parser = argparse.ArgumentParser(description="Validate camm-vp run directories")
  parser.add_argument(
    "runs", nargs="*", help="Run directories (default: all under --root)"
  )
  parser.add_argument("--root", default="runs", help="Where to look for runs")
  parser.add_argument("--workers", type=int, default=4, help="Parallel workers")
  parser.add_argument("--verbose", "-v", action="store_true", help="Print every check")
  args = parser.parse_args()

  runs = [Path(r) for r in args.runs] or find_runs(Path(args.root))
  print("=" * 60)
  print("camm-vp - Run Validation")
  print("=" * 60)
  if not runs:
    print("No run directories found. Exiting.")
    return 0

  results = []
  with ThreadPoolExecutor(max_workers=args.workers) as executor:
    futures = {executor.submit(validate_run, run, args.verbose): run for run in runs}
    for future in as_completed(futures):
      run = futures[future]
      try:
        result = future.result()
      except Exception as e:
        result = {"run": str(run), "problems": [f"{type(e).__name__}: {e}"]}
      results.append(result)
      status = "ok" if not result["problems"] else "PROBLEMS"
      thread_safe_print(f"{run}: {status}")
      for problem in result["problems"]:
        thread_safe_print(f"  - {problem}")

  bad = [r for r in results if r["problems"]]
  print("=" * 60)
  print(f"Runs checked: {len(results)}")
  print(f"With problems: {len(bad)}")
  return 1 if bad else 0


if __name__ == "__main__":
  sys.exit(main())
