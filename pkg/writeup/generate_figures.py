#!/usr/bin/env python3
"""Generate figures from camm-vp run directories.

This script generates:
1. Steady-state potential, density and mass profiles (steady runs)
2. Lyapunov functional and energy histories (stability and sim runs)
3. Witness sweeps of D against b, one curve per gamma (scaling runs)

Usage:
  uv run python writeup/generate_figures.py runs/polytrope runs/dilation
  uv run python writeup/generate_figures.py runs/polytrope --format png
"""

import argparse
from pathlib import Path
from typing import Dict, List

import matplotlib.pyplot as plt
import numpy as np

COLORS = ["#7c4dff", "#00897b", "#ef6c00", "#5d4037"]


def read_columns(path: Path) -> Dict[str, np.ndarray]:
  """Column file written by harness.write_columns."""
  with open(path) as f:
    names = f.readline().lstrip("#").split()
  table = np.loadtxt(path, comments="#", ndmin=2)
  return {name: table[:, i] for i, name in enumerate(names)}


def _finish(ax, output_path: Path) -> None:
  ax.spines["top"].set_visible(False)
  ax.spines["right"].set_visible(False)
  plt.tight_layout()
  plt.savefig(output_path, dpi=300, bbox_inches="tight")
  plt.close()
  print(f"Generated: {output_path}")


def plot_profile(plots: Path, output_dir: Path, fmt: str) -> List[Path]:
  """Potential, psi, density and enclosed mass against r."""
  written = []
  potential = read_columns(plots / "potential.dat")
  density = read_columns(plots / "density.dat")
  mass = read_columns(plots / "mass.dat")
  r = potential["r"]
  inner = r > 0

  fig, ax = plt.subplots(figsize=(4, 2.5))
  ax.plot(r[inner], potential["U"][inner], color=COLORS[0], label="U(r)")
  ax.plot(r[inner], potential["psi"][inner], color=COLORS[1], label="psi = E0 - U")
  ax.set_xscale("log")
  ax.set_xlabel("r", fontsize=10)
  ax.legend(fontsize=8, frameon=False)
  written.append(output_dir / f"potential.{fmt}")
  _finish(ax, written[-1])

  fig, ax = plt.subplots(figsize=(4, 2.5))
  ax.plot(density["r"], density["rho"], color=COLORS[0])
  ax.set_xlabel("r", fontsize=10)
  ax.set_ylabel("rho(r)", fontsize=10)
  twin = ax.twinx()
  twin.plot(mass["r"], mass["m"], color=COLORS[2], linestyle="--")
  twin.set_ylabel("m(r)", fontsize=10)
  written.append(output_dir / f"density.{fmt}")
  _finish(ax, written[-1])
  return written


def plot_history(plots: Path, output_dir: Path, fmt: str) -> List[Path]:
  """Lyapunov functional and energies against time."""
  written = []
  lyapunov = read_columns(plots / "lyapunov.dat")
  fig, ax = plt.subplots(figsize=(4, 2.5))
  for i, name in enumerate(("lyapunov_sum", "d_surrogate", "field_dist")):
    ax.plot(lyapunov["t"], lyapunov[name], color=COLORS[i], label=name)
  ax.set_yscale("symlog", linthresh=1e-10)
  ax.set_xlabel("t", fontsize=10)
  ax.legend(fontsize=8, frameon=False)
  written.append(output_dir / f"lyapunov.{fmt}")
  _finish(ax, written[-1])

  energy = read_columns(plots / "energy.dat")
  fig, ax = plt.subplots(figsize=(4, 2.5))
  for i, name in enumerate(("Ekin", "Epot", "Etot")):
    ax.plot(energy["t"], energy[name], color=COLORS[i], label=name)
  ax.set_xlabel("t", fontsize=10)
  ax.legend(fontsize=8, frameon=False)
  written.append(output_dir / f"energy.{fmt}")
  _finish(ax, written[-1])
  return written


def plot_witnesses(plots: Path, output_dir: Path, fmt: str) -> List[Path]:
  """All witness sweeps on one set of axes."""
  files = sorted(plots.glob("witness_gamma_*.dat"))
  fig, ax = plt.subplots(figsize=(4, 2.5))
  for i, path in enumerate(files):
    sweep = read_columns(path)
    gamma = path.stem.removeprefix("witness_gamma_")
    color = COLORS[i % len(COLORS)]
    ax.plot(sweep["b"], sweep["D"], color=color, label=f"gamma={gamma}")
  ax.axhline(0.0, color="grey", linewidth=0.5)
  ax.set_xscale("log")
  ax.set_yscale("symlog", linthresh=1e-8)
  ax.set_xlabel("b", fontsize=10)
  ax.set_ylabel("D", fontsize=10)
  ax.legend(fontsize=8, frameon=False)
  output_path = output_dir / f"witness.{fmt}"
  _finish(ax, output_path)
  return [output_path]


def generate_run_figures(run: Path, fmt: str = "pdf") -> List[Path]:
  plots = run / "plots"
  if not plots.is_dir():
    print(f"{run}: no plots/ directory, skipping")
    return []
  output_dir = run / "figures"
  output_dir.mkdir(exist_ok=True)
  written = []
  if (plots / "potential.dat").exists():
    written += plot_profile(plots, output_dir, fmt)
  if (plots / "lyapunov.dat").exists():
    written += plot_history(plots, output_dir, fmt)
  if any(plots.glob("witness_gamma_*.dat")):
    written += plot_witnesses(plots, output_dir, fmt)
  return written


def main():
  parser = argparse.ArgumentParser(description="Generate figures from run directories")
  parser.add_argument("runs", nargs="+", help="Run directories with a plots/ folder")
  parser.add_argument("--format", default="pdf", help="Figure format (pdf, png, ...)")
  args = parser.parse_args()

  for run in args.runs:
    print(f"Generating figures for {run}...")
    generate_run_figures(Path(run), args.format)


if __name__ == "__main__":
  main()
