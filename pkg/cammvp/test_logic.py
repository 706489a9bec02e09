"""
End-to-end tests of the experiment pipelines, the command line and the
invariant suite.

Run with: pytest cammvp/test_logic.py
"""

import inspect
import json

import pytest

from cammvp import checks, logic
from cammvp.checks import run_suite
from cammvp.cli import main
from cammvp.harness import (
  MANIFEST_NAME,
  load_manifest,
  parse_config,
  read_diagnostics,
  sha256_of,
  verify_manifest,
)
from cammvp.logic import Orchestrator, run_experiment
from cammvp.models import DomainError

STEADY_TEXT = """\
experiment.kind = steady
model.k1 = 1
grid.n_r = 24
grid.n_u = 20
grid.n_w = 16
"""

SIM_TEXT = """\
model.k1 = 1
sim.n_particles = 400
sim.steps_per_tdyn = 100
sim.t_end_tdyn = {t_end}
sim.cadence = 2
perturbation.kind = modulation
perturbation.amplitude = 0.02
grid.n_r = 24
grid.n_u = 20
grid.n_w = 16
"""


def _config(text, out, **kwargs):
  config = parse_config(text, **kwargs)
  return config.model_copy(
    update={"experiment": config.experiment.model_copy(update={"out": str(out)})}
  )


# ============================================================================
# PIPELINES
# ============================================================================


def test_steady_run_writes_checked_artifacts(tmp_path):
  manifest = run_experiment(_config(STEADY_TEXT, tmp_path))
  assert manifest.errors == []
  assert manifest.exit_code == 0
  names = {entry.path for entry in manifest.files}
  assert {"profile.txt", "f0_grid.txt", "summary.json"} <= names
  assert {"plots/potential.dat", "plots/density.dat", "plots/README.md"} <= names
  assert MANIFEST_NAME not in names
  assert verify_manifest(tmp_path) == []
  assert load_manifest(tmp_path / MANIFEST_NAME).exit_code == 0

  summary = json.loads((tmp_path / "summary.json").read_text())
  assert summary["compact"]
  assert summary["E0"] < 0
  assert {c.name for c in manifest.checks} >= {"el_support", "virial", "d_self"}


def test_steady_runs_are_deterministic(tmp_path):
  first = run_experiment(_config(STEADY_TEXT, tmp_path / "a"))
  second = run_experiment(_config(STEADY_TEXT, tmp_path / "b"))
  assert first.exit_code == second.exit_code == 0
  assert sha256_of(tmp_path / "a" / "profile.txt") == sha256_of(
    tmp_path / "b" / "profile.txt"
  )


def test_component_errors_are_captured(tmp_path):
  text = STEADY_TEXT + "solver.method = match_mass\n"
  manifest = run_experiment(_config(text, tmp_path))
  assert manifest.exit_code == 1
  assert any("solver.mass is required" in e for e in manifest.errors)
  assert (tmp_path / MANIFEST_NAME).exists()
  assert not (tmp_path / "summary.json").exists()


def test_plummer_run(tmp_path):
  text = "model.k1 = 3.5\ngrid.n_r = 24\n"
  config = _config(text, tmp_path, allow_out_of_range=True, kind="steady")
  manifest = run_experiment(config)
  assert manifest.exit_code == 0
  assert [c.name for c in manifest.checks] == ["plummer_potential"]
  summary = json.loads((tmp_path / "summary.json").read_text())
  assert summary["R_supp"] is None
  assert not summary["admissible"]


def test_stability_run(tmp_path):
  text = SIM_TEXT.format(t_end=0.04)
  manifest = run_experiment(_config(text, tmp_path, kind="stability"))
  assert manifest.errors == []
  table = read_diagnostics(tmp_path / "diagnostics.csv")
  assert table["t"].size == 3
  passed = {c.name: c.passed for c in manifest.checks}
  assert passed["mass_drift"] and passed["angular_momentum_drift"]
  assert "bounded_deviation" in passed
  summary = json.loads((tmp_path / "summary.json").read_text())
  assert summary["asserted"]


def test_sim_run_then_resume(tmp_path):
  first = run_experiment(_config(SIM_TEXT.format(t_end=0.02), tmp_path, kind="sim"))
  assert first.errors == []
  t_first = read_diagnostics(tmp_path / "diagnostics.csv")["t"]

  later = _config(SIM_TEXT.format(t_end=0.04), tmp_path, kind="sim")
  resumed = run_experiment(later, action="resume")
  assert resumed.errors == []
  t_resumed = read_diagnostics(tmp_path / "diagnostics.csv")["t"]
  assert t_resumed[0] == pytest.approx(t_first[-1])
  assert t_resumed[-1] == pytest.approx(2.0 * t_first[-1])


def test_run_many_needs_distinct_outputs(tmp_path):
  config = _config(STEADY_TEXT, tmp_path)
  with pytest.raises(DomainError):
    Orchestrator(max_workers=2).run_many([config, config])


# ============================================================================
# COMMAND LINE
# ============================================================================


def test_cli_exit_codes(tmp_path):
  good = tmp_path / "steady.cfg"
  good.write_text(STEADY_TEXT)
  bad = tmp_path / "bad.cfg"
  bad.write_text("model.k1 = 2\ngrid.n_r = 24\n")

  assert main(["steady"]) == 2
  assert main(["steady", "--config", str(bad)]) == 2
  assert main(["steady", "run", "--config", str(good)]) == 2
  out = tmp_path / "run"
  assert main(["steady", "--config", str(good), "--out", str(out), "--seed", "3"]) == 0
  manifest = load_manifest(out / MANIFEST_NAME)
  assert manifest.config["experiment"]["seed"] == 3


# ============================================================================
# INVARIANT SUITE
# ============================================================================


def test_suite_group_passes():
  results = run_suite(seed=0, samples=3, groups=["plummer", "radial"], max_workers=2)
  names = [r.name for r in results]
  assert names == [
    "plummer_potential",
    "mass_bound",
    "field_split_bound",
    "green_identity",
  ]
  assert all(r.passed for r in results)


def test_suite_reports_group_failures(monkeypatch):
  def broken(rng, samples):
    raise RuntimeError("boom")

  monkeypatch.setitem(checks.SUITE, "broken", broken)
  results = run_suite(groups=["broken"], max_workers=1)
  assert len(results) == 1
  assert not results[0].passed
  assert "RuntimeError: boom" in results[0].detail


def test_checks_run_draws_a_hundred_instances(tmp_path, monkeypatch):
  calls = []

  def fake_suite(**kwargs):
    calls.append(kwargs)
    return []

  monkeypatch.setattr(logic, "run_suite", fake_suite)
  manifest = run_experiment(_config("model.k1 = 1\n", tmp_path, kind="checks"))
  assert calls and calls[0]["samples"] == 100
  assert manifest.exit_code == 0
  assert inspect.signature(run_suite).parameters["samples"].default == 100


@pytest.mark.slow
def test_full_suite_passes():
  results = run_suite(seed=0, samples=5)
  failed = [(r.name, r.value, r.detail) for r in results if not r.passed]
  assert failed == []


if __name__ == "__main__":
  import sys

  sys.exit(pytest.main([__file__, "-v"]))
