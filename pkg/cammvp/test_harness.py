"""
Tests for experiment files, persisted profiles and grids, diagnostics files
and run manifests.

Run with: pytest cammvp/test_harness.py
"""

import json
import math

import numpy as np
import pytest

from cammvp.checks import PLUMMER, POLYTROPE
from cammvp.harness import (
  MANIFEST_NAME,
  finalize_manifest,
  load_config,
  load_grid,
  load_manifest,
  load_state,
  parse_config,
  read_diagnostics,
  store_grid,
  store_state,
  verify_manifest,
  write_diagnostics,
  write_json,
)
from cammvp.models import (
  CheckResult,
  ConfigError,
  DiagnosticSample,
  DiagnosticSeries,
  FormatError,
  GridDensity,
  RunManifest,
)
from cammvp.steadystate import solve_steady

STEADY_TEXT = """\
# polytrope with default grids
experiment.kind = steady
model.c1 = 1
model.k1 = 1   # n = 5/2
grid.n_r = 24
"""


def _errors(text, **kwargs):
  with pytest.raises(ConfigError) as info:
    parse_config(text, **kwargs)
  return info.value.errors


# ============================================================================
# EXPERIMENT FILES
# ============================================================================


def test_parse_minimal_steady_config():
  config = parse_config(STEADY_TEXT)
  assert config.kind == "steady"
  assert config.model.to_model() == POLYTROPE
  assert config.grid.n_r == 24
  assert config.grid.n_u == 64
  assert config.solver.method == "shoot"
  assert config.sections_present == ["experiment", "grid", "model"]


def test_exponent_range_error_cites_the_line():
  text = "experiment.kind = steady\ngrid.n_r = 24\nmodel.k1 = 2\nmodel.l = 0\n"
  errors = _errors(text)
  assert len(errors) == 1
  assert errors[0].startswith("line 3:")
  assert "0 < k1, k2, k3 < l + 3/2 = 1.5" in errors[0]


def test_out_of_range_flag_admits_plummer():
  text = "model.k1 = 3.5\ngrid.n_r = 24\n"
  config = parse_config(text, allow_out_of_range=True, kind="steady")
  assert config.experiment.allow_out_of_range
  assert config.model.to_model() == PLUMMER


def test_duplicate_key_names_both_lines():
  text = "model.k1 = 1\ngrid.n_r = 24\n\nmodel.k1 = 0.5\n"
  errors = _errors(text, kind="steady")
  assert "line 4: duplicate key model.k1 (first set on line 1)" in errors


def test_unknown_and_malformed_lines():
  text = "model.k1 = 1\nmodel.foo = 2\nwidgets.n = 3\ngrid n_r 24\ngrid.n_r = abc\n"
  errors = _errors(text, kind="steady")
  assert "line 2: unknown key model.foo" in errors
  assert "line 3: unknown section [widgets]" in errors
  assert any(e.startswith("line 4: expected `section.key = value`") for e in errors)
  assert any(e.startswith("line 5: grid.n_r:") for e in errors)


def test_model_sign_error_is_reported():
  errors = _errors("model.c1 = -1\nmodel.k1 = 1\ngrid.n_r = 24\n", kind="steady")
  assert any("c1 must be > 0" in e for e in errors)


def test_missing_section_and_kind_conflict():
  errors = _errors("model.k1 = 1\n", kind="steady")
  assert "missing section [grid] for experiment kind 'steady'" in errors
  errors = _errors("experiment.kind = scaling\nmodel.k1 = 1\n", kind="steady")
  assert any("contradicts" in e and e.startswith("line 1:") for e in errors)


def test_scaling_lists_and_checks_without_file():
  config = parse_config(
    "model.k1 = 1\nscaling.gamma_grid = 0, 1e-3\nscaling.split_radii = 0.5",
    kind="scaling",
  )
  assert config.scaling.gamma_grid == [0.0, 1e-3]
  assert config.scaling.split_radii == [0.5]
  assert parse_config("", kind="checks").kind == "checks"


def test_load_config_prefixes_the_path(tmp_path):
  path = tmp_path / "bad.cfg"
  path.write_text("model.k1 = 2\ngrid.n_r = 24\n")
  with pytest.raises(ConfigError) as info:
    load_config(path, kind="steady")
  assert info.value.errors[0].startswith(f"{path}: line 1:")


# ============================================================================
# PERSISTENCE
# ============================================================================


@pytest.fixture(scope="module")
def polytrope_state():
  return solve_steady(POLYTROPE, 1.0, n_profile=513)


def test_profile_round_trip_is_exact(polytrope_state, tmp_path):
  state = polytrope_state
  loaded = load_state(store_state(state, tmp_path / "profile.txt"))
  for name in ("r", "U", "rho", "m", "psi"):
    assert np.array_equal(getattr(loaded, name), getattr(state, name))
  assert loaded.E0 == state.E0
  assert loaded.R_supp == state.R_supp
  assert loaded.model == state.model
  assert loaded.report == state.report
  assert loaded.meta == state.meta


def test_noncompact_profile_keeps_infinite_support(tmp_path):
  state = solve_steady(PLUMMER, 1.0, allow_out_of_range=True, n_profile=257)
  loaded = load_state(store_state(state, tmp_path / "plummer.txt"))
  assert math.isinf(loaded.R_supp)
  assert not loaded.compact


def test_damaged_profiles_are_rejected(polytrope_state, tmp_path):
  path = store_state(polytrope_state, tmp_path / "profile.txt")
  text = path.read_text()

  truncated = tmp_path / "truncated.txt"
  truncated.write_text(text[: len(text) // 2])
  with pytest.raises(FormatError, match="checksum"):
    load_state(truncated)

  future = tmp_path / "future.txt"
  future.write_text(text.replace("# camm-vp profile v1", "# camm-vp profile v2", 1))
  with pytest.raises(FormatError, match="v2"):
    load_state(future)

  with pytest.raises(FormatError):
    load_grid(path)


def test_grid_round_trip(tmp_path):
  rng = np.random.default_rng(0)
  f = GridDensity(
    r=np.linspace(0.0, 1.0, 5),
    u=np.linspace(-1.0, 1.0, 4),
    w=np.linspace(0.0, 1.0, 3),
    values=rng.random((5, 4, 3)),
  )
  loaded = load_grid(store_grid(f, tmp_path / "grid.txt"))
  assert np.array_equal(loaded.values, f.values)
  assert np.array_equal(loaded.u, f.u)


def test_diagnostics_round_trip(tmp_path):
  series = DiagnosticSeries()
  for i in range(3):
    series.samples.append(
      DiagnosticSample(
        t=0.1 * i,
        Ekin=0.3,
        Epot=-0.6,
        Etot=-0.3,
        d_surrogate=1e-5 / (i + 1),
        field_dist=2e-6,
        lyapunov_sum=1e-5,
        mass=1.0,
        L_drift_max=0.0,
      )
    )
  table = read_diagnostics(write_diagnostics(series, tmp_path / "diagnostics.csv"))
  assert np.array_equal(table["t"], series.column("t"))
  assert np.array_equal(table["d_surrogate"], series.column("d_surrogate"))


def test_write_json_maps_nonfinite_to_null(tmp_path):
  path = write_json(tmp_path / "x.json", {"a": math.inf, "b": np.float64(1.5)})
  assert json.loads(path.read_text()) == {"a": None, "b": 1.5}


# ============================================================================
# MANIFESTS
# ============================================================================


def test_manifest_inventory_and_exit_code(tmp_path):
  (tmp_path / "plots").mkdir()
  (tmp_path / "summary.json").write_text("{}\n")
  (tmp_path / "plots" / "mass.dat").write_text("# r m\n0.0 0.0\n")
  manifest = RunManifest(config={}, version="0.1.0", started="now")
  manifest.checks = [CheckResult(name="ok", passed=True)]
  finalize_manifest(manifest, tmp_path)

  loaded = load_manifest(tmp_path / MANIFEST_NAME)
  assert loaded.exit_code == 0
  assert [entry.path for entry in loaded.files] == ["plots/mass.dat", "summary.json"]
  assert verify_manifest(tmp_path) == []

  (tmp_path / "summary.json").write_text('{"edited": true}\n')
  assert verify_manifest(tmp_path) == ["checksum mismatch for summary.json"]

  manifest.checks.append(CheckResult(name="bad", passed=False))
  finalize_manifest(manifest, tmp_path)
  assert load_manifest(tmp_path / MANIFEST_NAME).exit_code == 1


if __name__ == "__main__":
  import sys

  sys.exit(pytest.main([__file__, "-v"]))
