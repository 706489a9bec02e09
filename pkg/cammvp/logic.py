import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

import cammvp
from cammvp.checks import run_suite, thread_safe_print
from cammvp.config import (
  DEBUG_MAX_WORKERS,
  ENERGY_DRIFT_TOL,
  MAX_WORKERS,
  STABILITY_BOUND_FACTOR,
  SUITE_SAMPLES,
)
from cammvp.dynamics import (
  DistanceBaseline,
  evolve,
  load_snapshot,
  perturbed_start,
  run_stability,
  store_snapshot,
)
from cammvp.harness import (
  finalize_manifest,
  store_grid,
  store_state,
  write_columns,
  write_diagnostics,
  write_json,
  write_plot_readme,
)
from cammvp.models import (
  AnsatzState,
  CheckResult,
  DiagnosticSeries,
  DomainError,
  ExperimentConfig,
  RunManifest,
  SimConfig,
)
from cammvp.phasespace import d_distance, mass_of, phase_grid, sample_state
from cammvp.radialfield import velocity_bound
from cammvp.scalinglab import scaling_report, split_family
from cammvp.steadystate import (
  e0_consistency,
  el_residual,
  match_mass,
  plummer_reference,
  scf_minimize,
  solve_steady,
  virial_residual,
)


def _now() -> str:
  return datetime.now(timezone.utc).isoformat()


def _check(name: str, value: float, threshold: float, passed: bool) -> CheckResult:
  return CheckResult(name=name, passed=bool(passed), value=value, threshold=threshold)


class Orchestrator:
  """Runs experiments: one sequential pipeline per config, configs in parallel."""

  def __init__(self, max_workers: Optional[int] = None):
    self.max_workers = max_workers or (
      DEBUG_MAX_WORKERS if os.environ.get("DEBUG") else MAX_WORKERS
    )

  def run(self, config: ExperimentConfig, action: str = "run") -> RunManifest:
    """
    Dispatch one experiment and write its artifacts under config.experiment.out.

    Component errors are captured into the manifest (nonzero exit code); the
    manifest is written last.
    """
    out = Path(config.experiment.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
      config=config.model_dump(mode="json"),
      version=cammvp.__version__,
      started=_now(),
    )
    thread_safe_print(f"[Harness] {config.kind} -> {out}")
    pipeline = {
      "steady": self.run_steady,
      "scaling": self.run_scaling,
      "stability": self.run_stability,
      "sim": self.run_sim,
      "checks": self.run_checks,
    }[config.kind]
    try:
      if config.kind == "sim":
        manifest.checks = pipeline(config, out, action)
      else:
        manifest.checks = pipeline(config, out)
    except Exception as e:
      manifest.errors.append(f"{type(e).__name__}: {e}")
      thread_safe_print(f"[Harness] Error in {config.kind}: {e}")
    manifest.finished = _now()
    finalize_manifest(manifest, out)
    summary = manifest.summary()
    thread_safe_print(
      f"[Harness] {config.kind} done: {summary['passed']} passed, "
      f"{summary['failed']} failed, {len(manifest.errors)} errors, "
      f"exit code {manifest.exit_code}"
    )
    return manifest

  def run_many(self, configs: List[ExperimentConfig]) -> List[RunManifest]:
    """Independent experiments concurrently; manifests in input order."""
    outs = [c.experiment.out for c in configs]
    if len(set(outs)) != len(outs):
      raise DomainError("concurrent experiments need distinct output directories")
    manifests: Dict[int, RunManifest] = {}
    with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
      futures = {executor.submit(self.run, c): i for i, c in enumerate(configs)}
      for future in as_completed(futures):
        manifests[futures[future]] = future.result()
    return [manifests[i] for i in range(len(configs))]

  # ==========================================================================
  # PIPELINES
  # ==========================================================================

  def _build_state(self, config: ExperimentConfig) -> AnsatzState:
    model = config.model.to_model()
    solver = config.solver
    permitted = config.experiment.allow_out_of_range
    if solver.method == "shoot":
      return solve_steady(
        model,
        solver.central_psi,
        allow_out_of_range=permitted,
        rtol=solver.rtol,
        atol=solver.atol,
        n_profile=config.grid.n_radial,
      )
    if solver.mass is None:
      raise DomainError(f"solver.mass is required for method {solver.method!r}")
    if solver.method == "match_mass":
      return match_mass(model, solver.mass, allow_out_of_range=permitted)
    return scf_minimize(
      model,
      solver.mass,
      n_nodes=config.grid.n_radial,
      r_max=config.grid.r_max,
      damping=solver.scf_damping,
      tol=solver.scf_tol,
      max_iter=solver.scf_max_iter,
      allow_out_of_range=permitted,
    )

  def run_steady(self, config: ExperimentConfig, out: Path) -> List[CheckResult]:
    state = self._build_state(config)
    model = state.model
    store_state(state, out / "profile.txt")
    checks: List[CheckResult] = []
    summary: Dict = {
      "E0": state.E0,
      "M": state.M,
      "R_supp": state.R_supp,
      "compact": state.compact,
      "admissible": state.admissible,
      "report": state.report.model_dump() if state.report else None,
      "meta": state.meta,
    }

    plummer = model.is_pure_power and model.k1 == 3.5 and model.l == 0
    if plummer and model.gamma == 0 and config.solver.method == "shoot":
      M_inf, a = plummer_reference(model, config.solver.central_psi)
      inside = (state.m <= 0.999 * M_inf) & (state.r > 0)
      exact = M_inf / np.sqrt(a**2 + state.r[inside] ** 2)
      error = float(np.max(np.abs(state.psi[inside] - exact) / exact))
      summary["plummer"] = {"M_inf": M_inf, "a": a, "max_rel_error": error}
      checks.append(_check("plummer_potential", error, 1e-5, error < 1e-5))

    if state.compact:
      sup_on, min_off = el_residual(state)
      mismatch = e0_consistency(state)
      virial = virial_residual(state)
      summary["validation"] = {
        "el_support": sup_on,
        "el_off_support": min_off,
        "e0_consistency": mismatch,
        "virial": virial,
      }
      if state.admissible:
        scale = 1e-6 * abs(state.E0)
        checks += [
          _check("el_support", sup_on, scale, sup_on < scale),
          _check("el_off_support", min_off, -1e-10, min_off >= -1e-10),
          _check("e0_consistency", mismatch, 1e-6, mismatch < 1e-6),
          _check("E0_negative", state.E0, 0.0, state.E0 < 0),
          _check("D_negative", state.report.total, 0.0, state.report.total < 0),
          _check("virial", virial, 1e-4, virial <= 1e-4),
        ]

      grid = config.grid
      box = phase_grid(
        grid.r_max or state.extent,
        grid.v_max or velocity_bound(state),
        self._phase_shape(config),
      )
      f0 = sample_state(state, like=box)
      store_grid(f0, out / "f0_grid.txt")
      self_distance = abs(d_distance(f0, state))
      summary["grid"] = {"mass": mass_of(f0), "d_self": self_distance}
      checks.append(_check("d_self", self_distance, 1e-10, self_distance < 1e-10))

    write_json(out / "summary.json", summary)
    plots = out / "plots"
    write_columns(
      plots / "potential.dat", ("r", "U", "psi"), (state.r, state.U, state.psi)
    )
    write_columns(plots / "density.dat", ("r", "rho"), (state.r, state.rho))
    write_columns(plots / "mass.dat", ("r", "m"), (state.r, state.m))
    write_plot_readme(
      plots,
      {
        "potential.dat": "steady potential U(r) and psi = E0 - U (log r axis)",
        "density.dat": "spatial density rho(r); compact support ends at R_supp",
        "mass.dat": "enclosed mass m(r)",
      },
    )
    return checks

  def run_scaling(self, config: ExperimentConfig, out: Path) -> List[CheckResult]:
    model = config.model.to_model()
    scaling = config.scaling
    report = scaling_report(
      model, scaling.M1, scaling.M2, scaling.gamma_grid, use_scf=False
    )
    checks = list(report.checks)
    payload = report.model_dump(exclude={"witnesses": {"__all__": {"sweep"}}})

    if scaling.split_radii and report.D_M is not None:
      state = match_mass(model, scaling.M2)
      rows = split_family(
        state, report.D_M, scaling.split_radii, moved=(scaling.split_moved,)
      )
      for row in rows:
        name = f"split_estimate[moved={row['moved']:g},R={row['R_over_RM']:g}R_M]"
        margin = row["margin"]
        checks.append(_check(name, margin, -1e-8, margin >= -1e-8))
      payload["split"] = rows

    write_json(out / "scaling.json", payload)
    plots = out / "plots"
    descriptions = {}
    for witness in report.witnesses:
      if witness.sweep:
        name = f"witness_gamma_{witness.gamma:g}.dat"
        b, D = zip(*witness.sweep)
        write_columns(plots / name, ("b", "D"), (b, D))
        descriptions[name] = (
          f"D of the rescaled test function against b for gamma = {witness.gamma:g} "
          "(log b axis, symlog D axis)"
        )
    if descriptions:
      write_plot_readme(plots, descriptions)
    return checks

  def run_stability(self, config: ExperimentConfig, out: Path) -> List[CheckResult]:
    sim = config.sim
    perturbation = config.perturbation
    series, summary = run_stability(
      config.model.to_model(),
      M=sim.mass,
      kind=perturbation.kind,
      amplitude=perturbation.amplitude,
      n_particles=sim.n_particles,
      steps_per_tdyn=sim.steps_per_tdyn,
      t_end_tdyn=sim.t_end_tdyn,
      cadence=sim.cadence,
      eps_r_factor=sim.eps_r_factor,
      seed=config.experiment.seed,
      grid_shape=self._phase_shape(config),
      allow_out_of_range=config.experiment.allow_out_of_range,
    )
    summary["notes"] = series.notes
    write_diagnostics(series, out / "diagnostics.csv")
    write_json(out / "summary.json", summary)
    self._plot_series(series, out / "plots")
    checks = self._conservation_checks(series)
    if summary["asserted"]:
      checks += [
        _check(
          "bounded_deviation",
          summary["deviation_ratio"],
          STABILITY_BOUND_FACTOR,
          summary["bounded"],
        ),
        _check(
          "energy_drift",
          summary["energy_drift"],
          ENERGY_DRIFT_TOL,
          summary["energy_ok"],
        ),
      ]
    return checks

  def run_sim(
    self, config: ExperimentConfig, out: Path, action: str = "run"
  ) -> List[CheckResult]:
    """`run`: sample, perturb and evolve, then snapshot; `resume`: continue one."""
    sim = config.sim
    model = config.model.to_model()
    permitted = config.experiment.allow_out_of_range
    state = match_mass(model, sim.mass, allow_out_of_range=permitted)
    t_dyn = state.t_dyn
    snapshot = Path(sim.snapshot) if sim.snapshot else out / "snapshot.bin"

    if action == "resume":
      ensemble, meta = load_snapshot(snapshot)
      baseline = DistanceBaseline(**meta["baseline"])
      C_initial = meta["C_initial"]
      thread_safe_print(f"[Sim] resuming {snapshot} at t={ensemble.t:.6g}")
    elif action == "run":
      perturbation = config.perturbation
      ensemble, baseline, C_initial, _ = perturbed_start(
        state,
        perturbation.kind,
        perturbation.amplitude,
        sim.n_particles,
        config.experiment.seed,
        self._phase_shape(config),
      )
    else:
      raise DomainError(f"unknown sim action {action!r} (use run or resume)")

    sim_config = SimConfig(
      dt=t_dyn / sim.steps_per_tdyn,
      t_end=sim.t_end_tdyn * t_dyn,
      cadence=sim.cadence,
      seed=config.experiment.seed,
      eps_r=sim.eps_r_factor * state.R_supp,
      n_particles=ensemble.n,
    )
    final, series = evolve(ensemble, state, sim_config, C_initial, baseline)
    store_snapshot(
      final,
      out / "snapshot.bin",
      meta={"baseline": baseline.model_dump(), "C_initial": C_initial},
    )
    write_diagnostics(series, out / "diagnostics.csv")
    self._plot_series(series, out / "plots")
    return self._conservation_checks(series)

  def run_checks(self, config: ExperimentConfig, out: Path) -> List[CheckResult]:
    checks = run_suite(
      seed=config.experiment.seed,
      samples=SUITE_SAMPLES,
      max_workers=self.max_workers,
    )
    passed = sum(c.passed for c in checks)
    write_json(
      out / "checks.json",
      {
        "passed": passed,
        "failed": len(checks) - passed,
        "checks": [c.model_dump() for c in checks],
      },
    )
    return checks

  # ==========================================================================
  # HELPERS
  # ==========================================================================

  @staticmethod
  def _phase_shape(config: ExperimentConfig) -> Tuple[int, int, int]:
    return (config.grid.n_r, config.grid.n_u, config.grid.n_w)

  @staticmethod
  def _conservation_checks(series: DiagnosticSeries) -> List[CheckResult]:
    mass = series.column("mass")
    mass_drift = float(np.max(np.abs(mass - mass[0])))
    L_drift = float(np.max(series.column("L_drift_max")))
    return [
      _check("mass_drift", mass_drift, 0.0, mass_drift == 0.0),
      _check("angular_momentum_drift", L_drift, 0.0, L_drift == 0.0),
    ]

  @staticmethod
  def _plot_series(series: DiagnosticSeries, plots: Path) -> None:
    t = series.column("t")
    write_columns(
      plots / "lyapunov.dat",
      ("t", "lyapunov_sum", "d_surrogate", "field_dist"),
      (
        t,
        series.column("lyapunov_sum"),
        series.column("d_surrogate"),
        series.column("field_dist"),
      ),
    )
    write_columns(
      plots / "energy.dat",
      ("t", "Ekin", "Epot", "Etot"),
      (t, series.column("Ekin"), series.column("Epot"), series.column("Etot")),
    )
    write_plot_readme(
      plots,
      {
        "lyapunov.dat": "d-surrogate + field/8 pi and its two parts against time",
        "energy.dat": "kinetic, potential and total energy against time",
      },
    )


def run_experiment(config: ExperimentConfig, action: str = "run") -> RunManifest:
  """Run one experiment with a fresh Orchestrator."""
  return Orchestrator().run(config, action)
