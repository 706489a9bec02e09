"""
Centralized configuration constants for the camm-vp numerical laboratory.

This module contains all tunable parameters organized by functional area.
Constants that work together are documented in groups explaining their
interactions. Experiment files override most of them through the harness
`section.key = value` format.
"""

import os

from dotenv import load_dotenv

load_dotenv()

# ============================================================================
# CASIMIR MODEL
# ============================================================================
# Used by casimir.py. The inverse derivative (Q')^{-1} is closed form for a
# single power term; the two-term family uses a bracketed bisection that is
# then polished by Newton steps.

DEFAULT_F0_THRESHOLD = 1.0
"""Threshold F0 of the small/large-f assumptions when none is configured.
Only changes the l = 0 branch of the large-f lower bound."""

QPRIME_INVERSE_RTOL = 1e-12
"""Relative tolerance of qprime_inverse for the two-term family."""

QPRIME_BISECTION_STEPS = 40
"""Vectorized bisection steps before the Newton polish. The initial bracket
never spans more than a factor 2^k, so 40 halvings leave Newton a bracket of
relative width below 1e-9."""

QPRIME_NEWTON_STEPS = 6
"""Safeguarded Newton steps after bisection (quadratic convergence from 1e-9)."""

ASSUMPTION_LATTICE_POINTS = 201
"""Points per axis of the (phi, lambda) lattice used to sample the
structural assumptions. phi is log-spaced on [1e-8, 1e8]; lambda on (0, 1]."""

# ============================================================================
# RADIAL GRIDS AND QUADRATURE
# ============================================================================
# radialfield.py builds its default grid as a short linear patch near the
# origin followed by geometric spacing up to r_max:
#   1. RADIAL_LINEAR_NODES nodes on [0, r_max * RADIAL_LINEAR_FRACTION]
#   2. the remaining nodes geometric up to r_max

RADIAL_NODES = 2048
"""Default node count of a radial grid (profiles, SCF, oracles)."""

RADIAL_LINEAR_NODES = 64
"""Nodes of the linear patch that resolves the removable singularity at 0."""

RADIAL_LINEAR_FRACTION = 1e-4
"""End of the linear patch as a fraction of r_max."""

MIN_RADIAL_NODES = 17
"""Smallest admissible radial grid (N >= 16 intervals)."""

MASS_CONTAINMENT = 0.999
"""Fraction of the total mass the grid must hold before a potential is
computed without a warning flag."""

JACOBI_NODES = 96
"""Gauss-Jacobi nodes for velocity-moment reductions of non power-law models
and for moments other than the density."""

# ============================================================================
# PHASE-SPACE GRIDS
# ============================================================================
# Default tensor grid (r x v_r x v_t) for property checks; convergence studies
# refine every axis by PHASE_REFINEMENT.

PHASE_GRID_SHAPE = (96, 64, 48)
"""Nodes along r, u = v_r and w = v_t."""

PHASE_REFINEMENT = 2
"""Refinement factor of grid-convergence checks."""

VELOCITY_MARGIN = 1.05
"""Velocity box half-width as a multiple of the central escape speed."""

D_DISTANCE_FLOOR = -1e-12
"""Numerical floor below which a d-distance counts as negative."""

# ============================================================================
# STEADY-STATE SOLVER
# ============================================================================
# steadystate.solve_steady integrates (psi, m) outward with DOP853 from a
# series start at START_FRACTION * r_c, where r_c is the central length scale.
# Integration stops at the first zero of psi or at R_MAX_FACTOR * r_c.

ODE_METHOD = "DOP853"
"""Embedded Runge-Kutta pair for the radial Poisson equation."""

ODE_RTOL = 1e-10
ODE_ATOL = 1e-10
"""Solver tolerances (relative / absolute)."""

START_FRACTION = 1e-6
"""Series start radius as a fraction of the central length scale."""

R_MAX_FACTOR = 1e3
"""Outer radius (in central length scales) before a state is declared
non-compact."""

PROFILE_NODES = 2048
"""Nodes of the tabulated profiles of a constructed state."""

MATCH_MASS_RTOL = 1e-8
"""Relative mass tolerance of match_mass."""

MATCH_MASS_MAX_EXPANSIONS = 60
"""Bracket expansions (factor 2 each in log central value) before match_mass
gives up."""

SCF_DAMPING = 0.5
"""Mixing parameter theta of the self-consistent field iteration:
U_new = (1 - theta) * U_old + theta * U_candidate."""

SCF_TOL = 1e-9
"""Sup-norm change of U that ends the SCF iteration."""

SCF_MAX_ITER = 500
"""Iteration cap of the SCF loop."""

SCF_LOG_EVERY = 25
"""SCF progress print cadence (iterations)."""

SCF_RADIUS_FACTOR = 2.0
"""SCF grid extent as a multiple of the initial support estimate."""

GAMMA_SCAN = (0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
"""Default gamma list of the compact-support scan."""

# ============================================================================
# SCALING LABORATORY
# ============================================================================

CONCENTRATION_SCAN_POINTS = 200001
"""Grid points on (0, 1/2] of the C_alpha scan (the ratio is symmetric)."""

WITNESS_GAMMAS = (0.0, 1e-4, 1e-3, 1e-2, 1e-1)
"""Default gamma grid of the negativity witness."""

WITNESS_B_RANGE = (1.0, 1e-10)
"""Sweep range of the spatial scaling parameter b (downward)."""

WITNESS_B_POINTS = 400
"""Log-spaced b values of the witness sweep."""

WITNESS_VELOCITY_RADIUS = 2.0**0.5
"""Velocity radius of the base test function ({u^2/2 + w^2/2 <= 1})."""

FAR_SHELL_FRACTION = 0.1
"""Mass fraction moved from the minimizer to a far shell in the split estimate."""

FAR_SHELL_RADIUS = 2.5
"""Far-shell radius as a multiple of max(R_M, R_supp)."""

SPLIT_RADII = (1.25, 1.5, 2.0)
"""Split radii of the far-shell family as multiples of R_M."""

SPLIT_PHASE_SHAPE = (96, 32, 24)
"""Phase grid of the far-shell family; its r-axis reaches past the shell."""

# ============================================================================
# SHELL DYNAMICS
# ============================================================================
# dynamics.py evolves weighted shells with kick-drift-kick leapfrog. Times are
# configured in dynamical times t_dyn = 2 pi (R^3 / M)^(1/2).

DEFAULT_PARTICLES = 100_000
"""Shell count of the stability experiment."""

STEPS_PER_TDYN = 2000
"""Leapfrog steps per dynamical time (dt = t_dyn / STEPS_PER_TDYN)."""

SIM_TDYN = 50.0
"""Default run length in dynamical times."""

DIAGNOSTIC_CADENCE = 200
"""Steps between diagnostic samples."""

SIM_LOG_EVERY = 25
"""Diagnostic samples between [Sim] progress prints."""

EPS_R_FACTOR = 1e-6
"""Inner reflection radius as a fraction of the support radius."""

REJECTION_FLOOR = 1e-3
"""Smallest acceptable acceptance ratio of the rejection sampler."""

STABILITY_BOUND_FACTOR = 5.0
"""Bounded-deviation factor: max_t of d + field/8pi must stay below this
multiple of its value just after the perturbation."""

ENERGY_DRIFT_TOL = 1e-4
"""Relative total-energy drift tolerated over a stability run."""

MODULATION_MODES = 1
"""Radial half-waves of the mass-neutral density modulation."""

# ============================================================================
# HARNESS
# ============================================================================

PROFILE_VERSION = 1
"""Version written into the profile header `# camm-vp profile v1`."""

SUITE_SAMPLES = 100
"""Random instances per check group of `camm-vp checks`."""

DEBUG_MAX_WORKERS = 1
"""Worker count when DEBUG is set."""

MAX_WORKERS = int(os.environ.get("CAMMVP_MAX_WORKERS", "0")) or (os.cpu_count() or 1)
"""Worker count for concurrent experiment stages (CAMMVP_MAX_WORKERS, falling
back to the CPU count)."""
