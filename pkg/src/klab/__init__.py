"""klab: numerical lab for the energy method for -Δ + V on warped-product manifolds.

Modules
-------
geometry    warped-product metrics, mean curvature, tail asymptotics
potential   potential specs, built-in families, manufactured potentials
modes       separated radial ODEs and sphere norms
energy      the weighted energy F(m, r, t, s) and its radial derivative
thresholds  closed-form eigenvalue-exclusion bounds
verify      monotonicity, positivity and growth checks, scenario runner
cli         ``klab`` command-line entry point
"""
from .energy import EnergyConfig, Version, derivative_identity_check, energy_curve
from .errors import KlabError
from .geometry import WarpedMetric, curvature_metric, euclidean, hyperbolic, warp_from_curvature
from .modes import SolveConfig, solve_modes, sphere_norms
from .potential import PotentialSpec, builtin_family, free, manufactured_potential
from .thresholds import evaluate
from .verify import run_scenario

__version__ = "0.1.0"

__all__ = [
    "EnergyConfig", "KlabError", "PotentialSpec", "SolveConfig", "Version", "WarpedMetric", "builtin_family",
    "curvature_metric", "derivative_identity_check", "energy_curve", "euclidean", "evaluate", "free",
    "hyperbolic", "manufactured_potential", "run_scenario", "solve_modes", "sphere_norms",
    "warp_from_curvature",
]
