"""Critical-cluster stability assessment for droop-controlled inverter microgrids."""

from importlib import resources
from pathlib import Path

from .analysis import Analysis, SweepSpec, analyze, run_sweep
from .boundary import StabilityVerdict, assess, mu_cr_lower_bound, mu_critical
from .grid_model import GridSpec, PuNetwork, load_grid, parse_grid, serialize_grid, to_per_unit
from .network import LoadMode, build_incidence, build_susceptance, kron_reduce, reduce_network
from .oracle import (
    assemble_state_matrix,
    eig_general,
    verify_lemma1,
    verify_mode_correspondence,
    verify_polynomial_singularity,
    verify_theorem1,
)
from .sensitivity import dmu_ddroop, dmu_dlength, finite_diff_check
from .simulation import Scenario, step_response
from .spectrum import ClusterSpectrum, cluster_modes, identify_members, spectrum, weighted_susceptance

__version__ = "0.1.0"


def example_path(name: str) -> Path:
    """Path of a grid file shipped in ``gridclust/examples``."""
    return Path(str(resources.files(__package__).joinpath("examples", name)))


__all__ = [
    "Analysis", "ClusterSpectrum", "GridSpec", "LoadMode", "PuNetwork", "Scenario",
    "StabilityVerdict", "SweepSpec", "analyze", "assemble_state_matrix", "assess",
    "build_incidence", "build_susceptance", "cluster_modes", "dmu_ddroop", "dmu_dlength",
    "eig_general", "example_path", "finite_diff_check", "identify_members", "kron_reduce",
    "load_grid", "mu_cr_lower_bound", "mu_critical", "parse_grid", "reduce_network",
    "run_sweep", "serialize_grid", "spectrum", "step_response", "to_per_unit",
    "verify_lemma1", "verify_mode_correspondence", "verify_polynomial_singularity",
    "verify_theorem1", "weighted_susceptance",
]
