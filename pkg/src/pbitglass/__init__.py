"""p-bit Monte Carlo for 3D Edwards-Anderson spin glasses.

Sampling core (:mod:`engine`), annealing on Trotter replica rings
(:mod:`dtsqa`), adaptive parallel tempering with cluster moves (:mod:`apt`)
and the residual-energy analysis toolkit (:mod:`analysis`).
"""
from .instance import CouplingGraph, LatticeSpec, build_ea_lattice, load_instance, save_instance
from .coloring import Coloring, dsatur, extend_coloring_replicas, verify_coloring
from .engine import SamplerContext, chromatic_sweep, energy, exact_boltzmann
from .dtsqa import SimulatedQuantumAnnealer, run_dtsqa, run_dtsqa_independent
from .apt import AdaptiveParallelTempering, AptConfig, adaptive_beta_schedule, run_apt

__all__ = [
    "CouplingGraph", "LatticeSpec", "build_ea_lattice", "load_instance", "save_instance",
    "Coloring", "dsatur", "extend_coloring_replicas", "verify_coloring",
    "SamplerContext", "chromatic_sweep", "energy", "exact_boltzmann",
    "SimulatedQuantumAnnealer", "run_dtsqa", "run_dtsqa_independent",
    "AdaptiveParallelTempering", "AptConfig", "adaptive_beta_schedule", "run_apt",
]

__version__ = "0.1.0"
