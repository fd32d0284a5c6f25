"""Finite element / implicit Euler-Maruyama solver for the stochastic BBM equation."""
from .mesh import Mesh, ProlongationMap, build_prolongation, build_uniform_mesh, prolong
from .fem import (
    FemOperators,
    assemble_convection,
    assemble_mass,
    assemble_stiffness,
    build_operators,
    elliptic_project,
    h1_inner,
    h1_norm,
)
from .stochastic import NoiseCoefficient, WienerPath, apply_noise, coarsen, generate_path
from .scheme import SchemeConfig, Trajectory, energy, implicit_step, run_trajectory
from .experiments import ConvergenceRow, StudyConfig, martingale_test, moment_statistics, run_study, sample_error

__version__ = "0.1.0"
