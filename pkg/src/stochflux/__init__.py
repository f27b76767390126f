"""Kicked viscous conservation laws on a periodic grid.

Models and their structural assumptions (:mod:`.model`), periodic grid
fields (:mod:`.field`), integer-time random kicks (:mod:`.noise`), the
monotone finite-volume solver (:mod:`.solver`), Hamilton-Jacobi and
Cole-Hopf post-processing (:mod:`.transforms`) and Monte Carlo ensembles
(:mod:`.ergodics`).
"""
from .field import Field, Grid
from .kernels import BACKEND
from .model import ModelSpec, builtin_model, validate_assumptions
from .noise import KickSpec, sample_kick
from .solver import SolverConfig, evolve_pair_same_noise, phi_flow, psi, step_unforced

__version__ = "0.1.0"

__all__ = ["BACKEND", "Field", "Grid", "KickSpec", "ModelSpec", "SolverConfig",
           "builtin_model", "evolve_pair_same_noise", "phi_flow", "psi", "sample_kick",
           "step_unforced", "validate_assumptions"]
