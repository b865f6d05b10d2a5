"""Equidistribution of orthogonal lattice pairs under SO(n,1) lattice orbits."""
# ruff: noqa: F401

from .enumeration import GammaSpec, Norm, enumerate_ball, sargent_shapira_gamma
from .harness import ExperimentConfig, emit, evaluate, run_experiment, run_orbit
from .lattices import OrthoPair, make_pair, ortho_lattice
from .limits import PredictedLaw, classify_start, detect_special, sample_predicted
from .quadrature import QuadratureSpec, eval_w_infty, eval_w_P0, eval_w_theta0, volume_constant

__version__ = "0.1.0"
