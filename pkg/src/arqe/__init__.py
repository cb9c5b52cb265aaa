"""Adaptive random quantum eigensolver with optimizable mutation distributions."""
from .engine import RpState, RunConfig, run_ensemble, run_single, simulate
from .errors import ArqeError
from .genotype import Genotype, codification_gate
from .linalg import hermitian_eigensystem, unitary_eigensystem
from .optimizer import CostSpec, campaign, cost_eval, optimize
from .pcf import KnotSet, build_interpolant, inverse_sample, pcf_eval, pdf_eval

__all__ = [
    "ArqeError", "CostSpec", "Genotype", "KnotSet", "RpState", "RunConfig",
    "build_interpolant", "campaign", "codification_gate", "cost_eval",
    "hermitian_eigensystem", "inverse_sample", "optimize", "pcf_eval", "pdf_eval",
    "run_ensemble", "run_single", "simulate", "unitary_eigensystem",
]
