"""Mendelian randomization for pedigree data.

Provides pedigree parsing and kinship computation, data simulation from the
generative MR model, frequentist summary-statistic estimators, a Bayesian
four-level model ladder (independence, kinship, kinship+family effects, and
the full model with parental exposure instruments) with an adaptive HMC
sampler, and posterior reporting utilities.
"""

__version__ = "0.1.0"

from pedmr.pedigree import (
    Individual,
    KinshipMatrix,
    Pedigree,
    PedigreeError,
    kinship_matrix,
    parse_pedigree,
    relationship_cholesky,
)

__all__ = [
    "Individual",
    "KinshipMatrix",
    "Pedigree",
    "PedigreeError",
    "kinship_matrix",
    "parse_pedigree",
    "relationship_cholesky",
    "__version__",
]
