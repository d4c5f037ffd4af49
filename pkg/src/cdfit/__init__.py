"""Contrastive divergence for discrete exponential families.

Submodules: ``core`` (model interface), ``models`` (pairwise and ERGM
models), ``kernels`` (MCMC transition kernels), ``exact`` (enumeration
oracle), ``estimators`` (MPLE, composite likelihood, CD fits) and ``cli``.
"""
from .core import (Model, State, change_stats, conditional_prob, log_unnormalized, offset,
                   suff_stats)
from .errors import (CDError, ConfigError, DegenerateConditionalError, DimensionError,
                     EnumerationLimitError, InvalidPairError, MLENotFoundError, ParseError,
                     UnreachableSupportError)

__version__ = "0.1.0"
