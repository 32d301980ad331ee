"""Samplers and counters for constrained permutation families.

Two problem families share this package.  PRP: sample uniformly among
permutations hitting row-wise allowed sets (equivalently, nonzero terms
of a 0-1 permanent) and approximate their count, for very dense
instances.  PDC: sample near-uniform satisfying assignments of several
disjoint permutation sets under disjunctive not-equal constraints, via
block-compressed permutation-wise Glauber dynamics.
"""

from .prp_core import (
    DensityReport,
    DensityViolation,
    Infeasible,
    PermanentBracket,
    PrpInstance,
    bregman_classic,
    bregman_upper,
    density_report,
    f_bound,
    g_estimate,
    permanent_bracket,
    ratio_bound,
)
from .prp_sampler import (
    CountEstimate,
    Permutation,
    SampleStats,
    count_approx,
    sample_approx,
    sample_exact,
)
from .pdc_model import (
    Assignment,
    FormulaParams,
    PdcFormula,
    PermSet,
    encode_3partite_matching,
    encode_teacher_assignment,
    encode_transversal_factors,
    factorize,
    lll_check,
    params,
    related,
    simplify,
    violation_prob,
)
from .compression import (
    CompressedState,
    Decomposition,
    build_decomposition,
    induced_formula,
    project,
    violation_bound_decomposed,
)
from .pdc_sampler import (
    PrpDensityViolation,
    RegimeReport,
    RegimeViolation,
    SamplerConfig,
    glauber_step_ideal,
    mcmc_sample,
    regime_check,
    rejection_sampling,
    residual_prp,
    sample_subroutine,
)

__version__ = "0.1.0"
