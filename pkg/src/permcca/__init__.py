"""Statistically valid permutation inference for canonical correlation analysis.

Provides stepwise estimation of canonical correlations under permutation,
exchangeability-restoring residualization of nuisance variables (Huh-Jhun
and Theil reductions), closed-testing familywise correction, and a
Monte-Carlo harness for error-rate and power studies.
"""

from . import errors
from .backend import backend_name, compiled_available
from .cca import CcaFit, CovBlocks, ProblemDims, canonical_variables, cca, cca_eig_oracle, center_columns, cov_blocks
from .infer import (
    InferenceOptions,
    InferenceResult,
    adjust_closure,
    adjust_max_distribution,
    parametric_wilks_p,
    permcca,
    roy_stat,
    wilks_stat,
)
from .permute import BlockStructure, PermutationScheme, build_scheme, exhaustive_scheme
from .residualize import (
    SelectionPlan,
    SemiOrthoBasis,
    default_selection,
    place_permutation,
    prepare_sides,
    residual_matrix,
    semiortho,
)
from .simulate import (
    ErrorRateReport,
    ScenarioSpec,
    Strategy,
    apply_pca,
    gen_scenario_data,
    get_scenario,
    run_scenario,
    wilson_ci,
)

__version__ = "0.1.0"

__all__ = [
    "BlockStructure",
    "CcaFit",
    "CovBlocks",
    "ErrorRateReport",
    "InferenceOptions",
    "InferenceResult",
    "PermutationScheme",
    "ProblemDims",
    "ScenarioSpec",
    "SelectionPlan",
    "SemiOrthoBasis",
    "Strategy",
    "adjust_closure",
    "adjust_max_distribution",
    "apply_pca",
    "backend_name",
    "build_scheme",
    "canonical_variables",
    "cca",
    "cca_eig_oracle",
    "center_columns",
    "compiled_available",
    "cov_blocks",
    "default_selection",
    "errors",
    "exhaustive_scheme",
    "gen_scenario_data",
    "get_scenario",
    "parametric_wilks_p",
    "permcca",
    "place_permutation",
    "prepare_sides",
    "residual_matrix",
    "roy_stat",
    "run_scenario",
    "semiortho",
    "wilks_stat",
    "wilson_ci",
]
