"""Covariance-corrected multiple permutation tests for contrasts of group parameters."""

from .contrasts import ContrastSpec, centering, dunnett, from_csv, from_matrix, make_contrast, tukey
from .correction import Case, case_select, correct_case1, correct_case2, correct_case3
from .engine import PermutationRun, RunConfig, derive_stream, run, run_cases
from .exceptions import (CaseInapplicable, CovPermError, InsufficientData, InsufficientReplicates, InvalidInput,
                         MethodUnavailable, NotPSD, VarianceUndefined)
from .moments import GroupedSample
from .mtp import (TestReport, adjusted_pvalues_minp, asymptotic_bonferroni, asymptotic_multiple,
                  balanced_critical_values, bonferroni_naive, multiple_test, report_from_run)
from .statistics import Kernel
from .survival import SurvivalSample

__all__ = [
    "ContrastSpec", "centering", "dunnett", "from_csv", "from_matrix", "make_contrast", "tukey", "Case",
    "case_select", "correct_case1", "correct_case2", "correct_case3", "PermutationRun", "RunConfig", "derive_stream",
    "run", "run_cases", "CaseInapplicable", "CovPermError", "InsufficientData", "InsufficientReplicates",
    "InvalidInput", "MethodUnavailable", "NotPSD", "VarianceUndefined", "GroupedSample", "TestReport",
    "adjusted_pvalues_minp", "asymptotic_bonferroni", "asymptotic_multiple", "balanced_critical_values",
    "bonferroni_naive", "multiple_test", "report_from_run", "Kernel", "SurvivalSample",
]

__version__ = "0.1.0"
