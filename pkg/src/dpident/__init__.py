"""Differentially private identity testing for Gaussians and product laws."""

from .core import (
    EfficientParams,
    Family,
    InefficientParams,
    TestProblem,
    Verdict,
    derive_efficient_params,
    derive_inefficient_params,
)
from .couplings import (
    CouplingResult,
    DecompositionSample,
    chi_normal_tv_estimate,
    couple_shifted_normals,
    decomposition_coupling,
    scaled_normal_tv,
    tv_normal_shift,
)
from .extension_tester import (
    ExtensionOracle,
    MembershipReport,
    build_reference_oracle,
    extend_statistic,
    inefficient_test,
    interpolation_counterexample,
    membership_report,
)
from .gram import ScaledGram, build_gram, scale_center
from .harness import (
    ExperimentConfig,
    run_coupling_sweep,
    run_oracle_suite,
    run_power_sweep,
    run_sensitivity_audit,
    run_single_test,
    wilson_interval,
)
from .matrix_tester import MatrixMechanismTrace, efficient_test, matrix_mechanism
from .reductions import (
    gaussian_rescale,
    product_mean_zero,
    product_rescale,
    unbounded_to_bounded_test,
    whiten,
)
from .samplers import (
    RngSeed,
    sample_chi,
    sample_gaussian,
    sample_laplace,
    sample_product,
    unit_sphere,
)
from .variants import (
    pair_difference_samples,
    product_test,
    tolerant_thresholds,
    unknown_cov_test,
)

__all__ = [
    "CouplingResult",
    "DecompositionSample",
    "EfficientParams",
    "ExperimentConfig",
    "ExtensionOracle",
    "Family",
    "InefficientParams",
    "MatrixMechanismTrace",
    "MembershipReport",
    "RngSeed",
    "ScaledGram",
    "TestProblem",
    "Verdict",
    "build_gram",
    "build_reference_oracle",
    "chi_normal_tv_estimate",
    "couple_shifted_normals",
    "decomposition_coupling",
    "derive_efficient_params",
    "derive_inefficient_params",
    "efficient_test",
    "extend_statistic",
    "gaussian_rescale",
    "inefficient_test",
    "interpolation_counterexample",
    "matrix_mechanism",
    "membership_report",
    "pair_difference_samples",
    "product_mean_zero",
    "product_rescale",
    "product_test",
    "run_coupling_sweep",
    "run_oracle_suite",
    "run_power_sweep",
    "run_sensitivity_audit",
    "run_single_test",
    "sample_chi",
    "sample_gaussian",
    "sample_laplace",
    "sample_product",
    "scale_center",
    "scaled_normal_tv",
    "tolerant_thresholds",
    "tv_normal_shift",
    "unbounded_to_bounded_test",
    "unit_sphere",
    "unknown_cov_test",
    "whiten",
    "wilson_interval",
]
