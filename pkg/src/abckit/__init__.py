"""Likelihood-free Bayesian inference toolkit.

Acceptance-kernel ABC engines (rejection, importance, MCMC, sequential),
noise-calibrated variants, regression-trained summary statistics, reference
simulators, and comparison baselines.
"""

from .engines import (
    LOG_TRANSFORM,
    AbcProblem,
    AbcResult,
    BandwidthTune,
    McmcConfig,
    McmcResult,
    NoisyObservation,
    Transform,
    abc_importance,
    abc_mcmc,
    abc_rejection,
    make_noisy,
    tune_bandwidth,
)
from .baselines import (
    IndirectConfig,
    IndirectResult,
    RegressionCorrection,
    beaumont_correct,
    indirect_inference,
    synthetic_likelihood_mcmc,
    synthetic_log_density,
)
from .experiments import (
    CoverageResult,
    DominanceResult,
    ExpansionResult,
    ExpansionRow,
    LossMethod,
    LossTable,
    binomial_band,
    calibration_study,
    estimator_dominance_check,
    loss_expansion_check,
    loss_table,
    semiauto_method,
    standard_abc_method,
)
from .harness import (
    ExperimentConfig,
    ExperimentRecord,
    PRESETS,
    build_summary,
    get_sequential,
    list_presets,
    load_config,
    load_record,
    preset_config,
    resolve_threads,
    run_config,
    run_experiment,
    save_config,
    write_csv,
)
from .kernels import (
    DensityKernel,
    LossMatrix,
    PosteriorSummary,
    WeightedSample,
    effective_sample_size,
    gaussian_kernel,
    kernel_loss_moment,
    posterior_summaries,
    quadratic_loss,
    uniform_kernel,
    weighted_quantile,
)
from .seeding import child_stream, rng_fingerprint, seed_stream
from .sequential import (
    LinearGaussianSequential,
    LvSequential,
    NormalVarianceSequential,
    ParticleSystem,
    SequentialConfig,
    SequentialResult,
    StepRecord,
    bias_experiment,
    liu_west_rejuvenate,
    seq_abc,
    systematic_resample,
)

__all__ = [
    "AbcProblem",
    "AbcResult",
    "BandwidthTune",
    "CoverageResult",
    "DensityKernel",
    "DominanceResult",
    "ExpansionResult",
    "ExpansionRow",
    "ExperimentConfig",
    "ExperimentRecord",
    "IndirectConfig",
    "IndirectResult",
    "LOG_TRANSFORM",
    "LinearGaussianSequential",
    "LossMatrix",
    "LossMethod",
    "LossTable",
    "LvSequential",
    "McmcConfig",
    "McmcResult",
    "NoisyObservation",
    "NormalVarianceSequential",
    "PRESETS",
    "ParticleSystem",
    "PosteriorSummary",
    "RegressionCorrection",
    "SequentialConfig",
    "SequentialResult",
    "StepRecord",
    "Transform",
    "WeightedSample",
    "abc_importance",
    "abc_mcmc",
    "abc_rejection",
    "beaumont_correct",
    "bias_experiment",
    "binomial_band",
    "build_summary",
    "calibration_study",
    "child_stream",
    "effective_sample_size",
    "estimator_dominance_check",
    "gaussian_kernel",
    "get_sequential",
    "indirect_inference",
    "kernel_loss_moment",
    "list_presets",
    "liu_west_rejuvenate",
    "load_config",
    "load_record",
    "loss_expansion_check",
    "loss_table",
    "make_noisy",
    "posterior_summaries",
    "preset_config",
    "quadratic_loss",
    "resolve_threads",
    "rng_fingerprint",
    "run_config",
    "run_experiment",
    "save_config",
    "seed_stream",
    "semiauto_method",
    "seq_abc",
    "standard_abc_method",
    "synthetic_likelihood_mcmc",
    "synthetic_log_density",
    "systematic_resample",
    "tune_bandwidth",
    "uniform_kernel",
    "weighted_quantile",
    "write_csv",
]

__version__ = "0.1.0"
