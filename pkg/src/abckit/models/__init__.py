"""Simulators, priors, and summary statistics for the bundled models."""

from __future__ import annotations

from .analytic import DISCRETE_TOY_TABLE, DiscreteToyModel, NormalMeanModel, NormalVarianceModel
from .base import (
    BoxUniformPrior,
    Dataset,
    DiscreteUniformPrior,
    IndependentNormalPrior,
    Model,
    Prior,
    SummaryMap,
    TruncatedPrior,
)
from .gk import (
    GkModel,
    gk_inverse_cdf,
    gk_order_stat_indices,
    gk_simulate,
    gk_simulate_order_stats,
)
from .lotka_volterra import LvModel, lv_first_event, lv_gillespie, lv_propagate_particles
from .mg1 import Mg1Model, Mg1Prior, mg1_auxiliaries, mg1_simulate, mg1_theta2_mle
from .ricker import RickerModel, RickerPrior, ricker_simulate
from .summaries import (
    autocovariances,
    default_summary,
    full_order_stats,
    identity_stats,
    mg1_aux_stats,
    mg1_quantiles,
    order_stat_subset,
    ricker_stats_basic,
    ricker_stats_extended,
    ricker_stats_full,
    sample_mean_stat,
    second_moment_stat,
    tb_pair,
)
from .tb import TB_OBSERVED_CLUSTERS, ExtinctionError, TbModel, tb_simulate, tb_summaries

MODEL_REGISTRY = {
    "normal_mean": NormalMeanModel,
    "normal_variance": NormalVarianceModel,
    "discrete_toy": DiscreteToyModel,
    "gk": GkModel,
    "lv": LvModel,
    "ricker": RickerModel,
    "mg1": Mg1Model,
    "tb": TbModel,
}


def get_model(name: str, **kwargs) -> Model:
    """Instantiate a registered model by name."""
    try:
        factory = MODEL_REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(MODEL_REGISTRY))
        raise KeyError(f"unknown model {name!r}; available: {known}") from None
    return factory(**kwargs)


__all__ = [
    "BoxUniformPrior",
    "Dataset",
    "DISCRETE_TOY_TABLE",
    "DiscreteToyModel",
    "DiscreteUniformPrior",
    "ExtinctionError",
    "GkModel",
    "IndependentNormalPrior",
    "LvModel",
    "Mg1Model",
    "Mg1Prior",
    "Model",
    "MODEL_REGISTRY",
    "NormalMeanModel",
    "NormalVarianceModel",
    "Prior",
    "RickerModel",
    "RickerPrior",
    "SummaryMap",
    "TB_OBSERVED_CLUSTERS",
    "TbModel",
    "TruncatedPrior",
    "autocovariances",
    "default_summary",
    "full_order_stats",
    "get_model",
    "gk_inverse_cdf",
    "gk_order_stat_indices",
    "gk_simulate",
    "gk_simulate_order_stats",
    "identity_stats",
    "lv_first_event",
    "lv_gillespie",
    "lv_propagate_particles",
    "mg1_auxiliaries",
    "mg1_aux_stats",
    "mg1_quantiles",
    "mg1_simulate",
    "mg1_theta2_mle",
    "order_stat_subset",
    "ricker_simulate",
    "ricker_stats_basic",
    "ricker_stats_extended",
    "ricker_stats_full",
    "sample_mean_stat",
    "second_moment_stat",
    "tb_pair",
    "tb_simulate",
    "tb_summaries",
]
