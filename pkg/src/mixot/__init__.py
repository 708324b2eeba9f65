"""Optimal transport between Gaussian mixture models, mixture-Wasserstein
barycenters, and multi-source domain adaptation built on both."""

__version__ = "0.1.0"

from .core import (
    DEFAULT_S_MIN,
    DiagGaussian,
    DivergenceError,
    EmConfig,
    GaussianMixture,
    LabeledDataset,
    UnlabeledMixtureError,
    em_fit,
    fit_labeled,
    gmm_from_dict,
    gmm_to_dict,
    load_gmm,
    log_density,
    map_classify,
    responsibilities,
    sample,
    save_gmm,
)
from .transport import (
    TransportPlan,
    gauss_w2_sq,
    gmmot,
    mixture_cost,
    mw2_sq,
    pairwise_w2_sq,
    plan_to_dict,
    smw2_sq,
    solve_transport,
    transport_params,
)
from .barycenter import (
    BarycenterConfig,
    BarycenterTrace,
    barycenter_loss,
    mw_barycenter,
    smw_barycenter,
)
from .msda import (
    AdaptationResult,
    Adam,
    DadilConfig,
    DadilGradients,
    Dictionary,
    dadil_fit,
    dadil_loss_grad,
    dictionary_from_dict,
    dictionary_to_dict,
    gmm_wbt,
    load_dictionary,
    project_nonneg,
    project_simplex,
    reconstruct,
    save_dictionary,
)
from .datasets import (
    RunConfig,
    ToyConfig,
    load_csv,
    load_run_config,
    make_toy,
    save_csv,
    save_run_config,
)

__all__ = [
    "AdaptationResult",
    "Adam",
    "BarycenterConfig",
    "BarycenterTrace",
    "DEFAULT_S_MIN",
    "DadilConfig",
    "DadilGradients",
    "DiagGaussian",
    "Dictionary",
    "DivergenceError",
    "EmConfig",
    "GaussianMixture",
    "LabeledDataset",
    "RunConfig",
    "ToyConfig",
    "TransportPlan",
    "UnlabeledMixtureError",
    "barycenter_loss",
    "dadil_fit",
    "dadil_loss_grad",
    "dictionary_from_dict",
    "dictionary_to_dict",
    "em_fit",
    "fit_labeled",
    "gauss_w2_sq",
    "gmm_from_dict",
    "gmm_to_dict",
    "gmm_wbt",
    "gmmot",
    "load_csv",
    "load_dictionary",
    "load_gmm",
    "load_run_config",
    "log_density",
    "make_toy",
    "map_classify",
    "mixture_cost",
    "mw2_sq",
    "mw_barycenter",
    "pairwise_w2_sq",
    "plan_to_dict",
    "project_nonneg",
    "project_simplex",
    "reconstruct",
    "responsibilities",
    "sample",
    "save_csv",
    "save_dictionary",
    "save_gmm",
    "save_run_config",
    "smw2_sq",
    "smw_barycenter",
    "solve_transport",
    "transport_params",
]
