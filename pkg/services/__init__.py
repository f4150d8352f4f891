"""Identification services: FRF data, additive and modal models, both estimation stages, synthesis"""

from services.frf_core import FrequencyGrid, FrfDataset, WeightingScheme, build_weighting, cmif, pick_modes
from services.additive_model import AdditiveParameters, AdditiveStructure, eval_additive
from services.riv import RivOptions, CovarianceEstimate, init_numerators, riv_iterate, covariance
from services.modal_model import DampingModel, ModalParameters, eval_modal, map_f
from services.ipem import IpemOptions, svd_init, gauss_newton
from services.realization import StateSpace, realize, eval_ss

__all__ = [
    # FRF data
    "FrequencyGrid",
    "FrfDataset",
    "WeightingScheme",
    "build_weighting",
    "cmif",
    "pick_modes",
    # Stage 1
    "AdditiveParameters",
    "AdditiveStructure",
    "eval_additive",
    "RivOptions",
    "CovarianceEstimate",
    "init_numerators",
    "riv_iterate",
    "covariance",
    # Stage 2
    "DampingModel",
    "ModalParameters",
    "eval_modal",
    "map_f",
    "IpemOptions",
    "svd_init",
    "gauss_newton",
    # Realization
    "StateSpace",
    "realize",
    "eval_ss",
]
