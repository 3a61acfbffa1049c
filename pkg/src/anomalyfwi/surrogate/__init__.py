"""Surrogate models: Latin hypercube designs, Gaussian processes, PCA and
misfit prediction."""
from .gp import GpModel, gp_fit, gp_predict, gp_predict_many, gp_train, kernel_matrix
from .lhs import bin_occupancy, lhs_maximin, lhs_random, min_distance
from .multi import (MultiOutputModel, SingleOutputModel, load_model, mo_predict_array,
                    mo_predict_signals, mo_train, model_from_dict, model_to_dict,
                    observation_fingerprint, read_doe_csv, save_model, so_train,
                    surrogate_misfit, surrogate_misfit_batch)
from .pca import PcaTransform, pca_fit

__all__ = [
    "GpModel", "gp_fit", "gp_predict", "gp_predict_many", "gp_train", "kernel_matrix",
    "bin_occupancy", "lhs_maximin", "lhs_random", "min_distance",
    "MultiOutputModel", "SingleOutputModel", "load_model", "mo_predict_array",
    "mo_predict_signals", "mo_train", "model_from_dict", "model_to_dict",
    "observation_fingerprint", "read_doe_csv", "save_model", "so_train",
    "surrogate_misfit", "surrogate_misfit_batch", "PcaTransform", "pca_fit",
]
