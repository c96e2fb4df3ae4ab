"""Joint spike-slab analysis of two GWAS with pleiotropy, fitted by variational Bayes EM."""

__version__ = "0.1.0"

from .binary import fit_joint_binary, fit_single_binary
from .data import (
    BINARY,
    QUANT,
    DataError,
    FitConfig,
    FitResult,
    GroupProbs,
    GwasDataset,
    ModelParams,
    NumericalError,
    PleioVBError,
    VariationalState,
    align_pair,
    center,
    load_dataset,
)
from .estimator import FourGroupsVB, TwoGroupsVB
from .inference import fdr_select, lfdr, pleiotropy_lrt, predict_binary, predict_quant
from .quant import fit_joint_quant, fit_single_quant
from .simulate import SimConfig, simulate_pair

__all__ = [
    "BINARY",
    "QUANT",
    "DataError",
    "FitConfig",
    "FitResult",
    "FourGroupsVB",
    "GroupProbs",
    "GwasDataset",
    "ModelParams",
    "NumericalError",
    "PleioVBError",
    "SimConfig",
    "TwoGroupsVB",
    "VariationalState",
    "align_pair",
    "center",
    "fdr_select",
    "fit_joint_binary",
    "fit_joint_quant",
    "fit_single_binary",
    "fit_single_quant",
    "lfdr",
    "load_dataset",
    "pleiotropy_lrt",
    "predict_binary",
    "predict_quant",
    "simulate_pair",
]
