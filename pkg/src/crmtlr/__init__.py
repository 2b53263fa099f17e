"""Competing-risks multi-task logistic regression with a neural feature encoder."""
from .dataset import Cohort, DataError, FeatureEncoding, Schema, SubjectRecord, TimeGrid, bin_time, build_grid, ingest_csv
from .encoder import EncoderNet, FusedInput
from .kernels import BACKEND
from .metrics import UndefinedMetric, cause_specific_cindex, horizon_auroc, lifetime_risk
from .mtlr import (
    CifCurve,
    MtlrHead,
    PredictionGrid,
    censored_log_marginal,
    cell_score,
    cif,
    cif_at,
    joint_pmf,
    log_likelihood,
    log_partition,
    loss_and_gradient,
)
from .trainer import ModelBundle, TrainConfig, load, save, train

__version__ = "0.1.0"
