"""Uncertainty-aware multiple-instance learning for long multivariate time series."""

from .bayes_head import VariationalHead, elbo_loss, kl_closed_form, predict_mc
from .encoder import EncoderParams, encode, encode_backward
from .fusion import ModalityRecord, adaptive_lambda, fuse, fuse_dataset
from .ingest import SyntheticConfig, TaskSpec, generate_synthetic, parse_ais_csv, build_bags
from .metrics import auc_roc, average_precision, calibration_curve, f_score
from .mil import aggregate_bag, assign_attention, sample_batch, weighted_loss
from .pipeline import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train
from .series import Bag, MultivariateSeries, derive_kinematics, segment

__version__ = "0.1.0"
