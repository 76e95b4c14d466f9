"""Open-set recognition with Latent Cognizance and OpenMax over classifier logits."""

from .core import FOOLING, FOREIGN, InvalidInputError, LogitRecord, LogitSet, rank_descending, softmax
from .lc import CognizanceKind, cognizance, predict_lc, sweep_threshold
from .metrics import MetricCounts, auc_pr, cr_ic, facc_cacc, pr_curve, q1, tally
from .openmax import OpenMaxModel, calibrate, predict_openmax, score_openmax
from .weibull import WeibullParams, fit_weibull_tail, sample_weibull, weibull_cdf

__version__ = "0.1.0"
