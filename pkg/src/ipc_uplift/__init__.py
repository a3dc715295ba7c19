"""Incremental profit per conversion (IPC) uplift modelling.

Estimate the incremental profit a promotion earns per conversion from
converted rows alone, compare against standard profit-uplift baselines on a
synthetic discount-coupon campaign, and score rankings with profit Qini
curves.
"""

from .boosting import GbmConfig, GbmModel, fit_gbm, fit_tree, predict
from .data_model import (DataError, FoldAssignment, UpliftDataset, UpliftRow,
                         converted_subset, load_csv, make_folds, make_holdout,
                         validate, write_csv)
from .estimators import (METHODS, Scorer, fit_crvtw, fit_ipc, fit_meta,
                         fit_method, fit_rdt, fit_retrospective, score)
from .evaluation import BenchReport, QiniCurve, qini_coefficient, qini_curve, run_benchmark
from .synthetic import (CampaignConfig, GroundTruth, generate_campaign,
                        oracle_scores, solve_intercept)
from .transforms import TransformedSet, crvtw_transform, ipc_transform, rdt_targets

__version__ = "0.1.0"
