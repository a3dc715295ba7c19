"""Synthetic percentage-discount coupon campaign.

Features are independent standard normals laid out as
``[uplift | informative | irrelevant]``. Conversion follows

    Pr(C=1 | x, t) = logistic(b0 + w * (sum(x_uplift) + sum(x_informative))
                              + t * uplift_strength * sum(x_uplift))

with ``b0`` calibrated so the control arm converts at the target rate.
Converted rows earn revenue ``exp(sum of revenue features + eps)`` and
treated conversions keep ``1 - discount`` of it as profit.
"""

from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data_model import UpliftDataset

__all__ = [
    "CampaignConfig",
    "GroundTruth",
    "generate_campaign",
    "solve_intercept",
    "oracle_scores",
    "control_rate",
    "write_truth_csv",
    "load_truth_csv",
]

FEATURE_WEIGHT = 1.0
_QUAD_NODES = 96


@dataclass(frozen=True)
class CampaignConfig:
    n: int = 200_000
    propensity: float = 0.5
    control_conversion_rate: float = 0.03
    n_uplift_features: int = 3
    n_informative_features: int = 5
    n_irrelevant_features: int = 5
    # None -> first uplift feature and first informative feature
    revenue_feature_indices: tuple | None = None
    noise_std_ratio: float = 0.9
    discount: float = 0.10
    uplift_strength: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if not 0 < self.propensity < 1:
            raise ValueError("propensity must be in (0, 1)")
        if not 0 < self.control_conversion_rate < 1:
            raise ValueError("control_conversion_rate must be in (0, 1)")
        for name in ("n_uplift_features", "n_informative_features",
                     "n_irrelevant_features"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.discount < 1:
            raise ValueError("discount must be in [0, 1)")
        if self.uplift_strength < 0:
            raise ValueError("uplift_strength must be >= 0")
        if self.noise_std_ratio < 0:
            raise ValueError("noise_std_ratio must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.revenue_feature_indices is not None:
            idx = tuple(int(i) for i in self.revenue_feature_indices)
            object.__setattr__(self, "revenue_feature_indices", idx)
            limit = self.n_uplift_features + self.n_informative_features
            if any(not 0 <= i < limit for i in idx):
                raise ValueError("revenue features must be uplift or informative "
                                 f"features (indices 0..{limit - 1})")

    @property
    def n_features(self) -> int:
        return (self.n_uplift_features + self.n_informative_features
                + self.n_irrelevant_features)

    @property
    def uplift_slice(self) -> slice:
        return slice(0, self.n_uplift_features)

    @property
    def informative_slice(self) -> slice:
        u = self.n_uplift_features
        return slice(u, u + self.n_informative_features)

    @property
    def revenue_features(self) -> tuple:
        if self.revenue_feature_indices is not None:
            return self.revenue_feature_indices
        idx = []
        if self.n_informative_features:
            idx.append(self.n_uplift_features)
        if self.n_uplift_features:
            idx.insert(0, 0)
        return tuple(idx)

    def replace(self, **changes) -> "CampaignConfig":
        return CampaignConfig(**{**asdict(self), **changes})

    def resolved(self) -> dict:
        """Config as a plain dict with defaults filled in."""
        d = asdict(self)
        d["revenue_feature_indices"] = list(self.revenue_features)
        return d


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-row quantities from the generating process."""

    conversion_control: np.ndarray
    conversion_treated: np.ndarray
    expected_revenue: np.ndarray
    propensity: np.ndarray
    discount: float
    conversion: np.ndarray = field(init=False)
    cate_profit: np.ndarray = field(init=False)
    ipc: np.ndarray = field(init=False)

    def __post_init__(self):
        p0, p1, e = self.conversion_control, self.conversion_treated, self.propensity
        conv = e * p1 + (1 - e) * p0
        cate = self.expected_revenue * (p1 * (1 - self.discount) - p0)
        object.__setattr__(self, "conversion", conv)
        object.__setattr__(self, "cate_profit", cate)
        object.__setattr__(self, "ipc", cate / conv)

    @property
    def cate_conversion(self) -> np.ndarray:
        return self.conversion_treated - self.conversion_control

    def take(self, index) -> "GroundTruth":
        return GroundTruth(self.conversion_control[index],
                           self.conversion_treated[index],
                           self.expected_revenue[index],
                           self.propensity[index], self.discount)

    def __len__(self) -> int:
        return self.conversion_control.shape[0]


def control_rate(intercept: float, config: CampaignConfig) -> float:
    """Marginal control conversion rate for ``intercept``.

    The control linear predictor is a sum of unit-weighted standard normals,
    i.e. Normal(intercept, w^2 * k); the expectation of its logistic is taken
    by Gauss-Hermite quadrature.
    """
    k = config.n_uplift_features + config.n_informative_features
    sd = FEATURE_WEIGHT * np.sqrt(k)
    nodes, weights = np.polynomial.hermite_e.hermegauss(_QUAD_NODES)
    return float(np.dot(weights, expit(intercept + sd * nodes)) / weights.sum())


def solve_intercept(config: CampaignConfig, tol: float = 1e-12) -> float:
    """Bisection for the intercept giving the target control conversion rate."""
    target = config.control_conversion_rate
    lo, hi = -30.0, 30.0
    f_lo, f_hi = control_rate(lo, config) - target, control_rate(hi, config) - target
    if f_lo > 0 or f_hi < 0:
        raise RuntimeError(f"no intercept in [-30, 30] reaches rate {target}; "
                           f"achievable range [{f_lo + target:.3g}, {f_hi + target:.3g}]")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if control_rate(mid, config) < target:
            lo = mid
        else:
            hi = mid
    b0 = 0.5 * (lo + hi)
    achieved = control_rate(b0, config)
    if abs(achieved - target) > 1e-4:
        raise RuntimeError(f"intercept search reached rate {achieved}, target {target}")
    return b0


def _linear_parts(X: np.ndarray, config: CampaignConfig):
    uplift = X[:, config.uplift_slice].sum(axis=1)
    base = FEATURE_WEIGHT * (uplift + X[:, config.informative_slice].sum(axis=1))
    return base, config.uplift_strength * uplift


def generate_campaign(config: CampaignConfig = CampaignConfig(),
                      seed: int | None = None) -> tuple[UpliftDataset, GroundTruth]:
    """Draw one campaign; ``seed`` overrides ``config.seed`` when given."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    n, p = config.n, config.n_features
    b0 = solve_intercept(config)

    X = rng.standard_normal((n, p))
    t = (rng.random(n) < config.propensity).astype(np.int64)
    base, effect = _linear_parts(X, config)
    p0 = expit(b0 + base)
    p1 = expit(b0 + base + effect)
    c = (rng.random(n) < np.where(t == 1, p1, p0)).astype(np.int64)

    sigma_eps = config.noise_std_ratio * 1.0
    eps = rng.normal(0.0, sigma_eps, n) if sigma_eps > 0 else np.zeros(n)
    log_rev = X[:, list(config.revenue_features)].sum(axis=1)
    revenue = np.where(c == 1, np.exp(log_rev + eps), 0.0)
    profit = np.where(t == 1, revenue * (1 - config.discount), revenue)

    propensity = np.full(n, config.propensity)
    data = UpliftDataset(X, t, c, profit, propensity)
    truth = GroundTruth(p0, p1, np.exp(log_rev + sigma_eps ** 2 / 2),
                        propensity, config.discount)
    return data, truth


def oracle_scores(truth: GroundTruth, kind: str = "ipc") -> np.ndarray:
    if kind == "ipc":
        return truth.ipc.copy()
    if kind == "profit_cate":
        return truth.cate_profit.copy()
    raise ValueError(f"unknown oracle kind {kind!r}")


TRUTH_COLUMNS = ("conversion_control", "conversion_treated", "conversion",
                 "expected_revenue", "cate_profit", "ipc")


def write_truth_csv(truth: GroundTruth, path) -> None:
    """One row per dataset row, same order as the dataset CSV."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    cols = [getattr(truth, c).tolist() for c in TRUTH_COLUMNS]
    try:
        with tmp.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRUTH_COLUMNS)
            w.writerows([repr(v) for v in row] for row in zip(*cols))
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def load_truth_csv(path, propensity, discount: float) -> GroundTruth:
    """Rebuild a :class:`GroundTruth` written by :func:`write_truth_csv`."""
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.shape[1] != len(TRUTH_COLUMNS):
        raise ValueError(f"{path}: expected {len(TRUTH_COLUMNS)} columns")
    col = dict(zip(TRUTH_COLUMNS, arr.T))
    propensity = np.broadcast_to(np.asarray(propensity, float), (arr.shape[0],))
    return GroundTruth(col["conversion_control"], col["conversion_treated"],
                       col["expected_revenue"], np.array(propensity), discount)
