"""Targeting scorers built on the boosting engine.

Every ``fit_*`` function returns a :class:`Scorer`; higher scores mean a
row should be treated earlier. Classification sub-problems (the
retrospective ``Pr(T=1 | x, C=1)`` and RDT) are least-squares fits on 0/1
labels whose predictions are clipped to ``[PROB_CLIP, 1 - PROB_CLIP]``.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .boosting import GbmConfig, GbmModel, fit_gbm, predict
from .data_model import DataError, UpliftDataset, converted_subset
from .transforms import require_valid, crvtw_transform, ipc_transform, rdt_targets

__all__ = [
    "PROB_CLIP",
    "METHODS",
    "Scorer",
    "fit_ipc",
    "fit_retrospective",
    "fit_crvtw",
    "fit_rdt",
    "fit_meta",
    "fit_method",
    "score",
]

PROB_CLIP = 0.001
_DENOM_FLOOR = 1e-9


class Scorer(ABC):
    method: str
    n_features: int

    @abstractmethod
    def _score(self, X: np.ndarray) -> np.ndarray: ...

    def score(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"{self.method}: expected {self.n_features} feature "
                             f"columns, got shape {X.shape}")
        return self._score(X)


def score(scorer: Scorer, X) -> np.ndarray:
    return scorer.score(X)


def _clip(p):
    return np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)


@dataclass(frozen=True, eq=False)
class SingleModelScorer(Scorer):
    method: str
    model: GbmModel

    @property
    def n_features(self):
        return self.model.n_features

    def _score(self, X):
        return predict(self.model, X)


@dataclass(frozen=True, eq=False)
class RetrospectiveScorer(Scorer):
    """``S(x) = Pr(T=1 | x, C=1)``; ``full`` mode divides the conversion
    effect ``2S - 1`` by the loss ``(1 - S) * mean_profit_control -
    S * mean_profit_treated``."""

    method: str
    model: GbmModel
    mode: str
    mean_profit_control: float
    mean_profit_treated: float

    @property
    def n_features(self):
        return self.model.n_features

    def propensity_given_conversion(self, X) -> np.ndarray:
        return _clip(predict(self.model, X))

    def _score(self, X):
        s = self.propensity_given_conversion(X)
        if self.mode == "simplified":
            return s
        denom = (1 - s) * self.mean_profit_control - s * self.mean_profit_treated
        small = np.abs(denom) < _DENOM_FLOOR
        denom = np.where(small, np.where(denom < 0, -_DENOM_FLOOR, _DENOM_FLOOR), denom)
        return (2 * s - 1) / denom


@dataclass(frozen=True, eq=False)
class RdtScorer(Scorer):
    method: str
    model: GbmModel

    @property
    def n_features(self):
        return self.model.n_features

    def _score(self, X):
        return 2 * _clip(predict(self.model, X)) - 1


@dataclass(frozen=True, eq=False)
class SLearnerScorer(Scorer):
    method: str
    model: GbmModel

    @property
    def n_features(self):
        return self.model.n_features - 1

    def _score(self, X):
        n = X.shape[0]
        treated = np.column_stack([X, np.ones(n)])
        control = np.column_stack([X, np.zeros(n)])
        return predict(self.model, treated) - predict(self.model, control)


@dataclass(frozen=True, eq=False)
class TLearnerScorer(Scorer):
    method: str
    treated: GbmModel
    control: GbmModel

    @property
    def n_features(self):
        return self.treated.n_features

    def _score(self, X):
        return predict(self.treated, X) - predict(self.control, X)


@dataclass(frozen=True, eq=False)
class XLearnerScorer(Scorer):
    """Blend of the two imputed-effect models, weighted by the propensity.

    ``propensity`` is a constant when assignment was uniform, otherwise a
    regression of the training propensities on the features.
    """

    method: str
    effect_treated: GbmModel
    effect_control: GbmModel
    propensity: float | GbmModel

    @property
    def n_features(self):
        return self.effect_treated.n_features

    def _propensity(self, X):
        if isinstance(self.propensity, GbmModel):
            return _clip(predict(self.propensity, X))
        return np.full(X.shape[0], self.propensity)

    def _score(self, X):
        e = self._propensity(X)
        return e * predict(self.effect_control, X) + (1 - e) * predict(self.effect_treated, X)


# -- fitting -----------------------------------------------------------------

def fit_ipc(dataset: UpliftDataset, config: GbmConfig = GbmConfig()) -> Scorer:
    """One regression on the IPC-transformed converted rows.

    Scores estimate incremental profit per conversion in currency units.
    Only converted rows are read, or validated.
    """
    ts = ipc_transform(converted_subset(dataset))
    if len(ts) < 10:
        raise DataError(f"ipc needs at least 10 converted rows, got {len(ts)}")
    return SingleModelScorer("ipc", fit_gbm(ts.features, ts.targets, config))


def fit_retrospective(dataset: UpliftDataset, config: GbmConfig = GbmConfig(),
                      mode: str = "simplified") -> Scorer:
    if mode not in ("simplified", "full"):
        raise ValueError(f"unknown retrospective mode {mode!r}")
    conv = converted_subset(dataset)
    if len(conv) < 10:
        raise DataError(f"retrospective needs at least 10 converted rows, got {len(conv)}")
    require_valid(conv)
    treated = conv.treatment == 1
    if treated.all() or not treated.any():
        raise DataError("retrospective needs conversions in both treatment arms")
    model = fit_gbm(conv.features, conv.treatment.astype(float), config)
    name = "retro" if mode == "simplified" else "retro-full"
    return RetrospectiveScorer(name, model, mode,
                               float(conv.profit[~treated].mean()),
                               float(conv.profit[treated].mean()))


def fit_crvtw(dataset: UpliftDataset, config: GbmConfig = GbmConfig()) -> Scorer:
    if len(dataset) < 10:
        raise DataError(f"crvtw needs at least 10 rows, got {len(dataset)}")
    ts = crvtw_transform(dataset)
    return SingleModelScorer("crvtw", fit_gbm(ts.features, ts.targets, config))


def fit_rdt(dataset: UpliftDataset, config: GbmConfig = GbmConfig()) -> Scorer:
    if len(dataset) < 10:
        raise DataError(f"rdt needs at least 10 rows, got {len(dataset)}")
    ts = rdt_targets(dataset)
    return RdtScorer("rdt", fit_gbm(ts.features, ts.targets, config))


def fit_meta(dataset: UpliftDataset, config: GbmConfig = GbmConfig(),
             kind: str = "T") -> Scorer:
    """S-, T- or X-learner on profit over all rows (zeros included)."""
    kind = kind.upper()
    if kind not in ("S", "T", "X"):
        raise ValueError(f"unknown meta-learner kind {kind!r}")
    require_valid(dataset)
    X, t, y = dataset.features, dataset.treatment == 1, dataset.profit
    for arm, mask in (("treated", t), ("control", ~t)):
        if mask.sum() < 10:
            raise DataError(f"{kind}-learner needs at least 10 {arm} rows, "
                            f"got {int(mask.sum())}")

    if kind == "S":
        Xt = np.column_stack([X, t.astype(float)])
        return SLearnerScorer("slearner", fit_gbm(Xt, y, config))

    f1 = fit_gbm(X[t], y[t], config)
    f0 = fit_gbm(X[~t], y[~t], config)
    if kind == "T":
        return TLearnerScorer("tlearner", f1, f0)

    d1 = y[t] - predict(f0, X[t])
    d0 = predict(f1, X[~t]) - y[~t]
    g1 = fit_gbm(X[t], d1, config)
    g0 = fit_gbm(X[~t], d0, config)
    e = dataset.propensity
    propensity = float(e[0]) if np.all(e == e[0]) else fit_gbm(X, e, config)
    return XLearnerScorer("xlearner", g1, g0, propensity)


_FITTERS = {
    "ipc": fit_ipc,
    "retro": lambda d, c: fit_retrospective(d, c, "simplified"),
    "retro-full": lambda d, c: fit_retrospective(d, c, "full"),
    "crvtw": fit_crvtw,
    "rdt": fit_rdt,
    "slearner": lambda d, c: fit_meta(d, c, "S"),
    "tlearner": lambda d, c: fit_meta(d, c, "T"),
    "xlearner": lambda d, c: fit_meta(d, c, "X"),
}
METHODS = tuple(_FITTERS)


def fit_method(name: str, dataset: UpliftDataset,
               config: GbmConfig = GbmConfig()) -> Scorer:
    """Fit a scorer by its CLI name (see :data:`METHODS`)."""
    try:
        fitter = _FITTERS[name]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; choose from "
                         f"{', '.join(METHODS)}") from None
    return fitter(dataset, config)
