"""Profit Qini curves, Qini coefficients and the cross-validated benchmark."""

from __future__ import annotations

import hashlib
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .boosting import GbmConfig, fit_gbm
from .data_model import UpliftDataset, make_folds, make_holdout
from .estimators import METHODS, fit_method
from .synthetic import GroundTruth

__all__ = [
    "QiniCurve",
    "BenchReport",
    "qini_curve",
    "qini_coefficient",
    "run_benchmark",
    "THREADS_ENV",
]

log = logging.getLogger(__name__)

THREADS_ENV = "IPC_UPLIFT_THREADS"
_MAX_POINTS = 1000


@dataclass(frozen=True, eq=False)
class QiniCurve:
    """Cumulative adjusted incremental profit against the fraction targeted.

    ``fraction``/``value`` are the exported (possibly thinned) points;
    ``full_fraction``/``full_value`` keep one point per row and are what the
    coefficient integrates.
    """

    fraction: np.ndarray
    value: np.ndarray
    n_test: int
    full_fraction: np.ndarray = field(repr=False)
    full_value: np.ndarray = field(repr=False)

    @property
    def endpoint(self) -> float:
        return float(self.full_value[-1])

    @property
    def normalized(self) -> np.ndarray | None:
        """``value / |V(1)|``, or ``None`` when ``V(1) == 0``."""
        end = abs(self.endpoint)
        return self.value / end if end != 0 else None


def qini_curve(scores, treatment, profit) -> QiniCurve:
    """Rank rows by descending score (stable) and accumulate

        V(k) = sum_treated(profit) - N_T(k) / N_C(k) * sum_control(profit)

    over each prefix, the control term being 0 while ``N_C(k) == 0``.
    """
    scores = np.asarray(scores, dtype=float)
    treatment = np.asarray(treatment)
    profit = np.asarray(profit, dtype=float)
    n = scores.shape[0]
    if treatment.shape != (n,) or profit.shape != (n,):
        raise ValueError("scores, treatment and profit must have equal lengths")
    if n < 2:
        raise ValueError("need at least two rows")
    t = treatment == 1
    if t.all() or not t.any():
        raise ValueError("both treatment arms must be present")

    order = np.argsort(-scores, kind="stable")
    t, y = t[order], profit[order]
    n_t = np.cumsum(t)
    n_c = np.cumsum(~t)
    s_t = np.cumsum(np.where(t, y, 0.0))
    s_c = np.cumsum(np.where(t, 0.0, y))
    with np.errstate(divide="ignore", invalid="ignore"):
        control = np.where(n_c > 0, n_t / np.maximum(n_c, 1) * s_c, 0.0)
    v = np.concatenate([[0.0], s_t - control])
    f = np.arange(n + 1) / n

    if n > 10_000:
        step = math.ceil(n / _MAX_POINTS)
        keep = np.arange(0, n + 1, step)
        if keep[-1] != n:
            keep = np.append(keep, n)
    else:
        keep = np.arange(n + 1)
    return QiniCurve(f[keep], v[keep], n, f, v)


def qini_coefficient(curve: QiniCurve) -> float:
    """Trapezoid area between the curve and the random-targeting chord,
    divided by ``|V(1)|``; returned unnormalized when ``V(1) == 0``."""
    f, v = curve.full_fraction, curve.full_value
    area = float(np.sum(np.diff(f) * (v[1:] + v[:-1]) / 2))
    excess = area - curve.endpoint / 2
    end = abs(curve.endpoint)
    return excess / end if end != 0 else excess


def coefficient_is_normalized(curve: QiniCurve) -> bool:
    return curve.endpoint != 0


# -- benchmark ---------------------------------------------------------------

@dataclass
class MethodResult:
    qini: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    errors: list = field(default_factory=list)


@dataclass
class BenchReport:
    """Per-method, per-fold Qini coefficients and fit+score seconds.

    A failed fold records ``None`` for its coefficient and runtime and the
    error message in ``errors``. ``null_draws[fold]`` holds the random
    scorer's coefficients for each of the ``n_random`` seeds.
    """

    methods: dict
    folds: int
    fingerprint: str
    config: dict
    null_draws: list = field(default_factory=list)
    curves: dict = field(default_factory=dict, repr=False)
    threads: int = 1

    def mean_qini(self, method: str) -> float:
        vals = [q for q in self.methods[method].qini if q is not None]
        return float(np.mean(vals)) if vals else float("nan")

    def null_means(self) -> np.ndarray:
        """Fold-averaged random-scorer coefficient, one value per seed."""
        return np.mean(np.asarray(self.null_draws, dtype=float), axis=0)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "fingerprint": self.fingerprint,
            "folds": self.folds,
            "threads": self.threads,
            "methods": {name: asdict(r) for name, r in self.methods.items()},
            "null_draws": [list(d) for d in self.null_draws],
        }

    def summary_rows(self) -> list[tuple]:
        """``(method, mean qini, std qini, mean seconds, runtime / ipc)``."""
        ref = None
        if "ipc" in self.methods:
            secs = [s for s in self.methods["ipc"].seconds if s is not None]
            ref = float(np.mean(secs)) if secs else None
        rows = []
        for name, r in self.methods.items():
            q = np.array([x for x in r.qini if x is not None], dtype=float)
            s = np.array([x for x in r.seconds if x is not None], dtype=float)
            mean_s = float(s.mean()) if s.size else float("nan")
            rows.append((name,
                         float(q.mean()) if q.size else float("nan"),
                         float(q.std(ddof=1)) if q.size > 1 else float("nan"),
                         mean_s,
                         mean_s / ref if ref else float("nan")))
        return rows


def dataset_fingerprint(dataset: UpliftDataset) -> str:
    h = hashlib.sha256()
    for name in ("features", "treatment", "conversion", "profit", "propensity"):
        h.update(np.ascontiguousarray(getattr(dataset, name)).tobytes())
    return h.hexdigest()[:16]


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def warm_up() -> None:
    """Load the compiled tree kernels so no timed fold pays for it."""
    rng = np.random.default_rng(0)
    X = rng.random((40, 2))
    fit_gbm(X, X[:, 0], GbmConfig(max_iterations=2, min_samples_leaf=2))


def _run_fold(fold, train_idx, test_idx, dataset, methods, config, truth,
              seed, n_random):
    train, test = dataset.take(train_idx), dataset.take(test_idx)
    out = {}
    for name in methods:
        start = time.perf_counter()
        try:
            scorer = fit_method(name, train, config)
            s = scorer.score(test.features)
            elapsed = time.perf_counter() - start
            curve = qini_curve(s, test.treatment, test.profit)
            out[name] = (qini_coefficient(curve), elapsed, None, curve)
        except Exception as exc:  # recorded per fold, not fatal
            log.warning("fold %d: %s failed: %s", fold, name, exc)
            out[name] = (None, None, f"{type(exc).__name__}: {exc}", None)

    if truth is not None:
        start = time.perf_counter()
        s = truth.ipc[test_idx]
        elapsed = time.perf_counter() - start
        curve = qini_curve(s, test.treatment, test.profit)
        out["oracle"] = (qini_coefficient(curve), elapsed, None, curve)

    draws = []
    for r in range(n_random):
        rng = np.random.default_rng([seed, fold, r])
        start = time.perf_counter()
        s = rng.random(len(test))
        elapsed = time.perf_counter() - start
        curve = qini_curve(s, test.treatment, test.profit)
        draws.append(qini_coefficient(curve))
        if r == 0:
            out["random"] = (draws[0], elapsed, None, curve)
    return out, draws


def run_benchmark(dataset: UpliftDataset, methods, k: int = 5, seed: int = 0,
                  config: GbmConfig = GbmConfig(), *, holdout: float | None = None,
                  truth: GroundTruth | None = None, n_random: int = 1,
                  threads: int | None = None) -> BenchReport:
    """Cross-validated profit-Qini comparison of ``methods``.

    With ``holdout`` set, a single stratified train/test split with that
    test fraction replaces the k folds. A ``random`` scorer is always
    included; ``oracle`` (true IPC) is added when ``truth`` is given.
    Folds run on ``threads`` worker threads (default: ``$IPC_UPLIFT_THREADS``
    or 1); coefficients do not depend on the thread count.
    """
    methods = list(methods)
    if not methods:
        raise ValueError("methods must be non-empty")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s): {', '.join(unknown)}")
    if n_random < 1:
        raise ValueError("n_random must be >= 1")
    if truth is not None and len(truth) != len(dataset):
        raise ValueError("ground truth and dataset lengths differ")

    if holdout is not None:
        splits = [make_holdout(dataset, holdout, seed)]
    else:
        splits = list(make_folds(dataset, k, seed).splits())
    threads = thread_count() if threads is None else max(1, threads)
    warm_up()

    def job(i):
        tr, te = splits[i]
        return _run_fold(i, tr, te, dataset, methods, config, truth, seed, n_random)

    if threads == 1:
        results = [job(i) for i in range(len(splits))]
    else:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(job, range(len(splits))))

    names = methods + (["oracle"] if truth is not None else []) + ["random"]
    per_method = {m: MethodResult() for m in names}
    curves = {m: [] for m in names}
    for out, _ in results:
        for m in names:
            q, sec, err, curve = out[m]
            per_method[m].qini.append(q)
            per_method[m].seconds.append(sec)
            per_method[m].errors.append(err)
            curves[m].append(curve)

    return BenchReport(
        methods=per_method,
        folds=len(splits),
        fingerprint=dataset_fingerprint(dataset),
        config={"gbm": asdict(config), "methods": methods, "k": k,
                "holdout": holdout, "seed": seed, "n_random": n_random},
        null_draws=[d for _, d in results],
        curves=curves,
        threads=threads,
    )
