"""Campaign dataset schema, CSV ingestion, validation and fold splitting.

A dataset holds one row per treatment unit: covariates, the binary
treatment and conversion flags, realized profit and the treatment
propensity ``Pr(T=1 | x)``. Arrays are frozen after construction.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

__all__ = [
    "DataError",
    "UpliftRow",
    "UpliftDataset",
    "FoldAssignment",
    "load_csv",
    "write_csv",
    "validate",
    "converted_subset",
    "make_folds",
    "make_holdout",
]


class DataError(ValueError):
    """Raised for unreadable or structurally invalid campaign data."""


class UpliftRow(NamedTuple):
    features: np.ndarray
    treatment: int
    conversion: int
    profit: float
    propensity: float


def _frozen(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class UpliftDataset:
    """Column-oriented campaign data.

    ``features`` has shape ``(n, feature_count)``; the other arrays have
    shape ``(n,)``. Row order is whatever the caller supplied and is kept
    by every operation in this package.
    """

    features: np.ndarray
    treatment: np.ndarray
    conversion: np.ndarray
    profit: np.ndarray
    propensity: np.ndarray

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=float)
        if features.ndim == 1 and features.size == 0:
            features = features.reshape(0, 0)
        if features.ndim != 2:
            raise DataError("features must be a 2-d array")
        n = features.shape[0]
        cols = {}
        for name, dtype in (("treatment", np.int64), ("conversion", np.int64),
                            ("profit", float), ("propensity", float)):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (n,):
                raise DataError(f"{name} has shape {arr.shape}, expected ({n},)")
            if dtype is np.int64 and arr.size and not np.all(arr == np.round(arr)):
                raise DataError(f"{name} must be integer valued")
            cols[name] = _frozen(arr, dtype)
        object.__setattr__(self, "features", _frozen(features, float))
        for name, arr in cols.items():
            object.__setattr__(self, name, arr)

    @classmethod
    def from_arrays(cls, features, treatment, conversion, profit,
                    propensity=0.5) -> "UpliftDataset":
        """Build a dataset; a scalar ``propensity`` is broadcast to every row."""
        treatment = np.asarray(treatment)
        propensity = np.broadcast_to(np.asarray(propensity, dtype=float),
                                     treatment.shape)
        return cls(features, treatment, conversion, profit, propensity)

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def row(self, i: int) -> UpliftRow:
        return UpliftRow(self.features[i], int(self.treatment[i]),
                         int(self.conversion[i]), float(self.profit[i]),
                         float(self.propensity[i]))

    @property
    def rows(self) -> Iterator[UpliftRow]:
        return (self.row(i) for i in range(len(self)))

    def take(self, index) -> "UpliftDataset":
        """Subset by slice, integer index or boolean mask (order as given)."""
        if isinstance(index, slice):
            index = np.arange(len(self))[index]
        index = np.asarray(index)
        if index.dtype == bool:
            index = np.flatnonzero(index)
        return UpliftDataset(self.features[index], self.treatment[index],
                             self.conversion[index], self.profit[index],
                             self.propensity[index])

    def replace(self, **columns) -> "UpliftDataset":
        current = dict(features=self.features, treatment=self.treatment,
                       conversion=self.conversion, profit=self.profit,
                       propensity=self.propensity)
        current.update(columns)
        return UpliftDataset(**current)

    def equals(self, other: "UpliftDataset") -> bool:
        return (self.features.shape == other.features.shape
                and all(np.array_equal(getattr(self, c), getattr(other, c))
                        for c in ("features", "treatment", "conversion",
                                  "profit", "propensity")))


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_index: np.ndarray
    k: int
    seed: int

    def test_mask(self, fold: int) -> np.ndarray:
        return self.fold_index == fold

    def splits(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield ``(train_idx, test_idx)`` for each fold in order."""
        for fold in range(self.k):
            mask = self.fold_index == fold
            yield np.flatnonzero(~mask), np.flatnonzero(mask)


# -- CSV ---------------------------------------------------------------------

_OUTCOME_COLUMNS = ("treatment", "conversion", "profit")


def load_csv(path, default_propensity: float | None = None) -> UpliftDataset:
    """Read a campaign CSV with columns ``feature_0..feature_{p-1}``,
    ``treatment``, ``conversion``, ``profit`` and optionally ``propensity``.

    Errors name the 1-based data row (header excluded) and the column.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        feature_cols = [h for h in header if h.startswith("feature_")]
        expected = [f"feature_{j}" for j in range(len(feature_cols))]
        if feature_cols != expected:
            raise DataError(f"{path}: feature columns must be named "
                            f"feature_0..feature_{len(feature_cols) - 1} in order")
        for name in _OUTCOME_COLUMNS:
            if name not in header:
                raise DataError(f"{path}: missing column {name!r}")
        has_prop = "propensity" in header
        if not has_prop and default_propensity is None:
            raise DataError(f"{path}: no propensity column and no default "
                            "propensity supplied")
        pos = {h: i for i, h in enumerate(header)}
        feat_pos = [pos[c] for c in feature_cols]
        columns = list(_OUTCOME_COLUMNS) + (["propensity"] if has_prop else [])

        feats, outs = [], []
        for r, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != len(header):
                raise DataError(f"row {r}: expected {len(header)} columns, "
                                f"got {len(cells)}")
            try:
                feats.append([float(cells[i]) for i in feat_pos])
            except ValueError:
                bad = next(c for c, i in zip(feature_cols, feat_pos)
                           if not _is_float(cells[i]))
                raise DataError(f"row {r}, column {bad}: malformed number "
                                f"{cells[pos[bad]]!r}") from None
            vals = []
            for c in columns:
                cell = cells[pos[c]]
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"row {r}, column {c}: malformed number "
                                    f"{cell!r}") from None
            outs.append(vals)

    p = len(feature_cols)
    features = np.array(feats, dtype=float).reshape(len(feats), p)
    outs = np.array(outs, dtype=float).reshape(len(outs), len(columns))
    propensity = outs[:, 3] if has_prop else np.full(len(outs), float(default_propensity))
    for j, c in enumerate(("treatment", "conversion")):
        col = outs[:, j]
        bad = np.flatnonzero(col != np.round(col))
        if bad.size:
            raise DataError(f"row {bad[0] + 1}, column {c}: not an integer")
    return UpliftDataset(features, outs[:, 0], outs[:, 1], outs[:, 2], propensity)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def csv_header(feature_count: int, extra=()) -> list[str]:
    return ([f"feature_{j}" for j in range(feature_count)]
            + ["treatment", "conversion", "profit", "propensity"] + list(extra))


def write_csv(dataset: UpliftDataset, path) -> None:
    """Write ``dataset`` in the :func:`load_csv` schema.

    Reals use ``repr`` (shortest round-trip form), so a reload is bit-exact.
    The file is written to a temporary sibling and renamed into place.
    """
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with tmp.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(csv_header(dataset.feature_count))
            for x, t, c, pi, e in zip(dataset.features.tolist(),
                                      dataset.treatment.tolist(),
                                      dataset.conversion.tolist(),
                                      dataset.profit.tolist(),
                                      dataset.propensity.tolist()):
                w.writerow([repr(v) for v in x] + [t, c, repr(pi), repr(e)])
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


# -- checks and subsets ------------------------------------------------------

def validate(dataset: UpliftDataset) -> list[str]:
    """Return one ``"row <i>: <rule>"`` line per violated row invariant.

    Row indices are 0-based positions in the dataset.
    """
    t, c, pi, e = (dataset.treatment, dataset.conversion, dataset.profit,
                   dataset.propensity)
    checks = [
        (~np.isin(t, (0, 1)), "treatment must be 0 or 1"),
        (~np.isin(c, (0, 1)), "conversion must be 0 or 1"),
        (~np.isfinite(pi), "profit must be finite"),
        ((c == 0) & (pi != 0), "non-converted row must have zero profit"),
        (~((e > 0) & (e < 1)), "propensity must lie strictly between 0 and 1"),
        (~np.isfinite(dataset.features).all(axis=1), "features must be finite"),
    ]
    out = []
    for i in np.flatnonzero(np.logical_or.reduce([m for m, _ in checks])
                            if len(dataset) else np.zeros(0, bool)):
        out.extend(f"row {i}: {rule}" for mask, rule in checks if mask[i])
    return out


def converted_subset(dataset: UpliftDataset) -> UpliftDataset:
    return dataset.take(dataset.conversion == 1)


def _strata(dataset: UpliftDataset) -> np.ndarray:
    return 2 * dataset.treatment + dataset.conversion


def make_folds(dataset: UpliftDataset, k: int, seed: int) -> FoldAssignment:
    """Stratified k-fold assignment over treatment x conversion cells.

    Within each cell the rows are shuffled with a generator seeded by
    ``seed`` and dealt round-robin, so fold sizes per cell differ by at
    most one.
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    strata = _strata(dataset)
    rng = np.random.default_rng(seed)
    fold = np.empty(len(dataset), dtype=np.int64)
    for s in range(4):
        idx = np.flatnonzero(strata == s)
        if idx.size == 0:
            continue
        if idx.size < k:
            raise ValueError(
                f"stratum treatment={s // 2}, conversion={s % 2} has "
                f"{idx.size} rows, fewer than k={k}")
        fold[idx[rng.permutation(idx.size)]] = np.arange(idx.size) % k
    return FoldAssignment(_frozen(fold, np.int64), k, seed)


def make_holdout(dataset: UpliftDataset, test_fraction: float,
                 seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified single train/test split; returns ``(train_idx, test_idx)``."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    strata = _strata(dataset)
    rng = np.random.default_rng(seed)
    test = np.zeros(len(dataset), dtype=bool)
    for s in range(4):
        idx = np.flatnonzero(strata == s)
        n_test = int(round(test_fraction * idx.size))
        test[idx[rng.permutation(idx.size)[:n_test]]] = True
    return np.flatnonzero(~test), np.flatnonzero(test)
