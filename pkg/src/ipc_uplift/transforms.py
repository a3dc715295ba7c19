"""Response transformations that turn uplift estimation into one regression.

``ipc_transform`` keeps converted rows only and signs their profit by arm,
inverse-weighted by the arm's propensity, so the conditional mean of the
target is the incremental profit per conversion. ``crvtw_transform`` applies
the same weighting to every row (non-converters contribute zero), and
``rdt_targets`` is the binary class-variable transformation on the sign of
profit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import DataError, UpliftDataset, validate

__all__ = ["TransformedSet", "ipc_transform", "crvtw_transform", "rdt_targets"]


@dataclass(frozen=True, eq=False)
class TransformedSet:
    features: np.ndarray
    targets: np.ndarray
    source_row_index: np.ndarray

    def __len__(self) -> int:
        return self.targets.shape[0]


def require_valid(dataset: UpliftDataset) -> None:
    problems = validate(dataset)
    if problems:
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        raise DataError("invalid dataset: " + "; ".join(problems[:5]) + more)


def _weighted_profit(dataset: UpliftDataset) -> np.ndarray:
    e = dataset.propensity
    return np.where(dataset.treatment == 1,
                    dataset.profit / e, -dataset.profit / (1.0 - e))


def ipc_transform(dataset: UpliftDataset) -> TransformedSet:
    require_valid(dataset)
    idx = np.flatnonzero(dataset.conversion == 1)
    z = _weighted_profit(dataset)[idx]
    return TransformedSet(dataset.features[idx], z, idx)


def crvtw_transform(dataset: UpliftDataset) -> TransformedSet:
    require_valid(dataset)
    z = _weighted_profit(dataset)
    # profit is exactly zero off conversions; force +0.0 rather than -0.0
    z[dataset.conversion == 0] = 0.0
    return TransformedSet(dataset.features, z, np.arange(len(dataset)))


def rdt_targets(dataset: UpliftDataset) -> TransformedSet:
    """Class-variable transformation on ``profit > 0``.

    Only unbiased under balanced assignment, so every propensity must be 0.5.
    A model of ``Pr(z=1 | x)`` ranks by ``2 * Pr(z=1 | x) - 1``.
    """
    require_valid(dataset)
    if len(dataset) and not np.all(dataset.propensity == 0.5):
        raise DataError("RDT requires a constant propensity of 0.5")
    t, gain = dataset.treatment == 1, dataset.profit > 0
    z = ((t & gain) | (~t & ~gain)).astype(float)
    return TransformedSet(dataset.features, z, np.arange(len(dataset)))
