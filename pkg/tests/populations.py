"""Finite discrete populations for checking the transformation's mean
against the per-context profit tables it should reproduce."""

from fractions import Fraction

import numpy as np
from hypothesis import strategies as st

from ipc_uplift.data_model import UpliftDataset


@st.composite
def arm(draw):
    """(units in the arm, {profit value: converted units with that profit})."""
    values = draw(st.lists(st.integers(-20, 60), min_size=1, max_size=4, unique=True))
    counts = draw(st.lists(st.integers(0, 6), min_size=len(values), max_size=len(values)))
    converted = sum(counts)
    size = converted + draw(st.integers(0, 10))
    return max(size, 1), dict(zip(values, counts))


@st.composite
def population(draw):
    contexts = []
    for _ in range(draw(st.integers(1, 5))):
        control, treated = draw(arm()), draw(arm())
        if sum(control[1].values()) + sum(treated[1].values()) == 0:
            first = next(iter(treated[1]))
            treated = (max(treated[0], 1), {**treated[1], first: 1})
        contexts.append((control, treated))
    return contexts


def expand(contexts) -> UpliftDataset:
    """One row per unit; the known propensity is each context's treated share."""
    X, t, c, profit, e = [], [], [], [], []
    for x, ((n0, tab0), (n1, tab1)) in enumerate(contexts):
        share = n1 / (n0 + n1)
        for arm_flag, size, table in ((0, n0, tab0), (1, n1, tab1)):
            conv = [v for v, k in table.items() for _ in range(k)]
            for i in range(size):
                X.append([float(x)])
                t.append(arm_flag)
                c.append(int(i < len(conv)))
                profit.append(float(conv[i]) if i < len(conv) else 0.0)
                e.append(share)
    return UpliftDataset.from_arrays(np.array(X).reshape(-1, 1), t, c, profit, e)


def table_ipc(contexts) -> list[Fraction]:
    """Exact incremental profit per conversion straight from the tables."""
    out = []
    for (n0, tab0), (n1, tab1) in contexts:
        mean1 = Fraction(sum(v * k for v, k in tab1.items()), n1)
        mean0 = Fraction(sum(v * k for v, k in tab0.items()), n0)
        e = Fraction(n1, n0 + n1)
        conv = e * Fraction(sum(tab1.values()), n1) + (1 - e) * Fraction(sum(tab0.values()), n0)
        out.append((mean1 - mean0) / conv)
    return out


def random_population(rng: np.random.Generator):
    """Seeded counterpart of :func:`population` for a fixed number of draws."""
    contexts = []
    for _ in range(rng.integers(1, 6)):
        arms = []
        for _ in range(2):
            values = rng.choice(np.arange(-20, 61), size=rng.integers(1, 5), replace=False)
            counts = rng.integers(0, 7, size=values.size)
            size = int(counts.sum() + rng.integers(0, 11))
            arms.append([max(size, 1), dict(zip(values.tolist(), counts.tolist()))])
        if sum(arms[0][1].values()) + sum(arms[1][1].values()) == 0:
            first = next(iter(arms[1][1]))
            arms[1][1][first] = 1
            arms[1][0] = max(arms[1][0], 1)
        contexts.append(tuple(tuple(a) for a in arms))
    return contexts
