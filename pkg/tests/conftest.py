import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fairloop.data import CATEGORICAL, NUMERIC, Dataset, FeatureSpec


def make_schema():
    return (
        FeatureSpec("Gender", CATEGORICAL, protected=True),
        FeatureSpec("Age", NUMERIC, protected=True),
        FeatureSpec("Income", NUMERIC),
        FeatureSpec("OwnsCar", CATEGORICAL),
    )


def make_dataset(n=20, seed=0, schema=None):
    rng = np.random.default_rng(seed)
    schema = schema or make_schema()
    genders = rng.choice(["F", "M"], size=n).tolist()
    ages = rng.integers(21, 70, size=n).astype(float).tolist()
    incomes = rng.uniform(10_000, 200_000, size=n).round(2).tolist()
    cars = rng.choice(["Y", "N"], size=n).tolist()
    target = rng.integers(0, 2, size=n).tolist()
    return Dataset(
        schema=schema,
        ids=tuple(f"A{i:04d}" for i in range(n)),
        columns={
            "Gender": tuple(genders),
            "Age": tuple(ages),
            "Income": tuple(incomes),
            "OwnsCar": tuple(cars),
        },
        target=tuple(int(t) for t in target),
    )


@pytest.fixture
def schema():
    return make_schema()


@pytest.fixture
def toy_dataset():
    return make_dataset()
