import logging
import warnings

import numpy as np
import pytest

from cmmkit import data as dm
from cmmkit.model import Classifier, ColumnSchema, Schema, make_component
from cmmkit.training import TrainingConfig, fit

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda t: int(t.split()[1].rstrip(':'))):
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _quiet_training():
    logging.getLogger("cmmkit").setLevel(logging.ERROR)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def three_rule_classifier():
    """Three diagonal components in (x1, x2) plus one categorical column
    x3 in {A, B, C}; two classes, blue and green."""
    schema = Schema((
        ColumnSchema("x1"),
        ColumnSchema("x2"),
        ColumnSchema("x3", "categorical", "feature", ("A", "B", "C")),
        ColumnSchema("c", "categorical", "class", ("blue", "green")),
    ))
    I2 = np.eye(2)
    comps = [
        make_component([0.0, 5.0], I2, [[0.45, 0.45, 0.10]], 0, 0.4),
        make_component([5.0, 5.0], I2, [[0.10, 0.10, 0.80]], 1, 0.2),
        make_component([5.0, 0.0], I2, [[1 / 3, 1 / 3, 1 / 3]], 0, 0.4),
    ]
    return Classifier(schema, [0.8, 0.2], comps)


@pytest.fixture
def three_rule_fixture():
    return three_rule_classifier()


@pytest.fixture
def toy_classifier():
    """Two classes on a line, three components, one categorical column."""
    schema = Schema((
        ColumnSchema("x"),
        ColumnSchema("k", "categorical", "feature", ("u", "v")),
        ColumnSchema("y", "categorical", "class", ("a", "b")),
    ))
    comps = [
        make_component([0.0], [[1.0]], [[0.7, 0.3]], 0, 0.3),
        make_component([2.0], [[0.5]], [[0.5, 0.5]], 0, 0.2),
        make_component([5.0], [[2.0]], [[0.2, 0.8]], 1, 0.5),
    ]
    return Classifier(schema, [0.5, 0.5], comps)


@pytest.fixture(scope="session")
def iris_split():
    ds, _ = dm.z_normalize(dm.load_builtin("iris"))
    return dm.split(ds, 0.2, 0)


@pytest.fixture(scope="session")
def iris_fit(iris_split):
    train, _ = iris_split
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fit(train, TrainingConfig(rng_seed=0))


@pytest.fixture(scope="session")
def mixed_fit():
    ds = dm.mixed_synthetic(n=300, seed=3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ds, fit(ds, TrainingConfig(initial_components_per_class=4, max_iterations=60, rng_seed=3))
