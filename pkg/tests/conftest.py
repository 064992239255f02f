import sys

import numpy as np
import pandas as pd
import pytest

from walkerforge import dataset as ds
from walkerforge.core import original_design
from walkerforge.sampling import ParameterRanges, generate_batch
from walkerforge.surrogate import SurrogateConfig, split_dataset, train


#: Small-roster surrogate settings used by non-acceptance tests for speed.
FAST_SURROGATE = SurrogateConfig(rf_trees=30, gbt_rounds=60, seed=0)


@pytest.fixture(scope="session")
def default_ranges():
    return ParameterRanges.default()


@pytest.fixture(scope="session")
def small_dataset(default_ranges):
    """~250 simulated designs, shared by surrogate/optimizer/CLI tests."""
    batch = generate_batch(800, default_ranges, seed=0)
    df = ds.batch_to_frame(batch)
    return ds.simulate_frame(df)


@pytest.fixture(scope="session")
def fast_ensemble(small_dataset, default_ranges):
    train_df, test_df = split_dataset(small_dataset, 0.2, seed=0)
    ens = train(train_df, default_ranges, FAST_SURROGATE)
    return ens, train_df, test_df


@pytest.fixture(scope="session")
def fixture_design():
    return original_design()


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance-criterion pass/fail lines after the run."""
    mod = sys.modules.get("test_acceptance") or sys.modules.get(
        "tests.test_acceptance"
    )
    lines = getattr(mod, "CRITERION_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
