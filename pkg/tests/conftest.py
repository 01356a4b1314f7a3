import numpy as np
import pytest
import torch

from credrisk.data import FeatureSchema, SeqSpec, generate_dataset, split_out_of_time
from credrisk.preprocess import InputDims, fit_preprocess, transform


def small_schema(n_real: int = 60) -> FeatureSchema:
    specs = {"card": SeqSpec(1, 2, 5, 12), "inquiry": SeqSpec(1, 0, 2, 16), "loan": SeqSpec(1, 4, 5, 20)}
    return FeatureSchema(nonseq_time_count=13, nonseq_real_count=n_real, nonseq_cat_count=9, seq_specs=specs)


@pytest.fixture(scope="session")
def small_data():
    return generate_dataset(small_schema(), n_records=2400, seed=3)


@pytest.fixture(scope="session")
def small_split(small_data):
    return split_out_of_time(small_data)


@pytest.fixture(scope="session")
def small_artifacts(small_split):
    train, _ = small_split
    return fit_preprocess(train, k=20, selection_method="correlation")


@pytest.fixture(scope="session")
def small_processed(small_split, small_artifacts):
    train, test = small_split
    return transform(train, small_artifacts), transform(test, small_artifacts)


@pytest.fixture(scope="session")
def small_dims(small_artifacts):
    return InputDims.from_artifacts(small_artifacts)


@pytest.fixture
def batch(small_processed):
    train, _ = small_processed
    return train.batch(np.arange(64))


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
