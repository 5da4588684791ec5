import warnings

import numpy as np
import pytest

from mmgnn.dataset import SyntheticSpec, generate_synthetic
from mmgnn.model import prepare_inputs


@pytest.fixture
def small_spec():
    return SyntheticSpec(
        n_users=12, n_songs=20, n_groups=2, p_in=0.5, p_out=0.1, q_in=0.5, q_out=0.1,
        feature_dims={"lyr": 4, "fre": 3, "vis": 5}, noise_sigma=0.3, test_fraction=0.25, seed=3,
    )


@pytest.fixture
def small_data(small_spec):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return generate_synthetic(small_spec)


@pytest.fixture
def small_inputs(small_data):
    return prepare_inputs(small_data)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ----------------------------------------------------

_CRITERIA = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _CRITERIA.append((props["criterion"], report.outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in sorted(_CRITERIA):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {detail}")
