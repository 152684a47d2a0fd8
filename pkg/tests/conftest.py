"""Shared fixtures.  The end-to-end case study costs tens of seconds,
so one bundle (and one repeat run for determinism checks) is built per
session and reused by both the harness tests and the acceptance gate.
"""

import pytest

from shmrisk.harness import ExperimentConfig, run_case_study


@pytest.fixture(scope="session")
def case_config(tmp_path_factory):
    out = tmp_path_factory.mktemp("case-study")
    return ExperimentConfig(output_dir=str(out))


@pytest.fixture(scope="session")
def case(case_config):
    # out_dir passed explicitly so an ambient SHMRISK_OUT cannot redirect it
    return run_case_study(case_config, out_dir=case_config.output_dir)


@pytest.fixture(scope="session")
def case_repeat(case_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("case-study-repeat")
    return run_case_study(case_config, out_dir=out)
