import pytest

from inklab import fixtures


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """6+6 planted-signal subjects, shared across CLI/pipeline tests."""
    root = tmp_path_factory.mktemp("tiny")
    fixtures.synth_dataset(fixtures.PD_PARAMS, fixtures.HC_PARAMS,
                           n_per_class=6, seed=42, out_dir=root)
    return root
