import pytest

from pyvitac.config import RunConfig
from pyvitac.synthworld import generate_dataset


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help="run the desk scale training and ablation tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope='session')
def micro_config():
    return RunConfig.micro()


@pytest.fixture(scope='session')
def micro_episodes(micro_config):
    return generate_dataset(micro_config.episodes, micro_config.data_seed,
                            micro_config.world_config())
