from pathlib import Path

import pytest

try:
    from siamprint.main import cli  # noqa
except (NameError, ImportError) as error:
    raise AssertionError(
        'Importing the command group `cli` from `siamprint.main` raised:\n'
        f'{type(error).__name__}: {error}.'
    )

try:
    from siamprint.core.config import settings  # noqa
except (NameError, ImportError) as error:
    raise AssertionError(
        'Importing `settings` from `siamprint.core.config` raised:\n'
        f'{type(error).__name__}: {error}.'
    )

try:
    from siamprint.autodiff import Tensor, gradcheck  # noqa
except (NameError, ImportError) as error:
    raise AssertionError(
        'Importing `Tensor, gradcheck` from `siamprint.autodiff` raised:\n'
        f'{type(error).__name__}: {error}.'
    )

try:
    from siamprint.models import build_semi_siamese, build_unet  # noqa
except (NameError, ImportError) as error:
    raise AssertionError(
        'Importing `build_semi_siamese, build_unet` from `siamprint.models` '
        f'raised:\n{type(error).__name__}: {error}.'
    )


BASE_DIR = Path(__file__).resolve(strict=True).parent.parent

pytest_plugins = [
    'fixtures.tensors',
    'fixtures.data',
    'fixtures.model',
]


def pytest_addoption(parser):
    parser.addoption(
        '--runslow', action='store_true', default=False,
        help='run empirical training tests',
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def quiet_progress(monkeypatch):
    monkeypatch.setattr(settings, 'progress_bars', False)
    monkeypatch.setattr(settings, 'loader_workers', 0)
