import os

import pytest

from app import create_app
from app.config import TestConfig
from app.extensions import db
from app.search_space import SearchSpaceConfig

REPLAY_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "data", "replay")


@pytest.fixture
def app():
    app = create_app(TestConfig)
    with app.app_context():
        db.create_all()
        yield app
        db.session.remove()
        db.drop_all()


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


@pytest.fixture
def replay_dir():
    return REPLAY_DIR


@pytest.fixture
def small_space():
    """Espacio de 2 bloques: 17 opciones por bloque (16 activas + omitir)."""
    return SearchSpaceConfig(
        num_searchable_blocks=2,
        kernel_choices=(3, 5),
        ch2_choices=(8, 16),
        ch3_choices=(8, 16),
        block_types=("MB", "CB"),
        header_out_channels=8,
        input_resolution=32,
    )
