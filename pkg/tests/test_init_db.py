from sqlalchemy import inspect

from app import create_app
from app.config import TestConfig
from app.extensions import db
from init_db import create_tables


def test_create_tables_builds_run_tables():
    app = create_app(TestConfig)
    assert create_tables(app) == ["search_run", "episode_row"]
    with app.app_context():
        assert {"search_run", "episode_row"} <= set(inspect(db.engine).get_table_names())
        db.drop_all()
