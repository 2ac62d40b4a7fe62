"""Crea las tablas de ejecuciones de búsqueda y sus episodios."""
import logging

from app import create_app
from app.extensions import db
from app.models import EpisodeRow, SearchRun

logger = logging.getLogger("app.init_db")

TABLES = (SearchRun.__table__, EpisodeRow.__table__)


def create_tables(app) -> list:
    with app.app_context():
        db.metadata.create_all(bind=db.engine, tables=list(TABLES))
    names = [table.name for table in TABLES]
    logger.info("[BD] Tablas listas: %s", ", ".join(names))
    return names


if __name__ == "__main__":
    create_tables(create_app())
