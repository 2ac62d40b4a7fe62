import os

from dotenv import load_dotenv

load_dotenv()


class Config:
    SECRET_KEY = os.environ.get("SECRET_KEY", "dev-secret-key")
    SQLALCHEMY_DATABASE_URI = os.environ.get("DATABASE_URL", "sqlite:///nas_runs.db")
    SQLALCHEMY_TRACK_MODIFICATIONS = False

    LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")

    # Búsqueda
    NAS_ENUMERATE_LIMIT = int(os.environ.get("NAS_ENUMERATE_LIMIT", 100000))
    NAS_EVAL_WORKERS = int(os.environ.get("NAS_EVAL_WORKERS", 1))
    NAS_OUTPUT_DIR = os.environ.get("NAS_OUTPUT_DIR", "runs")

    # Checkpoints firmados del controlador
    NAS_CHECKPOINT_SALT = "controller-checkpoint"


class TestConfig(Config):
    TESTING = True
    SECRET_KEY = "test-secret-key"
    SQLALCHEMY_DATABASE_URI = "sqlite:///:memory:"
    LOG_LEVEL = "WARNING"
