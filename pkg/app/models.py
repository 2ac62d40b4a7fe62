import json
from datetime import datetime

from .extensions import db


class SearchRun(db.Model):
    """
    Ejecución completa de la búsqueda.

    - summary_json: resumen determinista (mejor recompensa, trayectoria, tasa válida...).
    - wall_time_s: tiempo de reloj; se guarda aparte porque no es reproducible.
    """
    id = db.Column(db.Integer, primary_key=True)
    created_at = db.Column(db.DateTime, default=datetime.utcnow)
    seed = db.Column(db.Integer, nullable=False)
    episodes = db.Column(db.Integer, nullable=False)
    backend = db.Column(db.String(20), nullable=False)
    best_reward = db.Column(db.Float)
    best_encoding = db.Column(db.String(512))
    valid_rate = db.Column(db.Float)
    wall_time_s = db.Column(db.Float)
    summary_json = db.Column(db.Text, nullable=False, default="{}")

    @property
    def summary(self) -> dict:
        return json.loads(self.summary_json)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "created_at": self.created_at.isoformat() if self.created_at else None,
            "seed": self.seed,
            "episodes": self.episodes,
            "backend": self.backend,
            "best_reward": self.best_reward,
            "best_encoding": self.best_encoding,
            "valid_rate": self.valid_rate,
            "wall_time_s": self.wall_time_s,
            "summary": self.summary,
        }

    def __repr__(self) -> str:
        return f"<SearchRun {self.id} seed={self.seed}>"


class EpisodeRow(db.Model):
    """Un episodio del registro: una red hija muestreada y su evaluación."""
    id = db.Column(db.Integer, primary_key=True)
    run_id = db.Column(db.Integer, db.ForeignKey("search_run.id"), nullable=False)
    episode = db.Column(db.Integer, nullable=False)
    encoding = db.Column(db.String(512), nullable=False)
    reward = db.Column(db.Float, nullable=False)
    feasible = db.Column(db.Boolean, default=False)
    latency_ms = db.Column(db.Float, nullable=False)
    accuracy = db.Column(db.Float, nullable=True)
    unfairness = db.Column(db.Float, nullable=True)
    params = db.Column(db.Integer, nullable=False)

    run = db.relationship("SearchRun", backref=db.backref("episode_rows", order_by="EpisodeRow.episode"))
