import logging

from flask import Flask, jsonify

from .config import Config
from .errors import NasError, UnknownArchitecture, ValidationError
from .extensions import db, migrate


def create_app(config_object=None):
    app = Flask(__name__)
    app.config.from_object(config_object or Config)

    logging.basicConfig(
        level=app.config.get("LOG_LEVEL", "INFO"),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger("app").setLevel(app.config.get("LOG_LEVEL", "INFO"))

    # Inicializar extensiones
    db.init_app(app)
    migrate.init_app(app, db)

    # ===== RUTA PÚBLICA PRINCIPAL =====
    @app.route("/")
    def index():
        return jsonify(
            {
                "service": "fair-hw-nas",
                "endpoints": ["/search/runs", "/analysis/unfairness", "/analysis/reward", "/analysis/pareto", "/analysis/freeze"],
            }
        )

    # ===== ERRORES DEL DOMINIO → JSON =====
    @app.errorhandler(UnknownArchitecture)
    def unknown(error):
        return jsonify({"error": str(error)}), 404

    @app.errorhandler(ValidationError)
    def invalid(error):
        return jsonify({"error": str(error), "type": type(error).__name__}), 400

    @app.errorhandler(NasError)
    def failed(error):
        app.logger.error("[API] %s", error)
        return jsonify({"error": str(error), "type": type(error).__name__}), 500

    # ===== REGISTRO DE BLUEPRINTS =====
    from .search.routes import search_bp
    from .analysis.routes import analysis_bp

    app.register_blueprint(search_bp, url_prefix="/search")
    app.register_blueprint(analysis_bp, url_prefix="/analysis")

    return app
