from flask import Blueprint

analysis_bp = Blueprint("analysis", __name__, cli_group=None)
