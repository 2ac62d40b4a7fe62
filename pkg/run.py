"""Punto de entrada: `flask --app run <comando>` o servidor de desarrollo."""
import os

from app import create_app

app = create_app()

if __name__ == "__main__":
    app.run(debug=os.environ.get("FLASK_DEBUG", "0") == "1")
