import dataclasses
import json
import os

import click
import pandas as pd
from flask import Response, abort, current_app, jsonify, request

from . import search_bp
from ..errors import ConfigError, DataIOError, handles_errors
from ..extensions import db
from ..harness import LOG_COLUMNS, exhaustive_oracle, load_run_config, parse_run_config, run_search
from ..io_utils import ensure_dir, read_json
from ..latency import generate_table, write_table
from ..models import EpisodeRow, SearchRun
from ..search_space import SearchSpaceConfig, cardinality, encode, encoding_key, enumerate_architectures


def _checkpoint_keys():
    return {
        "secret_key": current_app.config["SECRET_KEY"],
        "checkpoint_salt": current_app.config["NAS_CHECKPOINT_SALT"],
    }


def _persist_run(cfg, log) -> SearchRun:
    """Guarda la ejecución y todos sus episodios en la base de datos."""
    summary = log.summary()
    run = SearchRun(
        seed=cfg.seed,
        episodes=len(log),
        backend=cfg.backend,
        best_reward=summary["best_reward"],
        best_encoding=summary["best_encoding"],
        valid_rate=summary["valid_rate"],
        wall_time_s=log.wall_time_s,
        summary_json=json.dumps(summary, sort_keys=True),
    )
    db.session.add(run)
    db.session.flush()  # para obtener run.id

    for entry in log.entries:
        db.session.add(EpisodeRow(run_id=run.id, **entry._asdict()))
    db.session.commit()
    return run


def _load_space(path) -> SearchSpaceConfig:
    """Acepta un JSON con el espacio o una configuración de ejecución completa."""
    data = read_json(path)
    if isinstance(data, dict) and "search_space" in data:
        data = data["search_space"]
    return SearchSpaceConfig.from_dict(data)


# ===== API =====
@search_bp.route("/runs", methods=["POST"])
def create_run():
    """
    Ejecuta una búsqueda de forma síncrona con la configuración del cuerpo JSON
    y la registra. Las rutas de archivos se resuelven desde el directorio de trabajo.
    """
    data = request.get_json(silent=True)
    if data is None:
        raise ConfigError("El cuerpo debe ser un objeto JSON")
    cfg = dataclasses.replace(parse_run_config(data), output_dir=None)

    log = run_search(cfg, workers=current_app.config["NAS_EVAL_WORKERS"], **_checkpoint_keys())
    run = _persist_run(cfg, log)
    current_app.logger.info("[API] Ejecución %s registrada (%d episodios)", run.id, len(log))
    return jsonify(run.to_dict()), 201


@search_bp.route("/runs", methods=["GET"])
def list_runs():
    runs = SearchRun.query.order_by(SearchRun.id.desc()).all()
    return jsonify([
        {
            "id": r.id,
            "seed": r.seed,
            "episodes": r.episodes,
            "backend": r.backend,
            "best_reward": r.best_reward,
            "valid_rate": r.valid_rate,
        }
        for r in runs
    ])


@search_bp.route("/runs/<int:run_id>", methods=["GET"])
def get_run(run_id):
    run = db.session.get(SearchRun, run_id)
    if run is None:
        abort(404)
    return jsonify(run.to_dict())


@search_bp.route("/runs/<int:run_id>/episodes.csv", methods=["GET"])
def run_episodes(run_id):
    run = db.session.get(SearchRun, run_id)
    if run is None:
        abort(404)
    frame = pd.DataFrame(
        [{column: getattr(row, column) for column in LOG_COLUMNS} for row in run.episode_rows],
        columns=list(LOG_COLUMNS),
    )
    return Response(
        frame.to_csv(index=False, float_format="%.10g"),
        mimetype="text/csv",
        headers={"Content-Disposition": f"attachment; filename=run-{run_id}-episodes.csv"},
    )


# ===== CLI =====
@search_bp.cli.command("search")
@click.option("--config", "config_path", required=True, help="Configuración JSON de la ejecución.")
@click.option("--out", "out_dir", default=None, help="Directorio para episodes.csv y summary.json.")
@click.option("--workers", type=int, default=None, help="Evaluaciones en paralelo.")
@click.option("--resume", "resume_from", default=None, help="Checkpoint desde el que continuar.")
@click.option("--persist/--no-persist", default=False, help="Guardar la ejecución en la base de datos.")
@handles_errors
def search_command(config_path, out_dir, workers, resume_from, persist):
    """Ejecuta la búsqueda completa."""
    cfg = load_run_config(config_path)
    out_dir = out_dir or cfg.output_dir or current_app.config["NAS_OUTPUT_DIR"]
    cfg = dataclasses.replace(cfg, output_dir=out_dir)
    workers = workers or cfg.workers

    log = run_search(cfg, workers=workers, resume_from=resume_from, **_checkpoint_keys())
    summary = log.summary()

    click.echo(f"✅ {len(log)} episodios; resultados en {out_dir}")
    click.echo(f"Mejor recompensa: {summary['best_reward']:.4f} (episodio {summary['best_episode']})")
    click.echo(f"Tasa de arquitecturas válidas: {100 * summary['valid_rate']:.2f}%")
    if "best_description" in summary:
        click.echo(summary["best_description"])
    if persist:
        run = _persist_run(cfg, log)
        click.echo(f"Ejecución registrada con id {run.id}")


@search_bp.cli.command("enumerate")
@click.option("--config", "config_path", required=True, help="Espacio de búsqueda (o configuración de ejecución).")
@click.option("--limit", type=int, default=None, help="Máximo de arquitecturas a recorrer.")
@click.option("--out", "out_path", default=None, help="Archivo donde escribir las codificaciones.")
@handles_errors
def enumerate_command(config_path, limit, out_path):
    """Cuenta (y opcionalmente lista) las arquitecturas del espacio."""
    space = _load_space(config_path)
    limit = limit if limit is not None else current_app.config["NAS_ENUMERATE_LIMIT"]
    click.echo(f"Cardinalidad: {cardinality(space)}")

    archs = enumerate_architectures(space, limit)
    if out_path is None:
        click.echo(f"Enumeradas: {sum(1 for _ in archs)}")
        return
    count = 0
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            for arch in archs:
                fh.write(encoding_key(encode(arch, space)) + "\n")
                count += 1
    except OSError as e:
        raise DataIOError(f"No se pudo escribir {out_path}: {e}") from e
    click.echo(f"✅ {count} codificaciones escritas en {out_path}")


@search_bp.cli.command("oracle")
@click.option("--config", "config_path", required=True, help="Configuración JSON de la ejecución.")
@click.option("--out", "out_path", default=None, help="CSV con el paisaje completo de recompensas.")
@click.option("--limit", type=int, default=None)
@handles_errors
def oracle_command(config_path, out_path, limit):
    """Evalúa exhaustivamente el espacio y muestra el óptimo."""
    cfg = load_run_config(config_path)
    limit = limit if limit is not None else current_app.config["NAS_ENUMERATE_LIMIT"]
    oracle = exhaustive_oracle(cfg, limit=limit)
    click.echo(f"Arquitecturas evaluadas: {len(oracle.rows)}")
    click.echo(f"Mejor recompensa: {oracle.best_result.reward_value:.4f}")
    if out_path:
        ensure_dir(os.path.dirname(out_path) or ".")
        try:
            oracle.to_frame().to_csv(out_path, index=False, float_format="%.10g")
        except OSError as e:
            raise DataIOError(f"No se pudo escribir {out_path}: {e}") from e
        click.echo(f"✅ Paisaje escrito en {out_path}")


@search_bp.cli.command("gen-table")
@click.option("--config", "config_path", required=True, help="Espacio de búsqueda (o configuración de ejecución).")
@click.option("--device", default="raspberry", show_default=True)
@click.option("--ms-per-mac", type=float, default=None, help="Coeficiente del modelo de coste.")
@click.option("--header-ms", type=float, default=100.0, show_default=True)
@click.option("--out", "out_path", required=True)
@handles_errors
def gen_table_command(config_path, device, ms_per_mac, header_ms, out_path):
    """Genera una tabla de latencias sintética que cubre todo el espacio."""
    space = _load_space(config_path)
    table = generate_table(space, device_id=device, ms_per_mac=ms_per_mac, header_overhead_ms=header_ms)
    write_table(table, out_path)
    click.echo(f"✅ {len(table)} entradas escritas en {out_path}")
