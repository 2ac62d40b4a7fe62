import math

import click
from flask import jsonify, request

from . import analysis_bp
from ..errors import DataIOError, ValidationError, handles_errors
from ..evaluator import load_replay
from ..fairness import GroupedAccuracy, unfairness
from ..freezer import NORMALIZATIONS, layer_variation, load_trace, split_point, synthesize_trace
from ..harness import (
    balancing_report,
    format_score_report,
    load_points,
    pareto,
    reward_size_pareto,
    score_report,
)
from ..io_utils import read_csv, read_json, to_float, to_int, write_jsonl
from ..latency import estimate, load_table
from ..reward import RewardParams, Specification, is_feasible, reward
from ..search_space import ArchitectureSpec, describe, param_count, storage_mb


def _json_body() -> dict:
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise ValidationError("El cuerpo debe ser un objeto JSON")
    return data


def _require(data: dict, *keys):
    missing = [k for k in keys if k not in data]
    if missing:
        raise ValidationError(f"Faltan campos: {', '.join(missing)}")


def _write_frame(frame, out_path):
    try:
        frame.to_csv(out_path, index=False)
    except OSError as e:
        raise DataIOError(f"No se pudo escribir {out_path}: {e}") from e


# ===== API =====
@analysis_bp.route("/unfairness", methods=["POST"])
def unfairness_view():
    data = _json_body()
    _require(data, "overall", "per_group")
    try:
        grouped = GroupedAccuracy(
            overall=float(data["overall"]),
            per_group=tuple(float(a) for a in data["per_group"]),
            group_sizes=tuple(data["group_sizes"]) if data.get("group_sizes") else None,
        )
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Precisiones inválidas: {e}") from e
    return jsonify({"unfairness": unfairness(grouped)})


@analysis_bp.route("/reward", methods=["POST"])
def reward_view():
    data = _json_body()
    _require(data, "accuracy", "unfairness", "latency_ms", "specification")
    spec = Specification.from_dict(data["specification"])
    params = RewardParams.from_dict(data.get("reward", {}))
    try:
        accuracy, unfair, latency = (float(data[k]) for k in ("accuracy", "unfairness", "latency_ms"))
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Valores inválidos: {e}") from e
    return jsonify(
        {
            "reward": reward(accuracy, unfair, latency, spec, params),
            "feasible": is_feasible(accuracy, latency, spec),
        }
    )


@analysis_bp.route("/pareto", methods=["POST"])
def pareto_view():
    data = _json_body()
    _require(data, "points")
    try:
        points = [(float(p["accuracy"]), float(p["unfairness"]), str(p["id"])) for p in data["points"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"Puntos inválidos: {e}") from e
    return jsonify({"frontier": [p._asdict() for p in pareto(points)]})


@analysis_bp.route("/freeze", methods=["POST"])
def freeze_view():
    data = _json_body()
    _require(data, "variations")
    try:
        ratio = float(data.get("ratio", 0.5))
    except (TypeError, ValueError) as e:
        raise ValidationError(f"ratio inválido: {e}") from e
    plan = split_point(data["variations"], ratio)
    return jsonify(plan.to_dict())


# ===== CLI =====
@analysis_bp.cli.command("score")
@click.option("--replay", "replay_path", required=True, help="CSV con resultados medidos.")
@click.option("--baseline", required=True, help="Modelo de referencia.")
@click.option("--ac", type=float, required=True, help="Restricción de precisión.")
@click.option("--tc", type=float, default=None, help="Restricción de tiempo en ms (opcional).")
@click.option("--device", type=click.Choice(["raspberry", "odroid"]), default="raspberry", show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--beta", type=float, default=1.0, show_default=True)
@click.option("--out", "out_path", default=None, help="CSV donde guardar el informe.")
@handles_errors
def score_command(replay_path, baseline, ac, tc, device, alpha, beta, out_path):
    """Recalcula injusticia, recompensa y comparaciones frente al modelo de referencia."""
    spec = Specification(
        timing_constraint_ms=math.inf if tc is None else tc,
        accuracy_constraint=ac,
        device_id=device,
    )
    rows = score_report(load_replay(replay_path), spec, RewardParams(alpha, beta), baseline)
    frame = format_score_report(rows)
    click.echo(frame.to_string(index=False))
    if out_path:
        _write_frame(frame, out_path)


@analysis_bp.cli.command("pareto")
@click.option("--points", "points_path", required=True, help="CSV id,accuracy,unfairness (o id,reward,params).")
@click.option(
    "--objective",
    type=click.Choice(["accuracy-unfairness", "reward-size"]),
    default="accuracy-unfairness",
    show_default=True,
)
@handles_errors
def pareto_command(points_path, objective):
    """Muestra la frontera de Pareto de los puntos."""
    if objective == "accuracy-unfairness":
        front = pareto(load_points(points_path))
        for p in front:
            click.echo(f"{p.id}\t{p.accuracy:.4f}\t{p.unfairness:.4f}")
        return

    frame = read_csv(points_path, ("id", "reward", "params"))
    points = [
        (to_float(row["reward"], points_path), to_int(row["params"], points_path), str(row["id"]).strip())
        for row in frame.to_dict(orient="records")
    ]
    for p in reward_size_pareto(points):
        click.echo(f"{p.id}\t{p.reward:.4f}\t{p.params}")


@analysis_bp.cli.command("latency")
@click.option("--arch", "arch_path", required=True, help="Arquitectura en JSON.")
@click.option("--table", "table_path", required=True, help="Tabla de latencias por bloque (CSV).")
@click.option("--resolution", type=int, default=224, show_default=True, help="Resolución a la entrada del primer bloque.")
@handles_errors
def latency_command(arch_path, table_path, resolution):
    """Estima la latencia de una arquitectura sumando las entradas de la tabla."""
    arch = ArchitectureSpec.from_dict(read_json(arch_path))
    table = load_table(table_path)
    latency = estimate(arch, table, resolution)
    params = param_count(arch)
    click.echo(describe(arch))
    click.echo(f"Latencia estimada ({table.device_id}): {latency:.2f} ms")
    click.echo(f"Almacenamiento: {storage_mb(params):.2f} MB")


@analysis_bp.cli.command("freeze")
@click.option("--trace", "trace_path", required=True, help="Traza de características (JSON-lines).")
@click.option("--ratio", type=float, default=0.5, show_default=True)
@click.option("--normalization", type=click.Choice(NORMALIZATIONS), default="none", show_default=True)
@handles_errors
def freeze_command(trace_path, ratio, normalization):
    """Calcula el perfil de variación por capa y el punto de corte."""
    variations = layer_variation(load_trace(trace_path), normalization)
    plan = split_point(variations, ratio)
    for layer, value in enumerate(plan.variations, start=1):
        marker = "←" if layer == plan.split_layer else ""
        click.echo(f"capa {layer:>2}: {value:.4f} {marker}".rstrip())
    click.echo(f"Umbral: {plan.threshold:.4f}")
    click.echo(f"Capa de corte: {plan.split_layer} ({plan.frozen_count} capas congeladas)")


@analysis_bp.cli.command("gen-trace")
@click.option("--out", "out_path", required=True)
@click.option("--layers", type=int, default=17, show_default=True)
@click.option("--divergent-from", type=int, default=13, show_default=True)
@click.option("--dim", type=int, default=16, show_default=True)
@click.option("--vectors", type=int, default=8, show_default=True)
@click.option("--groups", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@handles_errors
def gen_trace_command(out_path, layers, divergent_from, dim, vectors, groups, seed):
    """Genera una traza sintética: cabecera plana y cola divergente."""
    trace = synthesize_trace(
        num_layers=layers,
        divergent_from=divergent_from,
        dim=dim,
        vectors_per_group=vectors,
        num_groups=groups,
        seed=seed,
    )
    write_jsonl(out_path, trace.to_records())
    click.echo(f"✅ Traza de {layers} capas escrita en {out_path}")


@analysis_bp.cli.command("balancing")
@click.option("--results", "results_path", required=True, help="CSV model,acc_before,unfair_before,acc_after,unfair_after.")
@handles_errors
def balancing_command(results_path):
    """Compara resultados antes y después del balanceo de datos."""
    frame = balancing_report(results_path)
    for row in frame.to_dict(orient="records"):
        click.echo(
            f"{row['model']}: precisión {row['acc_improvement_pp']:+.2f} pp, "
            f"injusticia {row['unfair_improvement']:+.4f}"
        )
