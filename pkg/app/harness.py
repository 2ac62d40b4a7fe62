"""
Orquestación del bucle completo de búsqueda y de los análisis sobre resultados.

- run_search: congelado opcional → episodios (muestreo, evaluación, recompensa) →
  actualización del controlador cada batch_size episodios.
- exhaustive_oracle: evalúa todo el espacio con el mismo backend (verdad de referencia).
- pareto / reward_size_pareto: fronteras no dominadas.
- score_report / balancing_report: recalculan las columnas derivadas de resultados medidos.
"""
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import pandas as pd

from . import controller
from .errors import ConfigError, DataIOError, NonFiniteGradient, UnknownArchitecture, ValidationError
from .evaluator import (
    REPLAY_DEVICES,
    ReplayBackend,
    SurrogateBackend,
    SurrogateConfig,
    evaluate_full,
    load_replay,
)
from .fairness import relative_fairness_change, unfairness
from .freezer import DEFAULT_FREEZE_RATIO, freeze_backbone, layer_variation, load_trace, split_point
from .io_utils import ensure_dir, read_csv, read_json, to_float, write_json
from .latency import generate_table, load_table, meets_timing
from .reward import RewardParams, Specification, meets_accuracy, reward
from .search_space import (
    ArchitectureSpec,
    SearchSpaceConfig,
    cardinality,
    describe,
    encode,
    encoding_key,
    enumerate_architectures,
    storage_mb,
)

logger = logging.getLogger(__name__)

BACKENDS = ("surrogate", "replay")
DEFAULT_ENUMERATE_LIMIT = 100_000
CHECKPOINT_FILE = "controller.ckpt"
LOG_COLUMNS = (
    "episode",
    "encoding",
    "reward",
    "feasible",
    "latency_ms",
    "accuracy",
    "unfairness",
    "params",
)


# ===== CONFIGURACIÓN DE UNA EJECUCIÓN =====
@dataclass(frozen=True)
class FreezeSettings:
    """
    Entradas del congelado: una traza (o un perfil de variaciones ya calculado),
    el mapa capa→bloque y la red base preentrenada.
    """

    backbone: ArchitectureSpec
    layer_to_block_map: tuple
    trace: str = None
    variations: tuple = None
    ratio: float = DEFAULT_FREEZE_RATIO
    normalization: str = "none"

    def profile(self) -> list:
        if self.variations is not None:
            return list(self.variations)
        return layer_variation(load_trace(self.trace), self.normalization)


@dataclass(frozen=True)
class RunConfig:
    space: SearchSpaceConfig
    spec: Specification
    reward_params: RewardParams = RewardParams()
    hyper: controller.ControllerHyper = controller.ControllerHyper()
    episodes: int = 500
    backend: str = "surrogate"
    surrogate: SurrogateConfig = SurrogateConfig()
    replay: str = None
    latency_table: str = None
    freeze: FreezeSettings = None
    output_dir: str = None
    seed: int = 0
    workers: int = 1
    enumerate_limit: int = DEFAULT_ENUMERATE_LIMIT

    def __post_init__(self):
        if isinstance(self.episodes, bool) or not isinstance(self.episodes, int) or self.episodes < 1:
            raise ConfigError("episodes debe ser un entero ≥ 1")
        if self.backend not in BACKENDS:
            raise ConfigError(f"Backend desconocido: {self.backend} (opciones: {', '.join(BACKENDS)})")
        if self.backend == "replay" and not self.replay:
            raise ConfigError("El backend replay necesita el archivo de resultados (replay)")
        if self.workers < 1:
            raise ConfigError("workers debe ser ≥ 1")


_RUN_KEYS = {
    "search_space",
    "specification",
    "reward",
    "controller",
    "episodes",
    "backend",
    "surrogate",
    "replay",
    "latency_table",
    "freeze",
    "output_dir",
    "seed",
    "workers",
    "enumerate_limit",
}
_FREEZE_KEYS = {"backbone", "layer_to_block_map", "trace", "variations", "ratio", "normalization"}


def _resolve(path, base_dir):
    if path is None or os.path.isabs(path) or base_dir is None:
        return path
    return os.path.join(base_dir, path)


def _require_file(path, what):
    if path is not None and not os.path.isfile(path):
        raise DataIOError(f"No existe el archivo de {what}: {path}")
    return path


def _whole(data: dict, key: str, default: int, minimum: int) -> int:
    value = data.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{key} debe ser un entero ≥ {minimum} (recibido {value!r})")
    return value


def parse_run_config(data: dict, base_dir=None) -> RunConfig:
    """Construye un RunConfig desde JSON; las rutas relativas se resuelven contra base_dir."""
    if not isinstance(data, dict):
        raise ConfigError("La configuración de la ejecución debe ser un objeto JSON")
    unknown = sorted(set(data) - _RUN_KEYS)
    if unknown:
        raise ConfigError(f"Campos desconocidos en la configuración: {', '.join(unknown)}")
    for key in ("search_space", "specification"):
        if key not in data:
            raise ConfigError(f"Falta la sección {key}")

    space = SearchSpaceConfig.from_dict(data["search_space"])

    freeze = None
    if data.get("freeze"):
        raw = data["freeze"]
        extra = sorted(set(raw) - _FREEZE_KEYS)
        if extra:
            raise ConfigError(f"Campos desconocidos en freeze: {', '.join(extra)}")
        if "backbone" not in raw or "layer_to_block_map" not in raw:
            raise ConfigError("freeze necesita backbone y layer_to_block_map")
        if not raw.get("trace") and raw.get("variations") is None:
            raise ConfigError("freeze necesita una traza o un perfil de variaciones")
        try:
            freeze = FreezeSettings(
                backbone=ArchitectureSpec.from_dict(raw["backbone"], space),
                layer_to_block_map=tuple(raw["layer_to_block_map"]),
                trace=_require_file(_resolve(raw.get("trace"), base_dir), "traza"),
                variations=tuple(raw["variations"]) if raw.get("variations") is not None else None,
                ratio=float(raw.get("ratio", DEFAULT_FREEZE_RATIO)),
                normalization=raw.get("normalization", "none"),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"freeze inválido: {e}") from e

    try:
        return RunConfig(
            space=space,
            spec=Specification.from_dict(data["specification"]),
            reward_params=RewardParams.from_dict(data.get("reward", {})),
            hyper=controller.ControllerHyper.from_dict(data.get("controller", {})),
            episodes=data.get("episodes", 500),
            backend=data.get("backend", "surrogate"),
            surrogate=SurrogateConfig.from_dict(data.get("surrogate", {})),
            replay=_require_file(_resolve(data.get("replay"), base_dir), "replay"),
            latency_table=_require_file(_resolve(data.get("latency_table"), base_dir), "latencias"),
            freeze=freeze,
            output_dir=data.get("output_dir"),
            seed=_whole(data, "seed", 0, 0),
            workers=_whole(data, "workers", 1, 1),
            enumerate_limit=_whole(data, "enumerate_limit", DEFAULT_ENUMERATE_LIMIT, 1),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Configuración inválida: {e}") from e


def load_run_config(path) -> RunConfig:
    return parse_run_config(read_json(path), base_dir=os.path.dirname(os.path.abspath(path)))


# ===== PREPARACIÓN =====
@dataclass(frozen=True)
class PreparedSearch:
    space: SearchSpaceConfig
    table: object
    freeze_plan: object = None
    frozen_blocks: int = 0


def prepare_search(cfg: RunConfig, table=None) -> PreparedSearch:
    """Carga (o genera) la tabla de latencias y aplica el congelado si está configurado."""
    if table is None:
        if cfg.latency_table:
            table = load_table(cfg.latency_table)
        else:
            table = generate_table(cfg.space, device_id=cfg.spec.device_id)
    if cfg.freeze is None:
        return PreparedSearch(space=cfg.space, table=table)

    plan = split_point(cfg.freeze.profile(), cfg.freeze.ratio)
    frozen = freeze_backbone(plan, cfg.freeze.backbone, cfg.freeze.layer_to_block_map, cfg.space, table)
    return PreparedSearch(
        space=frozen.space,
        table=frozen.table,
        freeze_plan=plan,
        frozen_blocks=frozen.frozen_blocks,
    )


def make_backend(cfg: RunConfig, space: SearchSpaceConfig):
    if cfg.backend == "replay":
        return ReplayBackend(load_replay(cfg.replay), space=space)
    return SurrogateBackend(cfg.surrogate)


# ===== REGISTRO DE LA EJECUCIÓN =====
class LogEntry(NamedTuple):
    episode: int
    encoding: str
    reward: float
    feasible: bool
    latency_ms: float
    accuracy: float
    unfairness: float
    params: int


@dataclass
class RunLog:
    entries: list = field(default_factory=list)
    best_architecture: ArchitectureSpec = None
    sequence_length: int = 0
    frozen_blocks: int = 0
    freeze_plan: dict = None
    backend_calls: int = 0
    wall_time_s: float = 0.0

    def __len__(self):
        return len(self.entries)

    def append(self, entry: LogEntry, arch: ArchitectureSpec = None):
        if entry.episode != len(self.entries) + 1:
            raise ValidationError("Los episodios del registro deben ser contiguos desde 1")
        if arch is not None and (self.best is None or entry.reward > self.best.reward):
            self.best_architecture = arch
        self.entries.append(entry)

    @property
    def best(self):
        if not self.entries:
            return None
        # El primero en alcanzar el máximo.
        return max(self.entries, key=lambda e: (e.reward, -e.episode))

    def best_so_far(self) -> list:
        return np.maximum.accumulate([e.reward for e in self.entries]).tolist()

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([e._asdict() for e in self.entries], columns=list(LOG_COLUMNS))

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, float_format="%.10g")

    def summary(self) -> dict:
        best = self.best
        out = {
            "episodes": len(self.entries),
            "valid_rate": valid_rate(self),
            "best_reward": best.reward if best else None,
            "best_episode": best.episode if best else None,
            "best_encoding": best.encoding if best else None,
            "best_so_far": self.best_so_far(),
            "sequence_length": self.sequence_length,
            "frozen_blocks": self.frozen_blocks,
            "freeze_plan": self.freeze_plan,
            "backend_calls": self.backend_calls,
        }
        if self.best_architecture is not None:
            out["best_architecture"] = self.best_architecture.to_dict()
            out["best_description"] = describe(self.best_architecture)
            out["best_storage_mb"] = round(storage_mb(best.params), 6)
        return out

    def write(self, out_dir):
        ensure_dir(out_dir)
        try:
            with open(os.path.join(out_dir, "episodes.csv"), "w", encoding="utf-8", newline="") as fh:
                fh.write(self.to_csv())
        except OSError as e:
            raise DataIOError(f"No se pudo escribir el registro en {out_dir}: {e}") from e
        write_json(os.path.join(out_dir, "summary.json"), self.summary())
        write_json(os.path.join(out_dir, "timing.json"), {"wall_time_s": self.wall_time_s})

    def state_for_checkpoint(self) -> dict:
        return {
            "entries": [list(e) for e in self.entries],
            "best_architecture": self.best_architecture.to_dict() if self.best_architecture else None,
            "backend_calls": self.backend_calls,
        }

    def restore(self, saved: dict):
        self.entries = [LogEntry(*row) for row in saved.get("entries", [])]
        if saved.get("best_architecture"):
            self.best_architecture = ArchitectureSpec.from_dict(saved["best_architecture"])
        self.backend_calls = saved.get("backend_calls", 0)


def valid_rate(log: RunLog) -> float:
    if not log.entries:
        raise ValidationError("El registro está vacío")
    return sum(1 for e in log.entries if e.feasible) / len(log.entries)


def _optional_float(value):
    return None if value is None else float(value)


def _entry(episode, actions, result) -> LogEntry:
    return LogEntry(
        episode=episode,
        encoding=encoding_key(actions),
        reward=float(result.reward_value),
        feasible=bool(result.feasible),
        latency_ms=float(result.latency_ms),
        accuracy=_optional_float(result.accuracy),
        unfairness=_optional_float(result.unfair),
        params=int(result.params),
    )


# ===== BÚSQUEDA =====
def run_search(
    cfg: RunConfig,
    backend=None,
    table=None,
    workers: int = None,
    resume_from=None,
    secret_key: str = "dev-secret-key",
    checkpoint_salt: str = "controller-checkpoint",
) -> RunLog:
    """
    Ejecuta la búsqueda completa. El resultado depende solo de cfg (incluida la semilla):
    la evaluación puede ir en paralelo pero el registro se escribe en orden de episodio.
    """
    started = time.perf_counter()
    prepared = prepare_search(cfg, table)
    space = prepared.space
    if backend is None:
        backend = make_backend(cfg, space)
    workers = workers or cfg.workers

    controller_seq, sampling_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    state = controller.init(space, cfg.hyper, seed=int(controller_seq.generate_state(1)[0]))
    rng = np.random.default_rng(sampling_seq)

    log = RunLog(sequence_length=space.sequence_length, frozen_blocks=prepared.frozen_blocks)
    if prepared.freeze_plan is not None:
        log.freeze_plan = prepared.freeze_plan.to_dict()

    if resume_from:
        state, extra = controller.read_checkpoint(resume_from, secret_key, checkpoint_salt)
        rng.bit_generator.state = extra["rng_state"]
        log.restore(extra["log"])
        logger.info("[Búsqueda] Reanudando desde el episodio %d", len(log) + 1)

    def evaluate(arch):
        return evaluate_full(
            arch,
            cfg.spec,
            cfg.reward_params,
            prepared.table,
            backend,
            input_resolution=space.input_resolution,
        )

    logger.info(
        "[Búsqueda] %d episodios sobre un espacio de %d arquitecturas (%d decisiones por episodio)",
        cfg.episodes,
        cardinality(space),
        space.sequence_length,
    )
    m = cfg.hyper.batch_size
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while len(log) < cfg.episodes:
            count = min(m, cfg.episodes - len(log))
            sampled = [controller.sample(state, space, rng) for _ in range(count)]
            archs = [arch for arch, _ in sampled]
            results = list(pool.map(evaluate, archs) if pool else map(evaluate, archs))

            batch = []
            for (arch, record), result in zip(sampled, results):
                log.append(_entry(len(log) + 1, record.actions, result), arch)
                log.backend_calls += int(result.backend_called)
                batch.append(record.with_reward(result.reward_value, result.feasible))

            if count == m:
                try:
                    state = controller.update(state, batch)
                except NonFiniteGradient:
                    logger.error("[Búsqueda] Gradiente no finito en el episodio %d; se guarda el registro", len(log))
                    log.wall_time_s = time.perf_counter() - started
                    if cfg.output_dir:
                        log.write(cfg.output_dir)
                    raise
                logger.debug(
                    "[Búsqueda] actualización %d: recompensa media %.4f, línea base %.4f, mejor %.4f",
                    state.updates,
                    float(np.mean([ep.reward for ep in batch])),
                    state.baseline,
                    log.best.reward,
                )

            if cfg.output_dir:
                ensure_dir(cfg.output_dir)
                controller.save_checkpoint(
                    state,
                    os.path.join(cfg.output_dir, CHECKPOINT_FILE),
                    secret_key,
                    checkpoint_salt,
                    extra={"rng_state": rng.bit_generator.state, "log": log.state_for_checkpoint()},
                )
    finally:
        if pool is not None:
            pool.shutdown()

    log.wall_time_s = time.perf_counter() - started
    if cfg.output_dir:
        log.write(cfg.output_dir)
    logger.info(
        "[Búsqueda] ✅ Mejor recompensa %.4f (episodio %d); tasa válida %.2f%%",
        log.best.reward,
        log.best.episode,
        100 * valid_rate(log),
    )
    return log


# ===== ORÁCULO EXHAUSTIVO =====
class LandscapeRow(NamedTuple):
    encoding: str
    architecture: ArchitectureSpec
    result: object


@dataclass(frozen=True)
class OracleResult:
    best: ArchitectureSpec
    best_result: object
    rows: list

    def rewards(self) -> list:
        return [row.result.reward_value for row in self.rows]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "encoding": row.encoding,
                    "reward": row.result.reward_value,
                    "feasible": row.result.feasible,
                    "latency_ms": row.result.latency_ms,
                    "accuracy": row.result.accuracy,
                    "unfairness": row.result.unfair,
                    "params": row.result.params,
                }
                for row in self.rows
            ]
        )


def exhaustive_oracle(cfg: RunConfig, backend=None, table=None, limit: int = None) -> OracleResult:
    """
    Evalúa todas las arquitecturas del espacio (ya reducido si hay congelado).
    Los empates se resuelven por el orden canónico de enumeración.
    """
    prepared = prepare_search(cfg, table)
    space = prepared.space
    if backend is None:
        backend = make_backend(cfg, space)
    limit = cfg.enumerate_limit if limit is None else limit

    rows = []
    best_row = None
    for arch in enumerate_architectures(space, limit):
        result = evaluate_full(
            arch,
            cfg.spec,
            cfg.reward_params,
            prepared.table,
            backend,
            input_resolution=space.input_resolution,
        )
        row = LandscapeRow(encoding_key(encode(arch, space)), arch, result)
        rows.append(row)
        if best_row is None or result.reward_value > best_row.result.reward_value:
            best_row = row
    logger.info("[Oráculo] %d arquitecturas evaluadas; mejor recompensa %.4f", len(rows), best_row.result.reward_value)
    return OracleResult(best=best_row.architecture, best_result=best_row.result, rows=rows)


def top_fraction_threshold(rewards, fraction: float = 0.01) -> float:
    """Recompensa mínima para estar en la fracción superior del paisaje."""
    ordered = sorted(rewards, reverse=True)
    count = max(1, math.ceil(fraction * len(ordered)))
    return ordered[count - 1]


# ===== FRONTERAS DE PARETO =====
class ParetoPoint(NamedTuple):
    accuracy: float
    unfairness: float
    id: str


def _dominates(q, p, better_first, better_second) -> bool:
    no_worse = better_first(q[0], p[0], True) and better_second(q[1], p[1], True)
    strictly = better_first(q[0], p[0], False) or better_second(q[1], p[1], False)
    return no_worse and strictly


def _higher(a, b, allow_equal):
    return a >= b if allow_equal else a > b


def _lower(a, b, allow_equal):
    return a <= b if allow_equal else a < b


def _front(points, better_first, better_second):
    return [
        p for p in points if not any(_dominates(q, p, better_first, better_second) for q in points)
    ]


def pareto(points) -> list:
    """Puntos (precisión, injusticia, id) no dominados, por precisión descendente."""
    points = [ParetoPoint(*p) for p in points]
    front = _front(points, _higher, _lower)
    return sorted(front, key=lambda p: -p.accuracy)


class SizePoint(NamedTuple):
    reward: float
    params: int
    id: str


def reward_size_pareto(points) -> list:
    """Puntos (recompensa, parámetros, id) no dominados: más recompensa con menos parámetros."""
    points = [SizePoint(*p) for p in points]
    front = _front(points, _higher, _lower)
    return sorted(front, key=lambda p: -p.reward)


def load_points(path) -> list:
    frame = read_csv(path, ("id", "accuracy", "unfairness"))
    return [
        ParetoPoint(
            to_float(row["accuracy"], path),
            to_float(row["unfairness"], path),
            str(row["id"]).strip(),
        )
        for row in frame.to_dict(orient="records")
    ]


# ===== INFORMES SOBRE RESULTADOS MEDIDOS =====
def score_report(records: dict, spec: Specification, reward_params: RewardParams, baseline_id: str) -> list:
    """
    Recalcula injusticia, recompensa, cambio de justicia, aceleraciones y reducción de
    almacenamiento frente al modelo de referencia. La restricción de tiempo solo se aplica
    si es finita; la reducción de almacenamiento se calcula con los parámetros registrados.
    """
    if baseline_id not in records:
        raise UnknownArchitecture(f"Modelo de referencia desconocido: {baseline_id}")
    if spec.device_id not in REPLAY_DEVICES:
        raise ValidationError(f"Dispositivo sin columna de latencia: {spec.device_id}")
    base = records[baseline_id]
    base_u = unfairness(base.grouped)

    rows = []
    for model, record in records.items():
        accuracy = record.grouped.overall
        unfair = unfairness(record.grouped)
        latency = record.latency_ms[spec.device_id]
        timed = math.isfinite(spec.timing_constraint_ms)
        row = {
            "model": model,
            "params": record.params,
            "accuracy": accuracy,
            "meets_acc": meets_accuracy(accuracy, spec),
            "acc_light": record.grouped.per_group[0],
            "acc_dark": record.grouped.per_group[1],
            "unfairness": unfair,
            "fairness_comp": relative_fairness_change(unfair, base_u),
            "reward": reward(accuracy, unfair, latency if timed else 0.0, spec, reward_params),
            "storage_mb": record.storage_mb,
            "storage_reduction": base.params / record.params,
        }
        for device in REPLAY_DEVICES:
            row[f"latency_{device}_ms"] = record.latency_ms[device]
            row[f"speedup_{device}"] = base.latency_ms[device] / record.latency_ms[device]
        row["meets_spec"] = row["meets_acc"] and (not timed or meets_timing(latency, spec))
        rows.append(row)
    return rows


def format_score_report(rows) -> pd.DataFrame:
    """Formato de publicación: 4 decimales en injusticia, 2 en recompensa y porcentajes."""
    formatted = []
    for row in rows:
        formatted.append(
            {
                "model": row["model"],
                "params": f"{row['params']:,}",
                "accuracy": f"{100 * row['accuracy']:.2f}%",
                "meets_acc": "sí" if row["meets_acc"] else "no",
                "light": f"{100 * row['acc_light']:.2f}%",
                "dark": f"{100 * row['acc_dark']:.2f}%",
                "unfairness": f"{row['unfairness']:.4f}",
                "fairness_comp": f"{100 * row['fairness_comp']:+.2f}%",
                "reward": f"{row['reward']:.2f}",
                "storage_mb": f"{row['storage_mb']:.2f}",
                "storage_red": f"{row['storage_reduction']:.2f}x",
                "raspberry_ms": f"{row['latency_raspberry_ms']:.2f}",
                "speedup_raspberry": f"{row['speedup_raspberry']:.2f}x",
                "odroid_ms": f"{row['latency_odroid_ms']:.2f}",
                "speedup_odroid": f"{row['speedup_odroid']:.2f}x",
                "meets_spec": "sí" if row["meets_spec"] else "no",
            }
        )
    return pd.DataFrame(formatted)


BALANCING_COLUMNS = ("model", "acc_before", "unfair_before", "acc_after", "unfair_after")


def balancing_report(path) -> pd.DataFrame:
    """
    Compara resultados sin y con balanceo de datos: mejora de precisión (puntos
    porcentuales) y reducción de la injusticia.
    """
    frame = read_csv(path, BALANCING_COLUMNS)
    rows = []
    for lineno, raw in enumerate(frame.to_dict(orient="records"), start=2):
        where = f"{path}:{lineno}"
        acc_before = to_float(raw["acc_before"], where)
        acc_after = to_float(raw["acc_after"], where)
        unfair_before = to_float(raw["unfair_before"], where)
        unfair_after = to_float(raw["unfair_after"], where)
        rows.append(
            {
                "model": str(raw["model"]).strip(),
                "acc_before": acc_before,
                "acc_after": acc_after,
                "acc_improvement_pp": 100 * (acc_after - acc_before),
                "unfair_before": unfair_before,
                "unfair_after": unfair_after,
                "unfair_improvement": unfair_before - unfair_after,
            }
        )
    return pd.DataFrame(rows)
