"""
Evaluadores de redes hijas.

- SurrogateBackend: modelo sintético y determinista que sustituye al entrenamiento.
  La precisión crece con el tamaño de la red y la brecha entre grupos se reduce
  con la capacidad de los últimos bloques (la cola).
- ReplayBackend: resultados ya medidos (tablas publicadas o benchmarks tabulados).

evaluate_full comprueba primero la latencia; si no se cumple, el backend caro
no se llama nunca y la recompensa es −1.
"""
import hashlib
import logging
import math
import threading
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, NonPositiveLatency, ParseError, UnknownArchitecture, ValidationError
from .fairness import GroupedAccuracy, unfairness
from .io_utils import read_csv, to_float, to_int
from .latency import LatencyTable, estimate, meets_timing
from .reward import INFEASIBLE_REWARD, RewardParams, Specification, is_feasible, reward
from .search_space import (
    ArchitectureSpec,
    SearchSpaceConfig,
    block_params,
    encode,
    encoding_key,
    param_count,
)

logger = logging.getLogger(__name__)

REPLAY_COLUMNS = (
    "model",
    "overall_acc",
    "acc_light",
    "acc_dark",
    "params",
    "storage_mb",
    "latency_raspberry_ms",
    "latency_odroid_ms",
)
REPLAY_DEVICES = ("raspberry", "odroid")


@dataclass(frozen=True)
class SurrogateConfig:
    a_max: float = 0.9
    a_min: float = 0.5
    size_scale: float = 1.0e4
    gap0: float = 0.5
    tail_scale: float = 5.0e3
    tail_window: int = 3
    majority_fraction: float = 0.9
    noise_amp: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.a_min < self.a_max <= 1.0):
            raise ConfigError("Se requiere 0 ≤ a_min < a_max ≤ 1")
        if not self.size_scale > 0 or not self.tail_scale > 0:
            raise ConfigError("size_scale y tail_scale deben ser positivos")
        if not 0.0 <= self.gap0 <= self.a_max:
            raise ConfigError("gap0 debe estar en [0, a_max]")
        if isinstance(self.tail_window, bool) or not isinstance(self.tail_window, int) or self.tail_window <= 0:
            raise ConfigError("tail_window debe ser un entero positivo")
        if not 0.0 < self.majority_fraction < 1.0:
            raise ConfigError("majority_fraction debe estar en (0, 1)")
        if self.noise_amp < 0:
            raise ConfigError("noise_amp no puede ser negativo")

    @classmethod
    def from_dict(cls, data: dict) -> "SurrogateConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Campos desconocidos en el sustituto: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EvaluationResult:
    grouped: GroupedAccuracy
    unfair: float
    latency_ms: float
    params: int
    feasible: bool
    reward_value: float
    backend_called: bool

    @property
    def accuracy(self):
        return self.grouped.overall if self.grouped is not None else None


@dataclass(frozen=True)
class ReplayRecord:
    model: str
    grouped: GroupedAccuracy
    params: int
    storage_mb: float
    latency_ms: dict
    encoding: str = ""


def _keyed_uniforms(seed: int, key: str, count: int = 2) -> np.ndarray:
    """Uniformes de un generador por contador (Philox) con clave (semilla, arquitectura)."""
    digest = hashlib.blake2b(f"{seed}|{key}".encode(), digest_size=16).digest()
    words = np.frombuffer(digest, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=words)).random(count)


def architecture_key(arch: ArchitectureSpec) -> str:
    """Clave canónica por posición, independiente del espacio de búsqueda."""
    parts = [str(arch.header_out_channels)]
    for block in arch.blocks:
        parts.append("-" if block.skipped else f"{block.block_type}{block.kernel}x{block.ch2}x{block.ch3}")
    return "/".join(parts)


def tail_capacity(arch: ArchitectureSpec, window: int) -> int:
    chain = arch.channel_chain()
    return sum(block_params(block, ch_in) for _, block, ch_in in chain[-window:])


def surrogate_evaluate(arch: ArchitectureSpec, cfg: SurrogateConfig, key: str = None) -> GroupedAccuracy:
    """
    Modelo sintético (no es un resultado publicado):
        base = a_max − (a_max − a_min)·exp(−params/ρ)
        gap  = g₀·exp(−cola/τ_s)
    key identifica la arquitectura para el ruido; por defecto architecture_key(arch).
    """
    chain = arch.channel_chain()
    params = sum(block_params(block, ch_in) for _, block, ch_in in chain)
    base = cfg.a_max - (cfg.a_max - cfg.a_min) * math.exp(-params / cfg.size_scale)
    gap = cfg.gap0 * math.exp(-tail_capacity(arch, cfg.tail_window) / cfg.tail_scale)

    eps_major = eps_minor = 0.0
    if cfg.noise_amp > 0:
        if key is None:
            key = architecture_key(arch)
        u1, u2 = _keyed_uniforms(cfg.seed, key)
        eps_major = cfg.noise_amp * (2.0 * u1 - 1.0)
        eps_minor = cfg.noise_amp * (2.0 * u2 - 1.0)

    major = min(1.0, max(0.0, base + eps_major))
    minor = min(1.0, max(0.0, base - gap + eps_minor))
    p = cfg.majority_fraction
    overall = p * major + (1.0 - p) * minor
    return GroupedAccuracy(overall=overall, per_group=(major, minor), group_sizes=(p, 1.0 - p))


class SurrogateBackend:
    name = "surrogate"
    # Sustituye al entrenamiento: se considera caro y se evita si falla la latencia.
    free_to_run = False

    def __init__(self, cfg: SurrogateConfig):
        self.cfg = cfg
        self.calls = 0
        self._lock = threading.Lock()

    def evaluate(self, arch: ArchitectureSpec) -> GroupedAccuracy:
        with self._lock:
            self.calls += 1
        return surrogate_evaluate(arch, self.cfg)


def load_replay(path) -> dict:
    """Lee el archivo de resultados medidos; la columna encoding es opcional."""
    frame = read_csv(path, REPLAY_COLUMNS, optional_columns=("encoding",))
    records = {}
    for lineno, row in enumerate(frame.to_dict(orient="records"), start=2):
        where = f"{path}:{lineno}"
        model = str(row["model"]).strip()
        if not model:
            raise ValidationError(f"{where}: falta el nombre del modelo")
        if model in records:
            raise ValidationError(f"{where}: modelo repetido {model}")
        overall = to_float(row["overall_acc"], where)
        light = to_float(row["acc_light"], where)
        dark = to_float(row["acc_dark"], where)
        params = to_int(row["params"], where)
        if params <= 0:
            raise ParseError(f"{where}: params debe ser positivo (recibido {params})")
        latency = {device: to_float(row[f"latency_{device}_ms"], where) for device in REPLAY_DEVICES}
        if any(not v > 0 for v in latency.values()):
            raise NonPositiveLatency(f"{where}: las latencias deben ser positivas")
        records[model] = ReplayRecord(
            model=model,
            grouped=GroupedAccuracy(overall=overall, per_group=(light, dark)),
            params=params,
            storage_mb=to_float(row["storage_mb"], where),
            latency_ms=latency,
            encoding=str(row.get("encoding") or "").strip(),
        )
    logger.info("[Replay] %d modelos cargados desde %s", len(records), path)
    return records


def replay_evaluate(arch_id: str, records: dict) -> GroupedAccuracy:
    try:
        return records[arch_id].grouped
    except KeyError:
        raise UnknownArchitecture(f"Modelo desconocido: {arch_id}") from None


class ReplayBackend:
    name = "replay"
    free_to_run = True

    def __init__(self, records: dict, space: SearchSpaceConfig = None):
        self.records = records
        self.space = space
        self.by_encoding = {r.encoding: r.model for r in records.values() if r.encoding}
        self.calls = 0
        self._lock = threading.Lock()

    def resolve(self, arch) -> str:
        if isinstance(arch, str):
            return arch
        if self.space is None:
            raise UnknownArchitecture("El replay necesita el espacio para identificar arquitecturas")
        key = encoding_key(encode(arch, self.space))
        try:
            return self.by_encoding[key]
        except KeyError:
            raise UnknownArchitecture(f"Arquitectura sin resultado registrado: {key}") from None

    def evaluate(self, arch) -> GroupedAccuracy:
        with self._lock:
            self.calls += 1
        return replay_evaluate(self.resolve(arch), self.records)

    def recorded_latency(self, arch_id: str, device_id: str) -> float:
        if device_id not in REPLAY_DEVICES:
            raise ValidationError(f"Dispositivo sin columna de latencia: {device_id}")
        try:
            return self.records[arch_id].latency_ms[device_id]
        except KeyError:
            raise UnknownArchitecture(f"Modelo desconocido: {arch_id}") from None


def evaluate_full(
    arch,
    spec: Specification,
    params: RewardParams,
    latency_table: LatencyTable,
    backend,
    input_resolution: int = None,
) -> EvaluationResult:
    """
    arch es una ArchitectureSpec, o el nombre de un modelo registrado si el backend es replay.
    La latencia se comprueba antes de evaluar; si falla se devuelve −1 sin llamar al backend
    (salvo que el backend sea gratuito, en cuyo caso se rellenan también las precisiones).
    """
    if isinstance(arch, str):
        latency_ms = backend.recorded_latency(arch, spec.device_id)
        n_params = backend.records[arch].params
    else:
        if input_resolution is None:
            input_resolution = backend.space.input_resolution
        latency_ms = estimate(arch, latency_table, input_resolution)
        n_params = param_count(arch)

    if not meets_timing(latency_ms, spec) and not backend.free_to_run:
        return EvaluationResult(
            grouped=None,
            unfair=None,
            latency_ms=latency_ms,
            params=n_params,
            feasible=False,
            reward_value=INFEASIBLE_REWARD,
            backend_called=False,
        )

    grouped = backend.evaluate(arch)
    unfair = unfairness(grouped)
    value = reward(grouped.overall, unfair, latency_ms, spec, params)
    feasible = is_feasible(grouped.overall, latency_ms, spec)
    return EvaluationResult(
        grouped=grouped,
        unfair=unfair,
        latency_ms=latency_ms,
        params=n_params,
        feasible=feasible,
        reward_value=value,
        backend_called=True,
    )
