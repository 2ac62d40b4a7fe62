"""
Controlador recurrente entrenado con gradiente de política Monte Carlo.

Cada episodio desenrolla una celda recurrente con compuertas (actualización z,
reinicio r) durante T = 5·n pasos; en cada paso una cabeza softmax por tipo de
decisión elige la acción. El gradiente es

    ∇J(θ) = (1/m) Σ_k Σ_t γ^(T−t) ∇θ log π(a_t | a_(t−1):1) · (R_k − b)

calculado con retropropagación a través del tiempo escrita a mano.
"""
import logging
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from itsdangerous import BadSignature, Serializer

from .errors import (
    BatchSizeMismatch,
    ConfigError,
    DataIOError,
    DegenerateSampling,
    NonFiniteGradient,
    ValidationError,
)
from .search_space import DECISIONS_PER_BLOCK, SearchSpaceConfig, decode, validate

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
MAX_SAMPLING_ATTEMPTS = 100
CELL_PARAMS = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_n", "U_n", "b_n")


@dataclass(frozen=True)
class ControllerHyper:
    learning_rate: float = 5e-3
    discount: float = 0.99
    baseline_decay: float = 0.95
    batch_size: int = 5
    hidden_dim: int = 64
    embedding_dim: int = 32
    temperature: float = 1.0
    init_scale: float = 0.08

    def __post_init__(self):
        for name in ("batch_size", "hidden_dim", "embedding_dim"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ConfigError(f"{name} debe ser un entero positivo (recibido {value!r})")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate no puede ser negativo")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigError("discount debe estar en (0, 1]")
        if not 0.0 <= self.baseline_decay <= 1.0:
            raise ConfigError("baseline_decay debe estar en [0, 1]")
        if not self.temperature > 0:
            raise ConfigError("temperature debe ser positiva")
        if not self.init_scale > 0:
            raise ConfigError("init_scale debe ser positivo")

    @classmethod
    def from_dict(cls, data: dict) -> "ControllerHyper":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Hiperparámetros desconocidos: {', '.join(unknown)}")
        return cls(**data)


@dataclass
class ControllerState:
    params: dict
    baseline: float
    hyper: ControllerHyper
    arities: tuple
    updates: int = 0

    def copy(self) -> "ControllerState":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def same_as(self, other: "ControllerState") -> bool:
        return (
            self.baseline == other.baseline
            and self.arities == other.arities
            and self.hyper == other.hyper
            and self.params.keys() == other.params.keys()
            and all(np.array_equal(self.params[k], other.params[k]) for k in self.params)
        )


@dataclass(frozen=True)
class EpisodeRecord:
    actions: tuple
    step_logprobs: tuple
    forced: tuple
    reward: float = None
    feasible: bool = False

    @property
    def total_logprob(self) -> float:
        return float(sum(self.step_logprobs))

    def with_reward(self, reward: float, feasible: bool) -> "EpisodeRecord":
        return replace(self, reward=reward, feasible=feasible)


def _param_shapes(arities, hyper: ControllerHyper) -> dict:
    h, e = hyper.hidden_dim, hyper.embedding_dim
    shapes = {"start": (e,)}
    for kind, arity in enumerate(arities):
        shapes[f"emb_{kind}"] = (arity, e)
    for gate in ("z", "r", "n"):
        shapes[f"W_{gate}"] = (h, e)
        shapes[f"U_{gate}"] = (h, h)
        shapes[f"b_{gate}"] = (h,)
    for kind, arity in enumerate(arities):
        shapes[f"head_W_{kind}"] = (arity, h)
        shapes[f"head_b_{kind}"] = (arity,)
    return shapes


def init(cfg: SearchSpaceConfig, hyper: ControllerHyper, seed: int) -> ControllerState:
    """Parámetros uniformes en [−init_scale, init_scale]; línea base en 0."""
    rng = np.random.default_rng(seed)
    arities = cfg.arities
    params = {
        name: rng.uniform(-hyper.init_scale, hyper.init_scale, size=shape)
        for name, shape in _param_shapes(arities, hyper).items()
    }
    return ControllerState(params=params, baseline=0.0, hyper=hyper, arities=arities)


def _check_compatible(state: ControllerState, cfg: SearchSpaceConfig):
    if state.arities != cfg.arities:
        raise ValidationError(
            f"El controlador espera aridades {state.arities} y el espacio tiene {cfg.arities}"
        )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _log_softmax(logits):
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def _cell(p, x, h_prev):
    z = _sigmoid(p["W_z"] @ x + p["U_z"] @ h_prev + p["b_z"])
    r = _sigmoid(p["W_r"] @ x + p["U_r"] @ h_prev + p["b_r"])
    rh = r * h_prev
    n = np.tanh(p["W_n"] @ x + p["U_n"] @ rh + p["b_n"])
    h = (1.0 - z) * n + z * h_prev
    return h, (x, h_prev, z, r, rh, n)


def _head_logprobs(p, kind, h, temperature):
    logits = (p[f"head_W_{kind}"] @ h + p[f"head_b_{kind}"]) / temperature
    return _log_softmax(logits)


def _draw(probs, rng) -> int:
    # Inversión de la CDF con un único uniforme por paso.
    cdf = np.cumsum(probs)
    index = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(index, len(probs) - 1)


def _rollout(state: ControllerState, cfg: SearchSpaceConfig, rng):
    p = state.params
    tau = state.hyper.temperature
    h = np.zeros(state.hyper.hidden_dim)
    x = p["start"]
    actions, logprobs, forced = [], [], []
    skipping = False

    for t in range(cfg.sequence_length):
        kind = t % DECISIONS_PER_BLOCK
        if kind == 0:
            skipping = False
        h, _ = _cell(p, x, h)
        if skipping:
            action, logprob = 0, 0.0
        else:
            logp = _head_logprobs(p, kind, h, tau)
            action = _draw(np.exp(logp), rng)
            logprob = float(logp[action])
            if kind == 0 and cfg.allow_skip and action == 0:
                skipping = True
        actions.append(action)
        logprobs.append(logprob)
        forced.append(skipping and kind > 0)
        x = p[f"emb_{kind}"][action]

    return tuple(actions), tuple(logprobs), tuple(forced)


def sample(state: ControllerState, cfg: SearchSpaceConfig, rng):
    """
    Muestrea una arquitectura. Las decisiones posteriores a un "omitir" quedan
    forzadas al índice 0 con log-probabilidad 0. Las muestras con todos los bloques
    omitidos se descartan.
    """
    _check_compatible(state, cfg)
    for _ in range(MAX_SAMPLING_ATTEMPTS):
        actions, logprobs, forced = _rollout(state, cfg, rng)
        arch = decode(actions, cfg)
        if validate(arch, cfg):
            return arch, EpisodeRecord(actions=actions, step_logprobs=logprobs, forced=forced)
    raise DegenerateSampling(
        f"{MAX_SAMPLING_ATTEMPTS} muestras seguidas con todos los bloques omitidos"
    )


def _forward(state: ControllerState, actions, forced):
    """Pasada hacia delante con las acciones fijadas; guarda lo necesario para BPTT."""
    p = state.params
    tau = state.hyper.temperature
    h = np.zeros(state.hyper.hidden_dim)
    x = p["start"]
    steps = []
    for t, action in enumerate(actions):
        kind = t % DECISIONS_PER_BLOCK
        h, cache = _cell(p, x, h)
        logp = None if forced[t] else _head_logprobs(p, kind, h, tau)
        steps.append((cache, h, logp))
        x = p[f"emb_{kind}"][action]
    return steps


def _step_weights(hyper: ControllerHyper, length: int) -> np.ndarray:
    # γ^(T−t) para t = 1..T
    return hyper.discount ** np.arange(length - 1, -1, -1, dtype=float)


def episode_objective(state: ControllerState, episode: EpisodeRecord) -> float:
    """Σ_t γ^(T−t)·log π(a_t)·(R − b) con los parámetros actuales."""
    steps = _forward(state, episode.actions, episode.forced)
    weights = _step_weights(state.hyper, len(episode.actions))
    total = 0.0
    for t, (_, _, logp) in enumerate(steps):
        if logp is not None:
            total += weights[t] * logp[episode.actions[t]]
    return total * (episode.reward - state.baseline)


def _accumulate(state: ControllerState, episode: EpisodeRecord, scale: float, grads: dict):
    p = state.params
    tau = state.hyper.temperature
    actions = episode.actions
    steps = _forward(state, actions, episode.forced)
    weights = _step_weights(state.hyper, len(actions)) * scale

    dh_next = np.zeros(state.hyper.hidden_dim)
    for t in range(len(actions) - 1, -1, -1):
        kind = t % DECISIONS_PER_BLOCK
        (x, h_prev, z, r, rh, n), h, logp = steps[t]
        dh = dh_next

        if logp is not None:
            dlogits = -np.exp(logp)
            dlogits[actions[t]] += 1.0
            dlogits *= weights[t] / tau
            grads[f"head_W_{kind}"] += np.outer(dlogits, h)
            grads[f"head_b_{kind}"] += dlogits
            dh = dh + p[f"head_W_{kind}"].T @ dlogits

        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dh_prev = dh * z

        da_n = dn * (1.0 - n ** 2)
        grads["W_n"] += np.outer(da_n, x)
        grads["U_n"] += np.outer(da_n, rh)
        grads["b_n"] += da_n
        dx = p["W_n"].T @ da_n
        drh = p["U_n"].T @ da_n
        dh_prev += drh * r

        da_r = drh * h_prev * r * (1.0 - r)
        grads["W_r"] += np.outer(da_r, x)
        grads["U_r"] += np.outer(da_r, h_prev)
        grads["b_r"] += da_r
        dx += p["W_r"].T @ da_r
        dh_prev += p["U_r"].T @ da_r

        da_z = dz * z * (1.0 - z)
        grads["W_z"] += np.outer(da_z, x)
        grads["U_z"] += np.outer(da_z, h_prev)
        grads["b_z"] += da_z
        dx += p["W_z"].T @ da_z
        dh_prev += p["U_z"].T @ da_z

        if t == 0:
            grads["start"] += dx
        else:
            grads[f"emb_{(t - 1) % DECISIONS_PER_BLOCK}"][actions[t - 1]] += dx
        dh_next = dh_prev


def policy_gradient(state: ControllerState, batch) -> dict:
    """Estimador de ascenso; la línea base se mantiene fija durante todo el lote."""
    batch = list(batch)
    if len(batch) != state.hyper.batch_size:
        raise BatchSizeMismatch(
            f"El lote tiene {len(batch)} episodios y batch_size es {state.hyper.batch_size}"
        )
    if any(ep.reward is None for ep in batch):
        raise ValidationError("Todos los episodios del lote necesitan recompensa")

    grads = {name: np.zeros_like(value) for name, value in state.params.items()}
    # Suma en orden de episodio para que el resultado no dependa de la evaluación.
    for episode in batch:
        advantage = episode.reward - state.baseline
        if advantage != 0.0:
            _accumulate(state, episode, advantage, grads)
    for name in grads:
        grads[name] /= len(batch)
    return grads


def update(state: ControllerState, batch) -> ControllerState:
    batch = list(batch)
    grads = policy_gradient(state, batch)
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradient(f"Gradiente no finito en {name}")

    eta = state.hyper.learning_rate
    params = {name: value + eta * grads[name] for name, value in state.params.items()}
    mean_reward = float(np.mean([ep.reward for ep in batch]))
    decay = state.hyper.baseline_decay
    baseline = decay * state.baseline + (1.0 - decay) * mean_reward
    return replace(state, params=params, baseline=baseline, updates=state.updates + 1)


# ===== CHECKPOINTS =====
def _serializer(secret_key, salt):
    return Serializer(secret_key, salt=salt)


def dump_checkpoint(state: ControllerState, secret_key, salt="controller-checkpoint", extra=None) -> str:
    """Checkpoint JSON firmado; extra guarda el progreso de la búsqueda."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "hyper": asdict(state.hyper),
        "arities": list(state.arities),
        "baseline": state.baseline,
        "updates": state.updates,
        "params": {name: value.tolist() for name, value in state.params.items()},
        "extra": extra or {},
    }
    return _serializer(secret_key, salt).dumps(payload)


def load_checkpoint(text: str, secret_key, salt="controller-checkpoint"):
    """Devuelve (estado, extra). Un checkpoint alterado o de otra versión se rechaza."""
    try:
        payload = _serializer(secret_key, salt).loads(text)
    except BadSignature as e:
        raise ValidationError("El checkpoint del controlador no es válido o fue alterado") from e
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"Versión de checkpoint no soportada: {payload.get('version')}")
    hyper = ControllerHyper(**payload["hyper"])
    arities = tuple(payload["arities"])
    params = {name: np.asarray(value, dtype=float) for name, value in payload["params"].items()}
    expected = _param_shapes(arities, hyper)
    if {k: v.shape for k, v in params.items()} != expected:
        raise ValidationError("Las formas de los parámetros del checkpoint no coinciden")
    state = ControllerState(
        params=params,
        baseline=float(payload["baseline"]),
        hyper=hyper,
        arities=arities,
        updates=int(payload["updates"]),
    )
    return state, payload.get("extra", {})


def save_checkpoint(state: ControllerState, path, secret_key, salt="controller-checkpoint", extra=None):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dump_checkpoint(state, secret_key, salt, extra))
    except OSError as e:
        raise DataIOError(f"No se pudo escribir el checkpoint {path}: {e}") from e


def read_checkpoint(path, secret_key, salt="controller-checkpoint"):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise DataIOError(f"No se pudo leer el checkpoint {path}: {e}") from e
    return load_checkpoint(text, secret_key, salt)

