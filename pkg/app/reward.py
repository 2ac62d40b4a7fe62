"""
Recompensa con restricciones:

    R = α·A − β·U   si latencia ≤ TC y A ≥ AC
    R = −1          en otro caso
"""
import math
from dataclasses import asdict, dataclass

from .errors import ConfigError

INFEASIBLE_REWARD = -1.0


@dataclass(frozen=True)
class Specification:
    timing_constraint_ms: float
    accuracy_constraint: float
    device_id: str = "raspberry"

    def __post_init__(self):
        if not self.timing_constraint_ms > 0:
            raise ConfigError("timing_constraint_ms debe ser positivo")
        if not 0.0 <= self.accuracy_constraint <= 1.0:
            raise ConfigError("accuracy_constraint debe estar en [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "Specification":
        try:
            tc = data.get("timing_constraint_ms")
            return cls(
                timing_constraint_ms=math.inf if tc is None else float(tc),
                accuracy_constraint=float(data["accuracy_constraint"]),
                device_id=str(data.get("device_id", "raspberry")),
            )
        except (AttributeError, KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Especificación inválida: {e}") from e

    def to_dict(self) -> dict:
        out = asdict(self)
        if math.isinf(self.timing_constraint_ms):
            out["timing_constraint_ms"] = None
        return out


@dataclass(frozen=True)
class RewardParams:
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha y beta deben ser no negativos")
        if self.alpha == 0 and self.beta == 0:
            raise ConfigError("alpha y beta no pueden ser ambos cero")

    @classmethod
    def from_dict(cls, data: dict) -> "RewardParams":
        try:
            return cls(**{k: float(v) for k, v in data.items()})
        except (AttributeError, TypeError, ValueError) as e:
            raise ConfigError(f"Parámetros de recompensa inválidos: {e}") from e


def meets_accuracy(accuracy: float, spec: Specification) -> bool:
    return accuracy >= spec.accuracy_constraint


def is_feasible(accuracy: float, latency_ms: float, spec: Specification) -> bool:
    # Ambos límites son inclusivos.
    return latency_ms <= spec.timing_constraint_ms and meets_accuracy(accuracy, spec)


def reward(accuracy, unfair, latency_ms, spec: Specification, params: RewardParams) -> float:
    if not is_feasible(accuracy, latency_ms, spec):
        return INFEASIBLE_REWARD
    return params.alpha * accuracy - params.beta * unfair
