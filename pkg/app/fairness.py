"""
Precisión por grupos y puntuación de injusticia (norma L1).

U = Σ_g |A(grupo g) − A(total)|, con la precisión total ponderada por el tamaño
de cada grupo (no el promedio de grupos).
"""
from dataclasses import dataclass

from .errors import EmptyGroup, ValidationError, ZeroBaseline
from .io_utils import read_jsonl

_SIZE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class LabeledOutcomes:
    """Predicciones registradas: (clase predicha, clase real, grupo)."""

    records: tuple
    num_groups: int

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(tuple(r) for r in self.records))
        if not self.records:
            raise ValidationError("No hay predicciones registradas")
        if self.num_groups < 1:
            raise ValidationError("Debe existir al menos un grupo")
        for predicted, true, group in self.records:
            if not 0 <= group < self.num_groups:
                raise ValidationError(f"Grupo fuera de rango: {group}")


@dataclass(frozen=True)
class GroupedAccuracy:
    overall: float
    per_group: tuple
    group_sizes: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "per_group", tuple(float(a) for a in self.per_group))
        if not self.per_group:
            raise ValidationError("per_group no puede estar vacío")
        values = (self.overall,) + self.per_group
        if any(not 0.0 <= a <= 1.0 for a in values):
            raise ValidationError("Las precisiones deben estar en [0, 1]")
        if self.group_sizes is None:
            return
        sizes = tuple(self.group_sizes)
        object.__setattr__(self, "group_sizes", sizes)
        if len(sizes) != len(self.per_group) or any(s <= 0 for s in sizes):
            raise ValidationError("group_sizes debe tener un tamaño positivo por grupo")
        weighted = sum(s * a for s, a in zip(sizes, self.per_group)) / sum(sizes)
        if abs(weighted - self.overall) > _SIZE_TOLERANCE:
            raise ValidationError(
                "La precisión total no coincide con la media ponderada de los grupos"
            )

    @property
    def num_groups(self) -> int:
        return len(self.per_group)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "per_group": list(self.per_group),
            "group_sizes": list(self.group_sizes) if self.group_sizes else None,
        }


def group_accuracy(outcomes: LabeledOutcomes) -> GroupedAccuracy:
    correct = [0] * outcomes.num_groups
    sizes = [0] * outcomes.num_groups
    for predicted, true, group in outcomes.records:
        sizes[group] += 1
        if predicted == true:
            correct[group] += 1

    missing = [g for g, size in enumerate(sizes) if size == 0]
    if missing:
        raise EmptyGroup(f"Grupos sin datos: {missing}")

    return GroupedAccuracy(
        overall=sum(correct) / sum(sizes),
        per_group=tuple(c / s for c, s in zip(correct, sizes)),
        group_sizes=tuple(sizes),
    )


def unfairness(ga: GroupedAccuracy) -> float:
    return sum(abs(a - ga.overall) for a in ga.per_group)


def relative_fairness_change(candidate_u: float, baseline_u: float) -> float:
    """Cambio relativo frente a la referencia; positivo significa más justo."""
    if baseline_u == 0:
        raise ZeroBaseline("La injusticia de referencia es 0: el cambio relativo no está definido")
    return (baseline_u - candidate_u) / baseline_u


def load_outcomes(path, num_groups=None) -> LabeledOutcomes:
    """
    Lee predicciones desde JSON-lines:
    {"predicted": int, "true": int, "group": int} por línea.
    Si num_groups no se indica, se toma el mayor grupo observado + 1.
    """
    records = []
    for raw in read_jsonl(path):
        try:
            records.append((int(raw["predicted"]), int(raw["true"]), int(raw["group"])))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Registro de predicción inválido en {path}: {raw!r}") from e
    if num_groups is None:
        num_groups = max((g for _, _, g in records), default=-1) + 1
    return LabeledOutcomes(records=tuple(records), num_groups=num_groups)


def load_grouped(path) -> list:
    """Lee precisiones ya agregadas: {"overall": x, "per_group": [...], "group_sizes": [...]}."""
    results = []
    for raw in read_jsonl(path):
        try:
            results.append(
                GroupedAccuracy(
                    overall=float(raw["overall"]),
                    per_group=tuple(raw["per_group"]),
                    group_sizes=tuple(raw["group_sizes"]) if raw.get("group_sizes") else None,
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Registro de precisión inválido en {path}: {raw!r}") from e
    return results
