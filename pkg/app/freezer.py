"""
Productor de la red base: decide qué bloques de la cabecera se congelan.

1. Se registran los mapas de características de cada capa para cada grupo.
2. Se mide la variación entre grupos por capa (norma L2 entre medias de grupo).
3. El umbral es freeze_ratio × variación máxima; la primera capa que lo alcanza
   es el punto de corte. Todo lo anterior queda congelado.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroVariations, DimensionMismatch, InconsistentMap, ValidationError
from .io_utils import read_jsonl
from .latency import LatencyTable, blocks_latency, output_resolution
from .search_space import ArchitectureSpec, SearchSpaceConfig

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("none", "per_dimension")
DEFAULT_FREEZE_RATIO = 0.5


@dataclass(frozen=True)
class FeatureTrace:
    """layers[i] corresponde a la capa i+1: {grupo: matriz (vectores, dimensión)}."""

    layers: tuple

    def __post_init__(self):
        if not self.layers:
            raise ValidationError("La traza no tiene capas")
        groups = sorted(self.layers[0])
        if len(groups) < 2:
            raise ValidationError("La traza necesita al menos 2 grupos")
        for number, layer in enumerate(self.layers, start=1):
            if sorted(layer) != groups:
                raise ValidationError(f"La capa {number} no contiene todos los grupos")
            dims = {matrix.shape[1] for matrix in layer.values()}
            if len(dims) != 1:
                raise DimensionMismatch(f"Dimensiones distintas en la capa {number}: {sorted(dims)}")
            if any(matrix.shape[0] == 0 for matrix in layer.values()):
                raise ValidationError(f"La capa {number} tiene un grupo sin vectores")

    @property
    def groups(self) -> list:
        return sorted(self.layers[0])

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @classmethod
    def from_records(cls, records) -> "FeatureTrace":
        collected = {}
        for raw in records:
            try:
                layer, group = int(raw["layer"]), int(raw["group"])
                features = [float(x) for x in raw["features"]]
            except (KeyError, TypeError, ValueError) as e:
                raise ValidationError(f"Registro de traza inválido: {raw!r}") from e
            collected.setdefault(layer, {}).setdefault(group, []).append(features)

        numbers = sorted(collected)
        if numbers != list(range(1, len(numbers) + 1)):
            raise ValidationError("Las capas de la traza deben numerarse 1..n sin huecos")

        layers = []
        for number in numbers:
            layer = {}
            for group, vectors in collected[number].items():
                if len({len(v) for v in vectors}) != 1:
                    raise DimensionMismatch(f"Vectores de distinta dimensión en la capa {number}")
                layer[group] = np.asarray(vectors, dtype=float)
            layers.append(layer)
        return cls(layers=tuple(layers))

    def to_records(self) -> list:
        records = []
        for number, layer in enumerate(self.layers, start=1):
            for group in sorted(layer):
                for vector in layer[group]:
                    records.append({"layer": number, "group": group, "features": vector.tolist()})
        return records


@dataclass(frozen=True)
class FreezePlan:
    variations: tuple
    threshold: float
    split_layer: int
    freeze_ratio: float

    @property
    def frozen_count(self) -> int:
        return self.split_layer - 1

    def to_dict(self) -> dict:
        return {
            "variations": list(self.variations),
            "threshold": self.threshold,
            "split_layer": self.split_layer,
            "frozen_count": self.frozen_count,
            "freeze_ratio": self.freeze_ratio,
        }


@dataclass(frozen=True)
class FrozenSpace:
    """Espacio reducido tras congelar la cabecera de la red base."""

    frozen_blocks: int
    space: SearchSpaceConfig
    table: LatencyTable
    header: ArchitectureSpec


def load_trace(path) -> FeatureTrace:
    trace = FeatureTrace.from_records(read_jsonl(path))
    logger.info("[Congelado] Traza cargada: %d capas, %d grupos", trace.num_layers, len(trace.groups))
    return trace


def layer_variation(trace: FeatureTrace, normalization: str = "none") -> list:
    """
    Variación entre grupos por capa.
    Con 2 grupos es ‖μ0 − μ1‖₂; con más grupos, la dispersión de las medias
    alrededor de la media global: sqrt(Σ_g ‖μ_g − μ̄‖²).
    """
    if normalization not in NORMALIZATIONS:
        raise ValidationError(f"Normalización desconocida: {normalization}")
    variations = []
    for layer in trace.layers:
        means = np.stack([layer[g].mean(axis=0) for g in sorted(layer)])
        if len(means) == 2:
            value = float(np.linalg.norm(means[0] - means[1]))
        else:
            centre = means.mean(axis=0)
            value = float(np.sqrt(((means - centre) ** 2).sum()))
        if normalization == "per_dimension":
            value /= np.sqrt(means.shape[1])
        variations.append(value)
    return variations


def split_point(variations, freeze_ratio: float = DEFAULT_FREEZE_RATIO) -> FreezePlan:
    try:
        variations = tuple(float(v) for v in variations)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Variaciones no numéricas: {e}") from e
    if not variations:
        raise ValidationError("No hay variaciones para analizar")
    if any(v < 0 for v in variations):
        raise ValidationError("Las variaciones deben ser no negativas")
    if not 0.0 < freeze_ratio <= 1.0:
        raise ValidationError("freeze_ratio debe estar en (0, 1]")
    peak = max(variations)
    if peak == 0:
        raise AllZeroVariations("Todas las capas tienen variación 0")

    threshold = freeze_ratio * peak
    # Una capa exactamente en el umbral ya es buscable.
    split_layer = next(i for i, v in enumerate(variations, start=1) if v >= threshold)
    return FreezePlan(
        variations=variations,
        threshold=threshold,
        split_layer=split_layer,
        freeze_ratio=freeze_ratio,
    )


def _check_map(plan: FreezePlan, backbone_blocks: int, layer_to_block_map) -> tuple:
    mapping = tuple(layer_to_block_map)
    if len(mapping) != len(plan.variations):
        raise InconsistentMap(
            f"El mapa tiene {len(mapping)} capas y el perfil {len(plan.variations)}"
        )
    if any(isinstance(b, bool) or not isinstance(b, int) for b in mapping):
        raise InconsistentMap("El mapa capa→bloque debe contener enteros")
    if any(not 1 <= b <= backbone_blocks for b in mapping):
        raise InconsistentMap(f"Bloques fuera de rango 1..{backbone_blocks}")
    if any(b < a for a, b in zip(mapping, mapping[1:])):
        raise InconsistentMap("El mapa capa→bloque debe ser no decreciente")
    return mapping


def apply_freeze(plan: FreezePlan, backbone: ArchitectureSpec, layer_to_block_map, cfg: SearchSpaceConfig):
    """
    Congela los bloques de la red base anteriores al bloque que contiene la capa de corte.
    Devuelve (bloques congelados, configuración reducida).
    """
    if len(backbone.blocks) != cfg.num_searchable_blocks:
        raise InconsistentMap(
            f"La red base tiene {len(backbone.blocks)} bloques y el espacio {cfg.num_searchable_blocks}"
        )
    mapping = _check_map(plan, len(backbone.blocks), layer_to_block_map)
    frozen = mapping[plan.split_layer - 1] - 1
    if frozen == 0:
        return 0, cfg

    header = ArchitectureSpec(blocks=backbone.blocks[:frozen], header_out_channels=backbone.header_out_channels)
    reduced = cfg.with_changes(
        num_searchable_blocks=cfg.num_searchable_blocks - frozen,
        header_out_channels=header.out_channels,
        input_resolution=output_resolution(header, cfg.input_resolution),
    )
    logger.info(
        "[Congelado] %d bloques congelados; quedan %d buscables",
        frozen,
        reduced.num_searchable_blocks,
    )
    return frozen, reduced


def freeze_backbone(
    plan: FreezePlan,
    backbone: ArchitectureSpec,
    layer_to_block_map,
    cfg: SearchSpaceConfig,
    table: LatencyTable,
) -> FrozenSpace:
    """
    Igual que apply_freeze, y además traslada la latencia de los bloques congelados
    a la cabecera de la tabla.
    """
    frozen, reduced = apply_freeze(plan, backbone, layer_to_block_map, cfg)
    header = ArchitectureSpec(blocks=backbone.blocks[:frozen], header_out_channels=backbone.header_out_channels)
    header_ms = blocks_latency(header, table, cfg.input_resolution) if frozen else 0.0
    frozen_table = table.with_header_overhead(table.header_overhead_ms + header_ms)
    return FrozenSpace(frozen_blocks=frozen, space=reduced, table=frozen_table, header=header)


def synthesize_trace(
    num_layers: int = 17,
    divergent_from: int = 13,
    dim: int = 16,
    vectors_per_group: int = 8,
    num_groups: int = 2,
    header_gap: float = 0.05,
    tail_gap: float = 1.0,
    noise: float = 0.01,
    seed: int = 0,
) -> FeatureTrace:
    """
    Traza sintética con cabecera plana y cola divergente: las medias de grupo se
    separan header_gap antes de la capa divergent_from y tail_gap a partir de ella.
    """
    if not 1 <= divergent_from <= num_layers:
        raise ValidationError("divergent_from debe estar entre 1 y num_layers")
    if num_groups < 2:
        raise ValidationError("Se necesitan al menos 2 grupos")
    rng = np.random.default_rng(seed)
    layers = []
    for number in range(1, num_layers + 1):
        gap = tail_gap if number >= divergent_from else header_gap
        common = rng.normal(size=dim)
        layer = {}
        for group in range(num_groups):
            direction = rng.normal(size=dim)
            direction /= np.linalg.norm(direction)
            mean = common + gap * group * direction
            layer[group] = mean + noise * rng.normal(size=(vectors_per_group, dim))
        layers.append(layer)
    return FeatureTrace(layers=tuple(layers))
