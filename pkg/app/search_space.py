"""
Espacio de búsqueda basado en bloques.

Cada bloque buscable elige tipo (MB, DB, RB, CB), kernel K y canales CH2/CH3,
o bien se omite. CH1 nunca se guarda: se deriva del CH3 del bloque activo anterior
(o de los canales de salida de la cabecera congelada).
"""
import itertools
from dataclasses import asdict, dataclass, fields, replace

from .errors import ConfigError, InvalidArchitecture, MalformedActions, SpaceTooLarge

BLOCK_TYPES = ("MB", "DB", "RB", "CB")

# MB y DB son bloques tipo MobileNetV2 con stride 2 y 1 respectivamente.
STRIDES = {"MB": 2, "DB": 1, "RB": 1, "CB": 1}

DECISIONS = ("skip", "block_type", "kernel", "ch2", "ch3")
DECISIONS_PER_BLOCK = len(DECISIONS)

BYTES_PER_PARAM = 4


def _positive_int(name, value):
    if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
        raise ConfigError(f"{name} debe ser un entero positivo (recibido {value!r})")
    return value


def _choice_set(name, values, odd=False):
    values = tuple(values)
    if not values:
        raise ConfigError(f"{name} no puede estar vacío")
    for v in values:
        _positive_int(name, v)
        if odd and v % 2 == 0:
            raise ConfigError(f"{name} solo admite valores impares (recibido {v})")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigError(f"{name} debe ser estrictamente creciente y sin duplicados")
    return values


@dataclass(frozen=True)
class BlockChoice:
    block_type: str
    kernel: int
    ch2: int
    ch3: int
    skipped: bool = False

    @property
    def stride(self) -> int:
        return STRIDES[self.block_type]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SearchSpaceConfig:
    num_searchable_blocks: int
    kernel_choices: tuple = (3, 5, 7)
    ch2_choices: tuple = (8, 16, 24, 32)
    ch3_choices: tuple = (8, 16, 24, 32)
    allow_skip: bool = True
    header_out_channels: int = 16
    input_resolution: int = 224
    block_types: tuple = BLOCK_TYPES

    def __post_init__(self):
        _positive_int("num_searchable_blocks", self.num_searchable_blocks)
        _positive_int("header_out_channels", self.header_out_channels)
        _positive_int("input_resolution", self.input_resolution)
        if not isinstance(self.allow_skip, bool):
            raise ConfigError("allow_skip debe ser booleano")
        object.__setattr__(
            self, "kernel_choices", _choice_set("kernel_choices", self.kernel_choices, odd=True)
        )
        object.__setattr__(self, "ch2_choices", _choice_set("ch2_choices", self.ch2_choices))
        object.__setattr__(self, "ch3_choices", _choice_set("ch3_choices", self.ch3_choices))

        types = tuple(self.block_types)
        if not types or any(t not in BLOCK_TYPES for t in types):
            raise ConfigError(f"block_types debe ser un subconjunto de {BLOCK_TYPES}")
        order = [BLOCK_TYPES.index(t) for t in types]
        if any(b <= a for a, b in zip(order, order[1:])):
            raise ConfigError("block_types debe seguir el orden MB, DB, RB, CB sin duplicados")
        object.__setattr__(self, "block_types", types)

    @classmethod
    def from_dict(cls, data: dict) -> "SearchSpaceConfig":
        if not isinstance(data, dict):
            raise ConfigError("La configuración del espacio debe ser un objeto JSON")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Campos desconocidos en el espacio de búsqueda: {', '.join(unknown)}")
        if "num_searchable_blocks" not in data:
            raise ConfigError("Falta num_searchable_blocks")
        try:
            return cls(**data)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("kernel_choices", "ch2_choices", "ch3_choices", "block_types"):
            out[key] = list(out[key])
        return out

    def with_changes(self, **changes) -> "SearchSpaceConfig":
        return replace(self, **changes)

    @property
    def placeholder(self) -> BlockChoice:
        """Representación canónica de un bloque omitido."""
        return BlockChoice(
            block_type=self.block_types[0],
            kernel=self.kernel_choices[0],
            ch2=self.ch2_choices[0],
            ch3=self.ch3_choices[0],
            skipped=True,
        )

    @property
    def arities(self) -> tuple:
        return (
            2 if self.allow_skip else 1,
            len(self.block_types),
            len(self.kernel_choices),
            len(self.ch2_choices),
            len(self.ch3_choices),
        )

    @property
    def sequence_length(self) -> int:
        return DECISIONS_PER_BLOCK * self.num_searchable_blocks


@dataclass(frozen=True)
class ArchitectureSpec:
    blocks: tuple
    header_out_channels: int

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def channel_chain(self):
        """
        Devuelve (posición, bloque, ch_in) para cada bloque activo.
        Los bloques omitidos no cambian el CH1 de los siguientes.
        """
        chain = []
        ch_in = self.header_out_channels
        for index, block in enumerate(self.blocks):
            if block.skipped:
                continue
            chain.append((index, block, ch_in))
            ch_in = block.ch3
        return chain

    @property
    def out_channels(self) -> int:
        chain = self.channel_chain()
        return chain[-1][1].ch3 if chain else self.header_out_channels

    def to_dict(self) -> dict:
        return {
            "header_out_channels": self.header_out_channels,
            "blocks": [b.to_dict() for b in self.blocks],
        }

    @classmethod
    def from_dict(cls, data: dict, cfg: SearchSpaceConfig = None) -> "ArchitectureSpec":
        """
        Construye una arquitectura desde JSON.
        Los bloques omitidos pueden escribirse como {"skipped": true} si se pasa cfg.
        """
        try:
            header = data.get("header_out_channels", cfg.header_out_channels if cfg else None)
            blocks = []
            for raw in data["blocks"]:
                if raw.get("skipped") and cfg is not None:
                    blocks.append(cfg.placeholder)
                    continue
                blocks.append(
                    BlockChoice(
                        block_type=raw["block_type"],
                        kernel=_positive_int("kernel", raw["kernel"]),
                        ch2=_positive_int("ch2", raw["ch2"]),
                        ch3=_positive_int("ch3", raw["ch3"]),
                        skipped=bool(raw.get("skipped", False)),
                    )
                )
        except (AttributeError, KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Arquitectura mal formada: {e}") from e
        if header is None:
            raise ConfigError("Falta header_out_channels en la arquitectura")
        return cls(blocks=tuple(blocks), header_out_channels=_positive_int("header_out_channels", header))


def _block_is_valid(block: BlockChoice, cfg: SearchSpaceConfig) -> bool:
    if block.skipped:
        return cfg.allow_skip and block == cfg.placeholder
    return (
        block.block_type in cfg.block_types
        and block.kernel in cfg.kernel_choices
        and block.ch2 in cfg.ch2_choices
        and block.ch3 in cfg.ch3_choices
    )


def validate(arch: ArchitectureSpec, cfg: SearchSpaceConfig) -> bool:
    if len(arch.blocks) != cfg.num_searchable_blocks:
        return False
    if arch.header_out_channels != cfg.header_out_channels:
        return False
    if not all(_block_is_valid(b, cfg) for b in arch.blocks):
        return False
    return any(not b.skipped for b in arch.blocks)


def require_valid(arch: ArchitectureSpec, cfg: SearchSpaceConfig) -> ArchitectureSpec:
    if not validate(arch, cfg):
        if arch.blocks and all(b.skipped for b in arch.blocks):
            raise InvalidArchitecture("Todos los bloques están omitidos: la red quedaría vacía")
        raise InvalidArchitecture("La arquitectura no pertenece al espacio de búsqueda")
    return arch


def per_block_count(cfg: SearchSpaceConfig) -> int:
    types, kernels, ch2, ch3 = cfg.arities[1:]
    return types * kernels * ch2 * ch3 + (1 if cfg.allow_skip else 0)


def cardinality(cfg: SearchSpaceConfig) -> int:
    """Número exacto de arquitecturas válidas (se excluye la red totalmente omitida)."""
    return per_block_count(cfg) ** cfg.num_searchable_blocks - (1 if cfg.allow_skip else 0)


def block_options(cfg: SearchSpaceConfig) -> list:
    """Opciones de un bloque en orden canónico: activos primero, la omisión al final."""
    options = [
        BlockChoice(t, k, c2, c3)
        for t, k, c2, c3 in itertools.product(
            cfg.block_types, cfg.kernel_choices, cfg.ch2_choices, cfg.ch3_choices
        )
    ]
    if cfg.allow_skip:
        options.append(cfg.placeholder)
    return options


def enumerate_architectures(cfg: SearchSpaceConfig, limit: int):
    """
    Recorre todas las arquitecturas válidas exactamente una vez, en orden lexicográfico
    sobre (skipped, block_type, kernel, ch2, ch3) por bloque.
    """
    total = cardinality(cfg)
    if total > limit:
        raise SpaceTooLarge(f"El espacio tiene {total} arquitecturas (límite {limit})")
    return _walk(cfg)


def _walk(cfg: SearchSpaceConfig):
    options = block_options(cfg)
    for combo in itertools.product(options, repeat=cfg.num_searchable_blocks):
        if all(b.skipped for b in combo):
            continue
        yield ArchitectureSpec(blocks=combo, header_out_channels=cfg.header_out_channels)


def encode(arch: ArchitectureSpec, cfg: SearchSpaceConfig) -> tuple:
    """Secuencia de acciones: 5 decisiones por bloque (skip?, tipo, K, CH2, CH3)."""
    require_valid(arch, cfg)
    actions = []
    for block in arch.blocks:
        if block.skipped:
            actions.extend((0, 0, 0, 0, 0))
            continue
        actions.extend(
            (
                1 if cfg.allow_skip else 0,
                cfg.block_types.index(block.block_type),
                cfg.kernel_choices.index(block.kernel),
                cfg.ch2_choices.index(block.ch2),
                cfg.ch3_choices.index(block.ch3),
            )
        )
    return tuple(actions)


def decode(actions, cfg: SearchSpaceConfig) -> ArchitectureSpec:
    actions = tuple(actions)
    if len(actions) != cfg.sequence_length:
        raise MalformedActions(
            f"Se esperaban {cfg.sequence_length} acciones y llegaron {len(actions)}"
        )
    arities = cfg.arities
    blocks = []
    for start in range(0, len(actions), DECISIONS_PER_BLOCK):
        chunk = actions[start:start + DECISIONS_PER_BLOCK]
        for index, arity in zip(chunk, arities):
            if isinstance(index, bool) or not isinstance(index, int) or not 0 <= index < arity:
                raise MalformedActions(f"Índice de acción fuera de rango: {index!r}")
        skip, t, k, c2, c3 = chunk
        if cfg.allow_skip and skip == 0:
            if any(chunk[1:]):
                raise MalformedActions("Un bloque omitido debe usar el índice 0 en el resto de decisiones")
            blocks.append(cfg.placeholder)
            continue
        blocks.append(
            BlockChoice(
                block_type=cfg.block_types[t],
                kernel=cfg.kernel_choices[k],
                ch2=cfg.ch2_choices[c2],
                ch3=cfg.ch3_choices[c3],
            )
        )
    return ArchitectureSpec(blocks=tuple(blocks), header_out_channels=cfg.header_out_channels)


def encoding_key(actions) -> str:
    return "-".join(str(a) for a in actions)


def parse_encoding_key(key: str) -> tuple:
    try:
        return tuple(int(part) for part in key.split("-"))
    except ValueError as e:
        raise MalformedActions(f"Codificación inválida: {key!r}") from e


def block_params(block: BlockChoice, ch_in: int) -> int:
    """
    Conteo analítico aproximado (sin batch-norm ni bias).
    MB/DB: expansión 1x1, depthwise KxK y proyección 1x1.
    """
    k2 = block.kernel ** 2
    if block.block_type == "CB":
        return k2 * ch_in * block.ch3
    if block.block_type == "RB":
        shortcut = ch_in * block.ch3 if ch_in != block.ch3 else 0
        return k2 * ch_in * block.ch2 + k2 * block.ch2 * block.ch3 + shortcut
    return ch_in * block.ch2 + k2 * block.ch2 + block.ch2 * block.ch3


def param_count(arch: ArchitectureSpec) -> int:
    return sum(block_params(block, ch_in) for _, block, ch_in in arch.channel_chain())


def storage_mb(params: int) -> float:
    return params * BYTES_PER_PARAM / 2 ** 20


def describe(arch: ArchitectureSpec) -> str:
    """Resumen textual por bloque de una arquitectura."""
    lines = [f"cabecera congelada: {arch.header_out_channels} canales de salida"]
    ch_in = arch.header_out_channels
    for index, block in enumerate(arch.blocks, start=1):
        if block.skipped:
            lines.append(f"bloque {index:>2}: (omitido)")
            continue
        lines.append(
            f"bloque {index:>2}: {block.block_type} K={block.kernel} "
            f"{ch_in}->{block.ch2}->{block.ch3} stride={block.stride}"
        )
        ch_in = block.ch3
    params = param_count(arch)
    lines.append(f"parámetros: {params:,} ({storage_mb(params):.2f} MB)")
    return "\n".join(lines)
