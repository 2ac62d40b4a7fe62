"""
Estimación de latencia a partir de tablas por bloque medidas fuera de línea.

La latencia de una arquitectura es la de la cabecera más la suma exacta de las
entradas de sus bloques activos; no se interpola nunca.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import pandas as pd

from .errors import DataIOError, DuplicateSignature, MissingEntry, NonPositiveLatency, ParseError
from .io_utils import read_csv, to_float, to_int
from .search_space import (
    ArchitectureSpec,
    BlockChoice,
    SearchSpaceConfig,
    block_options,
    block_params,
)

logger = logging.getLogger(__name__)

TABLE_COLUMNS = (
    "device",
    "block_type",
    "kernel",
    "ch_in",
    "ch_mid",
    "ch_out",
    "stride",
    "resolution",
    "latency_ms",
)
HEADER_ROW = "HEADER"

# Coeficientes del modelo analítico (ms por MAC) usados por el generador de tablas.
DEVICE_COEFFICIENTS = {
    "raspberry": 1.0e-6,
    "odroid": 2.2e-6,
}


class BlockSignature(NamedTuple):
    block_type: str
    kernel: int
    ch_in: int
    ch_mid: int
    ch_out: int
    stride: int
    resolution: int


@dataclass(frozen=True)
class LatencyTable:
    device_id: str
    entries: dict = field(default_factory=dict)
    header_overhead_ms: float = 0.0

    def __post_init__(self):
        if self.header_overhead_ms < 0:
            raise NonPositiveLatency("La latencia de la cabecera no puede ser negativa")
        for sig, value in self.entries.items():
            if not value > 0:
                raise NonPositiveLatency(f"Latencia no positiva para {sig}")

    def __len__(self):
        return len(self.entries)

    def with_header_overhead(self, header_overhead_ms: float) -> "LatencyTable":
        return replace(self, header_overhead_ms=header_overhead_ms)


def load_table(path) -> LatencyTable:
    frame = read_csv(path, TABLE_COLUMNS)
    entries = {}
    header_overhead = None
    device_id = None

    for lineno, row in enumerate(frame.itertuples(index=False), start=2):
        where = f"{path}:{lineno}"
        values = row._asdict()
        if any(not isinstance(v, str) for v in values.values()):
            raise ParseError(f"{where}: fila incompleta")
        device = values["device"].strip()
        if not device:
            raise ParseError(f"{where}: falta el dispositivo")
        if device_id is None:
            device_id = device
        elif device != device_id:
            raise ParseError(f"{where}: la tabla mezcla dispositivos ({device_id}, {device})")

        latency_ms = to_float(values["latency_ms"], where)
        block_type = values["block_type"].strip()

        if block_type == HEADER_ROW:
            if header_overhead is not None:
                raise DuplicateSignature(f"{where}: fila {HEADER_ROW} repetida")
            if latency_ms < 0:
                raise NonPositiveLatency(f"{where}: latencia de cabecera negativa")
            header_overhead = latency_ms
            continue

        sig = BlockSignature(
            block_type=block_type,
            kernel=to_int(values["kernel"], where),
            ch_in=to_int(values["ch_in"], where),
            ch_mid=to_int(values["ch_mid"], where),
            ch_out=to_int(values["ch_out"], where),
            stride=to_int(values["stride"], where),
            resolution=to_int(values["resolution"], where),
        )
        if sig in entries:
            raise DuplicateSignature(f"{where}: firma repetida {sig}")
        if latency_ms <= 0:
            raise NonPositiveLatency(f"{where}: latencia no positiva ({latency_ms})")
        entries[sig] = latency_ms

    if device_id is None:
        raise ParseError(f"{path}: la tabla está vacía")
    logger.info("[Latencia] Tabla %s cargada: %d entradas", device_id, len(entries))
    return LatencyTable(
        device_id=device_id,
        entries=entries,
        header_overhead_ms=header_overhead or 0.0,
    )


def write_table(table: LatencyTable, path):
    rows = [
        {
            "device": table.device_id,
            "block_type": HEADER_ROW,
            "kernel": 0,
            "ch_in": 0,
            "ch_mid": 0,
            "ch_out": 0,
            "stride": 0,
            "resolution": 0,
            "latency_ms": table.header_overhead_ms,
        }
    ]
    for sig in sorted(table.entries):
        rows.append({"device": table.device_id, **sig._asdict(), "latency_ms": table.entries[sig]})
    try:
        pd.DataFrame(rows, columns=list(TABLE_COLUMNS)).to_csv(path, index=False)
    except OSError as e:
        raise DataIOError(f"No se pudo escribir {path}: {e}") from e


def signatures(arch: ArchitectureSpec, input_resolution: int):
    """Firma de cada bloque activo, con CH1 derivado y resolución acumulada."""
    resolution = input_resolution
    out = []
    for _, block, ch_in in arch.channel_chain():
        out.append(
            BlockSignature(
                block_type=block.block_type,
                kernel=block.kernel,
                ch_in=ch_in,
                ch_mid=block.ch2,
                ch_out=block.ch3,
                stride=block.stride,
                resolution=resolution,
            )
        )
        if block.stride == 2:
            resolution = max(1, resolution // 2)
    return out, resolution


def output_resolution(arch: ArchitectureSpec, input_resolution: int) -> int:
    return signatures(arch, input_resolution)[1]


def blocks_latency(arch: ArchitectureSpec, table: LatencyTable, input_resolution: int) -> float:
    """Suma de las entradas de los bloques activos, sin la cabecera."""
    total = 0.0
    for sig in signatures(arch, input_resolution)[0]:
        try:
            total += table.entries[sig]
        except KeyError:
            raise MissingEntry(sig) from None
    return total


def estimate(arch: ArchitectureSpec, table: LatencyTable, input_resolution: int) -> float:
    return table.header_overhead_ms + blocks_latency(arch, table, input_resolution)


def meets_timing(latency_ms: float, spec) -> bool:
    return latency_ms <= spec.timing_constraint_ms


def analytic_latency(sig: BlockSignature, ms_per_mac: float) -> float:
    """Modelo de coste: parámetros del bloque × píxeles de salida × coeficiente del dispositivo."""
    block = BlockChoice(sig.block_type, sig.kernel, sig.ch_mid, sig.ch_out)
    out_res = max(1, sig.resolution // sig.stride)
    return ms_per_mac * block_params(block, sig.ch_in) * out_res ** 2


def generate_table(
    cfg: SearchSpaceConfig,
    device_id: str = "raspberry",
    ms_per_mac: float = None,
    header_overhead_ms: float = 100.0,
    extra_channels=(),
) -> LatencyTable:
    """
    Tabla sintética que cubre todas las firmas alcanzables desde cfg.
    extra_channels añade valores de CH1 posibles (p. ej. canales de otra cabecera).
    """
    if ms_per_mac is None:
        ms_per_mac = DEVICE_COEFFICIENTS.get(device_id, DEVICE_COEFFICIENTS["raspberry"])
    ch_ins = sorted({cfg.header_out_channels, *cfg.ch3_choices, *extra_channels})
    resolutions = sorted(
        {max(1, cfg.input_resolution >> k) for k in range(cfg.num_searchable_blocks)}
    )
    entries = {}
    for block in block_options(cfg):
        if block.skipped:
            continue
        for ch_in in ch_ins:
            for resolution in resolutions:
                sig = BlockSignature(
                    block.block_type,
                    block.kernel,
                    ch_in,
                    block.ch2,
                    block.ch3,
                    block.stride,
                    resolution,
                )
                entries[sig] = analytic_latency(sig, ms_per_mac)
    logger.info("[Latencia] Tabla sintética %s generada: %d entradas", device_id, len(entries))
    return LatencyTable(device_id=device_id, entries=entries, header_overhead_ms=header_overhead_ms)
