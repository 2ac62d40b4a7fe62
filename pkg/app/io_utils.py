import json
import math
import os

import pandas as pd

from .errors import DataIOError, ParseError


def read_json(path):
    """Lee un documento JSON; los fallos de disco se reportan como DataIOError."""
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise DataIOError(f"No se pudo leer {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"JSON inválido en {path}: {e}") from e


def write_json(path, payload):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as e:
        raise DataIOError(f"No se pudo escribir {path}: {e}") from e


def read_jsonl(path):
    """
    Lee un archivo JSON-lines y devuelve la lista de registros.
    Las líneas vacías se ignoran.
    """
    records = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise ParseError(f"{path}:{lineno}: JSON inválido ({e})") from e
    except OSError as e:
        raise DataIOError(f"No se pudo leer {path}: {e}") from e
    return records


def write_jsonl(path, records):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True))
                fh.write("\n")
    except OSError as e:
        raise DataIOError(f"No se pudo escribir {path}: {e}") from e


def read_csv(path, required_columns, optional_columns=()):
    """
    Lee un CSV con pandas (todas las celdas como texto) y comprueba la cabecera.

    - required_columns deben aparecer exactamente en ese orden al inicio.
    - optional_columns pueden seguir a continuación; cualquier otra columna es un error.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except OSError as e:
        raise DataIOError(f"No se pudo leer {path}: {e}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"CSV mal formado en {path}: {e}") from e

    columns = [c.strip() for c in frame.columns]
    expected = list(required_columns)
    if columns[: len(expected)] != expected:
        raise ParseError(f"Cabecera inválida en {path}: se esperaba {','.join(expected)}")
    extra = columns[len(expected):]
    if any(c not in optional_columns for c in extra):
        raise ParseError(f"Columnas desconocidas en {path}: {','.join(extra)}")
    frame.columns = columns
    return frame


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise DataIOError(f"No se pudo crear el directorio {path}: {e}") from e
    return path


def to_int(value, where):
    try:
        return int(str(value).strip())
    except (TypeError, ValueError) as e:
        raise ParseError(f"{where}: entero inválido {value!r}") from e


def to_float(value, where):
    try:
        number = float(str(value).strip())
    except (TypeError, ValueError) as e:
        raise ParseError(f"{where}: número inválido {value!r}") from e
    if not math.isfinite(number):
        raise ParseError(f"{where}: número no finito {value!r}")
    return number
