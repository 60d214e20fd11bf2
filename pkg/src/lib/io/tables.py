import csv
import io
import json
import logging
import math
from abc import ABC, abstractmethod
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Type

from ...exceptions import ConfigError
from ..fit.problem import ObservedMap

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("offset_hz", "phase_deg", "port_out", "port_in", "value", "value_db", "flag")
NOISE_COLUMNS = ("offset_hz", "phase_deg", "port_out", "port_in", "value", "power_w_hz", "flag")


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


class TableWriter(ABC):
    """Renders rows plus the resolved config that produced them."""

    def __init__(self, precision: int = 10) -> None:
        self.precision = precision

    def format_value(self, value):
        if isinstance(value, bool) or not isinstance(value, float):
            return value
        if math.isnan(value):
            return "nan"
        return f"{value:.{self.precision}e}"

    @abstractmethod
    def render(self, columns: Sequence[str], rows: Iterable[dict], header: dict) -> str: ...

    def write(self, path: Optional[Path], columns: Sequence[str], rows: Iterable[dict], header: dict) -> str:
        text = self.render(columns, rows, header)
        if path is not None:
            Path(path).write_text(text)
            logger.info(f"Wrote {type(self).__name__.removesuffix('TableWriter').lower()} table to {path}")
        return text


class CsvTableWriter(TableWriter):
    def render(self, columns: Sequence[str], rows: Iterable[dict], header: dict) -> str:
        buffer = io.StringIO()
        for line in json.dumps(header, indent=1, sort_keys=True).splitlines():
            buffer.write(f"# {line}\n")
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([self.format_value(row.get(column, "")) for column in columns])
        return buffer.getvalue()


class JsonTableWriter(TableWriter):
    def format_value(self, value):
        if isinstance(value, float):
            return None if math.isnan(value) else float(f"{value:.{self.precision}e}")
        return value

    def render(self, columns: Sequence[str], rows: Iterable[dict], header: dict) -> str:
        body = [{column: self.format_value(row.get(column)) for column in columns} for row in rows]
        return json.dumps({"config": header, "rows": body}, indent=2) + "\n"


table_writers: dict[OutputFormat, Type[TableWriter]] = {
    OutputFormat.CSV: CsvTableWriter,
    OutputFormat.JSON: JsonTableWriter,
}


def get_writer(output_format: OutputFormat, precision: int = 10) -> TableWriter:
    return table_writers[output_format](precision)


def _float(row: dict, column: str, line: int) -> float:
    try:
        return float(row[column])
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"Data row {line}: column {column!r} is missing or not a number ({row.get(column)!r})")


def _json_rows(text: str) -> list[dict]:
    payload = json.loads(text)
    rows = payload["rows"] if isinstance(payload, dict) else payload
    if not isinstance(rows, list):
        raise ConfigError("JSON data must hold a list of rows")
    return rows


def _csv_rows(text: str) -> list[dict]:
    lines = [line for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    missing = {"offset_hz", "phase_deg", "port_out", "value"} - set(reader.fieldnames or ())
    if missing:
        raise ConfigError(f"Data table lacks columns {sorted(missing)}")
    return list(reader)


def load_observed(path: Path) -> ObservedMap:
    """Reads a measured map written in the sweep/noise table layout.

    Flagged and non-finite rows are skipped; a ``sigma`` column, when present,
    weights the fit.
    """
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read data {path}: {e}")
    try:
        rows = _json_rows(text) if Path(path).suffix == ".json" else _csv_rows(text)
    except (json.JSONDecodeError, KeyError, csv.Error) as e:
        raise ConfigError(f"Cannot parse data {path}: {e}")

    columns = {"offsets": [], "phases": [], "port_out": [], "port_in": [], "values": [], "sigma": []}
    has_sigma = bool(rows) and all(row.get("sigma") not in (None, "") for row in rows)
    skipped = 0
    for line, row in enumerate(rows, start=1):
        # JSON tables write unsolved points as null
        value = math.nan if "value" in row and row["value"] is None else _float(row, "value", line)
        if not math.isfinite(value) or int(float(row.get("flag") or 0)):
            skipped += 1
            continue
        columns["offsets"].append(_float(row, "offset_hz", line))
        columns["phases"].append(math.radians(_float(row, "phase_deg", line)))
        columns["port_out"].append(str(row["port_out"]))
        columns["port_in"].append(str(row.get("port_in") or ""))
        columns["values"].append(value)
        if has_sigma:
            sigma = _float(row, "sigma", line)
            if sigma <= 0:
                raise ConfigError(f"Data row {line}: sigma must be positive, got {sigma}")
            columns["sigma"].append(sigma)

    if not columns["values"]:
        raise ConfigError(f"Data {path} holds no usable rows")
    if skipped:
        logger.warning(f"Skipped {skipped} flagged or non-finite rows in {path}")
    return ObservedMap(
        offsets=columns["offsets"],
        phases=columns["phases"],
        port_out=columns["port_out"],
        port_in=columns["port_in"],
        values=columns["values"],
        sigma=columns["sigma"] if has_sigma else None,
    )
