from __future__ import annotations

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import typer
from rich.console import Console

from .exceptions import InvalidParams

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence
    from typing import Any, TypeAlias

    # The logging level for logging e.g. CRITICAL or WARNING
    Severity: TypeAlias = int

# Tables go to stdout, messages to stderr
console = Console(stderr=True)


def fmt_float(value: float | complex | None) -> str:
    """Shortest decimal that round-trips the binary64 value (at most 17 significant digits)."""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def grid(x_from: float, x_to: float, x_steps: int) -> list[float]:
    """Inclusive uniform grid, like numpy.linspace but returning python floats."""
    if x_steps < 1:
        raise InvalidParams("x_steps must be at least 1")
    if x_steps == 1:
        return [float(x_from)]
    return [float(x) for x in np.linspace(x_from, x_to, x_steps)]


def table_to_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt_float(cell) if isinstance(cell, (float, np.floating)) else cell for cell in row])
    return buffer.getvalue()


def table_to_json(header: Sequence[str], rows: Iterable[Sequence[Any]], metadata: dict | None = None) -> str:
    """JSON envelope. Floats keep their shortest round-trip repr through the json module."""
    records = []
    for row in rows:
        record = {}
        for key, cell in zip(header, row):
            if isinstance(cell, np.floating):
                cell = float(cell)
            if isinstance(cell, float) and not math.isfinite(cell):
                cell = fmt_float(cell)
            record[key] = cell
        records.append(record)
    envelope = {"result": records, "metadata": metadata or {}, "warnings": (metadata or {}).get("warnings", [])}
    return json.dumps(envelope, indent=2, sort_keys=True)


def write_output(text: str, out: Path | None) -> None:
    """Write to a file or stdout. Output writing stays single-threaded."""
    if out is None:
        typer.echo(text, nl=not text.endswith("\n"))
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as file:
        file.write(text)


def severity_to_color(severity: Severity) -> str:
    if severity > logging.WARNING:
        return "[red]"
    elif severity == logging.WARNING:
        return "[yellow]"
    elif severity <= logging.INFO:
        return ""  # No color
    # No color
    return ""


def print_and_log(logger: logging.Logger, msg: str, severity: Severity = logging.INFO):
    """Print to the user and log. Changes print color based on the severity."""
    console.print(f"{severity_to_color(severity)} {logging.getLevelName(severity)}: {msg}")
    logger.log(severity, msg)
