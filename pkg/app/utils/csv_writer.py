"""Stable CSV emission: fixed header, fixed column order, '%.9f' floats."""
from __future__ import annotations

import csv
from dataclasses import astuple, fields, is_dataclass
from pathlib import Path
from typing import Any, Iterable, List, Sequence

FLOAT_FORMAT = "%.9f"


def format_cell(value: Any) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return FLOAT_FORMAT % value
    if hasattr(value, "item"):
        return format_cell(value.item())
    return str(value)


def header_of(row_type: type) -> List[str]:
    return [f.name for f in fields(row_type)]


def row_cells(row: Any) -> List[str]:
    values = astuple(row) if is_dataclass(row) else tuple(row)
    return [format_cell(value) for value in values]


def write_csv(path: Path | str, header: Sequence[str], rows: Iterable[Any]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row_cells(row))
    return target


class CsvLog:
    """Append-as-you-go CSV; every row is flushed so a crash keeps what was written."""

    def __init__(self, path: Path | str, header: Sequence[str]) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._handle = self.path.open("w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._handle, lineterminator="\n")
        self._writer.writerow(header)
        self._handle.flush()

    def append(self, row: Any) -> None:
        self._writer.writerow(row_cells(row))
        self._handle.flush()

    def close(self) -> None:
        if not self._handle.closed:
            self._handle.close()

    def __enter__(self) -> "CsvLog":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()
