"""Column-typed in-memory tables and CSV round-tripping."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

__all__ = ["DataError", "Dataset", "read_csv", "write_csv"]


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rectangular table of numeric (float64) and categorical (str) columns.

    Categorical levels are kept in first-appearance order; the first level
    is the reference category for dummy coding.
    """

    columns: Mapping[str, np.ndarray]
    levels: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if len(lengths) > 1:
            raise DataError(f"columns have differing lengths: {sorted(lengths)}")
        for v in self.columns.values():
            v.flags.writeable = False

    @classmethod
    def from_columns(cls, columns: Mapping[str, Sequence]) -> Dataset:
        """Build from plain sequences; non-numeric columns become categorical."""
        out: dict[str, np.ndarray] = {}
        levels: dict[str, tuple[str, ...]] = {}
        for name, values in columns.items():
            arr = np.asarray(values)
            if arr.dtype.kind in "biuf":
                arr = arr.astype(np.float64)
                if np.isnan(arr).any():
                    raise DataError(f"column {name!r} has missing values")
                out[name] = arr
            else:
                strs = np.array([str(v) for v in values], dtype=object)
                out[name] = strs
                levels[name] = tuple(dict.fromkeys(strs.tolist()))
        return cls(out, levels)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.columns)

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    def kind(self, name: str) -> str:
        self.require(name)
        return "categorical" if name in self.levels else "numeric"

    def is_numeric(self, name: str) -> bool:
        return self.kind(name) == "numeric"

    def require(self, *names: str):
        for name in names:
            if name not in self.columns:
                raise DataError(f"unknown column {name!r}")

    def __getitem__(self, name: str) -> np.ndarray:
        self.require(name)
        return self.columns[name]

    def __contains__(self, name: str) -> bool:
        return name in self.columns

    def take(self, rows: np.ndarray) -> Dataset:
        """Row subset; categorical level lists are preserved."""
        return Dataset({k: v[rows] for k, v in self.columns.items()}, dict(self.levels))

    def select(self, names: Sequence[str]) -> Dataset:
        self.require(*names)
        return Dataset(
            {k: self.columns[k] for k in names},
            {k: v for k, v in self.levels.items() if k in names},
        )

    def equals(self, other: Dataset) -> bool:
        if self.names != other.names or dict(self.levels) != dict(other.levels):
            return False
        return all(np.array_equal(self.columns[k], other.columns[k]) for k in self.names)


def _parse_float(text: str) -> float | None:
    # float() also takes "inf" and "1_000"; neither is a decimal number here
    if "_" in text:
        return None
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def read_csv(source: str | os.PathLike | io.TextIOBase) -> Dataset:
    """Load an RFC-4180 CSV with a header row.

    A column is numeric when every value parses as a decimal number;
    empty cells are rejected as missing values.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_csv(fh)
    rows = list(csv.reader(source))
    if not rows:
        raise DataError("empty CSV: no header row")
    header = rows[0]
    if len(set(header)) != len(header):
        raise DataError("duplicate column names in header")
    body = rows[1:]
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"line {i}: expected {len(header)} fields, found {len(row)}")

    columns: dict[str, np.ndarray] = {}
    levels: dict[str, tuple[str, ...]] = {}
    for j, name in enumerate(header):
        raw = [row[j].strip() for row in body]
        for i, cell in enumerate(raw):
            if cell == "" or cell.upper() in ("NA", "NAN"):
                raise DataError(f"missing value in column {name!r} at line {i + 2}")
        parsed = [_parse_float(c) for c in raw]
        if all(p is not None for p in parsed):
            columns[name] = np.array(parsed, dtype=np.float64)
        else:
            columns[name] = np.array(raw, dtype=object)
            levels[name] = tuple(dict.fromkeys(raw))
    return Dataset(columns, levels)


def format_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return str(v)


def write_csv(data: Dataset, target: str | os.PathLike | io.TextIOBase) -> None:
    """Write in the dialect :func:`read_csv` expects; floats use shortest
    round-trip repr so output is byte-stable."""
    if isinstance(target, (str, os.PathLike)):
        with open(target, "w", newline="", encoding="utf-8") as fh:
            write_csv(data, fh)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(data.names)
    cols = [data.columns[k] for k in data.names]
    for i in range(data.n):
        writer.writerow([format_value(c[i]) for c in cols])
