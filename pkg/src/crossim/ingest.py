"""Real-dataset preprocessing: CSV loading, integer category codes, z-scoring,
group splitting and permutation sampling."""

from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CrossimError, Element, ExhaustedError, UsageError

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
MISSING = frozenset({"", "?", "NA", "N/A", "nan", "NaN"})


class DataError(CrossimError):
    """Malformed input data."""


@dataclass
class ColumnSchema:
    name: str
    kind: str = NUMERIC
    categories: dict[str, int] = field(default_factory=dict)  # category -> code in 1..K

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"column {self.name!r}: kind must be {NUMERIC!r} or {CATEGORICAL!r}")


def load_schema(path) -> list[ColumnSchema]:
    """Read a schema file: ``{"columns": [{"name": ..., "kind": ...}, ...]}``."""
    obj = json.loads(Path(path).read_text())
    return [ColumnSchema(c["name"], c.get("kind", NUMERIC), dict(c.get("categories", {}))) for c in obj["columns"]]


@dataclass
class RawTable:
    columns: list[str]
    rows: list[list[str]]
    dropped: int = 0

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list[str]:
        try:
            k = self.columns.index(name)
        except ValueError:
            raise DataError(f"no column named {name!r}") from None
        return [r[k] for r in self.rows]

    def subset(self, rows) -> "RawTable":
        return RawTable(self.columns, [self.rows[i] for i in rows])


def load_csv(path, schema: list[ColumnSchema] | None = None) -> RawTable:
    """Load a headered, comma-separated UTF-8 file.

    Rows with a missing value are dropped (the count is logged and kept on
    the table). Numeric columns are validated here so errors carry the file
    line number.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        header = next(reader, None)
        if header is None:
            return RawTable([s.name for s in schema] if schema else [], [])
        header = [h.strip() for h in header]
        if schema is not None:
            missing = [s.name for s in schema if s.name not in header]
            if missing:
                raise DataError(f"{path}: schema columns not in header: {missing}")
        numeric = {header.index(s.name) for s in schema or () if s.kind == NUMERIC}
        rows, dropped = [], 0
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            row = [v.strip() for v in row]
            if any(v in MISSING for v in row):
                dropped += 1
                continue
            for k in numeric:
                try:
                    float(row[k])
                except ValueError:
                    raise DataError(f"{path}:{line}: column {header[k]!r} is not numeric: {row[k]!r}") from None
            rows.append(row)
    if dropped:
        log.info("%s: dropped %d rows with missing values", path, dropped)
    return RawTable(header, rows, dropped)


def fit_categories(values, column: ColumnSchema) -> ColumnSchema:
    """Assign codes 1..K to categories in order of first appearance."""
    cats = dict(column.categories)
    for v in values:
        if v not in cats:
            cats[v] = len(cats) + 1
    return ColumnSchema(column.name, column.kind, cats)


def encode_categoricals(table: RawTable, schema: list[ColumnSchema], fit: bool = True):
    """Numeric matrix with one column per schema entry.

    With ``fit=True`` category maps are extended from the data; with
    ``fit=False`` an unseen category raises. Returns ``(matrix, schema)``
    with the fitted maps.
    """
    out = np.empty((len(table), len(schema)))
    fitted = []
    for k, col in enumerate(schema):
        values = table.column(col.name)
        if col.kind == NUMERIC:
            out[:, k] = np.asarray(values, dtype=np.float64) if values else []
            fitted.append(col)
            continue
        if fit:
            col = fit_categories(values, col)
        try:
            out[:, k] = [col.categories[v] for v in values]
        except KeyError as exc:
            raise DataError(f"column {col.name!r}: unseen category {exc.args[0]!r}") from None
        fitted.append(col)
    return out, fitted


def standardize(matrix: np.ndarray):
    """Z-score each column with population mean/std; constant columns become 0."""
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise UsageError("standardize needs a matrix with at least 2 rows")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    Z = (X - mean) / safe
    Z[:, std == 0] = 0.0
    return Z, mean, std


def split_groups(table: RawTable, column: str, predicate):
    """Partition row indices into (predicate true, predicate false).

    ``predicate`` is a callable on the column value or a collection of
    values that select the first group.
    """
    values = table.column(column)
    if not callable(predicate):
        chosen = {str(v) for v in predicate}
        predicate = chosen.__contains__
    mask = np.fromiter((bool(predicate(v)) for v in values), dtype=bool, count=len(values))
    g1 = np.flatnonzero(mask)
    g2 = np.flatnonzero(~mask)
    if g1.size == 0 or g2.size == 0:
        raise DataError(f"split on {column!r} leaves a group empty ({g1.size}, {g2.size})")
    return g1, g2


class PermutationSampler:
    """Yields a group's points in one fixed random order, never repeating."""

    def __init__(self, features: np.ndarray, group: int, rng: np.random.Generator):
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        self.group = group
        self.order = rng.permutation(len(self.features))
        self.cursor = 0

    def __len__(self) -> int:
        return len(self.order)

    @property
    def remaining(self) -> int:
        return len(self.order) - self.cursor

    def take(self, n: int) -> np.ndarray:
        """Next ``n`` points as a matrix (rows in permutation order)."""
        if n > self.remaining:
            raise ExhaustedError(f"group {self.group}: asked for {n} points, {self.remaining} left")
        rows = self.order[self.cursor:self.cursor + n]
        self.cursor += n
        return self.features[rows]


def next_sample(sampler: PermutationSampler) -> Element:
    pos = sampler.cursor
    row = sampler.take(1)[0]
    return Element(sampler.group, pos, row)


# ---------------------------------------------------------------------------
# Matrix dumps
#
# Binary layout (little-endian): 8-byte magic b"CRSMF64\0", uint32 version (1),
# uint64 rows, uint64 cols, then rows*cols float64 in row-major order.

_MAGIC = b"CRSMF64\0"
_HEADER = struct.Struct("<8sIQQ")


def write_matrix_bin(path, matrix: np.ndarray) -> None:
    X = np.ascontiguousarray(matrix, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, X.shape[0], X.shape[1]))
        fh.write(X.tobytes())


def read_matrix_bin(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, version, rows, cols = _HEADER.unpack(fh.read(_HEADER.size))
        if magic != _MAGIC or version != 1:
            raise DataError(f"{path}: not a crossim matrix file")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != rows * cols:
        raise DataError(f"{path}: expected {rows * cols} values, found {data.size}")
    return data.reshape(rows, cols).astype(np.float64)


def write_matrix_csv(path, matrix: np.ndarray, header=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in np.asarray(matrix, dtype=np.float64):
            w.writerow([repr(float(v)) for v in row])
