"""CSV ingestion, coefficient transforms and report serialization."""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .dataset import Dataset
from .errors import ConfigError, DataFileError
from .experiments import ExperimentReport, Table

FLOAT_FORMAT = ".17g"


@dataclass(frozen=True)
class Transform:
    """Column-wise standardization applied by :func:`load_csv`.

    ``means``/``sds`` are per original feature (0/1 when not standardized);
    ``constant`` flags columns with zero spread, which are left untouched.
    """

    feature_names: tuple
    target: str
    means: np.ndarray
    sds: np.ndarray
    constant: tuple
    intercept: bool

    @property
    def column_names(self) -> tuple:
        return (("intercept",) if self.intercept else ()) + self.feature_names

    def to_original(self, beta) -> tuple[float, np.ndarray]:
        """``(intercept, slopes)`` in the units of the raw feature columns.

        Centering moves mass into the intercept, so a model fitted without
        an intercept column can still report a nonzero offset here.
        """
        beta = np.asarray(beta, dtype=float)
        b0 = float(beta[0]) if self.intercept else 0.0
        slopes = beta[1:] if self.intercept else beta
        orig = slopes / self.sds
        return b0 - float(orig @ self.means), orig


def _parse(cell: str, row: int, col: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise DataFileError(f"row {row}, column {col!r}: {cell!r} is not a number") from None
    if not math.isfinite(value):
        raise DataFileError(f"row {row}, column {col!r}: {cell!r} is not finite")
    return value


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(path, target: str = "y", delimiter: str = ",", standardize: bool = False,
             add_intercept: bool = False, drop_non_numeric: bool = False):
    """Read a headed CSV into ``(Dataset, Transform)``.

    Every non-target column is a feature. A column none of whose cells is a
    number counts as categorical: it is rejected unless ``drop_non_numeric``
    is set. Any other unparseable or non-finite cell is an error naming its
    row (1-based, header is row 1) and column.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            records = list(csv.reader(fh, delimiter=delimiter))
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc.strerror}") from exc
    records = [r for r in records if any(cell.strip() for cell in r)]
    if not records:
        raise DataFileError(f"{path} is empty")
    header = [h.strip() for h in records[0]]
    body = records[1:]
    if not body:
        raise DataFileError(f"{path} has a header but no data rows")
    if len(set(header)) != len(header):
        raise DataFileError(f"{path}: duplicate column names in header")
    if target not in header:
        raise DataFileError(f"{path}: target column {target!r} not found (columns: {header})")
    for i, rec in enumerate(body, start=2):
        if len(rec) != len(header):
            raise DataFileError(f"row {i}: expected {len(header)} fields, found {len(rec)}")

    features = []
    for j, name in enumerate(header):
        if name == target:
            continue
        if not any(_is_number(rec[j].strip()) for rec in body):
            if drop_non_numeric:
                continue
            raise DataFileError(
                f"column {name!r} is non-numeric; drop it or pass drop_non_numeric "
                "(--drop-non-numeric)"
            )
        features.append(j)
    if not features:
        raise DataFileError(f"{path}: no numeric feature columns")

    tj = header.index(target)
    y = np.array([_parse(rec[tj].strip(), i, target) for i, rec in enumerate(body, start=2)])
    X = np.array([[_parse(rec[j].strip(), i, header[j]) for j in features]
                  for i, rec in enumerate(body, start=2)])
    names = tuple(header[j] for j in features)
    p = len(names)
    means, sds = np.zeros(p), np.ones(p)
    constant = tuple(bool(np.all(X[:, j] == X[0, j])) for j in range(p))
    if standardize:
        if X.shape[0] < 2:
            raise DataFileError("standardization needs at least two rows")
        for j in range(p):
            if constant[j]:
                continue
            means[j] = X[:, j].mean()
            sds[j] = X[:, j].std(ddof=1)
        X = (X - means) / sds
    if add_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    transform = Transform(names, target, means, sds, constant, add_intercept)
    return Dataset(X, y), transform


# ----------------------------------------------------------------- writing


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), FLOAT_FORMAT)
    return str(v)


def parse_value(s: str):
    """Inverse of :func:`format_value` for numbers; other strings come back unchanged."""
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_table(table: Table, path) -> Path:
    path = Path(path)
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_table(path) -> Table:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            records = list(csv.reader(fh))
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc.strerror}") from exc
    if not records:
        raise DataFileError(f"{path} is empty")
    return Table(tuple(records[0]), [tuple(parse_value(c) for c in r) for r in records[1:]])


def provenance_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".provenance.yaml")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def write_provenance(path, provenance: dict) -> Path:
    """YAML sibling ``<stem>.provenance.yaml`` of a report file."""
    target = provenance_path(path)
    with _open_for_write(target) as fh:
        yaml.safe_dump(_plain(provenance), fh, sort_keys=True, default_flow_style=False)
    return target


def write_report(report, path, provenance: dict | None = None) -> list:
    """Serialize a report; returns the files written.

    * :class:`ExperimentReport`: per-replicate rows at ``path``, the
      aggregate table at ``<stem>.summary.csv``.
    * :class:`Table` (bias curve, CV table, ...): written as is.

    A provenance file is written whenever provenance is supplied or the
    report carries one.
    """
    path = Path(path)
    written = []
    if isinstance(report, ExperimentReport):
        written.append(write_table(report.rows, path))
        written.append(write_table(report.summary, path.with_name(path.stem + ".summary.csv")))
        provenance = {**report.provenance, **(provenance or {})}
    elif isinstance(report, Table):
        written.append(write_table(report, path))
    else:
        raise ConfigError(f"cannot serialize {type(report).__name__}", key="report")
    if provenance is not None:
        written.append(write_provenance(path, provenance))
    return written


def load_yaml(path) -> dict:
    try:
        with Path(path).open() as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", key="config") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}", key="config") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping at top level", key="config")
    return data


def output_dir(explicit=None) -> Path:
    """``explicit`` if given, else ``$WELSCHREG_OUTPUT_DIR``, else the working directory."""
    if explicit:
        return Path(explicit)
    return Path(os.environ.get("WELSCHREG_OUTPUT_DIR", "."))
