"""File ingestion and deterministic serialization for the command line.

CSV inputs are UTF-8 with a header row and locale-independent numbers
(dot decimal separator). JSON output is deterministic: keys sorted,
floats in shortest round-trip form, NaN and infinities mapped to null.
Weight sets load either from a directory of dense matrix CSVs or from a
TOML/JSON config naming a covariate CSV and a kind per column.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .exceptions import InputError
from .portfolio import CovariatePanel, ReturnsPanel
from .weights import CovariateColumn, WeightSet, build_from_column

__all__ = [
    "read_matrix_csv",
    "read_returns_csv",
    "read_series_csv",
    "read_covariates_dir",
    "load_config",
    "load_weightset",
    "write_weight_csv",
    "dumps_json",
    "write_json",
    "write_rows_csv",
]

_KNOWN_KINDS = ("continuous", "discrete")


def _read_rows(path) -> list:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one record")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise InputError(
                f"{path}: row {i} has {len(row)} fields, header has {width}"
            )
    return rows


def _parse_float(cell: str, path, where: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise InputError(f"{path}: non-numeric value {cell!r} in {where}") from None


def read_matrix_csv(path):
    """Numeric CSV with a header row; returns (column names, float matrix)."""
    rows = _read_rows(path)
    names = [c.strip() for c in rows[0]]
    data = np.array(
        [
            [_parse_float(cell, path, f"row {i}") for cell in row]
            for i, row in enumerate(rows[1:], start=1)
        ]
    )
    return names, data


def read_returns_csv(path) -> ReturnsPanel:
    """Returns panel from a CSV whose first column holds period labels.

    The header row names the label column and then one column per asset;
    every later row is one period.
    """
    rows = _read_rows(path)
    names = [c.strip() for c in rows[0]]
    if len(names) < 3:
        raise InputError(f"{path}: need a label column and at least two assets")
    dates = [row[0].strip() for row in rows[1:]]
    data = np.array(
        [
            [_parse_float(cell, path, f"row {i}") for cell in row[1:]]
            for i, row in enumerate(rows[1:], start=1)
        ]
    )
    return ReturnsPanel(returns=data, dates=tuple(dates), assets=tuple(names[1:]))


def read_series_csv(path) -> np.ndarray:
    """Single numeric series from a CSV: the last column, header skipped."""
    rows = _read_rows(path)
    return np.array(
        [_parse_float(row[-1], path, f"row {i}") for i, row in enumerate(rows[1:], 1)]
    )


def read_covariates_dir(path) -> CovariatePanel:
    """Per-period covariate panel from a directory, one CSV per period.

    Files are taken in sorted name order; all must share the same header
    and shape. Each file holds one row per entity and one column per
    covariate.
    """
    try:
        files = sorted(f for f in os.listdir(path) if f.lower().endswith(".csv"))
    except OSError as exc:
        raise InputError(f"cannot list {path}: {exc}") from exc
    if not files:
        raise InputError(f"{path}: no CSV files found")
    names = None
    values = []
    for fname in files:
        cols, data = read_matrix_csv(os.path.join(path, fname))
        if names is None:
            names = cols
        elif cols != names:
            raise InputError(
                f"{path}/{fname}: covariate columns differ from {files[0]}"
            )
        values.append(data)
    try:
        stacked = np.stack(values)
    except ValueError:
        raise InputError(f"{path}: covariate files have differing shapes") from None
    dates = tuple(os.path.splitext(f)[0] for f in files)
    return CovariatePanel(values=stacked, names=tuple(names), dates=dates)


def load_config(path) -> dict:
    """Mapping from a TOML (.toml) or JSON (.json) config file."""
    ext = os.path.splitext(str(path))[1].lower()
    try:
        if ext == ".toml":
            with open(path, "rb") as fh:
                cfg = tomllib.load(fh)
        elif ext == ".json":
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        else:
            raise InputError(f"{path}: config must be a .toml or .json file")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: parse error: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: config must be a mapping at top level")
    return cfg


def _column_spec(name: str, spec, path):
    if isinstance(spec, str):
        spec = {"kind": spec}
    if not isinstance(spec, dict) or "kind" not in spec:
        raise InputError(
            f"{path}: column {name!r} needs a kind ('continuous' or 'discrete')"
        )
    extra = set(spec) - {"kind", "scale"}
    if extra:
        raise InputError(
            f"{path}: unknown keys for column {name!r}: {', '.join(sorted(extra))}"
        )
    kind = spec["kind"]
    if kind not in _KNOWN_KINDS:
        raise InputError(
            f"{path}: column {name!r} has unknown kind {kind!r}; "
            f"use one of {', '.join(_KNOWN_KINDS)}"
        )
    scale = float(spec.get("scale", 1.0))
    return kind, scale


def _weightset_from_config(path):
    cfg = load_config(path)
    extra = set(cfg) - {"covariates", "columns"}
    if extra:
        raise InputError(f"{path}: unknown config keys: {', '.join(sorted(extra))}")
    if "covariates" not in cfg or "columns" not in cfg:
        raise InputError(f"{path}: config needs 'covariates' (CSV path) and 'columns'")
    if not isinstance(cfg["columns"], dict):
        raise InputError(f"{path}: 'columns' must map column names to kinds")
    csv_path = os.path.join(os.path.dirname(os.path.abspath(path)), cfg["covariates"])
    names, data = read_matrix_csv(csv_path)
    missing = [n for n in names if n not in cfg["columns"]]
    if missing:
        raise InputError(f"{path}: no kind declared for columns: {', '.join(missing)}")
    unused = sorted(set(cfg["columns"]) - set(names))
    if unused:
        raise InputError(f"{path}: declared columns not in the CSV: {', '.join(unused)}")
    mats = []
    for j, name in enumerate(names):
        kind, scale = _column_spec(name, cfg["columns"][name], path)
        col = CovariateColumn(values=data[:, j], kind=kind, name=name)
        mats.append(build_from_column(col, scale=scale))
    return WeightSet.from_matrices(mats), tuple(names)


def _weightset_from_dir(path):
    files = sorted(f for f in os.listdir(path) if f.lower().endswith(".csv"))
    if not files:
        raise InputError(f"{path}: no weight-matrix CSV files found")
    mats = []
    for fname in files:
        _, w = read_matrix_csv(os.path.join(path, fname))
        mats.append(w)
    names = tuple(os.path.splitext(f)[0] for f in files)
    return WeightSet.from_matrices(mats), names


def load_weightset(path):
    """Weight set from a directory of matrix CSVs or a covariate config.

    A directory is read as dense p x p matrices, one per CSV in sorted
    name order. A .toml/.json file must carry ``covariates`` (path of a
    covariate CSV, relative to the config) and ``columns`` (mapping each
    CSV column to a kind, optionally with a kernel scale).

    Returns
    -------
    (WeightSet, tuple of str)
        The weight set and one name per weight matrix.
    """
    if os.path.isdir(path):
        return _weightset_from_dir(path)
    if not os.path.exists(path):
        raise InputError(f"{path}: no such file or directory")
    return _weightset_from_config(path)


def write_weight_csv(path, w: np.ndarray, names=None) -> None:
    """Dense weight-matrix CSV with a header row of column names."""
    w = np.asarray(w, dtype=float)
    if names is None:
        names = [f"c{j}" for j in range(w.shape[1])]
    rows = [list(names)] + [[repr(float(v)) for v in row] for row in w]
    _write_atomic(path, _csv_text(rows))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if obj is None or isinstance(obj, str):
        return obj
    raise InputError(f"value of type {type(obj).__name__} is not JSON-serializable")


def dumps_json(obj) -> str:
    """Deterministic JSON text: sorted keys, NaN and infinities as null."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    _write_atomic(path, dumps_json(obj))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return repr(v) if np.isfinite(v) else ""
    return str(value)


def _csv_text(rows) -> str:
    import io as _io

    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def write_rows_csv(path, rows) -> None:
    """CSV of dict records sharing the first record's keys as header.

    Floats are written in shortest round-trip form; missing and
    non-finite values become empty cells.
    """
    rows = list(rows)
    if not rows:
        raise InputError("no records to write")
    header = list(rows[0])
    out = [header]
    for row in rows:
        out.append([_cell(row.get(name)) for name in header])
    _write_atomic(path, _csv_text(out))


def _write_atomic(path, text: str) -> None:
    """Write text so that a crash never leaves a partial file behind."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
