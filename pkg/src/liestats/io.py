"""Reading and writing group samples.

CSV: an optional header comment ``# group=SE3`` followed by one element per
row, the matrix flattened in row-major order.  For ``Euclidean(k)`` a row
may also hold just the k vector components.

JSON: ``{"group": "SE3", "elements": [...]}`` where each element is either
a flat row-major list or a nested list of rows.
"""

import json
from pathlib import Path

import numpy as np

from .bistats import SampleSet
from .errors import FormatError
from .liegroup import Euclidean, group_from_name

__all__ = ["read_samples", "write_samples", "format_float"]


def format_float(x):
    return repr(float(x))


def _resolve_group(declared, override, path):
    if override is None and declared is None:
        raise FormatError(f"{path}: no group declared; add '# group=...' or pass a group")
    try:
        declared = group_from_name(declared) if isinstance(declared, str) else declared
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if override is not None:
        override = group_from_name(override) if isinstance(override, str) else override
        if declared is not None and declared != override:
            raise FormatError(f"{path}: file declares {declared.name}, expected {override.name}")
        return override
    return declared


def _to_matrices(group, rows, path):
    n = group.matrix_size
    mats = []
    for i, row in enumerate(rows, start=1):
        vals = np.asarray(row, dtype=float).ravel()
        if isinstance(group, Euclidean) and vals.size == group.k:
            mats.append(group.from_vectors(vals))
            continue
        if vals.size != n * n:
            raise FormatError(f"{path}: row {i} has {vals.size} values, {group.name} needs {n * n}")
        mat = vals.reshape(n, n)
        if not group.contains(mat):
            raise FormatError(f"{path}: row {i} is not an element of {group.name}")
        mats.append(mat)
    if not mats:
        raise FormatError(f"{path}: no elements")
    return SampleSet(group, np.stack(mats))


def read_samples(path, group=None):
    """Read a :class:`SampleSet` from a CSV or JSON file.

    ``group`` (a name or group object) is required when the file does not
    declare one, and must agree with it otherwise.

    Raises
    ------
    FormatError
        With the 1-based data row that failed.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
            rows = doc["elements"]
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}: invalid sample JSON ({exc})") from exc
        grp = _resolve_group(doc.get("group"), group, path)
        try:
            return _to_matrices(grp, rows, path)
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{path}: {exc}") from exc

    declared = None
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].replace(",", " ").split():
                key, _, value = token.partition("=")
                if key.strip().lower() == "group":
                    declared = value.strip()
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError as exc:
            raise FormatError(f"{path}: data row {len(rows) + 1}: {exc}") from exc
    grp = _resolve_group(declared, group, path)
    return _to_matrices(grp, rows, path)


def write_samples(path, samples):
    """Write a :class:`SampleSet` as CSV (or JSON for a ``.json`` path)."""
    path = Path(path)
    flat = samples.mats.reshape(len(samples), -1)
    if path.suffix.lower() == ".json":
        doc = {"group": samples.group.name, "elements": flat.tolist()}
        path.write_text(json.dumps(doc, indent=1) + "\n")
        return
    lines = [f"# group={samples.group.name}"]
    lines += [",".join(format_float(x) for x in row) for row in flat]
    path.write_text("\n".join(lines) + "\n")
