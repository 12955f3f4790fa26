"""Triangle mesh reading and writing (OFF, OBJ) plus per-face exports.

Only vertex positions and triangular faces are supported; any other
record (normals, texture coordinates, polygons, colors) is rejected.
"""

from pathlib import Path

import numpy as np

from .errors import FormatError
from .io import format_float
from .shape import TriangleMesh

__all__ = ["read_off", "read_obj", "read_mesh", "read_mesh_arrays", "write_off", "write_obj", "write_mesh",
           "write_face_csv", "write_ply"]


def _content_lines(text):
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield number, line


def read_off(path):
    return _make_mesh(path, *_parse_off(path))


def _parse_off(path):
    path = Path(path)
    lines = list(_content_lines(path.read_text()))
    if not lines:
        raise FormatError(f"{path}: empty file")
    number, first = lines[0]
    tokens = first.split()
    if tokens[0] != "OFF":
        raise FormatError(f"{path}:{number}: expected 'OFF' header, got {tokens[0]!r}")
    rest = tokens[1:]
    body = lines[1:]
    if not rest:
        if not body:
            raise FormatError(f"{path}: missing element counts")
        number, counts = body[0]
        rest = counts.split()
        body = body[1:]
    try:
        nv, nf = int(rest[0]), int(rest[1])
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{path}:{number}: bad element counts") from exc
    if len(body) < nv + nf:
        raise FormatError(f"{path}: expected {nv} vertices and {nf} faces, file is truncated")
    vertices = []
    for number, line in body[:nv]:
        vals = line.split()
        if len(vals) != 3:
            raise FormatError(f"{path}:{number}: vertex records must hold exactly x y z")
        try:
            vertices.append([float(v) for v in vals])
        except ValueError as exc:
            raise FormatError(f"{path}:{number}: {exc}") from exc
    faces = []
    for number, line in body[nv:nv + nf]:
        vals = line.split()
        try:
            ints = [int(v) for v in vals]
        except ValueError as exc:
            raise FormatError(f"{path}:{number}: {exc}") from exc
        if ints[0] != 3 or len(ints) != 4:
            raise FormatError(f"{path}:{number}: only triangular faces without extra data are supported")
        faces.append(ints[1:])
    if len(body) > nv + nf:
        raise FormatError(f"{path}:{body[nv + nf][0]}: unexpected trailing records")
    return vertices, faces


def read_obj(path):
    return _make_mesh(path, *_parse_obj(path))


def _parse_obj(path):
    path = Path(path)
    vertices, faces = [], []
    for number, line in _content_lines(path.read_text()):
        tag, *vals = line.split()
        if tag == "v":
            if len(vals) != 3:
                raise FormatError(f"{path}:{number}: vertex records must hold exactly x y z")
            try:
                vertices.append([float(v) for v in vals])
            except ValueError as exc:
                raise FormatError(f"{path}:{number}: {exc}") from exc
        elif tag == "f":
            if len(vals) != 3:
                raise FormatError(f"{path}:{number}: only triangular faces are supported")
            try:
                idx = [int(v) for v in vals]
            except ValueError as exc:
                raise FormatError(f"{path}:{number}: face records must be plain vertex indices") from exc
            # OBJ indices are 1-based; negative ones count back from the last vertex
            faces.append([i - 1 if i > 0 else len(vertices) + i for i in idx])
        else:
            raise FormatError(f"{path}:{number}: unsupported OBJ record {tag!r}")
    return vertices, faces


def _make_mesh(path, vertices, faces):
    try:
        return TriangleMesh(np.array(vertices, dtype=float).reshape(-1, 3),
                            np.array(faces, dtype=np.int64).reshape(-1, 3))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _parser(path):
    suffix = Path(path).suffix.lower()
    if suffix == ".off":
        return _parse_off
    if suffix == ".obj":
        return _parse_obj
    raise FormatError(f"{path}: unsupported mesh format {suffix!r} (use .off or .obj)")


def read_mesh(path):
    return _make_mesh(path, *_parser(path)(path))


def read_mesh_arrays(path):
    """Vertex and face arrays of an OFF/OBJ file without the non-degeneracy check.

    Used for deformed subjects, where a collapsed triangle is reported per
    face instead of rejecting the whole mesh.
    """
    vertices, faces = _parser(path)(path)
    v = np.array(vertices, dtype=float).reshape(-1, 3)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if len(f) and (f.min() < 0 or f.max() >= len(v)):
        raise FormatError(f"{path}: face indices out of range")
    return v, f


def _vertex_lines(mesh):
    return [" ".join(format_float(x) for x in v) for v in mesh.vertices]


def write_off(path, mesh):
    lines = ["OFF", f"{len(mesh.vertices)} {mesh.n_faces} 0"]
    lines += _vertex_lines(mesh)
    lines += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def write_obj(path, mesh):
    lines = ["v " + line for line in _vertex_lines(mesh)]
    lines += ["f " + " ".join(str(int(i) + 1) for i in f) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def write_mesh(path, mesh):
    suffix = Path(path).suffix.lower()
    if suffix == ".off":
        write_off(path, mesh)
    elif suffix == ".obj":
        write_obj(path, mesh)
    else:
        raise FormatError(f"{path}: unsupported mesh format {suffix!r}")


def write_face_csv(path, values, column="value"):
    """Per-face scalars as ``face_index,value`` rows; NaN is written as ``nan``."""
    values = np.asarray(values)
    fmt = str if values.dtype.kind in "biu" else format_float
    lines = [f"face_index,{column}"]
    for i, x in enumerate(values):
        lines.append(f"{i},{fmt(x)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_ply(path, mesh, face_values, name="quality"):
    """ASCII PLY with a float per-face property."""
    face_values = np.asarray(face_values, dtype=float)
    if face_values.shape != (mesh.n_faces,):
        raise ValueError("need one value per face")
    header = [
        "ply", "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property double x", "property double y", "property double z",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        f"property double {name}",
        "end_header",
    ]
    body = _vertex_lines(mesh)
    body += [f"3 {a} {b} {c} {format_float(q)}" for (a, b, c), q in zip(mesh.faces, face_values)]
    Path(path).write_text("\n".join(header + body) + "\n")
