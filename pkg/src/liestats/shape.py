"""GL+(3) differential coordinates of triangle meshes in correspondence.

A deformation of a reference mesh is described by one 3 x 3 Jacobian per
triangle: the linear map taking the two reference edge vectors to the
deformed ones and the reference unit normal to the deformed unit normal.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .bistats import SampleSet
from .errors import (
    DegenerateTriangleError, MeshError, OrientationFlipError, SingularSystemError,
)
from .liegroup import GLPlus, GroupElement

__all__ = [
    "TriangleMesh", "JacobianField", "triangle_jacobian", "face_jacobians",
    "mesh_to_field", "per_triangle_samples", "reconstruct", "GL3",
]

GL3 = GLPlus(3)
MIN_AREA = 1e-12

FACE_OK, FACE_DEGENERATE, FACE_FLIPPED = 0, 1, 2


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        f = np.array(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must have shape (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError(f"faces must have shape (F, 3), got {f.shape}")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise MeshError("face indices out of range")
        small = np.flatnonzero(face_areas(v, f) <= MIN_AREA)
        if len(small):
            raise DegenerateTriangleError(f"face {small[0]} is degenerate", face=int(small[0]))
        v.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_faces(self):
        return len(self.faces)

    def with_vertices(self, vertices):
        return TriangleMesh(vertices, self.faces)


@dataclass(frozen=True, eq=False)
class JacobianField:
    reference: TriangleMesh
    jacobians: np.ndarray  # (F, 3, 3)

    def __post_init__(self):
        jac = np.array(self.jacobians, dtype=float)
        if jac.shape != (self.reference.n_faces, 3, 3):
            raise ValueError("need one 3x3 Jacobian per reference face")
        bad = np.flatnonzero(~GL3.contains(jac))
        if len(bad):
            raise OrientationFlipError(f"Jacobian of face {bad[0]} is not orientation-preserving",
                                       face=int(bad[0]))
        jac.setflags(write=False)
        object.__setattr__(self, "jacobians", jac)

    def __getitem__(self, face):
        return GroupElement(GL3, self.jacobians[face])


def face_areas(vertices, faces):
    tri = np.asarray(vertices)[np.asarray(faces)]
    return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)


def _frames(tri):
    """Edge/normal frames ``[e1 | e2 | unit normal]`` and doubled areas of triangles."""
    e1 = tri[..., 1, :] - tri[..., 0, :]
    e2 = tri[..., 2, :] - tri[..., 0, :]
    normal = np.cross(e1, e2)
    length = np.linalg.norm(normal, axis=-1)
    unit = normal / np.where(length > 0, length, 1.0)[..., None]
    return np.stack([e1, e2, unit], axis=-1), length


def face_jacobians(ref_vertices, faces, def_vertices):
    """Per-face Jacobians and a status code per face (0 ok, 1 degenerate, 2 flipped).

    Jacobians of failed faces are set to the identity.
    """
    faces = np.asarray(faces)
    ref, ref_len = _frames(np.asarray(ref_vertices, dtype=float)[faces])
    dfm, def_len = _frames(np.asarray(def_vertices, dtype=float)[faces])
    status = np.full(len(faces), FACE_OK)
    degenerate = ~(ref_len > 2 * MIN_AREA) | ~(def_len > 2 * MIN_AREA)  # NaN counts as degenerate
    status[degenerate] = FACE_DEGENERATE
    ref[degenerate] = np.eye(3)
    dfm[degenerate] = np.eye(3)
    # D E = F  <=>  E^T D^T = F^T
    jac = np.swapaxes(np.linalg.solve(np.swapaxes(ref, -1, -2), np.swapaxes(dfm, -1, -2)), -1, -2)
    flipped = ~degenerate & ~(np.linalg.det(jac) > 0)
    status[flipped] = FACE_FLIPPED
    jac[status != FACE_OK] = np.eye(3)
    return jac, status


def _raise_face(status, face):
    if status == FACE_DEGENERATE:
        raise DegenerateTriangleError(f"face {face} is degenerate", face=face)
    raise OrientationFlipError(f"face {face}: deformation is not orientation-preserving", face=face)


def triangle_jacobian(ref_tri, def_tri):
    """GL+(3) Jacobian of the affine map taking one triangle onto another.

    Parameters
    ----------
    ref_tri, def_tri : (3, 3) array_like
        Vertex positions, one vertex per row.

    Raises
    ------
    DegenerateTriangleError, OrientationFlipError
    """
    jac, status = face_jacobians(np.asarray(ref_tri), np.array([[0, 1, 2]]), np.asarray(def_tri))
    if status[0] != FACE_OK:
        _raise_face(status[0], 0)
    return GroupElement(GL3, jac[0])


def mesh_to_field(ref, deformed):
    if not np.array_equal(ref.faces, deformed.faces):
        raise MeshError("meshes are not in correspondence (face arrays differ)")
    jac, status = face_jacobians(ref.vertices, ref.faces, deformed.vertices)
    bad = np.flatnonzero(status)
    if len(bad):
        _raise_face(status[bad[0]], int(bad[0]))
    return JacobianField(ref, jac)


def per_triangle_samples(fields, group_labels):
    """Split per-face Jacobians of many subjects into two samples per face.

    Subjects labelled false go to the first sample, true to the second.
    """
    fields = list(fields)
    labels = np.asarray(group_labels, dtype=bool)
    if len(fields) != len(labels):
        raise ValueError("need one label per field")
    if labels.all() or not labels.any():
        raise ValueError("both classes must be present")
    counts = {f.reference.n_faces for f in fields}
    if len(counts) != 1:
        raise MeshError("fields have different face counts")
    ref = fields[0].reference
    if any(not np.array_equal(f.reference.faces, ref.faces) for f in fields):
        raise MeshError("fields do not share the reference connectivity")
    stack = np.stack([f.jacobians for f in fields], axis=1)  # (F, subjects, 3, 3)
    return [(SampleSet(GL3, per_face[~labels]), SampleSet(GL3, per_face[labels]))
            for per_face in stack]


def _gradient_operator(mesh):
    """Sparse (3F x V) per-face gradient of piecewise-linear functions and face areas."""
    v, f = mesh.vertices, mesh.faces
    tri = v[f]
    e = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=-1)  # (F, 3, 2)
    gram = np.swapaxes(e, -1, -2) @ e
    pinv = np.linalg.solve(gram, np.swapaxes(e, -1, -2))  # (F, 2, 3)
    # grad u = pinv^T [u1 - u0, u2 - u0]
    diff = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    local = np.swapaxes(pinv, -1, -2) @ diff  # (F, 3 components, 3 vertices)
    nf = len(f)
    rows = np.repeat(np.arange(3 * nf).reshape(nf, 3, 1), 3, axis=2)
    cols = np.repeat(f[:, None, :], 3, axis=1)
    grad = sp.csr_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * nf, len(v)))
    areas = 0.5 * np.sqrt(np.linalg.det(gram))
    return grad, e, pinv, areas


def reconstruct(ref, field, anchor_vertex=0, anchor_position=None):
    """Vertex positions whose per-face gradients best match a Jacobian field.

    Minimizes ``sum_T area(T) * ||grad phi|_T - D_T P_T||_F^2`` where
    ``P_T`` projects onto the plane of reference triangle ``T``, with vertex
    ``anchor_vertex`` pinned at ``anchor_position`` (default: its reference
    position).  For an integrable field, such as one produced by
    :func:`mesh_to_field`, the deformed mesh is recovered exactly up to the
    translation fixed by the anchor.

    Raises
    ------
    MeshError
        If the reference mesh is not edge-connected.
    SingularSystemError
    """
    if field.reference is not ref and not np.array_equal(field.reference.faces, ref.faces):
        raise MeshError("field was built on a different reference mesh")
    nv = len(ref.vertices)
    if not 0 <= anchor_vertex < nv:
        raise MeshError("anchor vertex out of range")
    f = ref.faces
    edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    adjacency = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(nv, nv))
    n_comp, _ = connected_components(adjacency, directed=False)
    if n_comp != 1:
        raise MeshError(f"reference mesh has {n_comp} connected components")

    grad, e, pinv, areas = _gradient_operator(ref)
    # target gradients: the Jacobian restricted to the reference triangle plane
    target = field.jacobians @ e @ pinv  # (F, 3 coords, 3 gradient components)
    b = target.reshape(-1, 3, 3).transpose(0, 2, 1).reshape(-1, 3)  # rows: (face, component)
    weights = sp.diags(np.repeat(areas, 3))
    lap = (grad.T @ weights @ grad).tocsc()
    rhs = grad.T @ (weights @ b)

    anchor = ref.vertices[anchor_vertex] if anchor_position is None else np.asarray(anchor_position, float)
    free = np.flatnonzero(np.arange(nv) != anchor_vertex)
    lap_ff = lap[free][:, free].tocsc()
    lap_fa = lap[free][:, [anchor_vertex]].toarray()
    try:
        solver = splu(lap_ff)
    except RuntimeError as exc:
        raise SingularSystemError(f"reconstruction system is singular: {exc}") from exc
    x = np.empty((nv, 3))
    x[anchor_vertex] = anchor
    x[free] = solver.solve(rhs[free] - lap_fa @ anchor[None, :])
    if not np.isfinite(x).all():
        raise SingularSystemError("reconstruction produced non-finite positions")
    return TriangleMesh(x, ref.faces)
