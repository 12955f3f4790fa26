"""Synthetic data: clustered group samples, sphere meshes, smooth deformations."""

import numpy as np

from .bistats import SampleSet
from .liegroup import Euclidean
from .shape import TriangleMesh

__all__ = [
    "random_element", "clustered_sample", "uv_sphere", "smooth_deformation",
    "bulge", "random_rotation",
]


def random_element(group, rng, scale=1.0):
    """``exp`` of a Gaussian tangent vector with standard deviation ``scale``."""
    return group.exp(scale * rng.standard_normal(group.dim))


def clustered_sample(group, rng, size, center=None, spread=0.1):
    """``center @ exp(spread * z_i)`` with standard normal tangent coordinates ``z_i``."""
    center = group.identity if center is None else np.asarray(center, dtype=float)
    return SampleSet(group, center @ group.exp(spread * rng.standard_normal((size, group.dim))))


def euclidean_sample(vectors):
    vectors = np.asarray(vectors, dtype=float)
    group = Euclidean(vectors.shape[1])
    return SampleSet(group, group.from_vectors(vectors))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def uv_sphere(n_lat=12, n_lon=25, radius=1.0):
    """Closed, outward-oriented latitude/longitude sphere.

    ``n_lat`` counts vertex rings including both poles.  The mesh has
    ``2 * n_lon * (n_lat - 2)`` faces, 500 with the defaults.
    """
    theta = np.linspace(0.0, np.pi, n_lat)[1:-1]
    phi = np.linspace(0.0, 2 * np.pi, n_lon, endpoint=False)
    t, p = np.meshgrid(theta, phi, indexing="ij")
    rings = np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)], axis=-1)
    vertices = np.vstack([[0.0, 0.0, 1.0], rings.reshape(-1, 3), [0.0, 0.0, -1.0]]) * radius
    south = len(vertices) - 1

    def idx(i, j):
        return 1 + i * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append((0, idx(0, j), idx(0, j + 1)))
    for i in range(n_lat - 3):
        for j in range(n_lon):
            a, b = idx(i, j), idx(i, j + 1)
            c, d = idx(i + 1, j), idx(i + 1, j + 1)
            faces.append((a, c, d))
            faces.append((a, d, b))
    for j in range(n_lon):
        faces.append((south, idx(n_lat - 3, j + 1), idx(n_lat - 3, j)))
    return TriangleMesh(vertices, np.array(faces))


def smooth_deformation(mesh, rng, amplitude=0.15, linear=0.2):
    """Randomly deformed copy: a near-identity linear map plus smooth sinusoidal displacement."""
    v = mesh.vertices
    a = np.eye(3) + linear * rng.standard_normal((3, 3)) / 3
    if np.linalg.det(a) <= 0:
        a[:, 0] = -a[:, 0]
    freq = rng.standard_normal((3, 3))
    phase = rng.uniform(0, 2 * np.pi, 3)
    disp = amplitude * np.sin(v @ freq + phase) / 3
    shift = rng.standard_normal(3)
    return mesh.with_vertices(v @ a.T + disp + shift)


def bulge(mesh, center, radius, height):
    """Push vertices within ``radius`` of ``center`` outward along the radial direction."""
    v = mesh.vertices
    d = np.linalg.norm(v - np.asarray(center), axis=1)
    w = np.clip(1 - (d / radius) ** 2, 0, None) ** 2
    outward = v / np.linalg.norm(v, axis=1, keepdims=True)
    return mesh.with_vertices(v + height * w[:, None] * outward)
