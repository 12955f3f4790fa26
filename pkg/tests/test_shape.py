import numpy as np
import pytest

from liestats.bistats import Statistic, batch_statistic
from liestats.errors import (
    DegenerateTriangleError, MeshError, OrientationFlipError,
)
from liestats.liegroup import compose
from liestats.shape import (
    GL3, JacobianField, TriangleMesh, face_jacobians, mesh_to_field, per_triangle_samples,
    reconstruct, triangle_jacobian,
)
from liestats.synthetic import random_rotation, smooth_deformation, uv_sphere
from liestats.twosample import PermutationConfig, batch_test

from meshfamily import bulged_faces, family

TRI = np.array([[0.0, 0.0, 0.0], [2.0, 0.1, 0.0], [0.3, 1.5, 0.4]])


def rms(a, b):
    return np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1)))


def unit_normal(tri):
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    return n / np.linalg.norm(n)


class TestTriangleJacobian:
    def test_identity(self):
        np.testing.assert_allclose(triangle_jacobian(TRI, TRI).mat, np.eye(3), atol=1e-15)

    @pytest.mark.parametrize("s", [0.5, 2.0, 7.0])
    def test_uniform_scale(self, s):
        centroid = TRI.mean(0)
        d = triangle_jacobian(TRI, centroid + s * (TRI - centroid)).mat
        np.testing.assert_allclose(np.sort(np.linalg.svd(d, compute_uv=False)), sorted([s, s, 1.0]),
                                   rtol=1e-12)
        np.testing.assert_allclose(d @ (TRI[1] - TRI[0]), s * (TRI[1] - TRI[0]), atol=1e-12)
        np.testing.assert_allclose(d @ unit_normal(TRI), unit_normal(TRI), atol=1e-12)

    def test_rotation(self, rng):
        r = random_rotation(rng)
        d = triangle_jacobian(TRI, TRI @ r.T + [3.0, -1.0, 2.0]).mat
        np.testing.assert_allclose(d, r, atol=1e-10)

    def test_maps_edges_and_normal(self, rng):
        moved = TRI + 0.3 * rng.standard_normal((3, 3))
        d = triangle_jacobian(TRI, moved).mat
        np.testing.assert_allclose(d @ (TRI[2] - TRI[0]), moved[2] - moved[0], atol=1e-12)
        np.testing.assert_allclose(d @ unit_normal(TRI), unit_normal(moved), atol=1e-12)
        assert np.linalg.det(d) > 0

    def test_mirrored_triangle_still_positive(self):
        # a reflection of the triangle is met by its own normal: a proper rotation results
        mirror = TRI * [1.0, 1.0, -1.0]
        d = triangle_jacobian(TRI, mirror).mat
        assert np.linalg.det(d) > 0

    def test_degenerate(self):
        collinear = np.array([[0.0, 0, 0], [1, 1, 1], [2, 2, 2]])
        with pytest.raises(DegenerateTriangleError):
            triangle_jacobian(collinear, TRI)
        with pytest.raises(DegenerateTriangleError):
            triangle_jacobian(TRI, collinear)
        with pytest.raises(DegenerateTriangleError):
            triangle_jacobian(TRI, np.full((3, 3), np.nan))

    def test_statuses(self):
        faces = np.array([[0, 1, 2]])
        _, status = face_jacobians(TRI, faces, np.zeros((3, 3)))
        assert status[0] == 1


class TestMeshes:
    def test_validation(self):
        with pytest.raises(MeshError):
            TriangleMesh(np.zeros((3, 2)), [[0, 1, 2]])
        with pytest.raises(MeshError):
            TriangleMesh(TRI, [[0, 1, 3]])
        with pytest.raises(DegenerateTriangleError) as info:
            TriangleMesh(np.vstack([TRI, TRI[0]]), [[0, 1, 2], [0, 3, 1]])
        assert info.value.face == 1

    def test_field_rejects_reflections(self):
        mesh = TriangleMesh(TRI, [[0, 1, 2]])
        with pytest.raises(OrientationFlipError):
            JacobianField(mesh, np.diag([1.0, 1.0, -1.0])[None])

    def test_identity_and_translation(self):
        ref = uv_sphere(6, 8)
        for moved in (ref, ref.with_vertices(ref.vertices + [1.0, 2.0, -3.0])):
            np.testing.assert_allclose(mesh_to_field(ref, moved).jacobians,
                                       np.broadcast_to(np.eye(3), (ref.n_faces, 3, 3)), atol=1e-14)

    def test_global_rotation(self, rng):
        ref = uv_sphere(6, 8)
        r = random_rotation(rng)
        field = mesh_to_field(ref, ref.with_vertices(ref.vertices @ r.T))
        np.testing.assert_allclose(field.jacobians, np.broadcast_to(r, field.jacobians.shape),
                                   atol=1e-10)
        assert field[3].group == GL3

    def test_face_mismatch(self):
        ref = uv_sphere(6, 8)
        other = TriangleMesh(ref.vertices, ref.faces[:, [0, 2, 1]])
        with pytest.raises(MeshError):
            mesh_to_field(ref, other)

    def test_first_bad_face_reported(self):
        ref = uv_sphere(6, 8)
        v = ref.vertices.copy()
        f = ref.faces[5]
        v[f[2]] = 0.5 * (v[f[0]] + v[f[1]])  # collapse face 5 onto an edge
        tri = v[ref.faces]
        area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        with pytest.raises(DegenerateTriangleError) as info:
            ref.with_vertices(v)
        assert info.value.face == np.flatnonzero(area <= 1e-12)[0]
        _, status = face_jacobians(ref.vertices, ref.faces, v)
        assert status[5] == 1

    def test_composition_chain_rule(self, rng):
        ref = uv_sphere(6, 8)
        a = smooth_deformation(ref, rng)
        b = smooth_deformation(a, rng)
        direct = mesh_to_field(ref, b)
        ref_a, a_b = mesh_to_field(ref, a), mesh_to_field(a, b)
        for face in range(ref.n_faces):
            chained = compose(a_b[face], ref_a[face]).mat
            np.testing.assert_allclose(chained, direct.jacobians[face], atol=1e-9)


class TestReconstruct:
    def test_identity_field(self):
        ref = uv_sphere()
        field = JacobianField(ref, np.broadcast_to(np.eye(3), (ref.n_faces, 3, 3)))
        np.testing.assert_allclose(reconstruct(ref, field).vertices, ref.vertices, atol=1e-12)

    def test_roundtrip(self, rng):
        ref = uv_sphere()
        deformed = smooth_deformation(ref, rng)
        out = reconstruct(ref, mesh_to_field(ref, deformed), anchor_vertex=17,
                          anchor_position=deformed.vertices[17])
        assert rms(out.vertices, deformed.vertices) <= 1e-8

    def test_rotation(self, rng):
        ref = uv_sphere()
        r = random_rotation(rng)
        field = JacobianField(ref, np.broadcast_to(r, (ref.n_faces, 3, 3)))
        out = reconstruct(ref, field, anchor_position=r @ ref.vertices[0])
        assert rms(out.vertices, ref.vertices @ r.T) <= 1e-8

    def test_gradient_consistency(self, rng):
        # change only the normal column action: the edge action is still integrable
        ref = uv_sphere(8, 10)
        deformed = smooth_deformation(ref, rng)
        field = mesh_to_field(ref, deformed)
        tri = ref.vertices[ref.faces]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        n /= np.linalg.norm(n, axis=1, keepdims=True)
        jac = field.jacobians + 0.1 * rng.standard_normal((ref.n_faces, 3, 1)) * n[:, None, :]
        jac = np.where((np.linalg.det(jac) > 0)[:, None, None], jac, field.jacobians)
        out = reconstruct(ref, JacobianField(ref, jac))
        again = mesh_to_field(ref, out).jacobians
        edges = np.stack([tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]], axis=-1)
        np.testing.assert_allclose(again @ edges, jac @ edges, atol=1e-7)

    def test_disconnected(self):
        two = np.vstack([TRI, TRI + 10])
        mesh = TriangleMesh(two, [[0, 1, 2], [3, 4, 5]])
        field = JacobianField(mesh, np.broadcast_to(np.eye(3), (2, 3, 3)))
        with pytest.raises(MeshError):
            reconstruct(mesh, field)

    def test_bad_anchor(self):
        ref = uv_sphere(6, 8)
        field = mesh_to_field(ref, ref)
        with pytest.raises(MeshError):
            reconstruct(ref, field, anchor_vertex=len(ref.vertices))


class TestSamples:
    def test_singletons(self, rng):
        ref = uv_sphere(6, 8)
        fields = [mesh_to_field(ref, smooth_deformation(ref, rng)) for _ in range(2)]
        pairs = per_triangle_samples(fields, [False, True])
        assert len(pairs) == ref.n_faces
        assert all(len(a) == len(b) == 1 for a, b in pairs)
        np.testing.assert_array_equal(pairs[4][1].mats[0], fields[1].jacobians[4])

    def test_label_errors(self, rng):
        ref = uv_sphere(6, 8)
        fields = [mesh_to_field(ref, ref)] * 2
        with pytest.raises(ValueError):
            per_triangle_samples(fields, [True, True])
        with pytest.raises(ValueError):
            per_triangle_samples(fields, [True])
        other = uv_sphere(5, 8)
        with pytest.raises(MeshError):
            per_triangle_samples([fields[0], mesh_to_field(other, other)], [False, True])

    def test_rigid_and_order_invariance(self, rng):
        ref = uv_sphere(6, 8)
        subjects = [smooth_deformation(ref, rng) for _ in range(16)]
        labels = np.arange(16) >= 8
        fields = [mesh_to_field(ref, s) for s in subjects]
        r = random_rotation(rng)
        rotated = [mesh_to_field(ref, s.with_vertices(s.vertices @ r.T)) for s in subjects]
        order = np.r_[rng.permutation(8), 8 + rng.permutation(8)]
        shuffled = [fields[i] for i in order]

        def t2_per_face(flds, lab):
            pairs = per_triangle_samples(flds, lab)
            a = np.stack([p[0].mats for p in pairs])
            b = np.stack([p[1].mats for p in pairs])
            values, status = batch_statistic(GL3, a, b, Statistic.HOTELLING_T2)
            assert (status == 0).all()
            return values

        base = t2_per_face(fields, labels)
        np.testing.assert_allclose(t2_per_face(rotated, labels), base, rtol=1e-9)
        np.testing.assert_allclose(t2_per_face(shuffled, labels[order]), base, rtol=1e-9)


def test_bulge_pipeline(rng):
    ref, subjects, labels = family(rng)
    fields = [mesh_to_field(ref, s) for s in subjects]
    pairs = per_triangle_samples(fields, labels)
    result = batch_test(pairs, PermutationConfig(num_permutations=200, seed=4), n_jobs=4)
    hits = np.flatnonzero(result.rejected)
    assert len(hits) >= 3
    assert set(hits) <= set(bulged_faces(ref))
