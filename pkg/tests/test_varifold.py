from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varimorph.errors import DegenerateFrame, SchemaError, SingularMap
from varimorph.varifold import (
    DiracAtom,
    DiracVarifold,
    Polyline,
    TriMesh,
    curve_to_varifold,
    frame_volume,
    grassmann_inner,
    mesh_to_varifold,
    pushforward_affine,
    total_mass,
)


def rotation2(t):
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def random_rotation3(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


class TestFrameVolume:
    def test_orthonormal(self):
        assert frame_volume([[1, 0, 0], [0, 1, 0]]) == pytest.approx(1.0)

    def test_single_vector_is_norm(self):
        assert frame_volume([[3, 4]]) == pytest.approx(5.0)

    def test_rank_deficient(self):
        assert frame_volume([[1, 0], [2, 0]]) == 0.0

    def test_too_many_vectors(self):
        with pytest.raises(ValueError):
            frame_volume(np.eye(3)[:, :2])

    def test_in_plane_change_of_frame(self, rng):
        for _ in range(20):
            f = rng.normal(size=(2, 3))
            t = rng.uniform(0, 2 * np.pi)
            shear = np.array([[1.0, rng.normal()], [0.0, 1.0]])
            for m in (rotation2(t), shear):
                assert abs(frame_volume(m @ f) - frame_volume(f)) < 1e-12


class TestGrassmannInner:
    def test_same_plane(self):
        f = [[2, 0], [0, 3]]
        assert grassmann_inner(f, f) == pytest.approx(1.0)

    def test_orthogonal_lines(self):
        assert grassmann_inner([[1, 0]], [[0, 1]]) == pytest.approx(0.0)

    def test_reversed(self):
        assert grassmann_inner([[1, 0]], [[-1, 0]]) == pytest.approx(-1.0)

    def test_degenerate(self):
        with pytest.raises(DegenerateFrame):
            grassmann_inner([[0, 0]], [[1, 0]])

    def test_symmetric_and_bounded(self, rng):
        for _ in range(50):
            a, b = rng.normal(size=(2, 2, 3))
            s = grassmann_inner(a, b)
            assert s == pytest.approx(grassmann_inner(b, a), abs=1e-14)
            assert abs(s) <= 1 + 1e-12

    def test_frame_invariance(self, rng):
        a, b = rng.normal(size=(2, 2, 3))
        m = np.array([[2.0, 0.3], [0.1, 0.5]])  # positive determinant
        assert grassmann_inner(m @ a, b) == pytest.approx(grassmann_inner(a, b), abs=1e-12)


class TestDiscretisation:
    def test_single_segment(self):
        v = curve_to_varifold(Polyline(np.array([[0.0, 0.0], [1.0, 0.0]])))
        assert len(v) == 1
        np.testing.assert_allclose(v.positions[0], [0.5, 0.0])
        np.testing.assert_allclose(v.frames[0], [[1.0, 0.0]])
        assert v.weights[0] == pytest.approx(1.0)

    def test_unit_square(self):
        sq = Polyline(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float), closed=True)
        v = curve_to_varifold(sq)
        assert len(v) == 4
        assert total_mass(v) == pytest.approx(4.0)

    def test_polygon_perimeter(self):
        N = 256
        t = 2 * np.pi * np.arange(N) / N
        v = curve_to_varifold(Polyline(np.stack([np.cos(t), np.sin(t)], 1), closed=True))
        assert total_mass(v) == pytest.approx(2 * N * np.sin(np.pi / N), rel=1e-12)
        assert abs(total_mass(v) - 2 * np.pi) < 1e-3

    def test_triangle(self):
        m = TriMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), np.array([[0, 1, 2]]))
        v = mesh_to_varifold(m)
        np.testing.assert_allclose(v.positions[0], [1 / 3, 1 / 3, 0])
        assert v.weights[0] == pytest.approx(0.5)

    def test_cube_surface(self):
        verts = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], float)
        quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
        tris = [t for a, b, c, d in quads for t in ((a, b, c), (a, c, d))]
        v = mesh_to_varifold(TriMesh(verts, np.array(tris)))
        assert len(v) == 12
        assert total_mass(v) == pytest.approx(6.0)

    def test_collinear_triangle_degenerate(self):
        m = TriMesh(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float), np.array([[0, 1, 2]]))
        v = mesh_to_varifold(m)
        assert v.weights[0] == 0.0
        assert v.degenerate[0]

    def test_zero_length_segment_kept(self):
        v = curve_to_varifold(Polyline(np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]])))
        assert len(v) == 2 and v.degenerate.tolist() == [True, False]

    def test_bad_mesh_index(self):
        with pytest.raises(SchemaError):
            TriMesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))

    def test_nan_polyline(self):
        with pytest.raises(SchemaError):
            Polyline(np.array([[0.0, np.nan], [1.0, 0.0]]))


class TestVarifoldInvariants:
    def test_weight_must_match_volume(self):
        with pytest.raises(SchemaError):
            DiracVarifold(np.zeros((1, 2)), np.array([2.0]), np.array([[[1.0, 0.0]]]))

    def test_negative_weight(self):
        with pytest.raises(SchemaError):
            DiracVarifold.from_points(np.zeros((1, 2)), [-1.0])

    def test_plane_dimension_limits(self):
        with pytest.raises(SchemaError):
            DiracVarifold.from_frames(np.zeros((1, 3)), np.ones((1, 3, 3)))

    def test_immutable(self):
        v = DiracVarifold.from_points(np.zeros((1, 2)), [1.0])
        with pytest.raises(ValueError):
            v.positions[0, 0] = 1.0

    def test_atoms_round_trip(self, rng):
        v = DiracVarifold.from_frames(rng.normal(size=(3, 2)), rng.normal(size=(3, 1, 2)))
        w = DiracVarifold.from_atoms(list(v.atoms()), 2, 1)
        np.testing.assert_array_equal(v.frames, w.frames)
        assert DiracVarifold.from_atoms([DiracAtom(np.zeros(2), 1.5)], 2, 0).weights[0] == 1.5

    def test_total_mass(self):
        assert total_mass(DiracVarifold.empty(2, 1)) == 0.0
        assert total_mass(DiracVarifold.from_points(np.zeros((2, 2)), [0.5, 1.0])) == 1.5

    def test_unit_frames(self, rng):
        v = DiracVarifold.from_frames(rng.normal(size=(4, 3)), rng.normal(size=(4, 2, 3)))
        from varimorph.varifold import frame_volumes

        np.testing.assert_allclose(frame_volumes(v.unit_frames()), 1.0)


class TestPushforward:
    def test_identity(self, rng):
        v = DiracVarifold.from_frames(rng.normal(size=(3, 2)), rng.normal(size=(3, 1, 2)))
        w = pushforward_affine(v, np.eye(2), np.zeros(2))
        np.testing.assert_allclose(w.positions, v.positions)
        np.testing.assert_allclose(w.weights, v.weights)

    def test_scaling_doubles_length(self):
        v = DiracVarifold.from_frames([[0.0, 0.0]], [[[1.0, 0.0]]])
        assert pushforward_affine(v, 2 * np.eye(2), np.zeros(2)).weights[0] == pytest.approx(2.0)

    def test_rotation_preserves_weights(self, rng):
        v = DiracVarifold.from_frames(rng.normal(size=(5, 3)), rng.normal(size=(5, 2, 3)))
        w = pushforward_affine(v, random_rotation3(rng), rng.normal(size=3))
        np.testing.assert_allclose(w.weights, v.weights, rtol=1e-12)
        assert total_mass(w) == pytest.approx(total_mass(v), rel=1e-12)

    def test_singular(self):
        v = DiracVarifold.from_points([[0.0, 0.0]], [1.0])
        with pytest.raises(SingularMap):
            pushforward_affine(v, np.zeros((2, 2)), np.zeros(2))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_composition(self, seed):
        rng = np.random.default_rng(seed)
        v = DiracVarifold.from_frames(rng.normal(size=(3, 3)), rng.normal(size=(3, 2, 3)))
        A1, A2 = np.eye(3) + 0.3 * rng.normal(size=(2, 3, 3))
        b1, b2 = rng.normal(size=(2, 3))
        lhs = pushforward_affine(pushforward_affine(v, A1, b1), A2, b2)
        rhs = pushforward_affine(v, A2 @ A1, A2 @ b1 + b2)
        np.testing.assert_allclose(lhs.positions, rhs.positions, atol=1e-10)
        np.testing.assert_allclose(lhs.frames, rhs.frames, atol=1e-10)
        np.testing.assert_allclose(lhs.weights, rhs.weights, atol=1e-10)
