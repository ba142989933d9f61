"""Planar shapes: preshape normalization, similarity invariance, the
rank-one Hermitian embedding, tangent bases, and the landmark CSV loader."""

import numpy as np
import pytest

from manifold_dnn.errors import DegenerateShapeError, ShapeError, SpecError
from manifold_dnn.manifolds import (
    load_landmark_csv,
    make_point,
    preshape,
    preshape_batch,
    preshape_tangent_basis,
    vw_embed,
    vw_embed_batch,
    vw_unembed,
)


def random_landmarks(k, rng):
    return rng.normal(size=(k, 2))


class TestPreshape:
    def test_collinear_example(self):
        out = preshape(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
        expected = np.array([-1.0, 0.0, 0.0, 0.0, 1.0, 0.0]) / np.sqrt(2.0)
        np.testing.assert_allclose(out, expected, atol=1e-15)

    def test_translation_invariance(self):
        rng = np.random.default_rng(0)
        z = random_landmarks(6, rng)
        np.testing.assert_allclose(
            preshape(z), preshape(z + np.array([5.0, -3.0])), atol=1e-14)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        z = random_landmarks(5, rng)
        np.testing.assert_allclose(preshape(z), preshape(7.0 * z), atol=1e-14)

    def test_output_is_valid_preshape_point(self):
        rng = np.random.default_rng(2)
        u = preshape(random_landmarks(8, rng))
        make_point("preshape-8", u)

    def test_degenerate_configuration_rejected(self):
        with pytest.raises(DegenerateShapeError):
            preshape(np.ones((4, 2)))

    def test_too_few_landmarks_rejected(self):
        with pytest.raises(SpecError):
            preshape(np.array([[0.0, 0.0], [1.0, 1.0]]))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        raw = rng.normal(size=(10, 5, 2))
        batch = preshape_batch(raw)
        for i in range(10):
            np.testing.assert_allclose(batch[i], preshape(raw[i]), atol=1e-14)


class TestVWEmbed:
    def test_first_basis_vector(self):
        u = np.zeros(4, dtype=complex)
        u[0] = 1.0
        feats = vw_embed(u)
        expected = np.zeros(16)
        expected[0] = 1.0
        np.testing.assert_allclose(feats, expected, atol=1e-15)

    def test_phase_invariance(self):
        rng = np.random.default_rng(4)
        u = preshape(random_landmarks(6, rng))
        z = u[0::2] + 1j * u[1::2]
        for theta in (0.3, 1.1, 2.9):
            np.testing.assert_allclose(
                vw_embed(z), vw_embed(np.exp(1j * theta) * z), atol=1e-14)

    def test_rank_one_trace_one(self):
        # eigendecomposition oracle on the reassembled Hermitian matrix
        rng = np.random.default_rng(5)
        u = preshape(random_landmarks(7, rng))
        m = vw_unembed(vw_embed(u), 7)
        eigs = np.sort(np.linalg.eigvalsh(m))
        np.testing.assert_allclose(np.trace(m).real, 1.0, atol=1e-12)
        np.testing.assert_allclose(eigs[-1], 1.0, atol=1e-10)
        assert np.max(np.abs(eigs[:-1])) < 1e-10

    def test_full_similarity_invariance(self):
        # translation + scaling + rotation of raw landmarks
        rng = np.random.default_rng(6)
        z = random_landmarks(6, rng)
        theta, scale, shift = 1.2, 3.3, np.array([0.4, -2.0])
        rot = np.array([[np.cos(theta), -np.sin(theta)],
                        [np.sin(theta), np.cos(theta)]])
        moved = scale * z @ rot.T + shift
        f0 = vw_embed(preshape(z))
        f1 = vw_embed(preshape(moved))
        assert np.max(np.abs(f0 - f1)) < 1e-10

    def test_batch_matches_single(self):
        rng = np.random.default_rng(7)
        us = preshape_batch(rng.normal(size=(8, 5, 2)))
        batch = vw_embed_batch(us)
        for i in range(8):
            np.testing.assert_allclose(batch[i], vw_embed(us[i]), atol=1e-14)


class TestTangentBasis:
    def test_dimension_and_orthonormality(self):
        rng = np.random.default_rng(8)
        base = preshape(random_landmarks(6, rng))
        basis = preshape_tangent_basis(base)
        assert basis.shape == (2 * 6 - 3, 2 * 6)
        np.testing.assert_allclose(basis @ basis.T, np.eye(9), atol=1e-10)
        np.testing.assert_allclose(basis @ base, 0.0, atol=1e-10)

    def test_rows_are_centered(self):
        rng = np.random.default_rng(9)
        base = preshape(random_landmarks(5, rng))
        basis = preshape_tangent_basis(base)
        for row in basis:
            assert abs(row[0::2].sum()) < 1e-10
            assert abs(row[1::2].sum()) < 1e-10


class TestLandmarkCSV:
    def test_load_without_header(self, tmp_path):
        rng = np.random.default_rng(10)
        data = rng.normal(size=(4, 8))
        path = tmp_path / "shapes.csv"
        np.savetxt(path, data, delimiter=",")
        np.testing.assert_allclose(load_landmark_csv(path), data)

    def test_load_with_header(self, tmp_path):
        rng = np.random.default_rng(11)
        data = rng.normal(size=(3, 6))
        path = tmp_path / "shapes.csv"
        header = ",".join(f"x{i},y{i}" for i in range(3))
        with path.open("w") as fh:
            fh.write(header + "\n")
            np.savetxt(fh, data, delimiter=",")
        np.testing.assert_allclose(load_landmark_csv(path), data)

    def test_odd_column_count_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("1,2,3,4,5\n")
        with pytest.raises(ShapeError):
            load_landmark_csv(path)
