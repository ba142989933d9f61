"""Sphere geometry: exp/log maps, distances, bases, Fréchet means, and the
point/tangent validity checks."""

import numpy as np
import pytest

from manifold_dnn.errors import (
    ConvergenceError,
    CutLocusError,
    GeometryError,
    SpecError,
)
from manifold_dnn.manifolds import (
    ManifoldPoint,
    TangentVector,
    frechet_mean,
    intrinsic_dim,
    make_point,
    random_tangent,
    sphere_dist,
    sphere_dist_matrix,
    sphere_exp,
    sphere_log,
    sphere_log_batch,
    tangent_basis,
    uniform_sphere,
    validate_tangent,
)
from manifold_dnn.synthdata import sample_vmf

NORTH = np.array([0.0, 0.0, 1.0])
EAST = np.array([1.0, 0.0, 0.0])


class TestExpLog:
    def test_zero_vector_fixes_base(self):
        np.testing.assert_allclose(sphere_exp(NORTH, np.zeros(3)), NORTH)

    def test_quarter_great_circle(self):
        out = sphere_exp(NORTH, np.array([np.pi / 2, 0.0, 0.0]))
        np.testing.assert_allclose(out, EAST, atol=1e-15)

    def test_log_at_same_point_is_zero(self):
        np.testing.assert_allclose(sphere_log(NORTH, NORTH), np.zeros(3))

    def test_log_inverts_quarter_circle(self):
        np.testing.assert_allclose(
            sphere_log(NORTH, EAST), [np.pi / 2, 0.0, 0.0], atol=1e-15)

    def test_antipodal_log_raises(self):
        with pytest.raises(CutLocusError):
            sphere_log(NORTH, -NORTH)

    def test_non_tangent_vector_raises(self):
        with pytest.raises(GeometryError):
            sphere_exp(NORTH, np.array([0.0, 0.1, 0.5]))

    def test_roundtrip_at_norm_2_5(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            p = uniform_sphere(4, 1, rng)[0]
            v = random_tangent(p, rng, 2.5)
            back = sphere_log(p, sphere_exp(p, v))
            np.testing.assert_allclose(back, v, atol=1e-9)

    def test_roundtrip_inside_injectivity_radius(self):
        rng = np.random.default_rng(4)
        for m in (3, 11, 51):
            p = uniform_sphere(m, 1, rng)[0]
            for norm in rng.uniform(0.0, np.pi - 0.1, size=10):
                v = random_tangent(p, rng, norm)
                back = sphere_log(p, sphere_exp(p, v))
                assert np.max(np.abs(back - v)) < 1e-8

    def test_batch_log_matches_single(self):
        rng = np.random.default_rng(5)
        p = uniform_sphere(5, 1, rng)[0]
        qs = uniform_sphere(5, 20, rng)
        batch = sphere_log_batch(p, qs)
        for i in range(20):
            np.testing.assert_allclose(batch[i], sphere_log(p, qs[i]), atol=1e-12)


class TestDistance:
    def test_self_distance_zero(self):
        assert sphere_dist(NORTH, NORTH) == 0.0

    def test_symmetry_and_triangle_inequality(self):
        rng = np.random.default_rng(6)
        xs = uniform_sphere(4, 30, rng)
        d = sphere_dist_matrix(xs, xs)
        np.testing.assert_allclose(d, d.T, atol=1e-12)
        for _ in range(200):
            i, j, k = rng.integers(0, 30, size=3)
            assert d[i, j] <= d[i, k] + d[k, j] + 1e-10

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(7)
        xs = uniform_sphere(3, 10, rng)
        d = sphere_dist_matrix(xs, xs)
        off = d + np.eye(10)
        assert np.min(off) > 1e-3
        assert np.max(np.diag(d)) < 1e-7


class TestTangentBasis:
    def test_orthonormal_and_tangent(self):
        rng = np.random.default_rng(8)
        for m in (3, 7, 20):
            p = uniform_sphere(m, 1, rng)[0]
            basis = tangent_basis(p)
            assert basis.shape == (m - 1, m)
            np.testing.assert_allclose(basis @ basis.T, np.eye(m - 1), atol=1e-12)
            np.testing.assert_allclose(basis @ p, 0.0, atol=1e-12)

    def test_deterministic(self):
        p = uniform_sphere(6, 1, np.random.default_rng(9))[0]
        assert np.array_equal(tangent_basis(p), tangent_basis(p))


class TestFrechetMean:
    def test_single_point(self):
        p = uniform_sphere(3, 1, np.random.default_rng(0))[0]
        np.testing.assert_allclose(frechet_mean(p[None], manifold="sphere-2"), p)

    def test_symmetric_pair_midpoint(self):
        v = np.array([0.2, 0.0, 0.0])
        pts = np.stack([sphere_exp(NORTH, v), sphere_exp(NORTH, -v)])
        mean = frechet_mean(pts, manifold="sphere-2")
        np.testing.assert_allclose(mean, NORTH, atol=1e-8)

    def test_vmf_concentration_monte_carlo(self):
        # Monte Carlo oracle: concentrated samples average near the location
        mu = np.array([0.0, 1.0, 0.0])
        xs = sample_vmf(mu, 50.0, 100, 1234)
        mean = frechet_mean(xs, manifold="sphere-2")
        assert sphere_dist(mean, mu) < 0.1

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(10)
        xs = sample_vmf(NORTH, 8.0, 40, 77)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        rotated = frechet_mean(xs @ q.T, manifold="sphere-2")
        base = frechet_mean(xs, manifold="sphere-2")
        np.testing.assert_allclose(rotated, q @ base, atol=1e-8)

    def test_accepts_manifold_points(self):
        pts = [ManifoldPoint("sphere-2", NORTH), ManifoldPoint("sphere-2", EAST)]
        mean = frechet_mean(pts)
        mid = sphere_exp(NORTH, sphere_log(NORTH, EAST) / 2)
        np.testing.assert_allclose(mean, mid, atol=1e-8)

    def test_nonconvergence_carries_last_iterate(self):
        xs = sample_vmf(NORTH, 5.0, 20, 3)
        with pytest.raises(ConvergenceError) as err:
            frechet_mean(xs, manifold="sphere-2", max_iter=1, tol=1e-16)
        assert err.value.last_iterate is not None
        assert np.isfinite(err.value.last_iterate).all()

    def test_empty_input_rejected(self):
        with pytest.raises(SpecError):
            frechet_mean(np.empty((0, 3)), manifold="sphere-2")


class TestPointValidation:
    def test_unit_sphere_point_accepted(self):
        pt = make_point("sphere-2", NORTH)
        assert pt.manifold == "sphere-2"

    def test_off_sphere_point_rejected(self):
        with pytest.raises(GeometryError):
            make_point("sphere-2", np.array([0.0, 0.0, 1.1]))

    def test_tangent_validation(self):
        pt = make_point("sphere-2", NORTH)
        validate_tangent(TangentVector(pt, np.array([0.3, -0.2, 0.0])))
        with pytest.raises(GeometryError):
            validate_tangent(TangentVector(pt, np.array([0.0, 0.0, 0.5])))

    def test_intrinsic_dims(self):
        assert intrinsic_dim("sphere-2") == 2
        assert intrinsic_dim("preshape-50") == 97
        assert intrinsic_dim("spd-20") == 210

    def test_unknown_tag_rejected(self):
        with pytest.raises(SpecError):
            intrinsic_dim("torus-2")
