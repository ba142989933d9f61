"""Data generators: distributional checks for the sphere sampler, the
mixture model, shape and SPD classes, regression targets, and dataset
serialization."""

import numpy as np
import pytest
from helpers import vmf_cosine_quadrature
from scipy import stats

from manifold_dnn.errors import SpecError
from manifold_dnn.experiments import knn_baseline
from manifold_dnn.manifolds import sphere_dist
from manifold_dnn.synthdata import (
    Dataset,
    MixtureSpec,
    gen_planar_shapes,
    gen_regression_sphere,
    gen_spd_dataset,
    load_dataset,
    random_spd_bases,
    sample_mixture,
    sample_vmf,
    save_dataset,
    shape_template,
)
from manifold_dnn.manifolds import spd_dist, vw_embed


class TestVMFSampler:
    def test_outputs_are_unit_norm(self):
        xs = sample_vmf(np.array([0.0, 0.0, 1.0]), 10.0, 500, 0)
        np.testing.assert_allclose(np.linalg.norm(xs, axis=1), 1.0, atol=1e-12)

    def test_kappa_zero_is_uniform(self):
        xs = sample_vmf(np.array([1.0, 0.0, 0.0]), 0.0, 10_000, 1)
        assert np.linalg.norm(xs.mean(axis=0)) < 0.05

    def test_high_concentration_hits_the_location(self):
        mu = np.array([0.0, 1.0, 0.0])
        xs = sample_vmf(mu, 200.0, 10_000, 2)
        mean_dir = xs.mean(axis=0)
        mean_dir /= np.linalg.norm(mean_dir)
        assert sphere_dist(mean_dir, mu) < 0.05

    def test_cosine_mean_matches_quadrature(self):
        # quadrature oracle over the 1-d cosine marginal (d=2, kappa=5)
        mu = np.array([0.0, 0.0, 1.0])
        xs = sample_vmf(mu, 5.0, 100_000, 3)
        _, _, mean = vmf_cosine_quadrature(5.0, 2)
        assert abs((xs @ mu).mean() - mean) < 0.02

    @pytest.mark.parametrize("sphere_dim,kappa", [(2, 4.0), (10, 20.0), (50, 20.0)])
    def test_cosine_marginal_ks(self, sphere_dim, kappa):
        mu = np.zeros(sphere_dim + 1)
        mu[0] = 1.0
        xs = sample_vmf(mu, kappa, 100_000, 4)
        _, cdf, _ = vmf_cosine_quadrature(kappa, sphere_dim)
        result = stats.kstest(xs @ mu, cdf)
        assert result.pvalue > 0.01

    def test_deterministic_given_seed(self):
        mu = np.array([0.0, 1.0, 0.0])
        a = sample_vmf(mu, 7.0, 100, 9)
        b = sample_vmf(mu, 7.0, 100, 9)
        assert np.array_equal(a, b)

    def test_rejects_non_unit_mu(self):
        from manifold_dnn.errors import GeometryError

        with pytest.raises(GeometryError):
            sample_vmf(np.array([0.0, 0.0, 2.0]), 1.0, 10, 0)


class TestMixture:
    def test_concentrated_subcenters(self):
        spec = MixtureSpec(sphere_dim=2, n_classes=2, n_per_class=50,
                           kappa1=1e6, kappa2=20.0, seed=5)
        ds = sample_mixture(spec)
        # with kappa1 -> inf every sample concentrates around its class
        # center's immediate neighborhood of sub-centers
        subs = sample_vmf(spec.centers[0], 1e6, 10, 5)
        for s in subs:
            assert sphere_dist(s, spec.centers[0]) < 0.01

    def test_reference_regime_shapes(self):
        spec = MixtureSpec(sphere_dim=2, n_classes=2, n_per_class=2000,
                           kappa1=4.0, kappa2=20.0, seed=6)
        ds = sample_mixture(spec)
        assert len(ds) == 4000
        assert ds.manifold == "sphere-2"
        assert ds.n_classes == 2
        assert np.all(np.bincount(ds.targets) == 2000)

    def test_deterministic(self):
        spec = MixtureSpec(sphere_dim=4, n_classes=3, n_per_class=40,
                           kappa1=4.0, kappa2=20.0, seed=7)
        a, b = sample_mixture(spec), sample_mixture(spec)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.targets, b.targets)

    def test_points_are_valid(self):
        spec = MixtureSpec(sphere_dim=3, n_classes=2, n_per_class=25,
                           kappa1=2.0, kappa2=10.0, seed=8)
        sample_mixture(spec).validate_points()

    def test_too_many_classes_for_default_centers(self):
        with pytest.raises(SpecError):
            MixtureSpec(sphere_dim=2, n_classes=5, n_per_class=10,
                        kappa1=1.0, kappa2=1.0)


class TestPlanarShapes:
    def test_sigma_zero_gives_identical_embeddings(self):
        tpls = [shape_template("bean", 8), shape_template("trefoil", 8)]
        ds = gen_planar_shapes(tpls, 0.0, 20, 11)
        feats = np.stack([vw_embed(p) for p in ds.points])
        for c in (0, 1):
            block = feats[ds.targets == c]
            assert np.max(np.abs(block - block[0])) < 1e-10

    def test_sigma_zero_without_rotation_reproduces_template(self):
        from manifold_dnn.manifolds import preshape

        tpl = shape_template("circle", 6)
        ds = gen_planar_shapes([tpl, shape_template("bean", 6)], 0.0, 1, 12,
                               rotation=0.0)
        np.testing.assert_allclose(ds.points[0], preshape(tpl), atol=1e-12)

    def test_one_nn_separates_well_separated_templates(self):
        tpls = [shape_template("bean", 10), shape_template("trefoil", 10)]
        ds = gen_planar_shapes(tpls, 0.02, 40, 13, rotation=0.3)
        rng = np.random.default_rng(0)
        perm = rng.permutation(len(ds))
        train, test = ds.subset(perm[:60]), ds.subset(perm[60:])
        assert knn_baseline(train, test, 1) == 1.0

    def test_points_are_valid(self):
        tpls = [shape_template("circle", 7), shape_template("ellipse", 7)]
        gen_planar_shapes(tpls, 0.1, 15, 14).validate_points()


class TestSPDClasses:
    def test_spread_zero_reproduces_bases(self):
        bases = random_spd_bases(4, 2, 0.6, 15)
        ds = gen_spd_dataset(4, bases, 0.0, 5, 16)
        for i in range(len(ds)):
            np.testing.assert_allclose(ds.points[i], bases[ds.targets[i]],
                                       atol=1e-10)

    def test_outputs_are_spd(self):
        bases = random_spd_bases(5, 3, 0.5, 17)
        ds = gen_spd_dataset(5, bases, 0.4, 10, 18)
        ds.validate_points()

    def test_distant_classes_are_knn_separable(self):
        bases = random_spd_bases(5, 2, 1.0, 19)
        spread = 0.15
        assert spd_dist(bases[0], bases[1]) > 5 * spread
        ds = gen_spd_dataset(5, bases, spread, 60, 20)
        rng = np.random.default_rng(1)
        perm = rng.permutation(len(ds))
        train, test = ds.subset(perm[:80]), ds.subset(perm[80:])
        assert knn_baseline(train, test, 3) > 0.95


class TestRegression:
    def test_sigma_zero_targets_are_exact(self):
        ds = gen_regression_sphere("smooth", 0.0, 50, 21)
        x = ds.points
        expected = np.sin(3 * x[:, 0]) * x[:, 1] + x[:, 2] ** 2
        np.testing.assert_allclose(ds.targets, expected, atol=1e-14)

    def test_noise_variance(self):
        ds = gen_regression_sphere("zero", 1.0, 10_000, 22)
        assert abs(ds.targets.var() - 1.0) < 0.05

    def test_deterministic(self):
        a = gen_regression_sphere("smooth", 0.1, 30, 23)
        b = gen_regression_sphere("smooth", 0.1, 30, 23)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.targets, b.targets)


class TestDatasetSerialization:
    def test_roundtrip_classification(self, tmp_path):
        spec = MixtureSpec(sphere_dim=2, n_classes=2, n_per_class=10,
                           kappa1=4.0, kappa2=20.0, seed=24)
        ds = sample_mixture(spec)
        csv_path, prov_path = save_dataset(ds, tmp_path / "data")
        assert csv_path.exists() and prov_path.exists()
        loaded = load_dataset(tmp_path / "data")
        assert loaded.manifold == ds.manifold
        assert np.array_equal(loaded.points, ds.points)
        assert np.array_equal(loaded.targets, ds.targets)
        assert loaded.provenance == ds.provenance

    def test_roundtrip_spd_regression_targets(self, tmp_path):
        bases = random_spd_bases(3, 2, 0.5, 25)
        ds = gen_spd_dataset(3, bases, 0.2, 4, 26)
        save_dataset(ds, tmp_path / "spd")
        loaded = load_dataset(tmp_path / "spd")
        assert loaded.points.shape == (8, 3, 3)
        assert np.array_equal(loaded.points, ds.points)

    def test_point_accessors(self):
        ds = gen_regression_sphere("zero", 0.0, 5, 27)
        assert len(ds.inputs) == 5
        assert ds.point(2).manifold == "sphere-2"
