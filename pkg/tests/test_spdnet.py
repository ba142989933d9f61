"""SPD layer stack: forward contracts, eigendecomposition backprop against
finite differences (including near-degenerate spectra), and Stiefel
updates."""

import numpy as np
import pytest
from helpers import fd_network_grads, fd_symmetric_grad, rel_err

from manifold_dnn import nn
from manifold_dnn.errors import NumericError, ShapeError, SpecError
from manifold_dnn.manifolds import random_spd, spd_embed, spd_expm, sym_unvec
from manifold_dnn.spdnet import (
    BiMapLayer,
    ReEigLayer,
    SPDNetModel,
    bimap_backward,
    bimap_forward,
    build_spdnet,
    freeze_base,
    init_bimap,
    load_spdnet,
    logeig_backward,
    logeig_forward,
    reeig_backward,
    reeig_forward,
    save_spdnet,
    spdnet_forward,
    spdnet_loss_grads,
    stack_forward,
    stiefel_update,
    save_spdnet,
)


def spd_with_spectrum(eigs, rng):
    d = len(eigs)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * np.asarray(eigs)) @ q.T


class TestBiMap:
    def test_identity_weight_preserves_input(self):
        p = random_spd(4, np.random.default_rng(0))
        layer = BiMapLayer(np.eye(4))
        np.testing.assert_allclose(bimap_forward(layer, p[None])[0], p)

    def test_column_selection_takes_principal_submatrix(self):
        p = random_spd(4, np.random.default_rng(1))
        layer = BiMapLayer(np.eye(4)[:, :2])
        np.testing.assert_allclose(bimap_forward(layer, p[None])[0], p[:2, :2])

    def test_eigenvalue_interlacing(self):
        # Cauchy interlacing oracle: outputs stay within the input spectrum
        rng = np.random.default_rng(2)
        for _ in range(10):
            p = random_spd(6, rng)
            layer = init_bimap(6, 3, rng)
            out = bimap_forward(layer, p[None])[0]
            s_in = np.linalg.eigvalsh(p)
            s_out = np.linalg.eigvalsh(out)
            assert s_out[0] >= s_in[0] - 1e-10
            assert s_out[-1] <= s_in[-1] + 1e-10

    def test_orthogonal_square_weight_preserves_eigenvalues(self):
        rng = np.random.default_rng(3)
        p = random_spd(5, rng)
        layer = init_bimap(5, 5, rng)
        out = bimap_forward(layer, p[None])[0]
        np.testing.assert_allclose(np.linalg.eigvalsh(out),
                                   np.linalg.eigvalsh(p), atol=1e-9)

    def test_rejects_expansion(self):
        with pytest.raises(SpecError):
            BiMapLayer(np.eye(3)[:, :2].T)

    def test_rejects_non_orthonormal(self):
        with pytest.raises(SpecError):
            BiMapLayer(np.full((3, 2), 0.5))

    def test_dimension_mismatch(self):
        layer = BiMapLayer(np.eye(4)[:, :2])
        with pytest.raises(ShapeError):
            bimap_forward(layer, np.eye(3)[None])


class TestReEig:
    def test_pass_through_above_floor(self):
        p = spd_with_spectrum([0.5, 1.0, 2.0], np.random.default_rng(4))
        out, _ = reeig_forward(ReEigLayer(1e-4), p[None])
        np.testing.assert_allclose(out[0], p, atol=1e-10)

    def test_diagonal_flooring(self):
        out, _ = reeig_forward(ReEigLayer(1e-4), np.diag([1e-8, 1.0])[None])
        np.testing.assert_allclose(out[0], np.diag([1e-4, 1.0]), atol=1e-15)

    def test_min_eigenvalue_at_least_floor(self):
        rng = np.random.default_rng(5)
        layer = ReEigLayer(1e-3)
        for _ in range(10):
            s = spd_with_spectrum(rng.uniform(1e-6, 2.0, size=5), rng)
            out, _ = reeig_forward(layer, s[None])
            assert np.linalg.eigvalsh(out[0])[0] >= layer.epsilon - 1e-12

    def test_idempotent(self):
        rng = np.random.default_rng(6)
        layer = ReEigLayer(0.05)
        p = spd_with_spectrum([0.01, 0.2, 1.0, 3.0], rng)
        once, _ = reeig_forward(layer, p[None])
        twice, _ = reeig_forward(layer, once)
        np.testing.assert_allclose(twice, once, atol=1e-10)


class TestLogEig:
    def test_matches_embedding(self):
        p = random_spd(4, np.random.default_rng(7))
        feats, _ = logeig_forward(p[None])
        np.testing.assert_allclose(feats[0], spd_embed(p), atol=1e-12)

    def test_roundtrip_through_matrix_exp(self):
        rng = np.random.default_rng(8)
        a = rng.standard_normal((3, 3))
        s = 0.5 * (a + a.T)
        feats, _ = logeig_forward(spd_expm(s)[None])
        np.testing.assert_allclose(sym_unvec(feats[0], 3), s, atol=1e-9)


class TestSpectralBackward:
    def test_log_gradient_at_identity_is_symmetrized_upstream(self):
        _, cache = logeig_forward(np.eye(3)[None])
        rng = np.random.default_rng(9)
        g_feats = rng.standard_normal((1, 6))
        grad = logeig_backward(cache, g_feats)
        np.testing.assert_allclose(grad[0], sym_unvec(g_feats[0], 3),
                                   atol=1e-12)

    def test_reeig_gradient_in_identity_region(self):
        rng = np.random.default_rng(10)
        p = spd_with_spectrum([0.5, 1.0, 2.0], rng)
        layer = ReEigLayer(1e-4)
        _, cache = reeig_forward(layer, p[None])
        g = rng.standard_normal((1, 3, 3))
        grad = reeig_backward(layer, cache, g)
        np.testing.assert_allclose(grad[0], 0.5 * (g[0] + g[0].T), atol=1e-10)

    def test_non_finite_upstream_raises(self):
        _, cache = logeig_forward(np.eye(2)[None])
        with pytest.raises(NumericError):
            logeig_backward(cache, np.array([[np.nan, 0.0, 0.0]]))


class TestFullNetworkGradients:
    @pytest.mark.parametrize("terminal", ["logeig", "tangent-log",
                                          "tangent-affine"])
    def test_matches_finite_differences(self, terminal):
        rng = np.random.default_rng(11)
        model = build_spdnet((5, 4, 3), (8,), 1, seed=12, terminal=terminal)
        for b in model.net.biases[:-1]:
            b += 0.05  # keep ReLU pre-activations off the kink
        ps = np.stack([random_spd(5, rng, scale=0.4) for _ in range(3)])
        y = rng.normal(size=3)
        base = None
        if terminal != "logeig":
            out, _ = stack_forward(model, ps)
            from manifold_dnn.spdnet import batch_base

            base = batch_base(model, out)
        loss = nn.LossKind.SQUARED_ERROR

        def loss_value():
            return spdnet_loss_grads(model, ps, y, loss, base=base)[0]

        value, net_grads, w_grads, p_grads = spdnet_loss_grads(
            model, ps, y, loss, base=base)

        # dense tail parameters
        fw, fb = fd_network_grads(model.net, lambda _p: loss_value())
        for g, f in zip(net_grads.weights + net_grads.biases, fw + fb):
            assert rel_err(g, f) < 1e-4

        # BiMap weights (perturbed in place: the Euclidean gradient is
        # defined off the Stiefel manifold too)
        h = 1e-6
        for layer, grad in zip(model.bimaps, w_grads):
            w = layer.weight
            fd = np.zeros_like(w)
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    orig = w[i, j]
                    w[i, j] = orig + h
                    up = loss_value()
                    w[i, j] = orig - h
                    down = loss_value()
                    w[i, j] = orig
                    fd[i, j] = (up - down) / (2.0 * h)
            assert rel_err(grad, fd) < 1e-4

        # input matrices, symmetric perturbations
        for idx in range(ps.shape[0]):
            def input_loss(p):
                saved = ps[idx].copy()
                ps[idx] = p
                val = loss_value()
                ps[idx] = saved
                return val

            fd = fd_symmetric_grad(input_loss, ps[idx])
            assert rel_err(p_grads[idx], fd) < 1e-4

    def test_near_degenerate_eigenvalue_pair(self):
        # gap of 1e-9 sits just above the divided-difference threshold
        rng = np.random.default_rng(13)
        model = build_spdnet((4, 3), (6,), 1, seed=14)
        for b in model.net.biases[:-1]:
            b += 0.05
        lam = 0.5
        p = spd_with_spectrum([lam, lam + 1e-9, 1.5, 2.5], rng)
        ps = p[None]
        y = np.array([0.3])
        loss = nn.LossKind.SQUARED_ERROR
        _, _, w_grads, p_grads = spdnet_loss_grads(model, ps, y, loss)

        def input_loss(q):
            return spdnet_loss_grads(model, q[None], y, loss)[0]

        fd = fd_symmetric_grad(input_loss, p)
        assert rel_err(p_grads[0], fd) < 1e-4

    def test_exactly_degenerate_pair_uses_stable_limit(self):
        rng = np.random.default_rng(15)
        model = build_spdnet((4, 3), (6,), 1, seed=16)
        p = spd_with_spectrum([0.7, 0.7, 1.5, 2.5], rng)
        _, _, _, p_grads = spdnet_loss_grads(
            model, p[None], np.array([0.1]), nn.LossKind.SQUARED_ERROR)
        assert np.all(np.isfinite(p_grads))


class TestStiefelUpdate:
    def test_zero_gradient_keeps_weight(self):
        rng = np.random.default_rng(17)
        layer = init_bimap(5, 3, rng)
        updated = stiefel_update(layer, np.zeros((5, 3)), lr=1e-2)
        np.testing.assert_allclose(updated.weight, layer.weight, atol=1e-12)

    def test_retraction_restores_orthonormality(self):
        rng = np.random.default_rng(18)
        layer = init_bimap(6, 4, rng)
        grad = rng.standard_normal((6, 4))
        updated = stiefel_update(layer, grad, lr=0.1)
        gram = updated.weight.T @ updated.weight
        assert np.max(np.abs(gram - np.eye(4))) < 1e-8

    def test_descends_a_quadratic(self):
        rng = np.random.default_rng(19)
        p = random_spd(5, rng)
        target = random_spd(3, rng)
        layer = init_bimap(5, 3, rng)

        def loss_and_grad(lay):
            out = bimap_forward(lay, p[None])[0]
            resid = out - target
            _, gw = bimap_backward(lay, p[None], (2.0 * resid)[None])
            return float(np.sum(resid**2)), gw

        losses = []
        for _ in range(100):
            value, gw = loss_and_grad(layer)
            losses.append(value)
            layer = stiefel_update(layer, gw, lr=1e-3)
        assert losses[-1] < losses[0]


class TestStackInvariants:
    def test_every_layer_output_is_spd(self):
        rng = np.random.default_rng(20)
        model = build_spdnet((6, 4, 3), (4,), 2, seed=21)
        ps = np.stack([random_spd(6, rng) for _ in range(5)])
        cur = ps
        for bimap, reeig in zip(model.bimaps, model.reeigs):
            cur = bimap_forward(bimap, cur)
            assert np.all(np.linalg.eigvalsh(cur)[:, 0] > 0)
            cur, _ = reeig_forward(reeig, cur)
            assert np.all(np.linalg.eigvalsh(cur)[:, 0] > 0)

    def test_tangent_terminal_requires_base(self):
        model = build_spdnet((4, 3), (4,), 2, seed=22, terminal="tangent-log")
        p = random_spd(4, np.random.default_rng(23))
        with pytest.raises(SpecError):
            spdnet_forward(model, p[None])

    def test_serialization_roundtrip(self, tmp_path):
        rng = np.random.default_rng(24)
        model = build_spdnet((4, 3), (5,), 2, seed=25, terminal="tangent-log")
        ps = np.stack([random_spd(4, rng) for _ in range(6)])
        freeze_base(model, ps)
        save_spdnet(model, tmp_path)
        loaded = load_spdnet(tmp_path)
        np.testing.assert_allclose(spdnet_forward(loaded, ps),
                                   spdnet_forward(model, ps), atol=1e-15)
