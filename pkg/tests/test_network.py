"""Coordinate-network tests: features, forward pass, hard BCs."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import hyperelast.autodiff as ad
from hyperelast.bvp import preset
from hyperelast.errors import ShapeMismatch
from hyperelast.network import (
    BCEnforcer,
    DirichletFace,
    FieldNetwork,
    MLPSpec,
    RFFMap,
    forward,
)


class TestRFFMap:
    def test_origin_features(self):
        rff = RFFMap(m=5, sigma=2.0, seed=3)
        val, grad, hess = rff.features(np.zeros((1, 3)))
        assert val.shape == (1, 10)
        assert_allclose(val[0, 0::2], 1.0)  # cosines
        assert_allclose(val[0, 1::2], 0.0)  # sines

    def test_quarter_period(self):
        rff = RFFMap(m=1, sigma=1.0, seed=0)
        object.__setattr__(rff, "freq", np.array([[1.0, 0.0, 0.0]]))
        val, _, _ = rff.features(np.array([0.25, 0.0, 0.0]))
        assert_allclose(val, [np.cos(np.pi / 2), np.sin(np.pi / 2)], atol=1e-12)

    def test_sin_feature_gradient(self):
        rff = RFFMap(m=4, sigma=1.5, seed=1)
        rng = np.random.default_rng(2)
        X = rng.uniform(-1, 1, size=(6, 3))
        val, grad, _ = rff.features(X)
        W = 2.0 * np.pi * rff.freq
        w = X @ W.T
        analytic = np.einsum("nm,md->nmd", np.cos(w), W)
        assert_allclose(grad[:, 1::2, :], analytic, rtol=1e-12)
        # and against finite differences
        h = 1e-6
        for k in range(3):
            Xp, Xm = X.copy(), X.copy()
            Xp[:, k] += h
            Xm[:, k] -= h
            fd = (rff.features(Xp)[0] - rff.features(Xm)[0]) / (2 * h)
            err = np.abs(grad[..., k] - fd) / np.maximum(np.abs(grad[..., k]), 1e-8)
            assert err.max() <= 1e-6

    def test_unit_norm_sum(self):
        rff = RFFMap(m=13, sigma=0.7, seed=5)
        X = np.random.default_rng(6).uniform(-2, 2, size=(50, 3))
        val, _, _ = rff.features(X)
        norms = (val**2).sum(axis=-1)
        assert np.abs(norms - 13.0).max() <= 1e-12

    def test_reproducible_from_seed(self):
        assert np.array_equal(RFFMap(m=8, sigma=1.0, seed=9).freq,
                              RFFMap(m=8, sigma=1.0, seed=9).freq)

    def test_output_dim(self):
        assert RFFMap(m=7, sigma=1.0, seed=0).out_dim == 14


class TestMLPSpec:
    def test_param_count(self):
        spec = MLPSpec(widths=(8, 6, 12))
        assert spec.n_params == 8 * 6 + 6 + 6 * 12 + 12

    def test_output_width_enforced(self):
        with pytest.raises(ValueError):
            MLPSpec(widths=(8, 6, 7))

    def test_glorot_bounds(self):
        spec = MLPSpec(widths=(10, 20, 12))
        phi = spec.init_params(np.random.default_rng(0))
        w1 = phi[: 10 * 20]
        bound = np.sqrt(6.0 / 30.0)
        assert np.abs(w1).max() <= bound
        # biases start at zero
        b1 = phi[10 * 20: 10 * 20 + 20]
        assert np.all(b1 == 0.0)


class TestForward:
    def test_zero_weights_constant_output(self):
        rff = RFFMap(m=3, sigma=1.0, seed=2)
        spec = MLPSpec(widths=(6, 4, 12))
        phi = np.zeros(spec.n_params)
        X = np.random.default_rng(3).uniform(-1, 1, size=(9, 3))
        tape = ad.Tape()
        out = forward(spec, tape.input(phi), rff.features(X))
        assert np.all(out.val.data == 0.0)
        assert np.all(out.grad.data == 0.0)

    def test_hand_composed_two_neuron_net(self):
        rff = RFFMap(m=1, sigma=1.0, seed=4)
        spec = MLPSpec(widths=(2, 2, 12))
        rng = np.random.default_rng(5)
        phi = rng.standard_normal(spec.n_params)
        X = rng.uniform(-1, 1, size=(4, 3))
        tape = ad.Tape()
        out = forward(spec, tape.input(phi), rff.features(X))

        # independent composition with plain numpy
        W1 = phi[0:4].reshape(2, 2)
        b1 = phi[4:6]
        W2 = phi[6:30].reshape(12, 2)
        b2 = phi[30:42]
        w = 2.0 * np.pi * (X @ rff.freq.T).ravel()
        feats = np.stack([np.cos(w), np.sin(w)], axis=-1)
        hidden = np.tanh(feats @ W1.T + b1)
        expected = hidden @ W2.T + b2
        assert_allclose(out.val.data, expected, rtol=1e-13)

    def test_bitwise_deterministic(self):
        rff = RFFMap(m=4, sigma=1.0, seed=6)
        spec = MLPSpec(widths=(8, 5, 12))
        phi = np.random.default_rng(7).standard_normal(spec.n_params)
        X = np.random.default_rng(8).uniform(-1, 1, size=(11, 3))
        o1 = forward(spec, ad.Tape().input(phi), rff.features(X))
        o2 = forward(spec, ad.Tape().input(phi), rff.features(X))
        assert np.array_equal(o1.val.data, o2.val.data)
        assert np.array_equal(o1.hess.data, o2.hess.data)

    def test_shape_mismatch(self):
        rff = RFFMap(m=4, sigma=1.0, seed=6)
        spec = MLPSpec(widths=(8, 5, 12))
        with pytest.raises(ShapeMismatch):
            forward(spec, ad.Tape().input(np.zeros(3)), rff.features(np.zeros((2, 3))))

    def test_c2_continuity_of_hessians(self):
        # smooth activation: Hessians vary continuously between nearby points
        rff = RFFMap(m=4, sigma=1.0, seed=9)
        spec = MLPSpec(widths=(8, 6, 12))
        phi = ad.constant(0.3 * np.random.default_rng(10).standard_normal(spec.n_params))
        rng = np.random.default_rng(11)
        X = rng.uniform(-1, 1, size=(20, 3))
        delta = 1e-3
        out = forward(spec, phi, rff.features(X))
        out2 = forward(spec, phi, rff.features(X + delta))
        gap = np.abs(out.hess.data - out2.hess.data).max()
        scale = max(np.abs(out.hess.data).max(), 1.0)
        assert gap <= 50.0 * delta * scale


def cantilever_net(seed=0, m=3, hidden=(6,)):
    problem = preset("nh_cantilever_traction", grid=(5, 5, 5))
    rff = RFFMap(m=m, sigma=1.0, seed=seed)
    spec = MLPSpec(widths=(2 * m,) + hidden + (12,))
    net = FieldNetwork(rff=rff, mlp=spec, enforcer=problem.enforcer, stress_scale=385.0)
    return problem, net


class TestHardBC:
    def test_fixed_face_exact_for_random_parameters(self):
        problem, net = cantilever_net()
        rng = np.random.default_rng(12)
        Y, Z = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
        face = np.stack([np.zeros(25), Y.ravel(), Z.ravel()], axis=-1)
        worst = 0.0
        feats = net.rff.features(face)
        bc = net.enforcer.bc_jets(face)
        for _ in range(1000):
            phi = ad.constant(rng.standard_normal(net.n_params))
            u, _ = net.fields(phi, face, features=feats, bc=bc)
            worst = max(worst, max(np.abs(u[i].val.data).max() for i in range(3)))
        assert worst == 0.0

    def test_prescribed_displacement_face_exact(self):
        problem = preset("lp_cantilever_displacement", grid=(5, 5, 5))
        rff = RFFMap(m=3, sigma=1.0, seed=1)
        spec = MLPSpec(widths=(6, 6, 12))
        net = FieldNetwork(rff=rff, mlp=spec, enforcer=problem.enforcer, stress_scale=150.0)
        Y, Z = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
        face = np.stack([np.full(25, 4.0), Y.ravel(), Z.ravel()]).reshape(3, -1).T
        phi = ad.constant(np.random.default_rng(13).standard_normal(net.n_params))
        u, _ = net.fields(phi, face)
        assert np.all(u[1].val.data == -1.0)
        assert np.all(u[0].val.data == 0.0)
        assert np.all(u[2].val.data == 0.0)

    def test_product_rule_in_gradient(self):
        # interior points: du/dX carries B' y + B y' terms; check against FD
        problem, net = cantilever_net(seed=2, hidden=(8,))
        rng = np.random.default_rng(14)
        phi = ad.constant(rng.standard_normal(net.n_params))
        X = rng.uniform(0.2, 0.8, size=(7, 3))
        X[:, 0] = rng.uniform(0.5, 3.5, size=7)
        u, _ = net.fields(phi, X)
        h = 1e-6
        for k in range(3):
            Xp, Xm = X.copy(), X.copy()
            Xp[:, k] += h
            Xm[:, k] -= h
            up, _ = net.fields(phi, Xp)
            um, _ = net.fields(phi, Xm)
            for i in range(3):
                fd = (up[i].val.data - um[i].val.data) / (2 * h)
                err = np.abs(u[i].grad.data[:, k] - fd) / np.maximum(np.abs(fd), 1e-8)
                assert err.max() <= 1e-6

    def test_stress_passthrough_scaled(self):
        problem, net = cantilever_net(seed=3)
        rng = np.random.default_rng(15)
        phi_arr = rng.standard_normal(net.n_params)
        X = rng.uniform(0.1, 0.9, size=(5, 3))
        y_u, y_P = net.raw_outputs(ad.constant(phi_arr), X)
        _, P = net.fields(ad.constant(phi_arr), X)
        for i in range(3):
            for j in range(3):
                assert_allclose(P[i][j].val.data, 385.0 * y_P[i][j].val.data, rtol=1e-15)

    def test_mask_vanishes_only_on_dirichlet_faces(self):
        problem = preset("lp_cantilever_displacement", grid=(5, 5, 5))
        enforcer = problem.enforcer
        X = np.array([[0.0, 0.5, 0.5], [4.0, 0.5, 0.5], [2.0, 0.0, 0.5]])
        B = enforcer.mask_jets(X)
        for i in range(3):
            vals = B[i].val.data
            assert vals[0] == 0.0 and vals[1] == 0.0
            assert vals[2] > 0.0
