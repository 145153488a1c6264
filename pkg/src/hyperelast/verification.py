"""Finite-difference verification suites.

Each suite returns (name, worst_error, tolerance, passed); the CLI's
check-gradients command runs them all and the acceptance tests reuse
them directly.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .bvp import preset
from .materials import LopezPamies, NeoHookean, eval_psi, eval_stress
from .solver import TrainingObjective, build_network


def random_states(rng, n, spread=0.3, min_det=0.2):
    """Random deformation gradients near identity with a safe determinant."""
    out = []
    while len(out) < n:
        F = np.eye(3) + rng.uniform(-spread, spread, size=(3, 3))
        if np.linalg.det(F) >= min_det:
            out.append(F)
    return np.array(out)


def check_material_consistency(seed=0, n=100, h=1e-6, tol=1e-6):
    """P against central differences of psi, both models."""
    rng = np.random.default_rng(seed)
    materials = [
        NeoHookean(lam=577.0, mu=385.0),
        LopezPamies(alphas=(1.0, -2.0), mus=(100.0, 50.0), lam=100.0),
    ]
    worst = 0.0
    for mat in materials:
        for F in random_states(rng, n):
            P = eval_stress(mat, F)
            scale = max(np.abs(P).max(), 1e-8)
            for i in range(3):
                for j in range(3):
                    Fp, Fm = F.copy(), F.copy()
                    Fp[i, j] += h
                    Fm[i, j] -= h
                    fd = (eval_psi(mat, Fp) - eval_psi(mat, Fm)) / (2.0 * h)
                    worst = max(worst, abs(P[i, j] - fd) / scale)
    return ("material P = d(psi)/dF", worst, tol, worst <= tol)


def _tiny_objective(seed, grid=(5, 5, 5), hidden=(8, 8), m=4):
    problem = preset("nh_cantilever_traction", grid=grid)
    net = build_network(
        problem, hidden=hidden, fourier_features=m, fourier_sigma=1.0, seed=seed
    )
    return problem, net, TrainingObjective(problem, net)


def check_loss_gradient(seed=0, h=1e-6, tol=1e-5):
    """Parameter gradient of the six-term loss against central differences.

    Uses the frozen uniform weights of a fresh objective, a 2x8 network
    and a 5^3 grid, sweeping every parameter.
    """
    _, net, objective = _tiny_objective(seed)
    rng = np.random.default_rng(seed + 1)
    phi = net.init_params() + 0.01 * rng.standard_normal(net.n_params)
    _, grad = objective(phi)
    scale = max(np.abs(grad).max(), 1e-10)
    worst = 0.0
    for k in range(phi.size):
        up, dn = phi.copy(), phi.copy()
        up[k] += h
        dn[k] -= h
        fd = (objective(up)[0] - objective(dn)[0]) / (2.0 * h)
        worst = max(worst, abs(grad[k] - fd) / scale)
    return ("loss d(total)/d(phi)", worst, tol, worst <= tol)


def check_spatial_hessians(seed=0, n_points=5, h=1e-4, tol=1e-4):
    """Network output Hessians against central differences of the gradients."""
    problem, net, _ = _tiny_objective(seed)
    rng = np.random.default_rng(seed + 2)
    phi = net.init_params() + 0.05 * rng.standard_normal(net.n_params)
    phi_c = ad.constant(phi)
    lo = np.asarray(problem.domain.origin)
    hi = lo + np.asarray(problem.domain.lengths)
    X = rng.uniform(lo + 0.1, hi - 0.1, size=(n_points, 3))

    def grads_at(Xp):
        u, P = net.fields(phi_c, Xp)
        comps = list(u) + [P[i][j] for i in range(3) for j in range(3)]
        return np.stack([c.grad.data for c in comps], axis=-2)  # (n, 12, 3)

    base_u, base_P = net.fields(phi_c, X)
    comps = list(base_u) + [base_P[i][j] for i in range(3) for j in range(3)]
    hess = np.stack([c.hess.data for c in comps], axis=-3)  # (n, 12, 3, 3)
    worst = 0.0
    scale = max(np.abs(hess).max(), 1e-8)
    for j in range(3):
        Xp, Xm = X.copy(), X.copy()
        Xp[:, j] += h
        Xm[:, j] -= h
        fd = (grads_at(Xp) - grads_at(Xm)) / (2.0 * h)  # (n, 12, 3)
        worst = max(worst, np.abs(hess[..., j, :] - fd).max() / scale)
    return ("network spatial Hessians", worst, tol, worst <= tol)


def check_tape_gradient(seed=0, h=1e-6, tol=1e-5):
    """Mean-output loss of a random two-layer net against central FD."""
    rng = np.random.default_rng(seed + 3)
    W1 = rng.standard_normal((6, 4))
    W2 = rng.standard_normal((3, 6))
    x = rng.standard_normal(4)
    n1, n2 = W1.size, W2.size

    def loss_and_grad(phi):
        tape = ad.Tape()
        p = tape.input(phi)
        w1 = ad.reshape(ad.take(p, np.arange(n1)), (6, 4))
        w2 = ad.reshape(ad.take(p, np.arange(n1, n1 + n2)), (3, 6))
        hidden_ = ad.tanh(ad.einsum2("i,oi->o", ad.constant(x), w1))
        out = ad.einsum2("i,oi->o", hidden_, w2)
        loss = ad.mean(out)
        return float(loss.data), ad.reverse_gradient(loss, p)

    phi0 = rng.standard_normal(n1 + n2)
    _, g = loss_and_grad(phi0)
    err = ad.fd_check(lambda p: loss_and_grad(p)[0], phi0, g, h=h)
    return ("tape d(loss)/d(phi)", err, tol, err <= tol)


ALL_SUITES = (
    check_tape_gradient,
    check_material_consistency,
    check_spatial_hessians,
    check_loss_gradient,
)


def run_all(seed=0):
    return [suite(seed=seed) for suite in ALL_SUITES]
