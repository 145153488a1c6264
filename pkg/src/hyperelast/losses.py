"""Six-term physics loss and coefficient-of-variation weighting.

Term order everywhere: (energy, constitutive MSE, traction MSE from the
displacement branch, traction MSE from the stress head, interior
residual MSE from the displacement branch, interior residual MSE from
the stress head).  The two "branches" refer to stress computed from the
constitutive law applied to the displacement field versus stress read
directly off the network head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import LengthMismatch, MissingNormal, NonFiniteLoss
from .materials import deformation_gradient
from .network import displacement_gradient

TERM_NAMES = (
    "energy",
    "mse_constitutive",
    "mse_traction_u",
    "mse_traction_net",
    "mse_interior_u",
    "mse_interior_net",
)

N_TERMS = len(TERM_NAMES)

_MASK_TERMS = {
    "full": (0, 1, 2, 3, 4, 5),
    "dem": (0,),
    "dcm": (2, 4),
}


def active_term_indices(mask, has_traction=True):
    """Indices of loss terms that participate for a mask.

    Traction terms drop out automatically on problems with no traction
    faces (fully essential boundaries); they would be identically zero and
    carry no weighting information.
    """
    idx = _MASK_TERMS[mask]
    if not has_traction:
        idx = tuple(i for i in idx if i not in (2, 3))
    return idx


@dataclass
class LossBreakdown:
    """The six tape scalars plus the separable energy parts."""

    energy: ad.Var
    energy_internal: ad.Var
    energy_external: ad.Var
    mse_constitutive: ad.Var
    mse_traction_u: ad.Var
    mse_traction_net: ad.Var
    mse_interior_u: ad.Var
    mse_interior_net: ad.Var

    def terms(self):
        return (
            self.energy,
            self.mse_constitutive,
            self.mse_traction_u,
            self.mse_traction_net,
            self.mse_interior_u,
            self.mse_interior_net,
        )

    def values(self):
        return np.array([float(t.data) for t in self.terms()])


def potential_energy(u, problem, points, state=None):
    """Total potential: internal strain energy minus external work.

    Volume integrals use the Simpson weights of the point set; the
    traction work integrates u . t over every traction face.  Returns
    (total, internal, external) tape scalars.
    """
    if state is None:
        state = deformation_gradient(displacement_gradient(u))
    psi = problem.material.psi(state)
    if psi.val.data.shape[0] != points.vol_weights.shape[0]:
        raise LengthMismatch("energy density not aligned with volume weights")
    internal = ad.sum_(ad.mul(psi.val, points.vol_weights))

    external = ad.constant(0.0)
    fb = problem.body_force_values(points.points)
    if np.any(fb):
        work = None
        for i in range(3):
            wi = ad.mul(u[i].val, fb[:, i])
            work = wi if work is None else ad.add(work, wi)
        external = ad.add(external, ad.sum_(ad.mul(work, points.vol_weights)))
    for face in points.faces:
        if not np.any(face.tbar):
            continue
        work = None
        for i in range(3):
            ui = ad.take(u[i].val, face.idx, axis=0)
            wi = ad.mul(ui, face.tbar[:, i])
            work = wi if work is None else ad.add(work, wi)
        external = ad.add(external, ad.sum_(ad.mul(work, face.weights)))
    return ad.sub(internal, external), internal, external


def mse_constitutive(P_net, P_u):
    """Mean squared Frobenius mismatch between the two stress fields."""
    if P_net[0][0].val.data.shape != P_u[0][0].val.data.shape:
        raise LengthMismatch("stress fields sampled on different point sets")
    total = None
    for i in range(3):
        for j in range(3):
            d = ad.sub(P_net[i][j].val, P_u[i][j].val)
            sq = ad.mul(d, d)
            total = sq if total is None else ad.add(total, sq)
    return ad.mean(total)


def mse_traction(P_u, P_net, points):
    """Traction residual mean ||P N - t||^2 for both stress branches.

    Every traction-face point contributes once per face it belongs to,
    with that face's outward normal and patch traction.
    """
    if not points.faces:
        z = ad.constant(0.0)
        return z, z
    n_total = points.n_traction
    sums = []
    for P in (P_u, P_net):
        acc = None
        for face in points.faces:
            if not np.all(np.isfinite(face.normal)) or not np.any(face.normal):
                raise MissingNormal(f"face ({face.axis}, {face.side}) has no usable normal")
            k = int(np.argmax(np.abs(face.normal)))
            sign = float(face.normal[k])
            for i in range(3):
                Pik = ad.take(P[i][k].val, face.idx, axis=0)
                r = ad.sub(ad.mul(Pik, sign), face.tbar[:, i])
                sq = ad.sum_(ad.mul(r, r))
                acc = sq if acc is None else ad.add(acc, sq)
        sums.append(ad.mul(acc, 1.0 / n_total))
    return sums[0], sums[1]


def divergence_at(P, idx):
    """Row divergence (div P)_i = sum_j dP_ij/dX_j at selected points."""
    out = []
    for i in range(3):
        acc = None
        for j in range(3):
            dij = ad.take(ad.take(P[i][j].grad, j, axis=-1), idx, axis=0)
            acc = dij if acc is None else ad.add(acc, dij)
        out.append(acc)
    return out


def mse_interior(P_u, P_net, points, body_force):
    """Strong-form residual mean ||div P + f_B||^2 for both branches."""
    idx = points.interior_idx
    fb = np.asarray(body_force, dtype=np.float64)
    if fb.ndim == 2:
        fb = fb[idx]
    sums = []
    for P in (P_u, P_net):
        div = divergence_at(P, idx)
        acc = None
        for i in range(3):
            r = ad.add(div[i], fb[:, i]) if fb.ndim == 2 else ad.add(div[i], float(fb[i]))
            sq = ad.mul(r, r)
            acc = sq if acc is None else ad.add(acc, sq)
        sums.append(ad.mean(acc))
    return sums[0], sums[1]


def assemble(u, P_net, problem, points):
    """Evaluate all six loss terms from the field jets at the grid points."""
    state = deformation_gradient(displacement_gradient(u))
    P_u = problem.material.stress(state)
    energy, internal, external = potential_energy(u, problem, points, state=state)
    mse_P = mse_constitutive(P_net, P_u)
    mse_t_u, mse_t_net = mse_traction(P_u, P_net, points)
    fb = problem.body_force_values(points.points)
    mse_i_u, mse_i_net = mse_interior(P_u, P_net, points, fb)
    return LossBreakdown(
        energy=energy,
        energy_internal=internal,
        energy_external=external,
        mse_constitutive=mse_P,
        mse_traction_u=mse_t_u,
        mse_traction_net=mse_t_net,
        mse_interior_u=mse_i_u,
        mse_interior_net=mse_i_net,
    )


def total_loss(breakdown, weights, mask="full", active=None):
    """Weighted sum of the active terms; weights enter as constants.

    ``weights`` is the full six-vector (zeros on inactive terms), so no
    gradient flows through the weighting itself.
    """
    if active is None:
        active = active_term_indices(mask)
    terms = breakdown.terms()
    total = None
    for i in active:
        contrib = ad.mul(terms[i], float(weights[i]))
        total = contrib if total is None else ad.add(total, contrib)
    if total is None:
        raise ValueError("no active loss terms")
    return total


class CoVState:
    """Streaming statistics behind the adaptive loss weights.

    Tracks, per term, the running mean of the raw loss, and mean/variance
    of the loss ratio (current value over previous running mean) via the
    one-pass recurrences.  Weights are coefficient-of-variation shares
    c_i / sum(c); degenerate histories (all spreads zero) fall back to
    uniform weights, which also covers the first iteration.
    """

    def __init__(self, n_terms):
        self.n = int(n_terms)
        self.t = 0
        self.mu_L = np.zeros(self.n)
        self.mu_l = np.zeros(self.n)
        self.M_l = np.zeros(self.n)

    def update(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.n,):
            raise LengthMismatch(f"expected {self.n} loss values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteLoss(f"non-finite loss values {values}")
        self.t += 1
        t = self.t
        if t == 1:
            ratios = np.ones(self.n)
        else:
            ratios = np.where(self.mu_L > 0.0, values / np.where(self.mu_L > 0.0, self.mu_L, 1.0), 1.0)
        mu_l_prev = self.mu_l.copy()
        self.mu_L = (1.0 - 1.0 / t) * self.mu_L + values / t
        self.mu_l = (1.0 - 1.0 / t) * self.mu_l + ratios / t
        if t == 1:
            self.M_l = np.zeros(self.n)
        else:
            self.M_l = (1.0 - 1.0 / t) * self.M_l + (ratios - mu_l_prev) * (
                ratios - self.mu_l
            ) / t
        return self.weights()

    def weights(self):
        sigma = np.sqrt(np.maximum(self.M_l, 0.0))
        c = np.where(self.mu_l > 0.0, sigma / np.where(self.mu_l > 0.0, self.mu_l, 1.0), 0.0)
        z = c.sum()
        if z <= 0.0:
            return np.full(self.n, 1.0 / self.n)
        return c / z
