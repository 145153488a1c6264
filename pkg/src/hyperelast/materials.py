"""Hyperelastic constitutive models.

Implements the strain energy density psi(F) and the analytic first
Piola-Kirchhoff stress P(F) for two isotropic compressible models, plus
the Cauchy push-forward and von Mises post-processing.  All evaluators
work on 3x3 matrices of :class:`~hyperelast.autodiff.SpatialJet`, so the
same code serves loss assembly (where spatial derivatives of the stress
are needed) and plain numeric evaluation (constant jets).

The stress formulas are hard-coded rather than produced by run-time
differentiation of psi; the consistency P = d psi / dF is pinned by
finite-difference tests.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DomainError, InvertedState

log = logging.getLogger(__name__)

J_FLOOR = 1e-12  # determinant at or below this is a hard inversion error
J_WARN = 0.05  # near-inversion threshold, logged but not fatal


@dataclass(frozen=True)
class NeoHookean:
    """Compressible neo-Hookean material, parameters in Pa."""

    lam: float
    mu: float

    def __post_init__(self):
        if self.mu <= 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.lam < 0.0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")

    @property
    def stress_scale(self):
        return self.mu

    def psi(self, state):
        return psi_nh(self, state)

    def stress(self, state):
        return P_nh(self, state)


@dataclass(frozen=True)
class LopezPamies:
    """Two-invariant compressible model with M power-law terms.

    alphas are dimensionless exponents, mus and lam in Pa.
    """

    alphas: tuple = (1.0,)
    mus: tuple = (1.0,)
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "mus", tuple(float(m) for m in self.mus))
        if len(self.alphas) != len(self.mus) or not self.alphas:
            raise ValueError("alphas and mus must be non-empty and equal length")
        if any(a == 0.0 for a in self.alphas):
            raise DomainError("exponent alpha_r = 0 is outside the model domain")
        if sum(self.mus) <= 0.0:
            raise ValueError("sum of mus must be positive")

    @property
    def M(self):
        return len(self.alphas)

    @property
    def stress_scale(self):
        # ground-state shear modulus of the model
        return float(sum(self.mus))

    def psi(self, state):
        return psi_lp(self, state)

    def stress(self, state):
        return P_lp(self, state)


@dataclass
class DeformationState:
    """Deformation gradient and derived quantities as jets.

    F = I + grad u, J = det F, C = F^T F, I1 = trace C.  F_inv_T is cached
    because both models need it for the stress.
    """

    F: tuple
    J: ad.SpatialJet
    I1: ad.SpatialJet
    F_inv_T: tuple = field(default=None)

    def inverse_transpose(self):
        if self.F_inv_T is None:
            self.F_inv_T = ad.jet_transpose(ad.jet_inv3(self.F, det=self.J))
        return self.F_inv_T


def deformation_gradient(grad_u):
    """Build a DeformationState from the 3x3 displacement-gradient jets.

    Raises InvertedState if det F falls at or below the floor anywhere in
    the batch; logs a warning when det F approaches zero.
    """
    eye = ad.jet_identity(np.shape(grad_u[0][0].val.data))
    F = ad.jet_mat(
        [[ad.jet_add(eye[i][j], grad_u[i][j]) for j in range(3)] for i in range(3)]
    )
    J = ad.jet_det3(F)
    Jdata = np.atleast_1d(J.val.data)
    if np.min(Jdata) <= J_FLOOR:
        idx = int(np.argmin(Jdata))
        raise InvertedState(
            f"det F = {Jdata[idx]:.3e} <= {J_FLOOR:g} (point index {idx})",
            point_index=idx,
        )
    if np.min(Jdata) < J_WARN:
        log.warning(
            "near-inverted state: min det F = %.3e at point index %d",
            np.min(Jdata),
            int(np.argmin(Jdata)),
        )
    # I1 = trace(F^T F) = sum of squared entries
    I1 = None
    for i in range(3):
        for j in range(3):
            sq = ad.jet_mul(F[i][j], F[i][j])
            I1 = sq if I1 is None else ad.jet_add(I1, sq)
    return DeformationState(F=F, J=J, I1=I1)


def psi_nh(mat, state):
    """psi = lam/2 (ln J)^2 - mu ln J + mu/2 (I1 - 3)."""
    lnJ = ad.jet_log(state.J)
    return ad.jet_add(
        ad.jet_sub(
            ad.jet_mul(ad.jet_mul(lnJ, lnJ), 0.5 * mat.lam),
            ad.jet_mul(lnJ, mat.mu),
        ),
        ad.jet_mul(ad.jet_sub(state.I1, 3.0), 0.5 * mat.mu),
    )


def P_nh(mat, state):
    """P = mu F + (lam ln J - mu) F^{-T}."""
    lnJ = ad.jet_log(state.J)
    coeff = ad.jet_sub(ad.jet_mul(lnJ, mat.lam), mat.mu)
    FiT = state.inverse_transpose()
    return ad.jet_mat(
        [
            [
                ad.jet_add(ad.jet_mul(state.F[i][j], mat.mu), ad.jet_mul(FiT[i][j], coeff))
                for j in range(3)
            ]
            for i in range(3)
        ]
    )


def psi_lp(mat, state):
    """Power-law sum over I1 plus volumetric ln J and (J-1)^2 terms."""
    if np.min(np.atleast_1d(state.I1.val.data)) <= 0.0:
        raise DomainError("I1 must be positive")
    total = None
    for a_r, mu_r in zip(mat.alphas, mat.mus):
        coeff = 3.0 ** (1.0 - a_r) / (2.0 * a_r) * mu_r
        term = ad.jet_mul(ad.jet_sub(ad.jet_pow(state.I1, a_r), 3.0**a_r), coeff)
        total = term if total is None else ad.jet_add(total, term)
    lnJ = ad.jet_log(state.J)
    total = ad.jet_sub(total, ad.jet_mul(lnJ, sum(mat.mus)))
    Jm1 = ad.jet_sub(state.J, 1.0)
    return ad.jet_add(total, ad.jet_mul(ad.jet_mul(Jm1, Jm1), 0.5 * mat.lam))


def P_lp(mat, state):
    """P = sum_r 3^{1-a_r} mu_r I1^{a_r-1} F - sum_r mu_r F^{-T} + lam (J^2 - J) F^{-T}."""
    scale = None
    for a_r, mu_r in zip(mat.alphas, mat.mus):
        coeff = 3.0 ** (1.0 - a_r) * mu_r
        term = ad.jet_mul(ad.jet_pow(state.I1, a_r - 1.0), coeff)
        scale = term if scale is None else ad.jet_add(scale, term)
    J2mJ = ad.jet_sub(ad.jet_mul(state.J, state.J), state.J)
    coeff_iT = ad.jet_sub(ad.jet_mul(J2mJ, mat.lam), sum(mat.mus))
    FiT = state.inverse_transpose()
    return ad.jet_mat(
        [
            [
                ad.jet_add(
                    ad.jet_mul(state.F[i][j], scale), ad.jet_mul(FiT[i][j], coeff_iT)
                )
                for j in range(3)
            ]
            for i in range(3)
        ]
    )


def cauchy(P, state):
    """Cauchy stress S = (1/J) P F^T."""
    PFt = ad.jet_matmul(P, ad.jet_transpose(state.F))
    invJ = ad.jet_reciprocal(state.J)
    return ad.jet_mat([[ad.jet_mul(PFt[i][j], invJ) for j in range(3)] for i in range(3)])


def von_mises(S):
    """Von Mises intensity of a (numeric) Cauchy stress array (..., 3, 3).

    The input is symmetrized first; the deviator norm is scaled by
    sqrt(3/2).
    """
    S = np.asarray(S, dtype=np.float64)
    sym = 0.5 * (S + np.swapaxes(S, -1, -2))
    tr = np.trace(sym, axis1=-2, axis2=-1)
    dev = sym - tr[..., None, None] / 3.0 * np.eye(3)
    return np.sqrt(1.5 * np.einsum("...ij,...ij->...", dev, dev))


def material_from_config(model, **params):
    """Construct a material from config-style fields."""
    if model == "neo_hookean":
        return NeoHookean(lam=float(params["lam"]), mu=float(params["mu"]))
    if model == "lopez_pamies":
        return LopezPamies(
            alphas=tuple(params["alphas"]),
            mus=tuple(params["mus"]),
            lam=float(params["lam"]),
        )
    raise ValueError(f"unknown material model '{model}'")


def state_from_array(F):
    """DeformationState from a plain ndarray F with shape (..., 3, 3).

    Convenience for tests and post-processing: entries become constant jets
    of order 0 (values only).
    """
    F = np.asarray(F, dtype=np.float64)
    grad_u = [
        [ad.SpatialJet(ad.constant(F[..., i, j] - (1.0 if i == j else 0.0))) for j in range(3)]
        for i in range(3)
    ]
    return deformation_gradient(grad_u)


def eval_psi(mat, F):
    """Numeric psi for an ndarray F (..., 3, 3)."""
    return np.asarray(mat.psi(state_from_array(F)).val.data)


def eval_stress(mat, F):
    """Numeric P for an ndarray F (..., 3, 3)."""
    P = mat.stress(state_from_array(F))
    out = np.empty(F.shape, dtype=np.float64)
    for i in range(3):
        for j in range(3):
            out[..., i, j] = P[i][j].val.data
    return out


def eval_cauchy(mat, F):
    """Numeric Cauchy stress for an ndarray F (..., 3, 3)."""
    state = state_from_array(F)
    S = cauchy(mat.stress(state), state)
    out = np.empty(F.shape, dtype=np.float64)
    for i in range(3):
        for j in range(3):
            out[..., i, j] = S[i][j].val.data
    return out
