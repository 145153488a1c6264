"""Run orchestration: training objective, solve driver, field sampling.

The training objective owns the per-problem caches (grid, Fourier
features) and the adaptive-weight state.  Weights are refreshed exactly
once per accepted optimizer iteration via ``begin_iteration``; line
search probes reuse the frozen weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import bvp
from .config import RunConfig
from .errors import ConfigError, InvertedState, NonFiniteObjective
from .losses import (
    CoVState,
    N_TERMS,
    active_term_indices,
    assemble,
    total_loss,
)
from .materials import deformation_gradient, von_mises
from .network import (
    BCEnforcer,
    FieldNetwork,
    MLPSpec,
    RFFMap,
    displacement_gradient,
)
from .optim import (
    CurriculumSchedule,
    GDConfig,
    LBFGSConfig,
    curriculum_train,
    gd_minimize,
    lbfgs_minimize,
)
from .reference import affine_shear_problem, affine_stretch_problem, l2_error

ENERGY_SHIFT_EPS = 1e-8


class TrainingObjective:
    """phi -> (loss, gradient) with adaptive weighting on iteration starts.

    The raw energy term may be negative; its weighting statistic is the
    running-minimum-shifted magnitude |energy - min_so_far| + eps, while
    the weighted sum applies the resulting weight to the raw energy.
    An inverted deformation state during a probe yields +inf (the line
    search backs off); at an iteration start it aborts the run.
    """

    def __init__(self, problem, net, points=None, normalize=False):
        self.problem = problem
        self.net = net
        self.points = points if points is not None else problem.point_sets()
        self.features = net.rff.features(self.points.points)
        self.bc = net.enforcer.bc_jets(self.points.points)
        self.active = active_term_indices(
            problem.mask, has_traction=bool(self.points.faces)
        )
        self.cov = CoVState(len(self.active))
        self.weights = np.zeros(N_TERMS)
        self.weights[list(self.active)] = 1.0 / len(self.active)
        self.energy_floor = np.inf
        self.last_terms = np.zeros(N_TERMS)
        # optional conditioning: divide each term by its first-iteration
        # magnitude so all terms enter the weighted sum at unit scale.
        # The adaptive weights themselves are scale-free (loss ratios), so
        # this changes conditioning, not the weighting statistics.
        self.normalize = bool(normalize)
        self.term_scale = np.ones(N_TERMS)

    def _breakdown(self, phi_array):
        tape = ad.Tape()
        phi = tape.input(phi_array)
        u, P = self.net.fields(
            phi, self.points.points, features=self.features, bc=self.bc
        )
        return assemble(u, P, self.problem, self.points), phi

    def _finish(self, breakdown, phi):
        coeffs = self.weights / self.term_scale if self.normalize else self.weights
        total = total_loss(breakdown, coeffs, active=self.active)
        grad = ad.reverse_gradient(total, phi)
        self.last_terms = breakdown.values()
        return float(total.data), grad

    def __call__(self, phi_array):
        try:
            breakdown, phi = self._breakdown(phi_array)
        except InvertedState:
            return np.inf, np.zeros_like(phi_array)
        return self._finish(breakdown, phi)

    def begin_iteration(self, phi_array):
        try:
            breakdown, phi = self._breakdown(phi_array)
        except InvertedState as err:
            raise NonFiniteObjective(f"inverted state at iteration start: {err}") from err
        values = breakdown.values()
        stats = values.copy()
        # distance to the best energy seen before this iterate; updating
        # the floor afterwards keeps the statistic from collapsing to eps
        # on every improving step
        if np.isfinite(self.energy_floor):
            stats[0] = abs(values[0] - self.energy_floor) + ENERGY_SHIFT_EPS
        else:
            stats[0] = ENERGY_SHIFT_EPS
        self.energy_floor = min(self.energy_floor, values[0])
        if self.normalize and self.cov.t == 0:
            self.term_scale = np.maximum(np.abs(values), 1e-12)
            self.term_scale[0] = max(abs(values[0]), 1e-3)
        w = self.cov.update(stats[list(self.active)])
        self.weights = np.zeros(N_TERMS)
        self.weights[list(self.active)] = w
        return self._finish(breakdown, phi)

    def stats(self):
        return {"terms": self.last_terms, "weights": self.weights}


@dataclass
class SolveResult:
    problem: bvp.ProblemSpec
    net: FieldNetwork
    phi: np.ndarray
    history: object
    points: bvp.PointSets
    l2: float = None


def build_network(problem, *, hidden=(64, 64, 64), fourier_features=64,
                  fourier_sigma=1.0, seed=0, stress_scale=None):
    """Assemble the field network for a problem.

    The stress head scale defaults to the material's shear modulus so both
    output groups train on comparable magnitudes.
    """
    rff = RFFMap(m=int(fourier_features), sigma=float(fourier_sigma), seed=int(seed))
    widths = (rff.out_dim,) + tuple(int(h) for h in hidden) + (12,)
    scale = problem.material.stress_scale if stress_scale is None else float(stress_scale)
    return FieldNetwork(
        rff=rff,
        mlp=MLPSpec(widths=widths),
        enforcer=problem.enforcer,
        stress_scale=scale,
    )


def _stage_network(net, problem):
    """Rebind the network to a (possibly load-scaled) problem's enforcer."""
    if net.enforcer is problem.enforcer:
        return net
    return FieldNetwork(
        rff=net.rff, mlp=net.mlp, enforcer=problem.enforcer,
        stress_scale=net.stress_scale,
    )


def train(problem, net, *, schedule=None, opt_config=None, method="lbfgs",
          phi0=None, timing=False):
    """Run the full training loop and return (phi, history)."""
    schedule = schedule or CurriculumSchedule()
    minimize = {"lbfgs": lbfgs_minimize, "gd": gd_minimize}[method]
    if opt_config is None:
        opt_config = LBFGSConfig() if method == "lbfgs" else GDConfig()
    phi = net.init_params() if phi0 is None else np.asarray(phi0, dtype=np.float64)

    def factory(stage_problem):
        return TrainingObjective(stage_problem, _stage_network(net, stage_problem))

    return curriculum_train(
        problem, schedule, factory, phi, opt_config,
        minimize=minimize, timing=timing,
    )


def evaluate_fields(net, phi, X, material=None):
    """Sample trained fields at arbitrary points (no gradients recorded).

    Returns displacement, the stress-head prediction, the Cauchy stress
    pushed forward from the head, and its von Mises intensity; passing a
    material adds the constitutive-branch stress "P_u".
    """
    X = np.asarray(X, dtype=np.float64)
    phi_const = ad.constant(np.asarray(phi, dtype=np.float64))
    u, P = net.fields(phi_const, X)
    state = deformation_gradient(displacement_gradient(u))
    n = X.shape[:-1]
    u_arr = np.stack([u[i].val.data for i in range(3)], axis=-1)
    P_arr = np.empty(n + (3, 3))
    F_arr = np.empty(n + (3, 3))
    for i in range(3):
        for j in range(3):
            P_arr[..., i, j] = P[i][j].val.data
            F_arr[..., i, j] = state.F[i][j].val.data
    J = np.asarray(state.J.val.data)
    S_arr = np.einsum("...ij,...kj->...ik", P_arr, F_arr) / J[..., None, None]
    out = {
        "u": u_arr,
        "P": P_arr,
        "F": F_arr,
        "J": J,
        "S": S_arr,
        "von_mises": von_mises(S_arr),
    }
    if material is not None:
        P_u = material.stress(state)
        Pu_arr = np.empty(n + (3, 3))
        for i in range(3):
            for j in range(3):
                Pu_arr[..., i, j] = P_u[i][j].val.data
        out["P_u"] = Pu_arr
    return out


def solution_l2(problem, net, phi, points=None):
    """Normalized L2 displacement error against the problem's reference."""
    if problem.reference is None:
        return None
    points = points if points is not None else problem.point_sets()
    fields = evaluate_fields(net, phi, points.points)
    u_ref = problem.reference(points.points)
    return l2_error(fields["u"], u_ref, points.vol_weights)


# ---------------------------------------------------------------------------
# configuration-driven entry points
# ---------------------------------------------------------------------------


def problem_from_config(cfg: RunConfig):
    grid = cfg.int_list("problem.grid") or None
    preset_name = cfg.get("problem.preset")
    affine = cfg.get("problem.affine")
    if preset_name and affine:
        raise ConfigError("set either problem.preset or problem.affine, not both")
    if affine:
        kind, _, arg = affine.partition(":")
        if kind == "shear":
            problem = affine_shear_problem(
                gamma=float(arg or 0.3), grid=grid or (9, 9, 9)
            )
        elif kind == "stretch":
            diag = tuple(float(v) for v in arg.split(",")) if arg else (1.1, 1.0, 1.0)
            problem = affine_stretch_problem(diag=diag, grid=grid or (9, 9, 9))
        else:
            raise ConfigError(f"problem.affine kind must be shear or stretch, got '{kind}'")
    elif preset_name:
        problem = bvp.preset(
            preset_name, grid=grid, shear_gamma=cfg.float("problem.shear_gamma")
        )
    else:
        raise ConfigError("problem.preset or problem.affine is required")
    mask = cfg.get("problem.mask")
    if mask != problem.mask:
        from dataclasses import replace

        problem = replace(problem, mask=mask)
    return problem


def network_from_config(cfg: RunConfig, problem):
    raw_scale = cfg.get("network.stress_scale")
    scale = None if raw_scale == "auto" else float(raw_scale)
    return build_network(
        problem,
        hidden=cfg.int_list("network.hidden"),
        fourier_features=cfg.int("network.fourier_features"),
        fourier_sigma=cfg.float("network.fourier_sigma"),
        seed=cfg.int("network.seed"),
        stress_scale=scale,
    )


def optimizer_from_config(cfg: RunConfig):
    method = cfg.get("optimizer.method")
    if method == "lbfgs":
        return method, LBFGSConfig(
            history=cfg.int("optimizer.history"),
            max_iters=cfg.int("optimizer.max_iters"),
            grad_tol=cfg.float("optimizer.grad_tol"),
            c1=cfg.float("optimizer.wolfe_c1"),
            c2=cfg.float("optimizer.wolfe_c2"),
            max_probes=cfg.int("optimizer.max_probes"),
        )
    if method == "gd":
        return method, GDConfig(
            rate=cfg.float("optimizer.gd_rate"),
            max_iters=cfg.int("optimizer.max_iters"),
            grad_tol=cfg.float("optimizer.grad_tol"),
        )
    raise ConfigError(f"optimizer.method must be lbfgs or gd, got '{method}'")


def schedule_from_config(cfg: RunConfig):
    fractions = cfg.float_list("curriculum.fractions") or (1.0,)
    stage_iters = cfg.int_list("curriculum.stage_iters") or None
    return CurriculumSchedule(fractions=tuple(fractions), stage_iters=stage_iters)


def solve_config(cfg: RunConfig):
    """Train per the configuration and return the full result bundle."""
    problem = problem_from_config(cfg)
    net = network_from_config(cfg, problem)
    method, opt_config = optimizer_from_config(cfg)
    schedule = schedule_from_config(cfg)
    timing = cfg.get("history.timing") == "wall"
    phi, history = train(
        problem, net,
        schedule=schedule, opt_config=opt_config, method=method, timing=timing,
    )
    points = problem.point_sets()
    l2 = solution_l2(problem, net, phi, points=points)
    return SolveResult(
        problem=problem, net=net, phi=phi, history=history, points=points, l2=l2
    )


def compare_masks(cfg: RunConfig):
    """Train the configured problem under full/dem/dcm masks.

    Returns one row per mask: name, l2 error (nan without a reference),
    iterations, final total and final term values.
    """
    rows = []
    for mask in ("full", "dem", "dcm"):
        sub = cfg.with_overrides({"problem.mask": mask})
        result = solve_config(sub)
        final = result.history.rows[-1]
        rows.append(
            {
                "mask": mask,
                "l2_error": np.nan if result.l2 is None else result.l2,
                "iterations": len(result.history),
                "total": final.total,
                "terms": final.terms.copy(),
                "status": result.history.status,
            }
        )
    return rows
