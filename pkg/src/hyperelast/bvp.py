"""Problem geometry and sampling.

Box domains with tensor-product Simpson grids, traction patches, point
sets for the three loss-point families (volume, traction faces, strict
interior) and the built-in benchmark presets.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EvenCount, LengthMismatch, UnknownPreset
from .materials import LopezPamies, NeoHookean
from .network import BCEnforcer, DirichletFace

FACE_SIDES = ("lo", "hi")


def simpson_weights_1d(n, h):
    """Composite Simpson weights (h/3)[1, 4, 2, 4, ..., 4, 1] for n odd nodes."""
    if n < 3 or n % 2 == 0:
        raise EvenCount(f"Simpson rule needs an odd node count >= 3, got {n}")
    if h <= 0.0:
        raise ValueError(f"spacing must be positive, got {h}")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box with odd per-axis grid counts (Simpson requirement)."""

    origin: tuple = (0.0, 0.0, 0.0)
    lengths: tuple = (1.0, 1.0, 1.0)
    counts: tuple = (9, 9, 9)

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "counts", tuple(int(v) for v in self.counts))
        if any(l <= 0.0 for l in self.lengths):
            raise ValueError(f"lengths must be positive, got {self.lengths}")
        for n in self.counts:
            if n < 3 or n % 2 == 0:
                raise EvenCount(f"grid counts must be odd and >= 3, got {self.counts}")

    @property
    def volume(self):
        return float(np.prod(self.lengths))

    def axes(self):
        """Per-axis node coordinates; linspace keeps both endpoints exact."""
        return [
            np.linspace(o, o + l, n)
            for o, l, n in zip(self.origin, self.lengths, self.counts)
        ]

    def spacings(self):
        return [l / (n - 1) for l, n in zip(self.lengths, self.counts)]

    def face_value(self, axis, side):
        return self.origin[axis] + (self.lengths[axis] if side == "hi" else 0.0)

    def face_area(self, axis):
        return float(np.prod([l for a, l in enumerate(self.lengths) if a != axis]))


@dataclass(frozen=True)
class TractionPatch:
    """Traction data on (part of) one box face.

    ``region`` is a predicate over points (..., 3) selecting the loaded
    subset; None means the whole face.  ``traction`` is the nominal
    traction vector in Pa.
    """

    axis: int
    side: str
    traction: tuple
    region: object = None

    def __post_init__(self):
        if self.side not in FACE_SIDES:
            raise ValueError(f"side must be one of {FACE_SIDES}")
        object.__setattr__(self, "traction", tuple(float(t) for t in self.traction))
        if not np.all(np.isfinite(self.traction)):
            raise ValueError("traction must be finite")

    def covers(self, X):
        if self.region is None:
            return np.ones(np.asarray(X).shape[:-1], dtype=bool)
        return np.asarray(self.region(X), dtype=bool)


@dataclass(frozen=True)
class FacePoints:
    """Grid points of one traction face with surface quadrature data."""

    axis: int
    side: str
    normal: np.ndarray
    idx: np.ndarray  # flat indices into the volume grid
    weights: np.ndarray  # Simpson surface weights, sum = face area
    tbar: np.ndarray  # (n_face, 3) traction at each point


@dataclass(frozen=True)
class PointSets:
    """All collocation data derived from one tensor grid."""

    points: np.ndarray  # (N, 3)
    vol_weights: np.ndarray  # (N,), sum = box volume
    interior_idx: np.ndarray  # strict-interior flat indices
    faces: tuple  # FacePoints per traction face
    grid_shape: tuple

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def n_traction(self):
        return int(sum(f.idx.size for f in self.faces))


def integrate_volume(values, weights):
    """Weighted sum with a fixed reduction order (run-to-run deterministic)."""
    values = np.asarray(values, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if values.shape[0] != weights.shape[0]:
        raise LengthMismatch(
            f"{values.shape[0]} values vs {weights.shape[0]} weights"
        )
    return float(np.sum(values * weights))


def build_point_sets(domain, patches=()):
    """Tensor grid, Simpson volume/surface weights and point families.

    Traction and interior points reuse the volume grid nodes, so one
    network forward pass per node serves every loss term.
    """
    axes = domain.axes()
    w1d = [
        simpson_weights_1d(n, h) for n, h in zip(domain.counts, domain.spacings())
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    vol_w = (
        w1d[0][:, None, None] * w1d[1][None, :, None] * w1d[2][None, None, :]
    ).ravel()

    n0, n1, n2 = domain.counts
    flat = np.arange(n0 * n1 * n2).reshape(n0, n1, n2)
    interior_idx = flat[1:-1, 1:-1, 1:-1].ravel()

    faces = []
    for axis in range(3):
        tangent = [a for a in range(3) if a != axis]
        for side in FACE_SIDES:
            face_patches = [p for p in patches if p.axis == axis and p.side == side]
            if not face_patches:
                continue
            sl = [slice(None)] * 3
            sl[axis] = 0 if side == "lo" else domain.counts[axis] - 1
            idx = flat[tuple(sl)].ravel()
            sw = (
                w1d[tangent[0]][:, None] * w1d[tangent[1]][None, :]
            ).ravel()
            Xf = points[idx]
            tbar = np.zeros((idx.size, 3))
            assigned = np.zeros(idx.size, dtype=bool)
            for p in face_patches:
                inside = p.covers(Xf) & ~assigned
                tbar[inside] = p.traction
                assigned |= inside
            normal = np.zeros(3)
            normal[axis] = 1.0 if side == "hi" else -1.0
            faces.append(
                FacePoints(
                    axis=axis,
                    side=side,
                    normal=normal,
                    idx=idx,
                    weights=sw,
                    tbar=tbar,
                )
            )
    return PointSets(
        points=points,
        vol_weights=vol_w,
        interior_idx=interior_idx,
        faces=tuple(faces),
        grid_shape=domain.counts,
    )


LOSS_MASKS = ("full", "dem", "dcm")


@dataclass(frozen=True)
class ProblemSpec:
    """Complete description of one boundary-value problem."""

    name: str
    domain: BoxDomain
    material: object
    enforcer: BCEnforcer
    patches: tuple = ()
    body_force: object = None  # callable X (...,3) -> (...,3), None = zero
    mask: str = "full"
    load_scale: float = 1.0
    reference: object = None  # callable X -> exact displacement, if known

    def __post_init__(self):
        if self.mask not in LOSS_MASKS:
            raise ValueError(f"mask must be one of {LOSS_MASKS}")
        if not self.enforcer.faces:
            raise ValueError("at least one essential constraint is required")

    def scaled(self, factor):
        """Scale tractions and prescribed displacements (load stepping)."""
        patches = tuple(
            replace(p, traction=tuple(factor * t for t in p.traction))
            for p in self.patches
        )
        ref = self.reference
        if ref is not None:
            base = ref
            ref = lambda X, _f=factor, _b=base: _f * _b(X)  # noqa: E731
        return replace(
            self,
            patches=patches,
            enforcer=self.enforcer.scaled(factor),
            load_scale=self.load_scale * factor,
            reference=ref,
        )

    def point_sets(self):
        return build_point_sets(self.domain, self.patches)

    def body_force_values(self, X):
        if self.body_force is None:
            return np.zeros(np.asarray(X).shape)
        return np.asarray(self.body_force(X), dtype=np.float64)


def _zero_patches(axes_sides):
    return [TractionPatch(axis=a, side=s, traction=(0.0, 0.0, 0.0)) for a, s in axes_sides]


def affine_enforcer(domain, grad, const=(0.0, 0.0, 0.0)):
    """All six faces constrained to u = const + grad X."""
    faces = tuple(
        DirichletFace(axis=a, side=s) for a in range(3) for s in FACE_SIDES
    )
    return BCEnforcer(
        origin=domain.origin,
        lengths=domain.lengths,
        faces=faces,
        lift_const=tuple(const),
        lift_lin=tuple(tuple(row) for row in np.asarray(grad, dtype=np.float64)),
    )


def _beam_domain(grid):
    return BoxDomain(
        origin=(0.0, 0.0, 0.0),
        lengths=(4.0, 1.0, 1.0),
        counts=grid or (25, 9, 9),
    )


def _cube_domain(grid):
    return BoxDomain(lengths=(1.0, 1.0, 1.0), counts=grid or (15, 15, 15))


def _nh_cantilever_traction(grid, shear_gamma):
    domain = _beam_domain(grid)
    enforcer = BCEnforcer(
        origin=domain.origin,
        lengths=domain.lengths,
        faces=(DirichletFace(axis=0, side="lo"),),
    )
    patches = [TractionPatch(axis=0, side="hi", traction=(0.0, -5.0, 0.0))]
    patches += _zero_patches([(1, "lo"), (1, "hi"), (2, "lo"), (2, "hi")])
    return ProblemSpec(
        name="nh_cantilever_traction",
        domain=domain,
        material=NeoHookean(lam=577.0, mu=385.0),
        enforcer=enforcer,
        patches=tuple(patches),
    )


def _lp_cantilever_displacement(grid, shear_gamma):
    domain = _beam_domain(grid)
    L = domain.lengths[0]
    # u = 0 at X1 = 0, u = (0, -1, 0) at X1 = L; linear interpolation in X1
    lin = np.zeros((3, 3))
    lin[1, 0] = -1.0 / L
    enforcer = BCEnforcer(
        origin=domain.origin,
        lengths=domain.lengths,
        faces=(
            DirichletFace(axis=0, side="lo"),
            DirichletFace(axis=0, side="hi"),
        ),
        lift_lin=tuple(tuple(row) for row in lin),
    )
    patches = _zero_patches([(1, "lo"), (1, "hi"), (2, "lo"), (2, "hi")])
    return ProblemSpec(
        name="lp_cantilever_displacement",
        domain=domain,
        material=LopezPamies(alphas=(1.0, -2.0), mus=(100.0, 50.0), lam=100.0),
        enforcer=enforcer,
        patches=tuple(patches),
    )


def _nh_simple_shear(grid, shear_gamma):
    domain = _cube_domain(grid)
    grad = np.zeros((3, 3))
    grad[0, 1] = shear_gamma
    ref = lambda X, _g=np.array(grad): np.einsum("ij,...j->...i", _g, X)  # noqa: E731
    return ProblemSpec(
        name="nh_simple_shear",
        domain=domain,
        material=NeoHookean(lam=577.0, mu=385.0),
        enforcer=affine_enforcer(domain, grad),
        patches=(),
        reference=ref,
    )


def _nh_localized_traction(grid, shear_gamma):
    domain = _cube_domain(grid)
    enforcer = BCEnforcer(
        origin=domain.origin,
        lengths=domain.lengths,
        faces=(DirichletFace(axis=0, side="lo"),),
    )

    def centered_square(X, half=0.1 + 1e-12):  # epsilon admits edge nodes
        X = np.asarray(X)
        return (np.abs(X[..., 1] - 0.5) <= half) & (np.abs(X[..., 2] - 0.5) <= half)

    patches = [
        TractionPatch(axis=0, side="hi", traction=(300.0, 0.0, 0.0), region=centered_square),
        TractionPatch(axis=0, side="hi", traction=(0.0, 0.0, 0.0)),
    ]
    patches += _zero_patches([(1, "lo"), (1, "hi"), (2, "lo"), (2, "hi")])
    return ProblemSpec(
        name="nh_localized_traction",
        domain=domain,
        material=NeoHookean(lam=577.0, mu=385.0),
        enforcer=enforcer,
        patches=tuple(patches),
    )


_PRESETS = {
    "nh_cantilever_traction": _nh_cantilever_traction,
    "lp_cantilever_displacement": _lp_cantilever_displacement,
    "nh_simple_shear": _nh_simple_shear,
    "nh_localized_traction": _nh_localized_traction,
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name, grid=None, shear_gamma=0.5):
    """Construct one of the built-in benchmark problems.

    ``grid`` overrides the per-axis node counts; ``shear_gamma`` sets the
    prescribed shear magnitude of the simple-shear problem.
    """
    try:
        builder = _PRESETS[name]
    except KeyError:
        raise UnknownPreset(
            f"unknown preset '{name}', expected one of {PRESET_NAMES}"
        ) from None
    if grid is not None:
        grid = tuple(int(g) for g in grid)
    return builder(grid, float(shear_gamma))
