"""File exports: training history, sampled fields, checkpoints.

CSV is the canonical format and uses ``repr`` float serialization, so a
file read back by this module reproduces the in-memory values bit for
bit.  The VTK writer emits legacy ASCII structured points for contour
viewers and makes no round-trip promise.
"""

from __future__ import annotations

import json

import numpy as np

from .config import RunConfig
from .losses import TERM_NAMES
from .optim import HistoryRow, TrainingHistory

HISTORY_COLUMNS = (
    ("iter", "total")
    + TERM_NAMES
    + tuple(f"w_{name}" for name in TERM_NAMES)
    + ("grad_norm", "step", "seconds", "stage", "n_evals")
)

FIELD_COLUMNS = (
    "X1", "X2", "X3",
    "u1", "u2", "u3",
    "P11", "P12", "P13", "P21", "P22", "P23", "P31", "P32", "P33",
    "von_mises",
)

CHECKPOINT_FORMAT = "hyperelast-checkpoint-v1"


def _fmt(x):
    return repr(float(x))


def write_history(history, path):
    """One CSV row per accepted iteration, stable column order."""
    if not history.rows:
        raise ValueError("history is empty")
    with open(path, "w") as fh:
        fh.write(",".join(HISTORY_COLUMNS) + "\n")
        for r in history.rows:
            cells = (
                [str(r.iter), _fmt(r.total)]
                + [_fmt(v) for v in r.terms]
                + [_fmt(v) for v in r.weights]
                + [_fmt(r.grad_norm), _fmt(r.step), _fmt(r.seconds),
                   str(r.stage), str(r.n_evals)]
            )
            fh.write(",".join(cells) + "\n")


def read_history(path):
    history = TrainingHistory()
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != HISTORY_COLUMNS:
            raise ValueError(f"unexpected history header in {path}")
        for line in fh:
            c = line.strip().split(",")
            history.append(
                HistoryRow(
                    stage=int(c[17]),
                    iter=int(c[0]),
                    total=float(c[1]),
                    terms=np.array([float(v) for v in c[2:8]]),
                    weights=np.array([float(v) for v in c[8:14]]),
                    grad_norm=float(c[14]),
                    step=float(c[15]),
                    seconds=float(c[16]),
                    n_evals=int(c[18]),
                )
            )
    return history


def write_fields_csv(path, X, fields, metadata=None):
    """Sampled-field table: coordinates, displacement, stress head, von Mises.

    ``metadata`` key/value pairs go into '#' comment lines (units, config
    hash, seed); readers skip them.
    """
    X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
    u = np.asarray(fields["u"]).reshape(-1, 3)
    P = np.asarray(fields["P"]).reshape(-1, 9)
    vm = np.asarray(fields["von_mises"]).reshape(-1)
    with open(path, "w") as fh:
        fh.write("# units: X in m, u in m, P and von_mises in Pa\n")
        for key, val in (metadata or {}).items():
            fh.write(f"# {key}: {val}\n")
        fh.write(",".join(FIELD_COLUMNS) + "\n")
        for k in range(X.shape[0]):
            row = list(X[k]) + list(u[k]) + list(P[k]) + [vm[k]]
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_fields_csv(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            line = line.strip()
            if not line or line.startswith("X1,"):
                continue
            rows.append([float(v) for v in line.split(",")])
    data = np.array(rows)
    return {
        "X": data[:, 0:3],
        "u": data[:, 3:6],
        "P": data[:, 6:15].reshape(-1, 3, 3),
        "von_mises": data[:, 15],
    }


def write_points_csv(path, points, weights=None):
    points = np.asarray(points).reshape(-1, 3)
    with open(path, "w") as fh:
        header = "X1,X2,X3" + (",weight" if weights is not None else "")
        fh.write(header + "\n")
        for k in range(points.shape[0]):
            row = [_fmt(v) for v in points[k]]
            if weights is not None:
                row.append(_fmt(weights[k]))
            fh.write(",".join(row) + "\n")


def write_vtk_structured(path, dims, origin, spacing, fields, title="hyperelast"):
    """Legacy ASCII structured-points file with displacement and von Mises.

    ``fields['u']`` must be sampled on the (n1, n2, n3) grid in C order
    with axis 1 fastest -- the writer reorders to VTK's x-fastest layout.
    """
    n1, n2, n3 = dims
    u = np.asarray(fields["u"]).reshape(n1, n2, n3, 3)
    vm = np.asarray(fields["von_mises"]).reshape(n1, n2, n3)
    # VTK iterates z, then y, then x fastest; our C-order grid is x slowest
    u_vtk = np.transpose(u, (2, 1, 0, 3)).reshape(-1, 3)
    vm_vtk = np.transpose(vm, (2, 1, 0)).reshape(-1)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title + "\n")
        fh.write("ASCII\n")
        fh.write("DATASET STRUCTURED_POINTS\n")
        fh.write(f"DIMENSIONS {n1} {n2} {n3}\n")
        fh.write(f"ORIGIN {origin[0]:.12g} {origin[1]:.12g} {origin[2]:.12g}\n")
        fh.write(f"SPACING {spacing[0]:.12g} {spacing[1]:.12g} {spacing[2]:.12g}\n")
        fh.write(f"POINT_DATA {n1 * n2 * n3}\n")
        fh.write("VECTORS displacement double\n")
        for row in u_vtk:
            fh.write(f"{row[0]:.12g} {row[1]:.12g} {row[2]:.12g}\n")
        fh.write("SCALARS von_mises double 1\n")
        fh.write("LOOKUP_TABLE default\n")
        for v in vm_vtk:
            fh.write(f"{v:.12g}\n")


def save_checkpoint(path, cfg, phi):
    """Parameters plus the full run configuration in one versioned file."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": cfg.as_dict(),
        "config_hash": cfg.hash(),
        "params": [repr(float(v)) for v in np.asarray(phi).ravel()],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def load_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(
            f"unsupported checkpoint format {payload.get('format')!r} in {path}"
        )
    cfg = RunConfig(payload["config"])
    phi = np.array([float(v) for v in payload["params"]])
    return cfg, phi
