"""Invariance of the gravity-rotation direction under the system fields and flow.

``n4(x) = (ds/dtheta C g, 0, -[v x] g, 0, [g x] p_I, [g x] p_f1, ...)`` commutes
with the drift, gyro and accelerometer fields, hence the flow of any
piecewise-constant input carries ``n4(x0)`` to ``n4(x_t)``.  The checks here
are numeric: brackets from central differences, pushforwards from the
variational equation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import GRAVITY, FIELD_LABELS, named_field
from .lie import DEFAULT_DT, InputSchedule, flow_with_jacobian, lie_bracket
from .observability import rotation_about_gravity, translation_directions
from .state import S, V, as_flat, cgr_rotation, jac_s_wrt_theta, jac_theta_wrt_s, n_features_of

BRACKET_TOL = 1e-5


def n4(x, g=GRAVITY):
    """The gravity-rotation direction (same definition as the fourth null column)."""
    return rotation_about_gravity(x, g)


def mutated_n4(x, g=GRAVITY):
    """``n4`` with the velocity block's sign flipped; a sensitivity control."""
    out = np.array(n4(x, g), copy=True)
    out[..., V] = -out[..., V]
    return out


def translation_field(axis: int):
    """Constant field moving the IMU and every feature along a global axis."""

    def field(x):
        x = as_flat(x)
        col = translation_directions(n_features_of(x))[:, axis]
        return np.broadcast_to(col, x.shape).copy()

    return field


@dataclass(frozen=True)
class BracketReport:
    residuals: dict
    tol: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals.values())

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol


def verify_brackets(x, g=GRAVITY, direction=None, tol: float = BRACKET_TOL) -> BracketReport:
    """Norms of ``[f, n]`` for the seven system fields.

    ``direction`` defaults to ``n4``; it is any callable ``(x, g) -> tangent``.
    The pass threshold scales as ``tol * (1 + |x|)``.
    """
    x = as_flat(x)
    g = np.asarray(g, dtype=float)
    field = direction if direction is not None else n4

    def n(y):
        return field(y, g)

    residuals = {
        label: float(np.linalg.norm(lie_bracket(named_field(label, g), n, x)))
        for label in FIELD_LABELS
    }
    return BracketReport(residuals, tol * (1.0 + float(np.linalg.norm(x))))


def verify_translation_brackets(x, g=GRAVITY, tol: float = BRACKET_TOL) -> BracketReport:
    """Brackets of the three translation directions with all system fields (an extension check)."""
    x = as_flat(x)
    residuals = {}
    for axis in range(3):
        t = translation_field(axis)
        for label in FIELD_LABELS:
            residuals[f"t{axis}/{label}"] = float(np.linalg.norm(lie_bracket(named_field(label, g), t, x)))
    return BracketReport(residuals, tol * (1.0 + float(np.linalg.norm(x))))


def verify_flow_invariance(x0, schedule: InputSchedule | None, g=GRAVITY, dt: float = DEFAULT_DT,
                           direction=None, jacobian: str = "ad") -> float:
    """Relative residual ``|DPhi_t n(x0) - n(Phi_t(x0))| / |n(Phi_t(x0))|``.

    An empty schedule (``None``) is the zero-time flow and gives 0.  With
    ``jacobian="ad"`` the residual is pure RK4 and rounding error and shrinks
    with ``dt``; with ``"fd"`` it sits on the central-difference floor.
    """
    x0 = as_flat(x0)
    g = np.asarray(g, dtype=float)
    field = direction if direction is not None else n4
    if schedule is None or not schedule.segments:
        return 0.0
    xt, M = flow_with_jacobian(x0, schedule, g, dt, jacobian)
    pushed = M @ field(x0, g)
    target = field(xt, g)
    scale = np.linalg.norm(target)
    diff = np.linalg.norm(pushed - target)
    return float(diff / scale) if scale > 0 else float(diff)


def theta_coordinate_direction(x, g=GRAVITY) -> np.ndarray:
    """``n4`` with its rotation block carried into rotation-vector coordinates."""
    out = np.array(n4(x, g), copy=True)
    out[S] = jac_theta_wrt_s(as_flat(x)[S]) @ out[S]
    return out


def coordinate_transfer_check(x, g=GRAVITY) -> float:
    """Max block residual of the transferred direction against ``(Cg, rest of n4)``."""
    x = as_flat(x)
    g = np.asarray(g, dtype=float)
    base = n4(x, g)
    moved = theta_coordinate_direction(x, g)
    Cg = cgr_rotation(x[S]) @ g
    first = float(np.linalg.norm(moved[S] - Cg))
    rest = np.delete(np.arange(x.size), np.arange(S.start, S.stop))
    tail = float(np.max(np.abs(moved[rest] - base[rest]))) if rest.size else 0.0
    return max(first, tail)


def rotation_block_consistency(x, g=GRAVITY) -> float:
    """``|(dtheta/ds)(ds/dtheta) C g - C g|`` evaluated term by term."""
    s = as_flat(x)[S]
    Cg = cgr_rotation(s) @ np.asarray(g, dtype=float)
    return float(np.linalg.norm(jac_theta_wrt_s(s) @ (jac_s_wrt_theta(s) @ Cg) - Cg))
