"""Input-affine IMU kinematics and the camera / lidar observation maps.

    x_dot = f0(x) + sum_i omega_i f1_i(x) + sum_j a_j f2_j(x)

    f0   = (-ds/dtheta b_g, 0, g - C^T b_a, 0, v, 0...)
    f1_i = (ds/dtheta e_i, 0, ...)
    f2_j = (0, 0, C^T e_j, 0, ...)

Vector fields are plain callables on flat state arrays (batched over leading
dimensions).  Axis and feature indices are 0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from .errors import CheiralityError
from .state import (
    BA,
    BG,
    PI,
    S,
    V,
    _is_numpy,
    _xp,
    as_flat,
    cgr_rotation,
    feature_slice,
    jac_s_wrt_theta,
    n_features_of,
)

GRAVITY = np.array([0.0, 0.0, -9.81])
PZ_MIN = 1e-3

# Columns of the weight vector understood by ``control_field``:
# [drift, omega_0..2, a_0..2].
N_WEIGHTS = 7


@dataclass(frozen=True)
class ImuInput:
    omega: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        for name in ("omega", "a"):
            arr = np.array(getattr(self, name), dtype=float).reshape(3)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zero(cls) -> "ImuInput":
        return cls(np.zeros(3), np.zeros(3))

    def weights(self) -> np.ndarray:
        return np.concatenate([[1.0], self.omega, self.a])


def _matvec(m, v):
    return (m @ v[..., None])[..., 0]


def _rmatvec(m, v):
    """``m^T v`` for batched 3x3 ``m``."""
    return (v[..., None, :] @ m)[..., 0, :]


def _assemble(x, ds=None, dv=None, dp=None):
    xp = _xp(x)
    zero = xp.zeros_like(x[..., S])
    rest = xp.zeros_like(x[..., PI.stop:])
    parts = [
        zero if ds is None else ds,
        zero,
        zero if dv is None else dv,
        zero,
        zero if dp is None else dp,
        rest,
    ]
    return xp.concatenate(parts, axis=-1)


def drift_field(x, g=GRAVITY):
    x = as_flat(x)
    s = x[..., S]
    ds = -_matvec(jac_s_wrt_theta(s), x[..., BG])
    dv = g - _rmatvec(cgr_rotation(s), x[..., BA])
    return _assemble(x, ds=ds, dv=dv, dp=x[..., V])


def _check_axis(i: int) -> None:
    if i not in (0, 1, 2):
        raise ValueError(f"axis index must be 0, 1 or 2, got {i!r}")


def gyro_field(x, i: int):
    _check_axis(i)
    x = as_flat(x)
    return _assemble(x, ds=jac_s_wrt_theta(x[..., S])[..., :, i])


def accel_field(x, i: int):
    _check_axis(i)
    x = as_flat(x)
    return _assemble(x, dv=cgr_rotation(x[..., S])[..., i, :])


def control_field(x, weights, g=GRAVITY):
    """``w0 f0 + sum w[1+i] f1_i + sum w[4+j] f2_j`` for a 7-vector of weights."""
    x = as_flat(x)
    s = x[..., S]
    w0, omega, acc = weights[..., 0:1], weights[..., 1:4], weights[..., 4:7]
    C = cgr_rotation(s)
    ds = _matvec(jac_s_wrt_theta(s), omega - w0 * x[..., BG])
    dv = w0 * (g - _rmatvec(C, x[..., BA])) + _rmatvec(C, acc)
    return _assemble(x, ds=ds, dv=dv, dp=w0 * x[..., V])


def full_field(x, u: ImuInput, g=GRAVITY):
    return control_field(x, u.weights(), g)


# Named single fields, keyed the way derivative requests spell them.
FIELD_LABELS = ("f0", "w0", "w1", "w2", "a0", "a1", "a2")


def field_weights(label: str) -> np.ndarray:
    """One-hot weight vector of a named field."""
    try:
        idx = FIELD_LABELS.index(label)
    except ValueError:
        raise ValueError(f"unknown field label {label!r}; expected one of {FIELD_LABELS}") from None
    w = np.zeros(N_WEIGHTS)
    w[idx] = 1.0
    return w


def named_field(label: str, g=GRAVITY):
    """The vector field behind a label such as ``"f0"``, ``"w1"`` or ``"a2"``."""
    if label == "f0":
        return partial(drift_field, g=np.asarray(g, dtype=float))
    if label in FIELD_LABELS:
        axis = int(label[1])
        return partial(gyro_field if label[0] == "w" else accel_field, i=axis)
    field_weights(label)  # raises
    raise AssertionError


def _check_feature(x, k: int) -> None:
    n = n_features_of(x)
    if not (isinstance(k, (int, np.integer)) and 0 <= k < n):
        raise IndexError(f"feature index {k!r} out of range for N = {n}")


def feature_in_imu(x, k: int):
    """``C (p_fk - p_I)``: feature ``k`` expressed in the IMU frame."""
    x = as_flat(x)
    _check_feature(x, k)
    return _matvec(cgr_rotation(x[..., S]), x[..., feature_slice(k)] - x[..., PI])


def project(p):
    """Perspective projection ``(p_x, p_y) / p_z``; raises on small or negative depth."""
    if _is_numpy(p):
        pz = np.asarray(p)[..., 2]
        if np.any(~(pz >= PZ_MIN)):
            raise CheiralityError(f"feature depth {np.min(pz):.6g} below PZ_MIN = {PZ_MIN}")
    return p[..., 0:2] / p[..., 2:3]


def camera_observe(x, k: int):
    return project(feature_in_imu(x, k))


def lidar_observe(x, k: int):
    return feature_in_imu(x, k)


OBSERVATIONS = {"vins": camera_observe, "lins": lidar_observe}
OUTPUT_DIM = {"vins": 2, "lins": 3}


def check_mode(mode: str) -> str:
    if mode not in OBSERVATIONS:
        raise ValueError(f"mode must be 'vins' or 'lins', got {mode!r}")
    return mode
