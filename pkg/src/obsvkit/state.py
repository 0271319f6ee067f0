"""State layout and Cayley-Gibbs-Rodrigues (Gibbs vector) rotation algebra.

The flattened state is ``[s, b_g, v, b_a, p_I, p_f1, ..., p_fN]`` with every
block three-dimensional.  ``s`` is the Gibbs vector ``tan(|theta|/2) * u``.

``C = cgr_rotation(s)`` maps global-frame vectors into the IMU frame.  With
this choice the derivative identity

    d(C^T u)/ds = -C^T [u x] dtheta/ds

holds for every constant ``u``; all downstream sign conventions follow from it.

The array functions accept leading batch dimensions and work unchanged on jax
arrays, which is how the forward-mode derivative kernels reuse them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ChartExitError

S_MAX = 10.0

BLOCK = 3
BASE_DIM = 15
S = slice(0, 3)
BG = slice(3, 6)
V = slice(6, 9)
BA = slice(9, 12)
PI = slice(12, 15)

BLOCK_NAMES = ("s", "b_g", "v", "b_a", "p_I")


def feature_slice(k: int) -> slice:
    """Columns of feature ``k`` (0-based) in the flattened state."""
    start = BASE_DIM + BLOCK * k
    return slice(start, start + BLOCK)


def state_dim(n_features: int) -> int:
    return BASE_DIM + BLOCK * n_features


def n_features_of(x) -> int:
    n = x.shape[-1]
    if n < BASE_DIM or (n - BASE_DIM) % BLOCK:
        raise ValueError(f"state dimension {n} is not 15 + 3N")
    return (n - BASE_DIM) // BLOCK


def _xp(x):
    """numpy, or jax.numpy when ``x`` is a jax array or tracer."""
    if type(x).__module__.startswith("jax"):
        import jax.numpy as jnp

        return jnp
    return np


def _is_numpy(x) -> bool:
    return not type(x).__module__.startswith("jax")


def skew(v):
    """Cross-product matrix: ``skew(v) @ w == cross(v, w)``."""
    xp = _xp(v)
    v = xp.asarray(v)
    z = xp.zeros_like(v[..., 0])
    x, y, w = v[..., 0], v[..., 1], v[..., 2]
    return xp.stack(
        [
            xp.stack([z, -w, y], axis=-1),
            xp.stack([w, z, -x], axis=-1),
            xp.stack([-y, x, z], axis=-1),
        ],
        axis=-2,
    )


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _check_chart(s) -> None:
    if _is_numpy(s):
        nrm = np.linalg.norm(np.asarray(s), axis=-1)
        if np.any(~(nrm < S_MAX)):
            raise ChartExitError(f"|s| = {np.max(nrm):.6g} outside chart (S_MAX = {S_MAX})")


def cgr_rotation(s):
    """Rotation matrix (global -> IMU) of the Gibbs vector ``s``."""
    xp = _xp(s)
    s = xp.asarray(s, dtype=float) if xp is np else s
    _check_chart(s)
    ss = xp.sum(s * s, axis=-1)[..., None, None]
    eye = xp.eye(3)
    return ((1.0 - ss) * eye + 2.0 * _outer(s, s) - 2.0 * skew(s)) / (1.0 + ss)


def jac_s_wrt_theta(s):
    """ds/dtheta = (I + s s^T + [s x]) / 2."""
    xp = _xp(s)
    return 0.5 * (xp.eye(3) + _outer(s, s) + skew(s))


def jac_theta_wrt_s(s):
    """dtheta/ds = 2 (I - [s x]) / (1 + s^T s), the inverse of ``jac_s_wrt_theta``."""
    xp = _xp(s)
    ss = xp.sum(s * s, axis=-1)[..., None, None]
    return 2.0 * (xp.eye(3) - skew(s)) / (1.0 + ss)


def gibbs_from_rotation_vector(theta):
    """Gibbs vector ``tan(|theta|/2) theta/|theta|`` of a rotation vector."""
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta, axis=-1, keepdims=True)
    # tan(a/2)/a -> 1/2 as a -> 0
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(angle > 1e-8, np.tan(angle / 2.0) / angle, 0.5 + angle**2 / 24.0)
    return scale * theta


@dataclass(frozen=True)
class State:
    """Structured view of a VINS/LINS state.

    Arrays are stored as read-only float64 copies; ``features`` has shape (N, 3).
    """

    s: np.ndarray
    b_g: np.ndarray
    v: np.ndarray
    b_a: np.ndarray
    p_I: np.ndarray
    features: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        for name in (*BLOCK_NAMES, "features"):
            arr = np.array(getattr(self, name), dtype=float)
            if name == "features":
                arr = arr.reshape(-1, 3)
            elif arr.shape != (3,):
                raise ValueError(f"{name} must have shape (3,), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not np.linalg.norm(self.s) < S_MAX:
            raise ChartExitError(f"|s| = {np.linalg.norm(self.s):.6g} >= S_MAX")

    @property
    def n_features(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return state_dim(self.n_features)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.s, self.b_g, self.v, self.b_a, self.p_I, self.features.ravel()])

    @classmethod
    def unflatten(cls, x) -> "State":
        x = np.asarray(x, dtype=float)
        n = n_features_of(x)
        return cls(x[S], x[BG], x[V], x[BA], x[PI], x[BASE_DIM:].reshape(n, 3))


def as_flat(x) -> np.ndarray:
    """Accept a :class:`State` or a flat vector and return the flat float array."""
    if isinstance(x, State):
        return x.flatten()
    if _is_numpy(x):
        return np.asarray(x, dtype=float)
    return x
