"""Numerical Lie-derivative machinery on the flattened state space.

Everything here is generic: maps and vector fields are callables on flat
state arrays.  Finite differences are central with per-coordinate step
``FD_STEP * max(1, |x_i|)``.  Maps are evaluated on whole stencils at once, so
callables must accept leading batch dimensions (every map in
:mod:`obsvkit.dynamics` does).

``method="ad"`` switches derivative requests to jax forward mode.  Nesting
central differences loses roughly ``log10(1/FD_STEP)`` digits per level, which
leaves nothing usable by the fourth level, so the deep observability rows are
built with ``"ad"`` (see :mod:`obsvkit.observability`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import GRAVITY, ImuInput, control_field
from .errors import ChartExitError, CheiralityError, JacobianDomainError
from .state import S, S_MAX, as_flat

FD_STEP = 6e-6
DEFAULT_DT = 1e-3
# Largest stencil evaluated in one call; bigger batches are chunked.
_MAX_STENCIL_ROWS = 1 << 16

SmoothMap = Callable[[np.ndarray], np.ndarray]
VectorField = Callable[[np.ndarray], np.ndarray]


def fd_steps(x, step: float = FD_STEP) -> np.ndarray:
    return step * np.maximum(1.0, np.abs(x))


def numeric_jacobian(F: SmoothMap, x, step: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``F`` at ``x``; shape ``(..., m, n)``."""
    x = np.asarray(as_flat(x), dtype=float)
    lead, n = x.shape[:-1], x.shape[-1]
    flat = x.reshape(-1, n)
    h = fd_steps(flat, step)
    chunk = max(1, _MAX_STENCIL_ROWS // (2 * n))
    out = []
    for start in range(0, flat.shape[0], chunk):
        xs, hs = flat[start:start + chunk], h[start:start + chunk]
        delta = hs[:, :, None] * np.eye(n)  # (b, n, n), row j perturbs coordinate j
        stencil = np.concatenate([xs[:, None, :] + delta, xs[:, None, :] - delta], axis=1)
        try:
            vals = np.asarray(F(stencil))
        except (CheiralityError, ChartExitError) as exc:
            raise JacobianDomainError(str(exc)) from exc
        fp, fm = vals[:, :n], vals[:, n:]
        out.append(np.swapaxes((fp - fm) / (2.0 * hs[:, :, None]), -1, -2))
    jac = np.concatenate(out, axis=0)
    return jac.reshape(*lead, jac.shape[-2], n)


def _jax():
    from . import _autodiff

    return _autodiff.jax_module()


def lie_derivative(F: SmoothMap, f: VectorField, method: str = "fd") -> SmoothMap:
    """The map ``x -> dF(x) f(x)``; compose for iterated derivatives."""
    if method == "fd":
        def lf(x):
            x = np.asarray(x, dtype=float)
            return np.einsum("...mn,...n->...m", numeric_jacobian(F, x), f(x))
    elif method == "ad":
        jax = _jax()

        def lf(x):
            return jax.jvp(F, (x,), (f(x),))[1]
    else:
        raise ValueError(f"method must be 'fd' or 'ad', got {method!r}")
    return lf


def gradient(F: SmoothMap, x, method: str = "fd") -> np.ndarray:
    """Jacobian of ``F`` at a single point by the chosen method."""
    x = as_flat(x)
    if method == "fd":
        return numeric_jacobian(F, x)
    if method == "ad":
        jax = _jax()
        return np.asarray(jax.jacfwd(F)(jax.numpy.asarray(x)))
    raise ValueError(f"method must be 'fd' or 'ad', got {method!r}")


def lie_bracket(f: VectorField, g: VectorField, x, step: float = FD_STEP) -> np.ndarray:
    """``[f, g](x) = Dg(x) f(x) - Df(x) g(x)``."""
    x = as_flat(x)
    return numeric_jacobian(g, x, step) @ f(x) - numeric_jacobian(f, x, step) @ g(x)


@dataclass(frozen=True)
class Segment:
    duration: float
    u: ImuInput


@dataclass(frozen=True)
class InputSchedule:
    """Piecewise-constant IMU input: consecutive ``(duration, ImuInput)`` segments."""

    segments: tuple

    def __post_init__(self):
        segs = tuple(
            s if isinstance(s, Segment) else Segment(float(s[0]), s[1] if isinstance(s[1], ImuInput) else ImuInput(*s[1]))
            for s in self.segments
        )
        for seg in segs:
            if not seg.duration > 0:
                raise ValueError(f"segment durations must be positive, got {seg.duration}")
        object.__setattr__(self, "segments", segs)

    @property
    def duration(self) -> float:
        return math.fsum(s.duration for s in self.segments)

    def scaled_to(self, total: float) -> "InputSchedule":
        """Same inputs with durations rescaled to sum to ``total``."""
        if total <= 0:
            raise ValueError("total duration must be positive")
        k = total / self.duration
        return InputSchedule(tuple(Segment(s.duration * k, s.u) for s in self.segments))

    def truncated(self, t: float) -> "InputSchedule":
        """The schedule restricted to ``[0, t]``."""
        out, left = [], t
        for seg in self.segments:
            if left <= 0:
                break
            out.append(Segment(min(seg.duration, left), seg.u))
            left -= seg.duration
        return InputSchedule(tuple(out))


def _steps(duration: float, dt: float) -> tuple[int, float]:
    n = max(1, math.ceil(duration / dt - 1e-9))
    return n, duration / n


def _guard(x) -> None:
    nrm = np.linalg.norm(x[S])
    if not nrm < S_MAX:
        raise ChartExitError(f"flow left the chart: |s| = {nrm:.6g}")


def _integrate(x0, schedule: InputSchedule, g, dt: float, with_jacobian: bool, jacobian: str = "fd"):
    if dt <= 0:
        raise ValueError("dt must be positive")
    if jacobian not in ("fd", "ad"):
        raise ValueError(f"jacobian must be 'fd' or 'ad', got {jacobian!r}")
    x = np.array(as_flat(x0), dtype=float)
    g = np.asarray(g, dtype=float)
    M = np.eye(x.size) if with_jacobian else None
    _guard(x)
    for seg in schedule.segments:
        w = seg.u.weights()
        n, h = _steps(seg.duration, dt)
        if with_jacobian and jacobian == "ad":
            from ._autodiff import rk4_variational_segment

            x, M, smax = rk4_variational_segment(x, M, w, g, h, n)
            if not smax < S_MAX:
                raise ChartExitError(f"flow left the chart: |s| reached {smax:.6g}")
            continue

        def f(y):
            return control_field(y, w, g)

        def D(y):
            return numeric_jacobian(f, y)

        for _ in range(n):
            if with_jacobian:
                x, M = _rk4_variational(f, D, x, M, h)
            else:
                x = _rk4(f, x, h)
            _guard(x)
    return x, M


def _rk4(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_variational(f, D, x, M, h):
    # Stage-wise derivative of the RK4 map.
    def stage(y, m):
        _guard(y)
        return f(y), D(y) @ m

    k1, K1 = stage(x, M)
    k2, K2 = stage(x + 0.5 * h * k1, M + 0.5 * h * K1)
    k3, K3 = stage(x + 0.5 * h * k2, M + 0.5 * h * K2)
    k4, K4 = stage(x + h * k3, M + h * K3)
    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    M = M + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
    return x, M


def flow(x0, schedule: InputSchedule, g=GRAVITY, dt: float = DEFAULT_DT) -> np.ndarray:
    """Classical RK4 integration of ``full_field`` over the schedule."""
    return _integrate(x0, schedule, g, dt, with_jacobian=False)[0]


def flow_with_jacobian(x0, schedule: InputSchedule, g=GRAVITY, dt: float = DEFAULT_DT, jacobian: str = "fd"):
    """End state and ``DPhi_t(x0)`` from the variational equation.

    ``Df`` inside the RK4 stages comes from central differences (``"fd"``)
    or from forward-mode autodiff (``"ad"``).  The central-difference
    truncation sets a floor of roughly 1e-11 on pushforward identities.
    """
    return _integrate(x0, schedule, g, dt, with_jacobian=True, jacobian=jacobian)


def flow_jacobian(x0, schedule: InputSchedule, g=GRAVITY, dt: float = DEFAULT_DT, jacobian: str = "fd") -> np.ndarray:
    return flow_with_jacobian(x0, schedule, g, dt, jacobian)[1]


def pushforward(x0, schedule: InputSchedule, vector, g=GRAVITY, dt: float = DEFAULT_DT, jacobian: str = "fd"):
    """``(Phi_t)_* vector`` together with ``Phi_t(x0)``."""
    xt, M = flow_with_jacobian(x0, schedule, g, dt, jacobian)
    return M @ np.asarray(vector, dtype=float), xt


def iterated_lie_derivative(h: SmoothMap, fields: Sequence[VectorField], method: str = "fd") -> SmoothMap:
    """``L_{fields[0]} L_{fields[1]} ... h`` (the first field is applied last)."""
    F = h
    for f in reversed(list(fields)):
        F = lie_derivative(F, f, method)
    return F
