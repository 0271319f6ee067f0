"""Compiled jax forward-mode kernels for observability rows.

A row ``d L_{c1} L_{c2} ... L_{cd} h`` is evaluated on the reduced state
``[s, b_g, v, b_a, p_I, p_f]`` of a single feature.  Features are static in
every field, so the restriction is exact and one compiled kernel per
(sensor, depth) serves any N.  Each Lie level takes a 7-vector of field
weights, so all requests of one depth share a single vmapped kernel.
"""
from __future__ import annotations

import os
from functools import lru_cache

import numpy as np

from .dynamics import OBSERVATIONS, control_field

_CACHE_ENV = "OBSVKIT_JAX_CACHE"


@lru_cache(maxsize=None)
def jax_module():
    import jax

    jax.config.update("jax_enable_x64", True)
    cache_dir = os.environ.get(_CACHE_ENV, os.path.join(os.path.expanduser("~"), ".cache", "obsvkit", "jax"))
    if cache_dir:
        try:
            jax.config.update("jax_compilation_cache_dir", cache_dir)
            jax.config.update("jax_persistent_cache_min_compile_time_secs", 0.5)
        except Exception:  # pragma: no cover - depends on jax build
            pass
    return jax


@lru_cache(maxsize=None)
def row_kernel(mode: str, depth: int):
    """jit(vmap) kernel ``(x_red, g, W) -> rows`` with ``W`` of shape (R, depth, 7)."""
    jax = jax_module()
    observe = OBSERVATIONS[mode]

    def h(x):
        return observe(x, 0)

    def row(x, g, weights):
        F = h
        for level in reversed(range(depth)):
            F = _lie(jax, F, weights[level], g)
        return jax.jacfwd(F)(x)

    return jax.jit(jax.vmap(row, in_axes=(None, None, 0)))


def _lie(jax, F, w, g):
    def lf(x):
        return jax.jvp(F, (x,), (control_field(x, w, g),))[1]

    return lf


def feature_rows(mode: str, x_reduced, g, weights_by_depth: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
    """Evaluate row requests grouped by depth; returns arrays of shape (R, m, 18)."""
    jax = jax_module()
    x = jax.numpy.asarray(x_reduced, dtype=float)
    g = jax.numpy.asarray(g, dtype=float)
    out = {}
    for depth, W in weights_by_depth.items():
        W = np.asarray(W, dtype=float)
        W = W.reshape(W.shape[0], depth, 7)
        out[depth] = np.asarray(row_kernel(mode, depth)(x, g, jax.numpy.asarray(W)))
    return out


@lru_cache(maxsize=None)
def _segment_kernel():
    jax = jax_module()
    jnp = jax.numpy
    from .state import S

    def run(x, M, w, g, h, n):
        def f(y):
            return control_field(y, w, g)

        Df = jax.jacfwd(f)

        def stage(y, m):
            return f(y), Df(y) @ m, jnp.linalg.norm(y[S])

        def body(_, carry):
            x, M, smax = carry
            k1, K1, n1 = stage(x, M)
            k2, K2, n2 = stage(x + 0.5 * h * k1, M + 0.5 * h * K1)
            k3, K3, n3 = stage(x + 0.5 * h * k2, M + 0.5 * h * K2)
            k4, K4, n4 = stage(x + h * k3, M + h * K3)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            M = M + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
            smax = jnp.max(jnp.stack([smax, n1, n2, n3, n4, jnp.linalg.norm(x[S])]))
            return x, M, smax

        return jax.lax.fori_loop(0, n, body, (x, M, jnp.linalg.norm(x[S])))

    return jax.jit(run)


def rk4_variational_segment(x, M, weights, g, h: float, n: int):
    """``n`` RK4 steps of the state and its variational equation with exact ``Df``.

    Returns ``(x, M, max |s| seen at any stage)``.
    """
    jnp = jax_module().numpy
    x, M, smax = _segment_kernel()(
        jnp.asarray(x, dtype=float), jnp.asarray(M, dtype=float), jnp.asarray(weights, dtype=float),
        jnp.asarray(g, dtype=float), float(h), int(n),
    )
    return np.asarray(x), np.asarray(M), float(smax)
