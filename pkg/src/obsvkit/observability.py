"""Observability matrix, nullspace and the structural checks on it.

Rows of the observability matrix are gradients of iterated Lie derivatives
``d L_{c1} ... L_{cd} h_k`` for each feature ``k``.  A derivative request is a
tuple of field labels, outermost first: ``("w0", "f0")`` is ``d L_w0 L_f0 h``
(``f0`` drift, ``w0..w2`` gyro, ``a0..a2`` accelerometer fields).

The analytic side expresses the reduced ("bar") rows through the structural
blocks

    K_k = [[p_k x] dtheta/ds, 0, 0, 0, -C, .., C, ..]     d(p_k)
    G   = [[Cv x] dtheta/ds, 0, C, 0, 0, ..]             d(Cv)
    J   = [0, I, 0, 0, 0, ..]                            d(b_g)
    M   = [[Cg x] dtheta/ds, 0, 0, 0, 0, ..]             d(Cg)
    N   = [0, 0, 0, I, 0, ..]                            d(b_a)

where ``p_k`` is feature ``k`` in the IMU frame.  Each bar row is also stored
as the linear combination of raw rows it stands for, so it can be checked
against numerically differentiated rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import subspace_angles

from . import _autodiff
from .dynamics import (
    GRAVITY,
    OBSERVATIONS,
    OUTPUT_DIM,
    PZ_MIN,
    check_mode,
    feature_in_imu,
    named_field,
)
from .errors import CheiralityError, HypothesisViolation
from .lie import iterated_lie_derivative, numeric_jacobian
from .state import (
    BA,
    BASE_DIM,
    BG,
    PI,
    S,
    V,
    _xp,
    as_flat,
    cgr_rotation,
    feature_slice,
    jac_s_wrt_theta,
    jac_theta_wrt_s,
    n_features_of,
    skew,
)

RANK_TOL_ANALYTIC = 1e-8
RANK_TOL_NUMERIC = 1e-6
CHECK_TOL = 1e-6
GAP_TOL = 1e-5
COLLINEAR_ANGLE = 1e-3
NULL_DIM = 4

E = np.eye(3)
E3 = E[2]

DerivativeSpec = tuple


def _default_rows() -> tuple:
    w = ("w0", "w1", "w2")
    a = ("a0", "a1", "a2")
    rows = [()]
    rows += [(wi,) for wi in w]
    rows += [("f0",)]
    rows += [(wi, wj) for wi in w for wj in w]
    rows += [("f0", wj) for wj in w]
    rows += [(ai, "f0") for ai in a]
    rows += [(wi, "f0") for wi in w]
    rows += [("f0", "f0")]
    rows += [(wk, "f0", "f0") for wk in w]
    return tuple(rows)


# Row list per feature: exactly the rows used by the nullspace argument, the
# deepest being d L_wk L_f0 L_f0 h.
DEFAULT_ROWS = _default_rows()


def derivative_label(spec: Sequence[str]) -> str:
    return "d" + "".join(f"L_{lab} " for lab in spec) + "h"


@dataclass(frozen=True)
class RowTag:
    derivative: DerivativeSpec
    feature: int
    component: int
    source: str

    @property
    def label(self) -> str:
        return f"{derivative_label(self.derivative)}[{self.component}] f{self.feature} ({self.source})"


@dataclass(frozen=True)
class ObservabilityMatrix:
    rows: np.ndarray
    tags: tuple
    mode: str
    x: np.ndarray
    g: np.ndarray

    @property
    def shape(self):
        return self.rows.shape


# --------------------------------------------------------------------------
# Numeric rows


def _reduce(x, k: int) -> np.ndarray:
    return np.concatenate([x[:BASE_DIM], x[feature_slice(k)]])


def _expand(rows_red: np.ndarray, k: int, n: int) -> np.ndarray:
    out = np.zeros(rows_red.shape[:-1] + (n,))
    out[..., :BASE_DIM] = rows_red[..., :BASE_DIM]
    out[..., feature_slice(k)] = rows_red[..., BASE_DIM:]
    return out


def _check_depth(x, k: int, mode: str) -> None:
    if mode == "vins":
        pz = feature_in_imu(x, k)[2]
        if not pz >= PZ_MIN:
            raise CheiralityError(f"feature {k} depth {pz:.6g} below PZ_MIN = {PZ_MIN}")


def numeric_rows(x, k: int, g=GRAVITY, mode: str = "vins",
                 specs: Iterable[DerivativeSpec] = DEFAULT_ROWS, method: str = "ad") -> dict:
    """Gradients of the requested iterated Lie derivatives of ``h_k``.

    Returns ``{spec: (m, 15+3N) array}``.  ``method="fd"`` nests central
    differences; each level multiplies rounding noise by about 1/FD_STEP, so
    beyond one Lie derivative the rows are dominated by noise.
    """
    check_mode(mode)
    x = as_flat(x)
    n = x.shape[-1]
    g = np.asarray(g, dtype=float)
    specs = [tuple(s) for s in specs]
    _check_depth(x, k, mode)
    if method == "fd":
        observe = OBSERVATIONS[mode]

        def h(y):
            return observe(y, k)

        return {
            spec: numeric_jacobian(
                iterated_lie_derivative(h, [named_field(lab, g) for lab in spec], "fd"), x
            )
            for spec in specs
        }
    if method != "ad":
        raise ValueError(f"method must be 'ad' or 'fd', got {method!r}")
    from .dynamics import field_weights

    by_depth: dict[int, list] = {}
    for spec in specs:
        by_depth.setdefault(len(spec), []).append(spec)
    weights = {
        d: np.array([[field_weights(lab) for lab in spec] for spec in group]).reshape(len(group), d, 7)
        for d, group in by_depth.items()
    }
    evaluated = _autodiff.feature_rows(mode, _reduce(x, k), g, weights)
    out = {}
    for d, group in by_depth.items():
        full = _expand(evaluated[d], k, n)
        for spec, row in zip(group, full):
            out[spec] = row
    return {spec: out[spec] for spec in specs}


def build_observability_matrix(x, g=GRAVITY, mode: str = "vins",
                               rows: Sequence[DerivativeSpec] = DEFAULT_ROWS,
                               method: str = "ad") -> ObservabilityMatrix:
    """Stack the requested gradient rows for every feature."""
    check_mode(mode)
    x = as_flat(x)
    g = np.asarray(g, dtype=float)
    m = OUTPUT_DIM[mode]
    blocks, tags = [], []
    source = "numeric-" + method
    for k in range(n_features_of(x)):
        per_feature = numeric_rows(x, k, g, mode, rows, method)
        for spec in rows:
            blocks.append(per_feature[tuple(spec)])
            tags.extend(RowTag(tuple(spec), k, c, source) for c in range(m))
    return ObservabilityMatrix(np.vstack(blocks), tuple(tags), mode, x.copy(), g.copy())


# --------------------------------------------------------------------------
# Structural blocks


def _blocks_matrix(n: int, *entries) -> np.ndarray:
    out = np.zeros((3, n))
    for sl, mat in entries:
        out[:, sl] = mat
    return out


def projection_jacobian(p):
    """``H_c = (1/p_z) [[1, 0, -p_x/p_z], [0, 1, -p_y/p_z]]`` (batched)."""
    xp = _xp(p)
    px, py, pz = p[..., 0], p[..., 1], p[..., 2]
    one, zero = xp.ones_like(pz), xp.zeros_like(pz)
    rows = xp.stack(
        [xp.stack([one, zero, -px / pz], axis=-1), xp.stack([zero, one, -py / pz], axis=-1)],
        axis=-2,
    )
    return rows / pz[..., None, None]


@dataclass(frozen=True)
class StructuralBlocks:
    p: np.ndarray
    K: np.ndarray
    G: np.ndarray
    J: np.ndarray
    M: np.ndarray
    N: np.ndarray
    C: np.ndarray
    Cv: np.ndarray
    Cg: np.ndarray
    b_g: np.ndarray
    b_a: np.ndarray
    Hc: np.ndarray | None = None

    @property
    def pz(self) -> float:
        return float(self.p[2])


def K_block(x, k: int) -> np.ndarray:
    x = as_flat(x)
    n = x.shape[-1]
    C = cgr_rotation(x[S])
    p = C @ (x[feature_slice(k)] - x[PI])
    return _blocks_matrix(n, (S, skew(p) @ jac_theta_wrt_s(x[S])), (PI, -C), (feature_slice(k), C))


def structural_blocks(x, k: int, g=GRAVITY, mode: str = "vins") -> StructuralBlocks:
    check_mode(mode)
    x = as_flat(x)
    n = x.shape[-1]
    g = np.asarray(g, dtype=float)
    s = x[S]
    C = cgr_rotation(s)
    T = jac_theta_wrt_s(s)
    p = feature_in_imu(x, k)
    Cv, Cg = C @ x[V], C @ g
    Hc = None
    if mode == "vins":
        _check_depth(x, k, mode)
        Hc = projection_jacobian(p)
    return StructuralBlocks(
        p=p,
        K=K_block(x, k),
        G=_blocks_matrix(n, (S, skew(Cv) @ T), (V, C)),
        J=_blocks_matrix(n, (BG, np.eye(3))),
        M=_blocks_matrix(n, (S, skew(Cg) @ T)),
        N=_blocks_matrix(n, (BA, np.eye(3))),
        C=C,
        Cv=Cv,
        Cg=Cg,
        b_g=x[BG].copy(),
        b_a=x[BA].copy(),
        Hc=Hc,
    )


def projection_identity_residual(x, k: int, v, g=GRAVITY) -> float:
    """Relative residual of the projection-Jacobian differential identity.

    Compares the finite-difference gradient of ``x -> H_c(x) v`` with
    ``-(1/p_z) (H_c v) e3^T K - (e3^T v / p_z) H_c K``.
    """
    x = as_flat(x)
    v = np.asarray(v, dtype=float)
    b = structural_blocks(x, k, g, "vins")

    def hv(y):
        return (projection_jacobian(feature_in_imu(y, k)) @ v[:, None])[..., 0]

    lhs = numeric_jacobian(hv, x)
    rhs = -np.outer(b.Hc @ v, E3 @ b.K) / b.pz - (E3 @ v / b.pz) * (b.Hc @ b.K)
    scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs))
    return 0.0 if scale == 0 else float(np.linalg.norm(lhs - rhs) / scale)


# --------------------------------------------------------------------------
# Analytic rows


@dataclass(frozen=True)
class AnalyticRow:
    """A closed-form row and the raw-row combination it equals.

    ``combination`` holds ``(coefficient, spec)`` pairs.  ``partial`` rows carry
    only their M/N part; they agree with the combination on vectors annihilated
    by G, J and K.
    """

    label: str
    value: np.ndarray
    combination: tuple
    partial: bool = False


def _wl(i: int) -> str:
    return f"w{i}"


def _al(i: int) -> str:
    return f"a{i}"


def _vins_T_blocks(b: StructuralBlocks):
    """G, J and K coefficients of the reduced ``d L_f0 L_f0 h`` row."""
    Hc, P, pz, Cv, Cg, bg, ba = b.Hc, skew(b.p), b.pz, b.Cv, b.Cg, b.b_g, b.b_a
    w = P @ bg + Cv
    q = E3 @ w / pz
    T1 = -Hc @ (skew(bg) + 2.0 * np.outer(Cv, E3) / pz + np.outer(P @ bg, E3) / pz + q * np.eye(3))
    T2 = -Hc @ (np.outer(Cv, E3 @ P) / pz - skew(Cv))
    for i in range(3):
        inner = skew(E[i]) + np.outer(P @ E[i], E3) / pz + (E3 @ P @ E[i] / pz) * np.eye(3)
        T2 = T2 - np.outer(Hc @ inner @ w, E[i])
    T3 = (
        np.outer(Hc @ ((2.0 * q / pz) * Cv + (E3 @ Cv / pz**2) * w), E3)
        - np.outer(Hc @ (skew(Cv) @ bg + ba - Cg), E3) / pz
        + np.outer(Hc @ Cv, E3 @ skew(bg)) / pz
    )
    return T1, T2, T3


def _f0f0_dh_coefficient(b: StructuralBlocks) -> float:
    P, pz, Cv = skew(b.p), b.pz, b.Cv
    q = E3 @ (P @ b.b_g + Cv) / pz
    return float(E3 @ (skew(Cv) @ b.b_g + b.b_a - b.Cg - q * Cv) / pz)


def analytic_vins_rows(x, k: int, g=GRAVITY) -> list:
    """Closed-form reduced camera rows for feature ``k``."""
    b = structural_blocks(x, k, g, "vins")
    Hc, K, G, J, M, N = b.Hc, b.K, b.G, b.J, b.M, b.N
    P, pz, Cv, bg = skew(b.p), b.pz, b.Cv, b.b_g
    e3K = E3 @ K
    ecv = E3 @ Cv / pz
    rows = [AnalyticRow("dh", Hc @ K, ((1.0, ()),))]

    for i in range(3):
        value = -np.outer(Hc @ P @ E[i], e3K) / pz - Hc @ skew(E[i]) @ K
        comb = ((1.0, (_wl(i),)), (E3 @ P @ E[i] / pz, ()))
        rows.append(AnalyticRow(f"bar dL_{_wl(i)} h", value, comb))

    value = -Hc @ G - Hc @ P @ J + np.outer(Hc @ Cv, e3K) / pz
    comb = ((1.0, ("f0",)),) + tuple((bg[i], (_wl(i),)) for i in range(3)) + ((-ecv, ()),)
    rows.append(AnalyticRow("bar dL_f0 h", value, comb))

    for i in range(3):
        value = np.outer(Hc @ E[i], e3K) / pz
        comb = ((1.0, (_al(i), "f0")), (-E3[i] / pz, ()))
        rows.append(AnalyticRow(f"bar dL_{_al(i)} L_f0 h", value, comb))

    for kk in range(3):
        a = E3 @ P @ E[kk] / pz
        Gc = Hc @ skew(E[kk]) + a * Hc + np.outer(Hc @ P @ E[kk], E3) / pz
        Jc = sum(
            np.outer(
                Hc @ skew(E[i]) @ P @ E[kk] + a * (Hc @ P @ E[i]) + (E3 @ P @ E[i] / pz) * (Hc @ P @ E[kk]),
                E[i],
            )
            for i in range(3)
        )
        T = (
            np.outer(Hc @ skew(Cv) @ E[kk], E3) / pz
            - (2.0 * a / pz) * np.outer(Hc @ Cv, E3)
            - np.outer(Hc @ Cv, E3 @ skew(E[kk])) / pz
            - (E3 @ Cv / pz**2) * np.outer(Hc @ P @ E[kk], E3)
        )
        value = Gc @ G + Jc @ J + T @ K
        dh_coef = E3 @ (-skew(Cv) @ E[kk] + a * Cv) / pz
        comb = (
            ((1.0, (_wl(kk), "f0")),)
            + tuple((bg[i], (_wl(kk), _wl(i))) for i in range(3))
            + ((-ecv, (_wl(kk),)), (dh_coef, ()))
        )
        rows.append(AnalyticRow(f"bar dL_{_wl(kk)} L_f0 h", value, comb))

    T1, T2, T3 = _vins_T_blocks(b)
    c = _f0f0_dh_coefficient(b)
    value = Hc @ (N - M) + T1 @ G + T2 @ J + T3 @ K
    comb = (
        ((1.0, ("f0", "f0")),)
        + tuple((bg[i], ("f0", _wl(i))) for i in range(3))
        + ((-ecv, ("f0",)), (c, ()))
    )
    rows.append(AnalyticRow("bar dL_f0 L_f0 h", value, comb))

    # Only the M/N part of this row is available in closed form.
    for kk in range(3):
        value = Hc @ skew(E[kk]) @ M - (Hc / pz) @ (
            np.outer(P @ E[kk], E3) + (E3 @ P @ E[kk]) * np.eye(3)
        ) @ (N - M)
        comb = (
            ((1.0, (_wl(kk), "f0", "f0")),)
            + tuple((bg[i], (_wl(kk), "f0", _wl(i))) for i in range(3))
            + ((-ecv, (_wl(kk), "f0")), (c, (_wl(kk),)))
        )
        rows.append(AnalyticRow(f"bar dL_{_wl(kk)} L_f0 L_f0 h", value, comb, partial=True))
    return rows


def analytic_lins_rows(x, k: int, g=GRAVITY) -> list:
    """Closed-form lidar rows for feature ``k`` (no reduction needed)."""
    b = structural_blocks(x, k, g, "lins")
    K, G, J, M, N = b.K, b.G, b.J, b.M, b.N
    P, Bg, Cv, bg = skew(b.p), skew(b.b_g), b.Cv, b.b_g
    rows = [
        AnalyticRow("dh", K, ((1.0, ()),)),
        AnalyticRow("dL_f0 h", -P @ J - G + Bg @ K, ((1.0, ("f0",)),)),
    ]
    for i in range(3):
        value = -Bg @ skew(E[i]) @ K - skew(P @ E[i]) @ J + skew(E[i]) @ G
        rows.append(AnalyticRow(f"dL_{_wl(i)} L_f0 h", value, ((1.0, (_wl(i), "f0")),)))
    value = N - M - 2.0 * Bg @ G + (skew(P @ bg) - Bg @ P + 2.0 * skew(Cv)) @ J + Bg @ Bg @ K
    rows.append(AnalyticRow("dL_f0 L_f0 h", value, ((1.0, ("f0", "f0")),)))
    for i in range(3):
        value = (
            skew(E[i]) @ M
            + 2.0 * Bg @ skew(E[i]) @ G
            - Bg @ Bg @ skew(E[i]) @ K
            + (2.0 * skew(skew(Cv) @ E[i]) - Bg @ skew(P @ E[i]) - skew(Bg @ P @ E[i])) @ J
        )
        rows.append(AnalyticRow(f"dL_{_wl(i)} L_f0 L_f0 h", value, ((1.0, (_wl(i), "f0", "f0")),)))
    return rows


def analytic_rows(x, k: int, g=GRAVITY, mode: str = "vins") -> list:
    return analytic_vins_rows(x, k, g) if check_mode(mode) == "vins" else analytic_lins_rows(x, k, g)


def combine(row: AnalyticRow, numeric: dict) -> np.ndarray:
    """Evaluate an analytic row's raw-row combination from numeric rows."""
    return sum(coef * numeric[tuple(spec)] for coef, spec in row.combination)


def required_specs(rows: Iterable[AnalyticRow]) -> list:
    seen = []
    for row in rows:
        for _, spec in row.combination:
            if tuple(spec) not in seen:
                seen.append(tuple(spec))
    return seen


@dataclass(frozen=True)
class RowComparison:
    label: str
    relative_error: float
    partial: bool


def compare_analytic_rows(x, k: int, g=GRAVITY, mode: str = "vins", method: str = "ad") -> list:
    """Relative error of every fully closed-form row against its numeric combination.

    Partial rows are compared on the subspace annihilated by G, J and K.
    """
    rows = analytic_rows(x, k, g, mode)
    numeric = numeric_rows(x, k, g, mode, required_specs(rows), method)
    b = structural_blocks(x, k, g, mode)
    restrict = _null_projector(np.vstack([b.G, b.J, b.K]))
    out = []
    for row in rows:
        ref = combine(row, numeric)
        got = row.value
        if row.partial:
            ref, got = ref @ restrict, got @ restrict
        scale = max(np.abs(ref).max(), np.abs(got).max(), 1e-300)
        out.append(RowComparison(row.label, float(np.abs(ref - got).max() / scale), row.partial))
    return out


def _null_projector(A: np.ndarray) -> np.ndarray:
    _, sv, vt = np.linalg.svd(A)
    rank = int(np.sum(sv > RANK_TOL_ANALYTIC * sv[0])) if sv.size and sv[0] > 0 else 0
    Z = vt[rank:].T
    return Z @ Z.T


# --------------------------------------------------------------------------
# Printed-form discrepancies of the reduced rows


def decompose_reduced_row(row: np.ndarray, b: StructuralBlocks) -> dict:
    """Least-squares coefficients of ``row`` on the rows of N-M, G, J and K."""
    basis = np.vstack([b.N - b.M, b.G, b.J, b.K])
    coef, *_ = np.linalg.lstsq(basis.T, row.T, rcond=None)
    coef = coef.T
    fit = coef @ basis
    scale = max(np.abs(row).max(), 1e-300)
    return {
        "N-M": coef[:, 0:3],
        "G": coef[:, 3:6],
        "J": coef[:, 6:9],
        "K": coef[:, 9:12],
        "fit_error": float(np.abs(fit - row).max() / scale),
    }


def _rel(a, b) -> float:
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def printed_form_discrepancies(x, k: int, g=GRAVITY, method: str = "ad") -> dict:
    """Compare the as-printed coefficients of the reduced ``d L_f0 L_f0 h`` row
    (and the lidar ``d L_wi L_f0 L_f0 h`` K-term) with what the numeric
    combination actually contains.

    The camera row's combination is decomposed on ``[N-M; G; J; K]``; each
    coefficient block is compared with the printed block.  The printed K
    coefficient contains a vector-plus-identity sum that cannot be evaluated
    as written; it is read with that term dropped.
    """
    b = structural_blocks(x, k, g, "vins")
    row = next(r for r in analytic_vins_rows(x, k, g) if r.label == "bar dL_f0 L_f0 h")
    numeric = numeric_rows(x, k, g, "vins", required_specs([row]), method)
    parts = decompose_reduced_row(combine(row, numeric), b)

    Hc, P, pz, Cv, Cg, bg, ba = b.Hc, skew(b.p), b.pz, b.Cv, b.Cg, b.b_g, b.b_a
    w = P @ bg + Cv
    q = E3 @ w / pz
    T1, T2, T3 = _vins_T_blocks(b)
    T2_printed = -Hc @ (np.outer(Cv, E3 @ P) / pz - skew(Cv))
    for i in range(3):
        inner = skew(E[i]) + np.outer(P @ E[i], E3) / pz - (E3 @ P @ E[i] / pz) * np.eye(3)
        T2_printed = T2_printed - np.outer(Hc @ inner @ w, E[i])
    T3_printed = np.outer(Hc @ ((2.0 * q / pz) * Cv), E3) - np.outer(Hc @ (skew(Cv) @ bg + ba - Cg), E3) / pz

    out = {
        "vins_f0f0_fit_error": parts["fit_error"],
        "vins_f0f0_Hc_coefficient": _rel(parts["N-M"], Hc),
        "vins_f0f0_T1_printed": _rel(T1, parts["G"]),
        "vins_f0f0_T2_printed": _rel(T2_printed, parts["J"]),
        "vins_f0f0_T2_corrected": _rel(T2, parts["J"]),
        "vins_f0f0_T3_printed": _rel(T3_printed, parts["K"]),
        "vins_f0f0_T3_corrected": _rel(T3, parts["K"]),
    }
    bl = structural_blocks(x, k, g, "lins")
    Bg = skew(bl.b_g)
    lins = numeric_rows(x, k, g, "lins", [(_wl(i), "f0", "f0") for i in range(3)], method)
    worst = 0.0
    for i in range(3):
        printed_K = -Bg @ Bg
        parts_l = np.linalg.lstsq(
            np.vstack([bl.M, bl.G, bl.J, bl.K]).T, lins[(_wl(i), "f0", "f0")].T, rcond=None
        )[0].T
        worst = max(worst, _rel(printed_K, parts_l[:, 9:12]))
    out["lins_wf0f0_K_printed"] = worst
    return out


# --------------------------------------------------------------------------
# Nullspace


def rotation_about_gravity(x, g=GRAVITY):
    """Unobservable direction of a rotation about gravity (batched).

    ``(ds/dtheta C g, 0, -[v x] g, 0, [g x] p_I, [g x] p_f1, ...)``
    """
    x = as_flat(x)
    xp = _xp(x)
    g = xp.asarray(g, dtype=float) if xp is np else g
    s = x[..., S]
    C = cgr_rotation(s)
    Cg = (C @ g[..., :, None] if g.ndim > 1 else C @ g)
    ds = (jac_s_wrt_theta(s) @ Cg[..., None])[..., 0]
    zero = xp.zeros_like(ds)
    dv = xp.cross(g, x[..., V])
    positions = x[..., PI.start:].reshape(x.shape[:-1] + (-1, 3))
    dp = xp.cross(g, positions).reshape(x.shape[:-1] + (-1,))
    return xp.concatenate([ds, zero, dv, zero, dp], axis=-1)


def translation_directions(n_features: int) -> np.ndarray:
    n = BASE_DIM + 3 * n_features
    B = np.zeros((n, 3))
    B[PI] = np.eye(3)
    for k in range(n_features):
        B[feature_slice(k)] = np.eye(3)
    return B


def theoretical_null_basis(x, g=GRAVITY, mode: str = "vins") -> np.ndarray:
    """Three global translations and the rotation about gravity, as columns.

    The same span holds for camera and lidar observations.
    """
    check_mode(mode)
    x = as_flat(x)
    B = translation_directions(n_features_of(x))
    return np.column_stack([B, rotation_about_gravity(x, g)])


def constraint_matrix(x, g=GRAVITY) -> np.ndarray:
    """Stack ``[K_1; ...; K_N; G; J; N; M]``, shape (3N+12, 3N+15)."""
    x = as_flat(x)
    b = structural_blocks(x, 0, g, "lins") if n_features_of(x) else None
    if b is None:
        raise ValueError("constraint matrix needs at least one feature")
    Ks = [K_block(x, k) for k in range(n_features_of(x))]
    return np.vstack(Ks + [b.G, b.J, b.N, b.M])


def numerical_rank(sv: np.ndarray, rank_tol: float) -> int:
    if sv.size == 0 or not sv[0] > 0:
        return 0
    return int(np.sum(sv > rank_tol * sv[0]))


def subspace_gap(A: np.ndarray, B: np.ndarray) -> float:
    """Largest principal angle between ``span(A)`` and ``span(B)``.

    Subspaces of different dimension are reported as ``pi/2`` apart.
    """
    if A.shape[1] != B.shape[1]:
        return float(np.pi / 2)
    if A.shape[1] == 0:
        return 0.0
    return float(np.max(subspace_angles(A, B)))


@dataclass
class NullspaceReport:
    singular_values: np.ndarray
    numerical_rank: int
    null_basis: np.ndarray
    rank_tol: float
    residual_theoretical: float = float("nan")
    subspace_gap: float = float("nan")
    theorem_flags: dict = field(default_factory=dict)

    @property
    def null_dim(self) -> int:
        return self.null_basis.shape[1]


def nullspace(omega, rank_tol: float | None = None, theoretical: np.ndarray | None = None) -> NullspaceReport:
    """Full-SVD nullspace with relative rank tolerance.

    ``omega`` may be an :class:`ObservabilityMatrix` (numeric tolerance, and
    the theoretical basis is derived from its state) or a plain matrix
    (analytic tolerance).
    """
    if isinstance(omega, ObservabilityMatrix):
        A = omega.rows
        tol = RANK_TOL_NUMERIC if rank_tol is None else rank_tol
        if theoretical is None:
            theoretical = theoretical_null_basis(omega.x, omega.g, omega.mode)
    else:
        A = np.asarray(omega, dtype=float)
        tol = RANK_TOL_ANALYTIC if rank_tol is None else rank_tol
    _, sv, vt = np.linalg.svd(A, full_matrices=True)
    rank = numerical_rank(sv, tol)
    basis = vt[rank:].T.copy()
    report = NullspaceReport(sv, rank, basis, tol)
    if theoretical is not None:
        norms = np.linalg.norm(theoretical, axis=0)
        report.residual_theoretical = float(np.max(np.linalg.norm(A @ theoretical, axis=0) / norms))
        report.subspace_gap = subspace_gap(basis, theoretical)
    return report


# --------------------------------------------------------------------------
# Theorem checks


def line_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Angle in [0, pi/2] between the lines spanned by ``a`` and ``b``."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    c = abs(float(a @ b)) / (na * nb)
    sn = np.linalg.norm(np.cross(a, b)) / (na * nb)
    return float(np.arctan2(sn, c))


def has_noncollinear_pair(x, angle: float = COLLINEAR_ANGLE) -> bool:
    x = as_flat(x)
    ps = [feature_in_imu(x, k) for k in range(n_features_of(x))]
    return any(line_angle(ps[i], ps[j]) > angle for i in range(len(ps)) for j in range(i + 1, len(ps)))


PASS, FAIL, HYPOTHESIS = "pass", "fail", "hypothesis_violation"


@dataclass(frozen=True)
class CheckResult:
    status: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def as_dict(self) -> dict:
        return {"status": self.status, "residual": self.residual, "tol": self.tol}


def _check(residual: float, tol: float, gated: bool) -> CheckResult:
    if gated:
        return CheckResult(HYPOTHESIS, float(residual), tol)
    return CheckResult(PASS if residual <= tol else FAIL, float(residual), tol)


# Checks that need two non-collinear camera features.
TWO_FEATURE_CHECKS = (
    "G_J_annihilate_null",
    "M_N_annihilate_null",
    "constraint_null_matches",
    "constraint_rank",
    "null_dimension",
    "span_gap",
)


def verify_theorems(x, g=GRAVITY, mode: str = "vins", omega: ObservabilityMatrix | None = None,
                    report: NullspaceReport | None = None, check_tol: float = CHECK_TOL,
                    gap_tol: float = GAP_TOL, rank_tol_analytic: float = RANK_TOL_ANALYTIC,
                    rank_tol_numeric: float = RANK_TOL_NUMERIC, strict: bool = False) -> dict:
    """Check every computed null vector against the structural blocks.

    Returns ``{check name: CheckResult}``.  For camera runs without two
    non-collinear features the checks that depend on that hypothesis are
    marked ``hypothesis_violation`` (or raise with ``strict=True``).
    """
    check_mode(mode)
    x = as_flat(x)
    g = np.asarray(g, dtype=float)
    N = n_features_of(x)
    if omega is None:
        omega = build_observability_matrix(x, g, mode)
    if report is None:
        report = nullspace(omega, rank_tol_numeric)
    gated = mode == "vins" and not has_noncollinear_pair(x)
    if gated and strict:
        raise HypothesisViolation("camera features are collinear with the IMU; two-feature checks do not apply")

    Z = report.null_basis
    zn = np.linalg.norm(Z, axis=0) if Z.size else np.zeros(0)

    def worst(A: np.ndarray) -> float:
        if Z.shape[1] == 0:
            return 0.0
        return float(np.max(np.linalg.norm(A @ Z, axis=0) / zn))

    b = structural_blocks(x, 0, g, "lins")
    K_all = np.vstack([K_block(x, k) for k in range(N)])
    Cm = constraint_matrix(x, g)
    c_report = nullspace(Cm, rank_tol_analytic)
    flags = {
        "K_annihilates_null": _check(worst(K_all), check_tol, False),
        "G_J_annihilate_null": _check(max(worst(b.G), worst(b.J)), check_tol, gated),
        "M_N_annihilate_null": _check(max(worst(b.M), worst(b.N)), check_tol, gated),
        "constraint_null_matches": _check(subspace_gap(Z, c_report.null_basis), gap_tol, gated),
        "constraint_rank": _check(abs(c_report.numerical_rank - (3 * N + 11)), 0, gated),
        "null_dimension": _check(abs(report.null_dim - NULL_DIM), 0, gated),
        "span_gap": _check(report.subspace_gap, gap_tol, gated),
    }
    report.theorem_flags = flags
    return flags
