"""Seeded trial batteries shared by the CLI and the acceptance tests.

Every battery returns a plain ``dict`` that serializes directly to the run
report (see ``docs/report-schema.md``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import InvalidConfig
from .lie import DEFAULT_DT
from .observability import (
    CHECK_TOL,
    GAP_TOL,
    HYPOTHESIS,
    PASS,
    RANK_TOL_ANALYTIC,
    RANK_TOL_NUMERIC,
    build_observability_matrix,
    compare_analytic_rows,
    constraint_matrix,
    projection_identity_residual,
    nullspace,
    numerical_rank,
    printed_form_discrepancies,
    verify_theorems,
)
from .ocvins import (
    BRACKET_TOL,
    coordinate_transfer_check,
    mutated_n4,
    verify_brackets,
    verify_flow_invariance,
    verify_translation_brackets,
)
from .scenario import MASK64, Xoshiro256, sample_scenario
from .state import skew

MUTATION_MIN = 1e-2


@dataclass(frozen=True)
class Tolerances:
    rank_tol_analytic: float = RANK_TOL_ANALYTIC
    rank_tol_numeric: float = RANK_TOL_NUMERIC
    check_tol: float = CHECK_TOL
    gap_tol: float = GAP_TOL
    bracket_tol: float = BRACKET_TOL
    gradient_tol: float = 1e-5
    identity_tol: float = 1e-5
    triple_cross_tol: float = 1e-13
    flow_tol: float = 1e-5
    transfer_tol: float = 1e-12

    def with_overrides(self, overrides: dict) -> "Tolerances":
        names = {f.name for f in fields(self)}
        values = {}
        for key, raw in overrides.items():
            if key not in names:
                raise InvalidConfig(f"unknown tolerance {key!r}; known: {sorted(names)}")
            try:
                value = float(raw)
            except (TypeError, ValueError):
                raise InvalidConfig(f"tolerance {key} must be a number, got {raw!r}") from None
            if not (math.isfinite(value) and value >= 0):
                raise InvalidConfig(f"tolerance {key} must be finite and non-negative, got {raw!r}")
            values[key] = value
        return Tolerances(**{**self.as_dict(), **values})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def trial_seed(seed: int, t: int) -> int:
    return (int(seed) + t) & MASK64


@dataclass
class Stat:
    values: list = field(default_factory=list)

    def add(self, v: float) -> None:
        self.values.append(float(v))

    def summary(self) -> dict:
        if not self.values:
            return {"max": 0.0, "mean": 0.0, "count": 0}
        return {"max": max(self.values), "mean": math.fsum(self.values) / len(self.values),
                "count": len(self.values)}


def _summaries(stats: dict) -> dict:
    return {k: v.summary() for k, v in stats.items()}


# --------------------------------------------------------------------------
# analyze


def analyze_trial(scenario, tol: Tolerances) -> dict:
    x, g, mode = scenario.x, scenario.gravity, scenario.mode
    omega = build_observability_matrix(x, g, mode)
    report = nullspace(omega, tol.rank_tol_numeric)
    flags = verify_theorems(
        x, g, mode, omega=omega, report=report, check_tol=tol.check_tol, gap_tol=tol.gap_tol,
        rank_tol_analytic=tol.rank_tol_analytic, rank_tol_numeric=tol.rank_tol_numeric,
    )
    Cm = constraint_matrix(x, g)
    brackets = verify_brackets(x, g, tol=tol.bracket_tol)
    hypothesis = any(c.status == HYPOTHESIS for c in flags.values())
    checks = {name: c.as_dict() for name, c in flags.items()}
    checks["n4_brackets"] = {
        "status": PASS if brackets.passed else "fail",
        "residual": brackets.max_residual,
        "tol": brackets.tol,
    }
    passed = all(c["status"] in (PASS, HYPOTHESIS) for c in checks.values())
    return {
        "seed": scenario.seed,
        "null_dim": report.null_dim,
        "numerical_rank": report.numerical_rank,
        "matrix_shape": list(omega.shape),
        "singular_values": [float(v) for v in report.singular_values],
        "residual_theoretical": report.residual_theoretical,
        "subspace_gap": report.subspace_gap,
        "constraint_rank": numerical_rank(np.linalg.svd(Cm, compute_uv=False), tol.rank_tol_analytic),
        "hypothesis_violation": hypothesis,
        "checks": checks,
        "passed": passed,
    }


def run_analyze(mode: str, n_features: int, trials: int, seed: int, degeneracy: str = "none",
                tol: Tolerances = Tolerances()) -> dict:
    _check_trials(trials)
    results, stats = [], {}
    for t in range(trials):
        sc = sample_scenario(trial_seed(seed, t), mode, n_features, degeneracy)
        res = analyze_trial(sc, tol)
        results.append(res)
        for name, c in res["checks"].items():
            stats.setdefault(name, Stat()).add(c["residual"])
    dims = [r["null_dim"] for r in results]
    passed = all(r["passed"] for r in results)
    return {
        "trials": results,
        "summary": {
            "checks": _summaries(stats),
            "null_dims": {str(d): dims.count(d) for d in sorted(set(dims))},
            "hypothesis_violations": sum(r["hypothesis_violation"] for r in results),
        },
        "passed": passed,
        "informational": degeneracy != "none",
    }


def _check_trials(trials: int) -> None:
    if trials < 1:
        raise InvalidConfig(f"trials must be positive, got {trials}")


# --------------------------------------------------------------------------
# verify


def run_gradients(trials: int, seed: int, tol: Tolerances = Tolerances()) -> dict:
    """Analytic rows against their numeric combinations, camera and lidar."""
    _check_trials(trials)
    stats: dict = {}
    printed: dict = {}
    worst = 0.0
    for t in range(trials):
        s = trial_seed(seed, t)
        for mode, n in (("vins", 2), ("lins", 1)):
            sc = sample_scenario(s, mode, n)
            for cmp in compare_analytic_rows(sc.x, 0, sc.gravity, mode):
                stats.setdefault(f"{mode}: {cmp.label}", Stat()).add(cmp.relative_error)
                worst = max(worst, cmp.relative_error)
        sc = sample_scenario(s, "vins", 2)
        for key, val in printed_form_discrepancies(sc.x, 0, sc.gravity).items():
            printed.setdefault(key, Stat()).add(val)
    return {
        "summary": {"rows": _summaries(stats), "printed_form_discrepancies": _summaries(printed),
                    "max_residual": worst},
        "passed": worst <= tol.gradient_tol,
    }


def triple_cross_residual(a, b, c) -> float:
    """``|[(a x b) x] c + [(b x c) x] a + [(c x a) x] b|``."""
    return float(np.linalg.norm(
        skew(skew(a) @ b) @ c + skew(skew(b) @ c) @ a + skew(skew(c) @ a) @ b
    ))


def run_identities(trials: int, seed: int, tol: Tolerances = Tolerances()) -> dict:
    _check_trials(trials)
    identity, cross = Stat(), Stat()
    for t in range(trials):
        s = trial_seed(seed, t)
        sc = sample_scenario(s, "vins", 2)
        rng = Xoshiro256(s ^ 0xA5A5A5A5)
        identity.add(projection_identity_residual(sc.x, 0, rng.normal(3), sc.gravity))
        cross.add(triple_cross_residual(rng.normal(3), rng.normal(3), rng.normal(3)))
    passed = identity.summary()["max"] <= tol.identity_tol and cross.summary()["max"] <= tol.triple_cross_tol
    return {
        "summary": {"projection_jacobian_identity": identity.summary(), "triple_cross_identity": cross.summary()},
        "passed": passed,
    }


def run_brackets(trials: int, seed: int, tol: Tolerances = Tolerances()) -> dict:
    _check_trials(trials)
    stats: dict = {}
    mutation, translation, transfer = Stat(), Stat(), Stat()
    passed = True
    mutation_ok = True
    for t in range(trials):
        sc = sample_scenario(trial_seed(seed, t), "vins", 2)
        rep = verify_brackets(sc.x, sc.gravity, tol=tol.bracket_tol)
        passed &= rep.passed
        for label, r in rep.residuals.items():
            stats.setdefault(label, Stat()).add(r)
        mut = verify_brackets(sc.x, sc.gravity, direction=mutated_n4, tol=tol.bracket_tol).max_residual
        mutation.add(mut)
        mutation_ok &= mut > MUTATION_MIN
        tr = verify_translation_brackets(sc.x, sc.gravity, tol=tol.bracket_tol)
        translation.add(tr.max_residual)
        passed &= tr.passed
        ct = coordinate_transfer_check(sc.x, sc.gravity)
        transfer.add(ct)
        passed &= ct <= tol.transfer_tol
    return {
        "summary": {
            "brackets": _summaries(stats),
            "mutated_v_block": mutation.summary(),
            "translation_brackets": translation.summary(),
            "coordinate_transfer": transfer.summary(),
            "mutation_detected": bool(mutation_ok),
        },
        "passed": bool(passed and mutation_ok),
    }


def run_flow(trials: int, seed: int, duration: float = 1.0, dt: float = DEFAULT_DT,
             tol: Tolerances = Tolerances(), jacobian: str = "ad") -> dict:
    _check_trials(trials)
    if not (duration > 0 and dt > 0):
        raise InvalidConfig("duration and dt must be positive")
    if jacobian not in ("ad", "fd"):
        raise InvalidConfig(f"jacobian must be 'ad' or 'fd', got {jacobian!r}")
    stat = Stat()
    for t in range(trials):
        sc = sample_scenario(trial_seed(seed, t), "vins", 2)
        stat.add(verify_flow_invariance(sc.x, sc.schedule.scaled_to(duration), sc.gravity, dt, jacobian=jacobian))
    summary = stat.summary()
    return {"summary": {"flow_invariance": summary}, "passed": summary["max"] <= tol.flow_tol}
