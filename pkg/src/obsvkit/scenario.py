"""Seeded random scenarios with optional degenerate feature layouts.

Random numbers come from xoshiro256** (Blackman and Vigna) seeded through
SplitMix64, implemented on Python integers so any platform reproduces the
same stream:

    splitmix64:  z = (state += 0x9E3779B97F4A7C15)
                 z = (z ^ z >> 30) * 0xBF58476D1CE4E5B9
                 z = (z ^ z >> 27) * 0x94D049BB133111EB
                 return z ^ z >> 31
    xoshiro256**: out = rotl(s1 * 5, 7) * 9
                 t = s1 << 17; s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3
                 s2 ^= t; s3 = rotl(s3, 45)

All arithmetic is modulo 2**64.  A uniform double is ``(out >> 11) * 2**-53``;
a standard normal is the cosine branch of Box-Muller on two uniforms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import GRAVITY, PZ_MIN, ImuInput, check_mode
from .errors import InvalidConfig
from .lie import InputSchedule, Segment
from .observability import COLLINEAR_ANGLE, line_angle
from .state import State, cgr_rotation

MASK64 = (1 << 64) - 1
DEGENERACIES = ("none", "collinear_features", "near_zero_depth")

S_RADIUS = 1.0
BIAS_RANGE = 0.1
V_RANGE = 2.0
P_RANGE = 5.0
DEPTH_RANGE = (0.5, 10.0)
COLLINEAR_SCALE = (1.5, 3.0)
NEAR_ZERO_DEPTH = (PZ_MIN, 10.0 * PZ_MIN)
OMEGA_RANGE = 1.0
ACCEL_RANGE = 5.0
SEGMENT_DURATION = (0.2, 0.5)
N_SEGMENTS = 3

_PERTURB_SALT = 0x5DEECE66D


def _rotl(v: int, k: int) -> int:
    return ((v << k) | (v >> (64 - k))) & MASK64


def splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** generator with the helpers the scenario sampler needs."""

    def __init__(self, seed: int):
        sm = int(seed) & MASK64
        words = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            words.append(out)
        self.s = words

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        out = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return out

    def random(self) -> float:
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float, size: int | None = None):
        if size is None:
            return lo + (hi - lo) * self.random()
        return np.array([lo + (hi - lo) * self.random() for _ in range(size)])

    def normal(self, size: int | None = None):
        def one() -> float:
            u1 = 1.0 - self.random()
            u2 = self.random()
            return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

        if size is None:
            return one()
        return np.array([one() for _ in range(size)])


@dataclass(frozen=True)
class Scenario:
    seed: int
    mode: str
    state: State
    gravity: np.ndarray
    schedule: InputSchedule
    degeneracy: str = "none"

    @property
    def x(self) -> np.ndarray:
        return self.state.flatten()

    @property
    def n_features(self) -> int:
        return self.state.n_features


def _validate(seed, mode, n_features, degeneracy) -> None:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool) or not 0 <= int(seed) <= MASK64:
        raise InvalidConfig(f"seed must be an integer in [0, 2**64), got {seed!r}")
    try:
        check_mode(mode)
    except ValueError as exc:
        raise InvalidConfig(str(exc)) from None
    if degeneracy not in DEGENERACIES:
        raise InvalidConfig(f"degeneracy must be one of {DEGENERACIES}, got {degeneracy!r}")
    if not isinstance(n_features, (int, np.integer)) or isinstance(n_features, bool) or n_features < 1:
        raise InvalidConfig(f"need at least one feature, got {n_features!r}")
    if mode == "vins" and degeneracy == "none" and n_features < 2:
        raise InvalidConfig("camera scenarios without degeneracy need at least two features")
    if degeneracy == "collinear_features" and n_features < 2:
        raise InvalidConfig("collinear_features needs at least two features")


def _ball(rng: Xoshiro256, radius: float) -> np.ndarray:
    while True:
        s = rng.uniform(-radius, radius, 3)
        if s @ s <= radius * radius:
            return s


def _camera_point(rng: Xoshiro256, depth=DEPTH_RANGE) -> np.ndarray:
    z = rng.uniform(*depth)
    return z * np.array([rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 1.0])


def _lidar_point(rng: Xoshiro256, rng_range=DEPTH_RANGE) -> np.ndarray:
    d = rng.normal(3)
    while not np.linalg.norm(d) > 1e-9:
        d = rng.normal(3)
    return rng.uniform(*rng_range) * d / np.linalg.norm(d)


def _separated(p: np.ndarray, others: list) -> bool:
    return all(line_angle(p, q) > COLLINEAR_ANGLE for q in others)


def _imu_features(rng: Xoshiro256, mode: str, n: int, degeneracy: str) -> list:
    draw = _camera_point if mode == "vins" else _lidar_point
    pts: list = []
    if degeneracy == "collinear_features":
        lo, hi = DEPTH_RANGE
        first = draw(rng, (lo, hi / COLLINEAR_SCALE[1]))
        pts = [first, rng.uniform(*COLLINEAR_SCALE) * first]
    elif degeneracy == "near_zero_depth":
        pts = [draw(rng, NEAR_ZERO_DEPTH)]
    while len(pts) < n:
        p = draw(rng)
        if _separated(p, pts):
            pts.append(p)
    return pts


def random_schedule(rng: Xoshiro256, segments: int = N_SEGMENTS) -> InputSchedule:
    segs = []
    for _ in range(segments):
        duration = rng.uniform(*SEGMENT_DURATION)
        omega = rng.uniform(-OMEGA_RANGE, OMEGA_RANGE, 3)
        acc = rng.uniform(-ACCEL_RANGE, ACCEL_RANGE, 3)
        segs.append(Segment(duration, ImuInput(omega, acc)))
    return InputSchedule(tuple(segs))


def sample_scenario(seed: int, mode: str = "vins", n_features: int = 2, degeneracy: str = "none",
                    gravity=GRAVITY) -> Scenario:
    """Draw a reproducible scenario.

    Features are placed in the IMU frame first (camera: depth in [0.5, 10] m
    and inside a 90 degree field of view; lidar: range in [0.5, 10] m in any
    direction) and then mapped to the global frame.
    """
    _validate(seed, mode, n_features, degeneracy)
    rng = Xoshiro256(int(seed))
    s = _ball(rng, S_RADIUS)
    b_g = rng.uniform(-BIAS_RANGE, BIAS_RANGE, 3)
    v = rng.uniform(-V_RANGE, V_RANGE, 3)
    b_a = rng.uniform(-BIAS_RANGE, BIAS_RANGE, 3)
    p_I = rng.uniform(-P_RANGE, P_RANGE, 3)
    C = cgr_rotation(s)
    feats = [p_I + C.T @ p for p in _imu_features(rng, mode, int(n_features), degeneracy)]
    state = State(s, b_g, v, b_a, p_I, np.array(feats))
    schedule = random_schedule(rng)
    return Scenario(int(seed), mode, state, np.array(gravity, dtype=float), schedule, degeneracy)


def perturb(scenario: Scenario, scale: float, seed: int | None = None) -> Scenario:
    """Add seeded Gaussian noise of standard deviation ``scale`` to every state entry."""
    if not scale >= 0:
        raise InvalidConfig(f"perturbation scale must be non-negative, got {scale!r}")
    if scale == 0:
        return scenario
    rng = Xoshiro256((scenario.seed ^ _PERTURB_SALT) if seed is None else int(seed))
    x = scenario.x
    return replace(scenario, state=State.unflatten(x + scale * rng.normal(x.size)))


# --------------------------------------------------------------------------
# Canonical JSON


def _dump(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(k)}: {_dump(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_dump(v) for v in obj) + "]"
    if isinstance(obj, (bool, str)) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    value = float(obj)
    if not math.isfinite(value):
        raise ValueError("non-finite number in scenario")
    return format(value, ".17g")


def _floats(a) -> list:
    return [float(v) for v in np.asarray(a, dtype=float).ravel()]


def scenario_to_dict(sc: Scenario) -> dict:
    st = sc.state
    return {
        "seed": int(sc.seed),
        "mode": sc.mode,
        "state": {
            "s": _floats(st.s),
            "b_g": _floats(st.b_g),
            "v": _floats(st.v),
            "b_a": _floats(st.b_a),
            "p_I": _floats(st.p_I),
            "features": [_floats(p) for p in st.features],
        },
        "gravity": _floats(sc.gravity),
        "schedule": [
            {"duration": float(seg.duration), "omega": _floats(seg.u.omega), "a": _floats(seg.u.a)}
            for seg in sc.schedule.segments
        ],
        "degeneracy": sc.degeneracy,
    }


def to_json(sc: Scenario) -> str:
    """Canonical JSON: fixed key order, numbers printed with 17 significant digits."""
    return _dump(scenario_to_dict(sc))


def _json_number(text: str) -> float:
    return float(text)


def from_dict(d: dict) -> Scenario:
    st = d["state"]
    state = State(st["s"], st["b_g"], st["v"], st["b_a"], st["p_I"], np.array(st["features"], dtype=float))
    schedule = InputSchedule(
        tuple(Segment(float(seg["duration"]), ImuInput(seg["omega"], seg["a"])) for seg in d["schedule"])
    )
    return Scenario(int(d["seed"]), d["mode"], state, np.array(d["gravity"], dtype=float), schedule,
                    d.get("degeneracy", "none"))


def from_json(text: str) -> Scenario:
    return from_dict(json.loads(text, parse_int=int, parse_float=_json_number))
