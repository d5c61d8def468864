"""The convex profile rho: a piecewise-affine rho_1 built by induction, made even,
mollified by a smooth bump of half-width 1/4, plus t^2."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import json
import math

import numpy as np
from scipy import integrate, interpolate

HALF_WIDTH = 0.25


def _bump_raw(s):
    s = np.asarray(s, dtype=float)
    x = 4.0 * s
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _bump_mass() -> float:
    val, _ = integrate.quad(lambda s: float(_bump_raw(s)), -HALF_WIDTH, HALF_WIDTH, epsabs=1e-15, epsrel=1e-13)
    return val


def bump(s):
    """Unit-mass C^inf bump supported in [-1/4, 1/4]."""
    return _bump_raw(s) / _bump_mass()


_MOMENT_NODES = 2049


@lru_cache(maxsize=1)
def _moment_splines():
    """Hermite splines for the cumulative moments; the derivatives chi and s chi are exact."""
    x = np.linspace(-HALF_WIDTH, HALF_WIDTH, _MOMENT_NODES)
    f0 = lambda s: float(bump(s))
    f1 = lambda s: s * float(bump(s))
    d0 = np.array([integrate.quad(f0, a, b, epsabs=1e-16, epsrel=1e-14)[0] for a, b in zip(x[:-1], x[1:])])
    d1 = np.array([integrate.quad(f1, a, b, epsabs=1e-16, epsrel=1e-14)[0] for a, b in zip(x[:-1], x[1:])])
    m0 = np.concatenate([[0.0], np.cumsum(d0)])
    m1 = np.concatenate([[0.0], np.cumsum(d1)])
    m0[-1], m1[-1] = 1.0, 0.0
    chi = bump(x)
    return interpolate.CubicHermiteSpline(x, m0, chi), interpolate.CubicHermiteSpline(x, m1, x * chi)


def _moments(x):
    """(int_{-1/4}^{x} chi, int_{-1/4}^{x} s chi), vectorised in x."""
    x = np.clip(np.asarray(x, dtype=float), -HALF_WIDTH, HALF_WIDTH)
    s0, s1 = _moment_splines()
    return s0(x), s1(x)


@dataclass(frozen=True)
class ConvexProfile:
    """rho_1 is `slopes[i] * t + intercepts[i]` on (i, i+1] (piece 0 covers [0, 1]);
    beyond the last knot the last piece is continued."""

    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]
    mollifier_halfwidth: float = HALF_WIDTH
    quadratic: bool = True

    def __post_init__(self):
        if len(self.slopes) != len(self.intercepts) or not self.slopes:
            raise ValueError("slopes and intercepts must be nonempty and of equal length")
        if self.mollifier_halfwidth != HALF_WIDTH:
            raise ValueError("only the 1/4 mollifier half-width is supported")

    @property
    def horizon(self) -> int:
        return len(self.slopes)

    @property
    def knots(self) -> list[tuple[float, float]]:
        vals = [self.intercepts[0]]
        vals += [self.slopes[i] * (i + 1) + self.intercepts[i] for i in range(self.horizon)]
        return [(float(i), v) for i, v in enumerate(vals)]

    def validate(self) -> None:
        if any(b < a - 1e-12 for a, b in zip(self.slopes, self.slopes[1:])):
            raise ValueError("rho_1 slopes must be nondecreasing")
        for i in range(1, self.horizon):
            left = self.slopes[i - 1] * i + self.intercepts[i - 1]
            right = self.slopes[i] * i + self.intercepts[i]
            if abs(left - right) > 1e-9 * max(1.0, abs(left)):
                raise ValueError(f"rho_1 is discontinuous at t={i}")
        if min(v for _, v in self.knots) < 0:
            raise ValueError("rho_1 must be nonnegative")

    def to_dict(self) -> dict:
        return {"knots": [list(k) for k in self.knots], "slopes": list(self.slopes),
                "intercepts": list(self.intercepts), "mollifier_halfwidth": self.mollifier_halfwidth,
                "quadratic": self.quadratic}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ConvexProfile":
        prof = cls(tuple(map(float, data["slopes"])), tuple(map(float, data["intercepts"])),
                   float(data.get("mollifier_halfwidth", HALF_WIDTH)), bool(data.get("quadratic", True)))
        if "knots" in data:
            for (t, v), (t2, v2) in zip(data["knots"], prof.knots):
                if abs(v - v2) > 1e-9 * max(1.0, abs(v2)):
                    raise ValueError(f"knot value at t={t} inconsistent with slopes/intercepts")
        prof.validate()
        return prof

    @classmethod
    def from_json(cls, text: str) -> "ConvexProfile":
        return cls.from_dict(json.loads(text))


def build_rho1(c, N: int) -> ConvexProfile:
    """Inductive piecewise-affine rho_1 on [0, N] for an increasing positive sequence c(0..N).

    rho_1 = c(1) on [0, 1]; on (n, n+1] the current piece is kept when it already
    reaches c(n+1) at n+1, otherwise rho_1 interpolates from its value at n to c(n+1).
    """
    c = [float(x) for x in c]
    if N < 1:
        raise ValueError("horizon N must be >= 1")
    if len(c) < N + 1:
        raise ValueError(f"need c(0..{N}), got {len(c)} values")
    if any(x <= 0 for x in c):
        raise ValueError("c must be positive")
    if any(b <= a for a, b in zip(c, c[1:])):
        raise ValueError("c must be strictly increasing")
    slopes, intercepts = [0.0], [c[1]]
    for n in range(1, N):
        a, b = slopes[-1], intercepts[-1]
        if a * (n + 1) + b >= c[n + 1]:
            slopes.append(a)
            intercepts.append(b)
        else:
            start = a * n + b
            slope = c[n + 1] - start
            slopes.append(slope)
            intercepts.append(start - slope * n)
    prof = ConvexProfile(tuple(slopes), tuple(intercepts))
    prof.validate()
    return prof


def rho1_eval(profile: ConvexProfile, t):
    """rho_1(|t|) (the even extension)."""
    t = np.abs(np.asarray(t, dtype=float))
    idx = np.clip(np.ceil(t).astype(int) - 1, 0, profile.horizon - 1)
    a = np.asarray(profile.slopes)[idx]
    b = np.asarray(profile.intercepts)[idx]
    return a * t + b


def _mollified(profile: ConvexProfile, t: np.ndarray) -> np.ndarray:
    h = HALF_WIDTH
    total = np.zeros_like(t)
    j0 = np.floor(t - h).astype(int)
    # the window [t - 1/4, t + 1/4] meets at most two integer intervals [j, j+1]
    for j in (j0, j0 + 1):
        lo, hi = np.maximum(t - j - 1, -h), np.minimum(t - j, h)
        ok = hi > lo
        pos = j >= 0
        idx = np.minimum(np.where(pos, j, -j - 1), profile.horizon - 1)
        A = np.where(pos, 1.0, -1.0) * np.asarray(profile.slopes)[idx]
        B = np.asarray(profile.intercepts)[idx]
        m0a, m1a = _moments(lo)
        m0b, m1b = _moments(hi)
        total += np.where(ok, (A * t + B) * (m0b - m0a) - A * (m1b - m1a), 0.0)
    return total


def rho_eval(profile: ConvexProfile, t):
    """rho(t) = (rho_1(|.|) * chi)(t) + t^2 (the t^2 term only when profile.quadratic)."""
    arr = np.asarray(t, dtype=float)
    out = _mollified(profile, arr.ravel())
    if profile.quadratic:
        out = out + arr.ravel() ** 2
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def rho_derivative(profile: ConvexProfile, t: float, h: float = 1e-5) -> float:
    return (rho_eval(profile, t + h) - rho_eval(profile, t - h)) / (2 * h)


@dataclass
class RhoCheckReport:
    dominance_ok: bool = True
    window_ok: bool = True
    convex_ok: bool = True
    derivative_at_zero: float = 0.0
    min_dominance_margin: float = math.inf
    min_window_margin: float = math.inf
    min_second_difference: float = math.inf
    violations: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.dominance_ok and self.window_ok and self.convex_ok and abs(self.derivative_at_zero) <= 1e-6

    def to_dict(self) -> dict:
        return {"ok": self.ok, "dominance_ok": self.dominance_ok, "window_ok": self.window_ok,
                "convex_ok": self.convex_ok, "derivative_at_zero": self.derivative_at_zero,
                "min_dominance_margin": self.min_dominance_margin,
                "min_window_margin": self.min_window_margin,
                "min_second_difference": self.min_second_difference,
                "violations": self.violations[:20]}


def rho_check(profile: ConvexProfile, c, N: int, window_c: dict[int, float] | None = None,
              step: float = 1e-2, strict_margin: float = 1e-12) -> RhoCheckReport:
    """Sample-based audit of rho.

    Checks rho(t) > c[n] on (n, n+1] for n < N, convexity of rho by second
    differences, rho'(0) = 0, and, if `window_c` maps n -> c(n), rho >= c(n) on
    [n-1, n+2] (clipped to t >= 0).
    """
    rep = RhoCheckReport()
    t = np.round(np.arange(0, N + 2 + step / 2, step), 12)
    vals = rho_eval(profile, t)
    for n in range(N):
        mask = (t > n) & (t <= n + 1)
        margin = float(np.min(vals[mask] - c[n]))
        rep.min_dominance_margin = min(rep.min_dominance_margin, margin)
        if not margin > strict_margin:
            rep.dominance_ok = False
            k = int(np.argmin(np.where(mask, vals, np.inf)))
            rep.violations.append({"check": "dominance", "n": n, "t": float(t[k]), "rho": float(vals[k]), "c": float(c[n])})
    for n, cn in (window_c or {}).items():
        mask = (t >= max(n - 1, 0)) & (t <= n + 2)
        if not mask.any():
            continue
        margin = float(np.min(vals[mask] - cn))
        rep.min_window_margin = min(rep.min_window_margin, margin)
        if margin < 0:
            rep.window_ok = False
            k = int(np.argmin(np.where(mask, vals, np.inf)))
            rep.violations.append({"check": "window", "n": n, "t": float(t[k]), "rho": float(vals[k]), "c": float(cn)})
    d2 = vals[2:] - 2 * vals[1:-1] + vals[:-2]
    rep.min_second_difference = float(np.min(d2))
    if rep.min_second_difference < -1e-9:
        rep.convex_ok = False
        k = int(np.argmin(d2)) + 1
        rep.violations.append({"check": "convexity", "t": float(t[k]), "second_difference": float(d2[k - 1])})
    rep.derivative_at_zero = rho_derivative(profile, 0.0)
    return rep
