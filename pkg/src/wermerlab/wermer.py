"""Branches of w = sum_j eps_j sqrt(z - a_j), their continuation and monodromy,
and the certified eps-schedule with its derived functionals."""

from __future__ import annotations

from dataclasses import dataclass, field
import itertools
import json
import logging
import math

import numpy as np

from .lattice import RegionId, spiral_point, spiral_points

logger = logging.getLogger(__name__)

MIN_BRANCH_DISTANCE = 1e-6
MAX_SUBSTEPS = 2_000_000


class ContinuationError(RuntimeError):
    """Raised when a path comes too close to a branch point or needs too many steps."""


class ScheduleError(ValueError):
    """Raised when an eps-schedule violates its defining inequalities."""


def sign_matrix(m: int) -> np.ndarray:
    """All 2^m sign vectors, row 0 = (+1, ..., +1), as an int8 array of shape (2^m, m)."""
    if m == 0:
        return np.ones((1, 0), dtype=np.int8)
    bits = (np.arange(2 ** m)[:, None] >> np.arange(m)[None, :]) & 1
    return (1 - 2 * bits).astype(np.int8)


@dataclass(frozen=True)
class EpsilonSchedule:
    eps: tuple[float, ...]
    radii: tuple[float, ...] = ()
    kappas: tuple[float, ...] = ()
    safety: float = 0.5

    def __post_init__(self):
        m = len(self.eps)
        if m < 1:
            raise ScheduleError("schedule needs at least eps_1")
        if len(self.radii) != m - 1 or len(self.kappas) != m - 1:
            raise ScheduleError("radii and kappas must list entries for levels 2..m")

    @property
    def m(self) -> int:
        return len(self.eps)

    @property
    def points(self) -> np.ndarray:
        return spiral_points(self.m)

    def radius(self, p: int) -> float:
        if p < 2:
            raise ValueError("r_p is defined for p >= 2 only")
        return self.radii[p - 2]

    def kappa(self, k: int) -> float:
        return self.kappas[k - 2]

    def truncated(self, m: int) -> "EpsilonSchedule":
        return EpsilonSchedule(self.eps[:m], self.radii[: m - 1], self.kappas[: m - 1], self.safety)

    def to_dict(self) -> dict:
        return {"m": self.m, "eps": list(self.eps), "radii": list(self.radii),
                "kappas": list(self.kappas), "safety": self.safety}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "EpsilonSchedule":
        sched = cls(tuple(float(e) for e in data["eps"]), tuple(float(r) for r in data["radii"]),
                    tuple(float(k) for k in data["kappas"]), float(data["safety"]))
        if "m" in data and int(data["m"]) != sched.m:
            raise ScheduleError(f"declared m={data['m']} but {sched.m} eps values given")
        return sched

    @classmethod
    def from_json(cls, text: str) -> "EpsilonSchedule":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class BranchSignature:
    signs: tuple[int, ...]
    reference: complex

    def __post_init__(self):
        if any(s not in (1, -1) for s in self.signs):
            raise ValueError("signs must be +1 or -1")

    def flipped(self, flips) -> "BranchSignature":
        return BranchSignature(tuple(int(s * f) for s, f in zip(self.signs, flips)), self.reference)


@dataclass(frozen=True)
class ContinuationPath:
    waypoints: tuple[complex, ...]
    max_step: float = 0.05

    def __post_init__(self):
        if len(self.waypoints) < 1:
            raise ValueError("a path needs at least one waypoint")
        if self.max_step <= 0:
            raise ValueError("max_step must be positive")

    @classmethod
    def straight(cls, start, end, max_step: float = 0.05) -> "ContinuationPath":
        return cls((complex(start), complex(end)), max_step)

    @classmethod
    def circle(cls, center, radius: float, turns: float = 1.0, start_angle: float = 0.0,
               samples: int = 256, max_step: float = 0.05) -> "ContinuationPath":
        """Polygonal loop through `samples` points per turn on |z - center| = radius.

        Negative `turns` runs clockwise; the last waypoint coincides with the first
        when `turns` is an integer.
        """
        count = max(int(round(abs(turns) * samples)), 1)
        angles = start_angle + 2 * np.pi * turns * np.arange(count + 1) / count
        pts = complex(center) + radius * np.exp(1j * angles)
        if float(turns).is_integer():
            pts[-1] = pts[0]
        return cls(tuple(complex(p) for p in pts), max_step)

    @property
    def start(self) -> complex:
        return self.waypoints[0]

    @property
    def end(self) -> complex:
        return self.waypoints[-1]


def _segment_distance(p, q, pts):
    """Euclidean distance from segment [p, q] to each point of `pts`."""
    d = q - p
    L2 = abs(d) ** 2
    if L2 == 0:
        return np.abs(pts - p)
    t = np.clip(((pts - p) * np.conj(d)).real / L2, 0.0, 1.0)
    return np.abs(pts - (p + t * d))


def refine_path(path: ContinuationPath, branch_points: np.ndarray) -> np.ndarray:
    """Subdivide each segment so every step is at most half the segment's distance to the
    branch points (and at most path.max_step)."""
    wp = np.asarray(path.waypoints, dtype=complex)
    if len(branch_points) and np.min(np.abs(wp[:, None] - branch_points[None, :])) < MIN_BRANCH_DISTANCE:
        raise ContinuationError("path waypoint too close to a branch point")
    pieces = [wp[:1]]
    total = 0
    for p, q in zip(wp[:-1], wp[1:]):
        length = abs(q - p)
        if length == 0:
            continue
        dist = float(np.min(_segment_distance(p, q, branch_points))) if len(branch_points) else np.inf
        if dist < MIN_BRANCH_DISTANCE:
            raise ContinuationError(f"segment {p}->{q} passes within {dist:.3g} of a branch point")
        step = min(path.max_step, 0.5 * dist)
        count = max(1, math.ceil(length / step))
        total += count
        if total > MAX_SUBSTEPS:
            raise ContinuationError("step control failure: refinement exceeded the substep cap")
        pieces.append(p + (q - p) * (np.arange(1, count + 1) / count))
    return np.concatenate(pieces)


def continued_roots(points: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Continue sqrt(z - a_j) along the refined polyline `zs`, anchored at the principal
    root at zs[0]. Returns shape (m, len(zs))."""
    roots = np.sqrt(zs[None, :] - points[:, None])
    if zs.size > 1:
        flips = np.where((roots[:, 1:] * np.conj(roots[:, :-1])).real < 0, -1.0, 1.0)
        signs = np.concatenate([np.ones((len(points), 1)), np.cumprod(flips, axis=1)], axis=1)
        roots = roots * signs
    return roots


def _check_reference(schedule: EpsilonSchedule, sig: BranchSignature, path: ContinuationPath):
    if len(sig.signs) != schedule.m:
        raise ValueError(f"signature length {len(sig.signs)} != schedule level {schedule.m}")
    if abs(path.start - sig.reference) > 1e-12:
        raise ValueError("continuation path must start at the signature's reference point")


def _continue(schedule, sig, path):
    _check_reference(schedule, sig, path)
    zs = refine_path(path, schedule.points)
    roots = continued_roots(schedule.points, zs)
    return zs, roots[:, -1]


def branch_eval(schedule: EpsilonSchedule, sig: BranchSignature, path: ContinuationPath) -> complex:
    """Value at path.end of the branch selected by `sig`, continued along `path`."""
    _, end_roots = _continue(schedule, sig, path)
    coeff = np.asarray(schedule.eps) * np.asarray(sig.signs)
    return complex(np.sum(coeff * end_roots))


def branch_derivative(schedule: EpsilonSchedule, sig: BranchSignature, path: ContinuationPath) -> complex:
    """d/dz of the same determination as :func:`branch_eval`."""
    _, end_roots = _continue(schedule, sig, path)
    coeff = np.asarray(schedule.eps) * np.asarray(sig.signs)
    return complex(np.sum(coeff / (2 * end_roots)))


def monodromy(schedule: EpsilonSchedule, sig: BranchSignature, loop: ContinuationPath) -> BranchSignature:
    """Signature obtained after continuing `sig` once around the closed path `loop`."""
    if abs(loop.end - loop.start) > 1e-12:
        raise ValueError("monodromy needs a closed loop")
    _, end_roots = _continue(schedule, sig, loop)
    start_roots = np.sqrt(loop.start - schedule.points)
    flips = np.where((end_roots * np.conj(start_roots)).real < 0, -1, 1)
    return sig.flipped(flips)


def term_values(schedule: EpsilonSchedule, z) -> np.ndarray:
    """eps_j * principal sqrt(z - a_j), shape (m,) + z.shape."""
    z = np.asarray(z, dtype=complex)
    eps = np.asarray(schedule.eps).reshape((-1,) + (1,) * z.ndim)
    pts = schedule.points.reshape((-1,) + (1,) * z.ndim)
    return eps * np.sqrt(z[None, ...] - pts)


def signed_sums(signs: np.ndarray, terms: np.ndarray) -> np.ndarray:
    """sum_j signs[:, j] * terms[j] accumulated in a fixed order, so that the same branch
    value is reproduced bit for bit whatever the batch shape (a BLAS product is not)."""
    out = signs[:, 0, None] * terms[0][None, :]
    for j in range(1, terms.shape[0]):
        out = out + signs[:, j, None] * terms[j][None, :]
    return out


def branch_values(schedule: EpsilonSchedule, z) -> np.ndarray:
    """All 2^m branch values at z (rows follow :func:`sign_matrix`), shape (2^m,) + z.shape.

    The multiset of values does not depend on the determination of the roots.
    """
    z = np.asarray(z, dtype=complex)
    terms = term_values(schedule, z).reshape(schedule.m, -1)
    vals = signed_sums(sign_matrix(schedule.m).astype(float), terms)
    return vals.reshape((-1,) + z.shape)


def branch_derivatives(schedule: EpsilonSchedule, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    terms = term_values(schedule, z).reshape(schedule.m, -1)
    pts = schedule.points[:, None]
    dterms = terms / (2 * (z.reshape(1, -1) - pts))
    return signed_sums(sign_matrix(schedule.m).astype(float), dterms).reshape((-1,) + z.shape)


def tube_distance(schedule: EpsilonSchedule, z, w, chunk: int = 4096) -> np.ndarray:
    """min over the 2^m branches of |w - f_s(z)| (vectorised, broadcast z against w)."""
    z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
    zf, wf = z.ravel(), w.ravel()
    out = np.empty(zf.shape, dtype=float)
    S = sign_matrix(schedule.m).astype(float)
    for lo in range(0, zf.size, chunk):
        sl = slice(lo, lo + chunk)
        vals = signed_sums(S, term_values(schedule, zf[sl]))
        out[sl] = np.min(np.abs(wf[sl][None, :] - vals), axis=0)
    return out.reshape(z.shape)


def tube_contains(schedule: EpsilonSchedule, delta: float, z, w):
    """Membership in the delta-tube E_m^delta around the level-m set."""
    if delta <= 0:
        raise ValueError("tube radius must be positive")
    inside = tube_distance(schedule, z, w) < delta
    return bool(inside) if np.ndim(inside) == 0 else inside


def min_pair_gap(schedule_eps, points, z, chunk: int = 32) -> np.ndarray:
    """For each z, min over distinct branches j != l of |f_j(z) - f_l(z)|.

    A difference of two branches is 2 * sum_j u_j eps_j sqrt(z - a_j) with
    u in {-1, 0, 1}^m \\ {0}; u and -u give the same modulus, so only vectors whose
    first nonzero entry is +1 are enumerated.
    """
    eps = np.asarray(schedule_eps, dtype=float)
    m = len(eps)
    z = np.asarray(z, dtype=complex).ravel()
    vecs = np.array([u for u in itertools.product((-1, 0, 1), repeat=m)
                     if any(u) and next(x for x in u if x) == 1], dtype=float)
    out = np.empty(z.size)
    for lo in range(0, z.size, chunk):
        zc = z[lo:lo + chunk]
        terms = eps[:, None] * np.sqrt(zc[None, :] - points[:, None])
        out[lo:lo + chunk] = 2 * np.min(np.abs(vecs @ terms), axis=0)
    return out


def kappa_k(schedule: EpsilonSchedule, k: int, circle_samples: int = 2048, radius: float | None = None) -> float:
    """Sampled infimum over |z - a_k| = r_k of the minimal gap between the 2^(k-1)
    branches of E_{k-1}. `schedule` must reach level k-1; `radius` overrides r_k."""
    if k < 2:
        raise ValueError("kappa_k is defined for k >= 2")
    if schedule.m < k - 1:
        raise ValueError(f"schedule reaches level {schedule.m}, need {k - 1}")
    r = radius if radius is not None else schedule.radius(k)
    ak = spiral_point(k)
    theta = 2 * np.pi * np.arange(circle_samples) / circle_samples
    zc = ak + r * np.exp(1j * theta)
    gaps = min_pair_gap(schedule.eps[: k - 1], spiral_points(k - 1), zc)
    value = float(np.min(gaps))
    if not value > 0:
        raise ScheduleError(f"kappa_{k} = {value}: branches of E_{k-1} collide on |z - a_{k}| = {r}")
    return value


def eps_bound(eps, radii, points, k: int, kappa: float, r_k: float) -> float:
    """Largest eps_k allowed (strictly) by the two growth conditions at level k."""
    bound = kappa / (4 * math.sqrt(r_k))
    for p in range(2, k):
        ep, rp = eps[p - 1], radii[p - 2]
        rhs = ep * math.sqrt(rp) / 2 ** (k - p + 1)
        bound = min(bound, rhs / (2 * math.sqrt(abs(points[k - 1] - points[p - 1]) + rp)))
    return bound


def build_schedule(target_m: int, safety: float = 0.5, circle_samples: int = 2048,
                   r_default: float = 0.25, max_halvings: int = 8, min_kappa: float = 1e-300) -> EpsilonSchedule:
    """Inductive certified construction of eps_1..eps_m, r_2..r_m, kappa_2..kappa_m."""
    if target_m < 1:
        raise ValueError("target_m must be >= 1")
    if not 0 < safety < 1:
        raise ValueError("safety must lie in (0, 1)")
    if not 0 < r_default < 0.5:
        raise ValueError("r_default must lie in (0, 1/2)")
    eps, radii, kappas = [1.0], [], []
    points = spiral_points(target_m)
    for k in range(2, target_m + 1):
        partial = EpsilonSchedule(tuple(eps), tuple(radii), tuple(kappas), safety)
        r = r_default
        for attempt in range(max_halvings + 1):
            try:
                kap = kappa_k(partial, k, circle_samples, radius=r)
                if kap > min_kappa:
                    break
            except ScheduleError:
                pass
            logger.info("kappa_%d not certified at r=%g, halving", k, r)
            r /= 2
        else:
            raise ScheduleError(f"could not certify kappa_{k} > 0 after {max_halvings} radius halvings")
        radii.append(r)
        kappas.append(kap)
        eps.append(safety * eps_bound(eps, radii, points, k, kap, r))
    sched = EpsilonSchedule(tuple(eps), tuple(radii), tuple(kappas), safety)
    certify(sched)
    return sched


@dataclass
class CertificationReport:
    k_margins: dict[int, float] = field(default_factory=dict)
    p_margins: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def min_margin(self) -> float:
        vals = list(self.k_margins.values()) + list(self.p_margins.values())
        return min(vals) if vals else 1.0

    def to_dict(self) -> dict:
        return {"k_margins": {str(k): v for k, v in self.k_margins.items()},
                "p_margins": {f"{k},{p}": v for (k, p), v in self.p_margins.items()},
                "min_margin": self.min_margin}


def certify(schedule: EpsilonSchedule) -> CertificationReport:
    """Check the schedule invariants; margins are 1 - lhs/rhs and must be positive.

    kappa values are taken as recorded (they are sampled, not recomputed here).
    """
    eps, m = schedule.eps, schedule.m
    if eps[0] != 1.0:
        raise ScheduleError("eps_1 must equal 1")
    if any(not (e > 0 and math.isfinite(e)) for e in eps):
        raise ScheduleError("eps values must be positive and finite")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ScheduleError("eps must be strictly decreasing")
    if any(not 0 < r < 0.5 for r in schedule.radii):
        raise ScheduleError("radii must lie in (0, 1/2)")
    if any(not kap > 0 for kap in schedule.kappas):
        raise ScheduleError("kappa values must be positive")
    pts = schedule.points
    rep = CertificationReport()
    for k in range(2, m + 1):
        rk = schedule.radius(k)
        lhs = 2 * eps[k - 1] * math.sqrt(rk)
        rep.k_margins[k] = 1 - lhs / (schedule.kappa(k) / 2)
        for p in range(2, k):
            rp = schedule.radius(p)
            lhs = 2 * eps[k - 1] * math.sqrt(abs(pts[k - 1] - pts[p - 1]) + rp)
            rhs = eps[p - 1] * math.sqrt(rp) / 2 ** (k - p + 1)
            rep.p_margins[(k, p)] = 1 - lhs / rhs
    bad = [key for key, v in {**rep.k_margins, **rep.p_margins}.items() if not v > 0]
    if bad:
        raise ScheduleError(f"growth conditions violated at {bad}")
    return rep


@dataclass(frozen=True)
class AlphaResult:
    n: int
    alpha: float
    spacing: float
    points: int


def alpha_sample_points(n: int, grid_density: int) -> np.ndarray:
    """Grid points (spacing 1/grid_density, aligned with 0) within distance 1/8 of S_n."""
    h = 1.0 / grid_density
    outer = n + 0.75 + 0.125
    k = int(math.floor(outer / h + 1e-9))
    ticks = np.arange(-k, k + 1) * h
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    ax, ay = np.abs(xx), np.abs(yy)
    sup = np.maximum(ax, ay)
    L = n + 0.75
    dist_out = np.hypot(np.maximum(ax - L, 0), np.maximum(ay - L, 0))
    dist_in = np.maximum(n + 0.25 - sup, 0)
    mask = np.maximum(dist_out, dist_in) <= 0.125 + 1e-12
    return (xx + 1j * yy)[mask]


def max_signed_sum(d: np.ndarray) -> np.ndarray:
    """max over s in {+-1}^m of |sum_j s_j d_j| for each column of d (shape (m, N)).

    The optimum is s_j = sign Re(d_j conj(u)) for u the direction of the optimal sum,
    and that sign pattern only changes when u crosses a line orthogonal to some d_j,
    so testing one direction inside each of the 2m arcs is exact.
    """
    m, N = d.shape
    ang = np.angle(d) + np.pi / 2
    cuts = np.sort(np.mod(np.concatenate([ang, ang + np.pi]), 2 * np.pi), axis=0)
    nxt = np.concatenate([cuts[1:], cuts[:1] + 2 * np.pi])
    mids = 0.5 * (cuts + nxt)
    best = np.zeros(N)
    for u in mids:
        s = np.where((d * np.exp(-1j * u)[None, :]).real >= 0, 1.0, -1.0)
        best = np.maximum(best, np.abs(np.sum(s * d, axis=0)))
    return best


def alpha_bound(schedule: EpsilonSchedule, n: int, grid_density: int = 32, chunk: int = 8192) -> AlphaResult:
    """Grid maximum of |f_s'(z)| over all signatures and z within 1/8 of S_n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = alpha_sample_points(n, grid_density)
    best = 0.0
    for lo in range(0, z.size, chunk):
        zc = z[lo:lo + chunk]
        terms = term_values(schedule, zc)
        d = terms / (2 * (zc[None, :] - schedule.points[:, None]))
        best = max(best, float(np.max(max_signed_sum(d))))
    return AlphaResult(n, best, 1.0 / grid_density, int(z.size))


def q0_from_alphas(alphas: dict[int, float]) -> int | None:
    """Smallest k such that alpha(j) < 1/2 for every tested j >= k (None if the last fails)."""
    ns = sorted(alphas)
    q0 = None
    for n in reversed(ns):
        if alphas[n] < 0.5:
            q0 = n
        else:
            break
    return q0


def shift_error(schedule: EpsilonSchedule, p: int, delta: float = 0.0, circle_samples: int = 256,
                start_angle: float = 0.0) -> float:
    """Min over all 2^m liftings of |w(after) - w(before)| for one anticlockwise turn on
    |z - a_p| = r_p; for delta > 0 the value minus 2 delta, clamped at 0."""
    if not 2 <= p <= schedule.m:
        raise ValueError(f"p must lie in [2, {schedule.m}]")
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    loop = ContinuationPath.circle(spiral_point(p), schedule.radius(p), 1, start_angle, circle_samples,
                                   max_step=schedule.radius(p) / 4)
    zs = refine_path(loop, schedule.points)
    roots = continued_roots(schedule.points, zs)
    eps = np.asarray(schedule.eps)
    jump = eps * (roots[:, -1] - roots[:, 0])
    diffs = sign_matrix(schedule.m).astype(float) @ jump
    theta = float(np.min(np.abs(diffs)))
    return max(theta - 2 * delta, 0.0) if delta > 0 else theta
