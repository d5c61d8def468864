"""Level-m potential phi_m, the defining function Psi(rho), membership in Omega_Psi and
F_d, and the calibration constants kappa(n), q(n), c(n)."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .lattice import RegionId, region_contains, region_grid
from .profile import ConvexProfile, rho_eval
from .wermer import EpsilonSchedule, certify, sign_matrix, signed_sums, term_values, tube_distance


@dataclass(frozen=True)
class DomainParams:
    schedule: EpsilonSchedule
    profile: ConvexProfile | None = None

    @property
    def m(self) -> int:
        return self.schedule.m

    def validate(self) -> None:
        certify(self.schedule)
        if self.profile is not None:
            self.profile.validate()


def _schedule(obj) -> EpsilonSchedule:
    return obj.schedule if isinstance(obj, DomainParams) else obj


def phi_m(params, z, w, chunk: int = 4096) -> np.ndarray | float:
    """2^-m * sum over all 2^m branches of log|w - f_s(z)|; -inf exactly on E_m."""
    sched = _schedule(params)
    z, w = np.broadcast_arrays(np.asarray(z, dtype=complex), np.asarray(w, dtype=complex))
    zf, wf = z.ravel(), w.ravel()
    out = np.empty(zf.shape)
    S = sign_matrix(sched.m).astype(float)
    with np.errstate(divide="ignore"):
        for lo in range(0, zf.size, chunk):
            sl = slice(lo, lo + chunk)
            vals = signed_sums(S, term_values(sched, zf[sl]))
            out[sl] = np.mean(np.log(np.abs(wf[sl][None, :] - vals)), axis=0)
    out = out.reshape(z.shape)
    return float(out) if out.ndim == 0 else out


def rho_sum(profile: ConvexProfile | None, z) -> np.ndarray | float:
    """rho(|Re z|) + rho(|Im z|); 0 when no profile is attached (stub used in tests)."""
    z = np.asarray(z, dtype=complex)
    if profile is None:
        out = np.zeros(z.shape)
    else:
        out = np.asarray(rho_eval(profile, np.abs(z.real))) + np.asarray(rho_eval(profile, np.abs(z.imag)))
    return float(out) if out.ndim == 0 else out


def log_psi(params: DomainParams, z, w):
    """log Psi = phi_m + rho(|Re z|) + rho(|Im z|), finite or -inf."""
    return np.asarray(phi_m(params, z, w)) + np.asarray(rho_sum(params.profile, z))


def psi(params: DomainParams, z, w, return_flag: bool = False):
    """Psi(z, w) = exp(log_psi); saturates to +inf on overflow (flagged when requested)."""
    lp = log_psi(params, z, w)
    with np.errstate(over="ignore"):
        val = np.exp(lp)
    overflow = bool(np.any(np.isinf(val)))
    val = float(val) if np.ndim(val) == 0 else val
    return (val, overflow) if return_flag else val


def omega_contains(params: DomainParams, z, w, zeta):
    """Re zeta > Psi(z, w)."""
    val = psi(params, z, w)
    inside = np.real(np.asarray(zeta, dtype=complex)) > val
    return bool(inside) if np.ndim(inside) == 0 else inside


def f_d_contains(params: DomainParams, d: float, z, w):
    """Psi(z, w) < 2d, evaluated in log form."""
    if d <= 0:
        raise ValueError("d must be positive")
    inside = log_psi(params, z, w) < math.log(2 * d)
    return bool(inside) if np.ndim(inside) == 0 else inside


def kappa_region(schedule: EpsilonSchedule, n: int, tail: str = "error") -> float:
    """min of eps_p sqrt(r_p) / 4 over 2 <= p <= m with a_p in S~_n.

    p = 1 is excluded (no r_1). If no such p exists at this level, `tail="error"`
    raises and `tail="level-min"` falls back to the minimum over all 2 <= p <= m.
    """
    if schedule.m < 2:
        raise ValueError("kappa(n) needs a schedule of level >= 2")
    pts = schedule.points
    vals = {p: schedule.eps[p - 1] * math.sqrt(schedule.radius(p)) / 4 for p in range(2, schedule.m + 1)}
    inside = [v for p, v in vals.items() if region_contains(RegionId("St", n), pts[p - 1])]
    if inside:
        return min(inside)
    if tail == "level-min":
        return min(vals.values())
    raise ValueError(f"schedule of level {schedule.m} has no branch point a_p (p >= 2) in S~_{n}")


@dataclass(frozen=True)
class QCalibration:
    n: int
    kappa: float
    q: float
    sup_raw: float
    margin: float
    z_points: int
    theta_samples: int
    z_spacing: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def shell_neg_phi(schedule: EpsilonSchedule, z: np.ndarray, kappa: float, theta_samples: int) -> np.ndarray:
    """For each z: max of -phi_m over points f_s(z) + kappa e^{i theta} lying on the boundary
    of the union of kappa-disks (points interior to another disk are skipped)."""
    S = sign_matrix(schedule.m).astype(float)
    theta = 2 * np.pi * (np.arange(theta_samples) + 0.5) / theta_samples
    ring = kappa * np.exp(1j * theta)
    out = np.full(z.shape, -np.inf)
    with np.errstate(divide="ignore"):
        for i, zi in enumerate(z):
            vals = signed_sums(S, term_values(schedule, np.array([zi])))[:, 0]
            shell = (vals[:, None] + ring[None, :]).ravel()
            dist = np.abs(shell[:, None] - vals[None, :])
            keep = np.min(dist, axis=1) >= kappa * (1 - 1e-9)
            if not keep.any():
                continue
            neg = -np.mean(np.log(dist[keep]), axis=1)
            out[i] = np.max(neg)
    return out


def calibrate_q(params, n: int, kappa: float, z_spacing: float = 0.25, theta_samples: int = 16,
                margin: float = 0.25) -> QCalibration:
    """Sampled q(n) with {phi_m < -q} over S~_n contained in the kappa-tube.

    phi_m is harmonic in w off the branch values and tends to +inf at infinity, so
    on the complement of the tube its infimum is reached on the tube boundary.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    sched = _schedule(params)
    z = region_grid(RegionId("St", n), z_spacing)
    sup = float(np.max(shell_neg_phi(sched, z, kappa, theta_samples)))
    return QCalibration(n, kappa, sup + margin, sup, margin, int(z.size), theta_samples, z_spacing)


class ShellTable:
    """Shell values -phi_m sup per point of one lattice-aligned z grid, shared by all S~_n.

    The regions S~_n overlap, so evaluating the shell once per grid point and kappa and
    taking maxima over region masks gives the same q(n) as calibrate_q at a fraction of
    the cost.
    """

    def __init__(self, schedule: EpsilonSchedule, kappa: float, extent: int, z_spacing: float = 0.25,
                 theta_samples: int = 16):
        if kappa <= 0:
            raise ValueError("kappa must be positive")
        self.kappa, self.z_spacing, self.theta_samples, self.extent = kappa, z_spacing, theta_samples, extent
        # full square [-(extent+2), extent+2]^2 with the same lattice-aligned ticks as region_grid
        k = int(math.floor((extent + 2) / z_spacing + 1e-9))
        ticks = np.arange(-k, k + 1) * z_spacing
        self.z = (ticks[:, None] + 1j * ticks[None, :]).ravel()
        self.values = shell_neg_phi(schedule, self.z, kappa, theta_samples)

    def calibrate(self, n: int, margin: float = 0.25) -> QCalibration:
        if not 1 <= n <= self.extent:
            raise ValueError(f"table covers S~_1 .. S~_{self.extent}, not S~_{n}")
        mask = region_contains(RegionId("St", n), self.z)
        sup = float(np.max(self.values[mask]))
        return QCalibration(n, self.kappa, sup + margin, sup, margin, int(mask.sum()), self.theta_samples,
                            self.z_spacing)


def sample_near_branches(schedule: EpsilonSchedule, n: int, count: int, rng: np.random.Generator,
                         radius: float, log_floor: float = -600.0):
    """Random (z, w) with z uniform in S~_n and w a log-uniformly offset branch value.

    Offsets |w - f_s(z)| range over [exp(log_floor), 3 * radius].
    """
    lo_box, hi_box = -(n + 2), n + 2
    zs = []
    while sum(len(a) for a in zs) < count:
        cand = rng.uniform(lo_box, hi_box, 2 * count) + 1j * rng.uniform(lo_box, hi_box, 2 * count)
        zs.append(cand[region_contains(RegionId("St", n), cand)])
    z = np.concatenate(zs)[:count]
    S = sign_matrix(schedule.m).astype(float)
    rows = rng.integers(0, S.shape[0], count)
    terms = term_values(schedule, z)
    centers = S[rows, 0] * terms[0]
    for j in range(1, schedule.m):
        centers = centers + S[rows, j] * terms[j]
    logr = rng.uniform(log_floor, math.log(3 * radius), count)
    w = centers + np.exp(logr) * np.exp(2j * np.pi * rng.uniform(size=count))
    return z, w


@dataclass(frozen=True)
class InclusionAudit:
    n: int
    samples: int
    accepted: int
    violations: int
    worst_distance_ratio: float

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {**self.__dict__, "ok": self.ok}


def audit_sublevel(params, n: int, q: float, kappa: float, samples: int = 10_000, seed: int = 0) -> InclusionAudit:
    """Points of S~_n x C with phi_m < -q must lie in the kappa-tube."""
    sched = _schedule(params)
    rng = np.random.default_rng(seed)
    z, w = sample_near_branches(sched, n, samples, rng, kappa, log_floor=math.log(kappa) - 40)
    w = np.concatenate([w, w[: samples // 2] + 2 * kappa * np.exp(2j * np.pi * rng.uniform(size=samples // 2))])
    z = np.concatenate([z, z[: samples // 2]])
    acc = np.asarray(phi_m(sched, z, w)) < -q
    dist = tube_distance(sched, z[acc], w[acc])
    bad = int(np.sum(dist >= kappa))
    worst = float(np.max(dist) / kappa) if dist.size else 0.0
    return InclusionAudit(n, int(z.size), int(acc.sum()), bad, worst)


def audit_fd_inclusion(params: DomainParams, n: int, d: float, kappa: float, samples: int = 10_000,
                       seed: int = 0) -> InclusionAudit:
    """Points of F_d over S~_n must lie in the kappa-tube (meaningful when 2d/e^n < 1)."""
    sched = params.schedule
    rng = np.random.default_rng(seed)
    z, w = sample_near_branches(sched, n, samples, rng, kappa)
    acc = f_d_contains(params, d, z, w)
    dist = tube_distance(sched, z[acc], w[acc])
    bad = int(np.sum(dist >= kappa))
    worst = float(np.max(dist) / kappa) if dist.size else 0.0
    return InclusionAudit(n, samples, int(np.sum(acc)), bad, worst)


def calibrate_c(q: float, n: int, q0: int, q_tilde: float | None = None) -> float:
    """c(n) = q(n) + n below q0, q~(n) + n from q0 on."""
    if n < q0:
        return q + n
    if q_tilde is None:
        raise ValueError("q~(n) is required for n >= q0")
    if q_tilde < q:
        raise ValueError("q~(n) must be >= q(n)")
    return q_tilde + n


def check_increasing(c: dict[int, float]) -> list[int]:
    """Indices n where c(n) <= c(n-1)."""
    ns = sorted(c)
    return [b for a, b in zip(ns, ns[1:]) if not c[b] > c[a]]
