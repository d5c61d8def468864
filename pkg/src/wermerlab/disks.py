"""Holomorphic disks: the families H_n, the vertical-cluster functional beta, delta(n)
calibration, the Harnack localisation and the large-disk exclusion search in F_d."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .lattice import RegionId, region_contains
from .potential import DomainParams, log_psi, psi
from .wermer import EpsilonSchedule, branch_values, tube_distance


@dataclass(frozen=True)
class HoloDisk:
    """Polynomial map lambda -> (sum_i coeffs[k][i] (lambda - center)^i)_k on Delta_radius(center)."""

    center: complex
    radius: float
    coefficients: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disk radius must be positive")
        if not 1 <= len(self.coefficients) <= 3:
            raise ValueError("target dimension must be 1, 2 or 3")

    @property
    def dim(self) -> int:
        return len(self.coefficients)

    def __call__(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex) - self.center
        return np.stack([np.polynomial.polynomial.polyval(lam, np.asarray(c, dtype=complex))
                         for c in self.coefficients])

    def derivative(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=complex) - self.center
        return np.stack([np.polynomial.polynomial.polyval(lam, np.polynomial.polynomial.polyder(np.asarray(c, dtype=complex)))
                         if len(c) > 1 else np.zeros_like(lam) for c in self.coefficients])

    def rescaled(self, radius: float) -> "HoloDisk":
        return HoloDisk(self.center, radius, self.coefficients)

    @classmethod
    def graph(cls, w0: complex, f_coeffs, radius: float = 1.0) -> "HoloDisk":
        """The disk w -> (f(w), w) on Delta_radius(w0)."""
        return cls(complex(w0), radius, (np.asarray(f_coeffs, dtype=complex), np.array([w0, 1.0], dtype=complex)))


def disk_grid(center: complex, radius: float, boundary: int = 64, rings: int = 16) -> np.ndarray:
    """Polar sample grid of the closed disk: center, `rings` interior circles and the rim."""
    pts = [np.array([center])]
    for i in range(1, rings + 1):
        r = radius * i / rings
        count = max(8, int(boundary * i / rings))
        pts.append(center + r * np.exp(2j * np.pi * (np.arange(count) + 0.5 * (i % 2)) / count))
    return np.concatenate(pts)


def hn_member(params, disk: HoloDisk, n: int, tol: float = 1e-6, boundary: int = 64, rings: int = 16) -> bool:
    """Graph disk over Delta_1(w0) in H_n: base point on E_m over T_n, and |f'| < 1."""
    sched = params.schedule if isinstance(params, DomainParams) else params
    if disk.dim != 2:
        raise ValueError("H_n disks are graphs (f(w), w) in C^2")
    w0 = disk.center
    z0, wb = disk(w0)
    if abs(wb - w0) > 1e-12:
        raise ValueError("disk is not parametrised as a graph (f(w), w)")
    n_half = n + 0.5
    on_t = (abs(max(abs(z0.real), abs(z0.imag)) - n_half) <= tol
            and min(abs(z0.real), abs(z0.imag)) <= n_half + tol)
    if not on_t:
        return False
    if float(tube_distance(sched, z0, w0)) > tol:
        return False
    grid = disk_grid(w0, disk.radius, boundary, rings)
    return bool(np.max(np.abs(disk.derivative(grid)[0])) < 1)


@dataclass
class BetaResult:
    beta: float
    beta8: float
    spacing: float
    marked: int

    @property
    def connectivity_differs(self) -> bool:
        return self.beta != self.beta8


def quarter_raster(w0: complex, grid_density: int):
    """Offsets (from w0) of the raster of spacing 1/(4 grid_density) in the closed disk of
    radius 1/4, so that the axis extremes w0 +- 1/4 are grid points."""
    h = 0.25 / grid_density
    ticks = np.arange(-grid_density, grid_density + 1) * h
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    inside = xx ** 2 + yy ** 2 <= 0.0625 * (1 + 1e-12)
    return xx + 1j * yy, inside, h


def _diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    xy = np.column_stack([points.real, points.imag])
    if len(xy) > 64:
        try:
            xy = xy[ConvexHull(xy).vertices]
        except QhullError:
            pass
    return float(np.max(pdist(xy)))


def _max_component_diameter(mask, coords, structure) -> float:
    labels, count = ndimage.label(mask, structure=structure)
    best = 0.0
    for lab in range(1, count + 1):
        best = max(best, _diameter(coords[labels == lab]))
    return best


def tube_field(params, disk: HoloDisk, grid_density: int = 40):
    """Distance from (f(w), w) to E_m over the quarter disk raster of a graph disk.

    Returns (offsets, inside, distances, spacing) with offsets relative to the disk centre.
    """
    sched = params.schedule if isinstance(params, DomainParams) else params
    off, inside, h = quarter_raster(disk.center, grid_density)
    W = disk.center + off
    Z = disk(W.ravel())[0].reshape(W.shape)
    D = np.full(W.shape, np.inf)
    D[inside] = tube_distance(sched, Z[inside], W[inside])
    return off, inside, D, h


def beta_from_field(offsets, inside, D, h, delta: float) -> BetaResult:
    mask = inside & (D < delta)
    four = ndimage.generate_binary_structure(2, 1)
    eight = ndimage.generate_binary_structure(2, 2)
    b4 = _max_component_diameter(mask, offsets, four)
    b8 = _max_component_diameter(mask, offsets, eight)
    return BetaResult(b4, b8, h, int(mask.sum()))


def beta_disk(params, disk: HoloDisk, delta: float, grid_density: int = 40) -> BetaResult:
    """Largest diameter of a 4-connected component of the w-projection of (1/4 D) in E^delta."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return beta_from_field(*tube_field(params, disk, grid_density), delta)


def random_hn_disk(schedule: EpsilonSchedule, n: int, rng: np.random.Generator, degree: int = 3,
                   slope_cap: float = 0.95) -> HoloDisk:
    """A disk of H_n: base point on E_m over a random point of T_n, polynomial f with
    sum_i i |c_i| < slope_cap (hence |f'| < 1 on the unit disk)."""
    h = n + 0.5
    side = rng.integers(4)
    s = rng.uniform(-h, h)
    z0 = [complex(h, s), complex(-h, s), complex(s, h), complex(s, -h)][side]
    vals = branch_values(schedule, z0)
    w0 = complex(vals[rng.integers(vals.size)])
    raw = rng.normal(size=degree) + 1j * rng.normal(size=degree)
    weight = np.sum(np.arange(1, degree + 1) * np.abs(raw))
    coeffs = raw * rng.uniform(0, slope_cap) / weight
    return HoloDisk.graph(w0, np.concatenate([[z0], coeffs]))


def vertical_disk(schedule: EpsilonSchedule, z0: complex, branch: int = 0) -> HoloDisk:
    w0 = complex(branch_values(schedule, z0)[branch])
    return HoloDisk.graph(w0, [z0])


@dataclass
class BetaSweep:
    """Sampled lower bound for beta_n^delta at several delta values."""

    n: int
    deltas: list[float]
    betas: list[float]
    disks_sampled: int
    seed: int


class DiskSample:
    """Tube-distance fields of `count` random H_n disks, reusable across delta."""

    def __init__(self, params, n: int, count: int, seed: int = 0, grid_density: int = 40, degree: int = 3,
                 include_vertical: bool = True):
        sched = params.schedule if isinstance(params, DomainParams) else params
        rng = np.random.default_rng([seed, n])
        self.n, self.seed, self.grid_density = n, seed, grid_density
        self.disks = [random_hn_disk(sched, n, rng, degree) for _ in range(count)]
        if include_vertical and count > 1:
            self.disks[0] = HoloDisk.graph(self.disks[0].center, [self.disks[0].coefficients[0][0]])
        self.fields = [tube_field(sched, d, grid_density) for d in self.disks]

    def beta(self, delta: float) -> float:
        return max(beta_from_field(*f, delta).beta for f in self.fields)

    def betas(self, delta: float) -> list[float]:
        return [beta_from_field(*f, delta).beta for f in self.fields]


def beta_n(params, n: int, delta: float, count: int = 50, seed: int = 0, grid_density: int = 40) -> float:
    """Max of beta over `count` sampled H_n disks (a sampled lower bound of the supremum)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    return DiskSample(params, n, count, seed, grid_density).beta(delta)


def threshold_delta(samples: list[DiskSample], lo: float = 1e-14, hi: float = 4.0, iters: int = 80,
                    rtol: float = 1e-4) -> float:
    """Largest delta (up to bisection precision) with beta < 1/2 for every sample set.

    beta is nondecreasing in delta, so {delta : beta < 1/2} is an interval (0, delta*).
    """
    def ok(delta):
        return all(s.beta(delta) < 0.5 for s in samples)

    if not ok(lo):
        return 0.0
    if ok(hi):
        return hi
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if hi / lo < 1 + rtol:
            break
    return lo


@dataclass(frozen=True)
class DeltaCalibration:
    n: int
    delta_star: float
    delta: float
    safety: float
    ks: tuple[int, ...]
    disks_per_k: int
    seed: int

    def to_dict(self) -> dict:
        return {**self.__dict__, "ks": list(self.ks)}


def delta_n(params, n: int, count: int = 50, seed: int = 0, safety: float = 0.5, grid_density: int = 40,
            cache: dict | None = None) -> DeltaCalibration:
    """Bisected threshold with beta_k < 1/2 for n-1 <= k <= n+2, times `safety`.

    `cache` maps k to a DiskSample and lets neighbouring n share their disk fields.
    """
    ks = tuple(k for k in range(n - 1, n + 3) if k >= 1)
    cache = {} if cache is None else cache
    for k in ks:
        if k not in cache:
            cache[k] = DiskSample(params, k, count, seed, grid_density)
    samples = [cache[k] for k in ks]
    star = threshold_delta(samples)
    return DeltaCalibration(n, star, safety * star, safety, ks, count, seed)


@dataclass
class HarnackReport:
    points: int
    max_psi_ratio: float
    max_re_ratio: float
    violations: list[complex] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def harnack_localize(disk: HoloDisk, params: DomainParams, boundary: int = 64, rings: int = 16) -> HarnackReport:
    """On Delta_{r/3}: Psi(z, w) < 2 Re zeta(0) and Re zeta < 2 Re zeta(0) for a disk into Omega_Psi."""
    if disk.dim != 3:
        raise ValueError("harnack_localize needs a disk into C^3")
    full = disk_grid(disk.center, disk.radius, boundary, rings)
    z, w, zeta = disk(full)
    inside = np.real(zeta) > psi(params, z, w)
    if not np.all(inside):
        raise ValueError("disk does not map the sample grid into Omega_Psi")
    re0 = float(np.real(disk(disk.center)[2]))
    grid = disk_grid(disk.center, disk.radius / 3 * (1 - 1e-12), boundary, rings)
    z, w, zeta = disk(grid)
    p = np.asarray(psi(params, z, w))
    re = np.real(zeta)
    bad = (p >= 2 * re0) | (re >= 2 * re0)
    return HarnackReport(int(grid.size), float(np.max(p) / (2 * re0)), float(np.max(re) / (2 * re0)),
                         [complex(x) for x in grid[bad]])


def random_omega_disk(params: DomainParams, rng: np.random.Generator, radius: float = 1.0, degree: int = 3,
                      scale: float = 0.5, boundary: int = 64, rings: int = 16) -> HoloDisk:
    """Random polynomial disk into Omega_Psi: random (z, w) polynomials, then
    zeta = M + g + (polynomial of sup-norm < g on the disk) with M the grid max of Psi and
    g = max(1, M)."""
    def poly(c0):
        c = (rng.normal(size=degree + 1) + 1j * rng.normal(size=degree + 1)) * scale / radius ** np.arange(degree + 1)
        c[0] = c0
        return c

    z0 = complex(*rng.uniform(-1.5, 1.5, 2))
    zc, wc = poly(z0), poly(complex(*rng.normal(size=2)))
    probe = HoloDisk(0j, radius, (zc, wc))
    M = float(np.max(psi(params, *probe(disk_grid(0j, radius, boundary, rings)))))
    # the gap above M scales with M so that it survives rounding when Psi is large
    gap = max(1.0, M)
    tail = rng.normal(size=degree) + 1j * rng.normal(size=degree)
    tail = tail / (np.sum(np.abs(tail) * radius ** np.arange(1, degree + 1))) * rng.uniform(0, 0.99) * gap
    zeta = np.concatenate([[M + gap + 1j * rng.normal()], tail])
    return HoloDisk(0j, radius, (zc, wc, zeta))


@dataclass
class ExclusionReport:
    d: float
    r: float
    found: bool
    best_radius: float
    best_family: str | None
    best_disk: HoloDisk | None
    trials: int
    failures: dict[str, int] = field(default_factory=dict)
    recheck_ok: bool = True

    def to_dict(self) -> dict:
        return {"d": self.d, "r": self.r, "found": self.found, "best_radius": self.best_radius,
                "best_family": self.best_family, "trials": self.trials, "failures": self.failures,
                "recheck_ok": self.recheck_ok}


def _branch_taylor(schedule: EpsilonSchedule, z0: complex, row: int, degree: int) -> np.ndarray:
    """Taylor coefficients at z0 of the branch with sign row `row` (principal roots at z0)."""
    from .wermer import sign_matrix
    s = sign_matrix(schedule.m)[row].astype(float)
    u = z0 - schedule.points
    coeffs = []
    binom = 1.0
    for k in range(degree + 1):
        # d^k/dz^k sqrt(z - a) / k! = binom(1/2, k) (z - a)^(1/2 - k)
        coeffs.append(np.sum(s * np.asarray(schedule.eps) * binom * np.sqrt(u) / u ** k))
        binom *= (0.5 - k) / (k + 1)
    return np.array(coeffs, dtype=complex)


SNAP_TOL = 1e-12


def in_fd(params: DomainParams, d: float, z, w, snap_tol: float = SNAP_TOL) -> np.ndarray:
    """Membership in F_d = {Psi < 2d}. Psi vanishes on E_m, and points within snap_tol of E_m
    are counted as on E_m (the own-branch log term underflows double precision there)."""
    z, w = np.asarray(z, dtype=complex), np.asarray(w, dtype=complex)
    inside = np.asarray(log_psi(params, z, w)) < math.log(2 * d)
    if not np.all(inside):
        rest = ~inside
        inside = inside.copy()
        inside[rest] = tube_distance(params.schedule, z[rest], w[rest]) < snap_tol
    return inside


def _classify_failure(params: DomainParams, z0: complex, reach: float, z, d) -> str:
    from .potential import rho_sum
    if np.any(np.abs(params.schedule.points - z0) <= reach):
        return "shift-error obstruction"
    # the frame term rose by more than the factor 2 of the sublevel: growth killed by rho
    if np.min(np.asarray(rho_sum(params.profile, z))) - float(rho_sum(params.profile, z0)) > math.log(2.0):
        return "region frame"
    return "tube escape"


def disk_exclusion_search(params: DomainParams, d: float, r: float, trials: int = 40, seed: int = 0,
                          degree: int = 3, branch_degree: int = 12, ladder_ratio: float = 1.1,
                          r_min: float = 1e-6, r_max: float = 64.0, boundary: int = 64, rings: int = 16,
                          snap_tol: float = SNAP_TOL) -> ExclusionReport:
    """Randomised search for holomorphic disks h with ||h'(0)|| = 1 whose sampled image lies in F_d.

    Candidates are branch-following disks (degree `branch_degree` Taylor polynomials of a
    branch of E_m), vertical and affine disks through points of E_m, and random cubic
    perturbations. Each candidate is grown along a fixed geometric radius ladder until the
    first failing rung, so the result is monotone in d. `found` reports whether some disk
    reached radius r.
    """
    if d <= 0:
        raise ValueError("d must be positive")
    sched = params.schedule
    rng = np.random.default_rng(seed)
    ladder = r_min * ladder_ratio ** np.arange(int(math.log(r_max / r_min) / math.log(ladder_ratio)) + 1)
    unit = disk_grid(0j, 1.0, boundary, rings)
    best = (0.0, None, None)
    failures: dict[str, int] = {}
    families = ("branch", "vertical", "affine", "cubic")
    for t in range(trials):
        family = families[t % len(families)]
        z0 = complex(*rng.uniform(-2.5, 2.5, 2))
        row = int(rng.integers(2 ** sched.m))
        w0 = complex(branch_values(sched, z0)[row])
        if family == "branch":
            tay = _branch_taylor(sched, z0, row, branch_degree)
            scale = 1 / math.sqrt(1 + abs(tay[1]) ** 2)
            zc = np.array([z0, scale], dtype=complex)
            wc = tay * scale ** np.arange(branch_degree + 1)
        elif family == "vertical":
            zc, wc = np.array([z0], dtype=complex), np.array([w0, 1.0], dtype=complex)
        else:
            v = rng.normal(size=2) + 1j * rng.normal(size=2)
            v /= np.linalg.norm(v)
            zc = np.array([z0, v[0]], dtype=complex)
            wc = np.array([w0, v[1]], dtype=complex)
            if family == "cubic":
                extra = (rng.normal(size=(2, degree - 1)) + 1j * rng.normal(size=(2, degree - 1))) * 0.05
                zc, wc = np.concatenate([zc, extra[0]]), np.concatenate([wc, extra[1]])
        disk = HoloDisk(0j, 1.0, (zc, wc))
        reached, reason = 0.0, None
        for rad in ladder:
            z, w = disk(rad * unit)
            ok = in_fd(params, d, z, w, snap_tol)
            if not np.all(ok):
                reach = float(np.max(np.abs(z - z0)))
                reason = _classify_failure(params, z0, reach, z[~ok], d)
                break
            reached = float(rad)
        if reason is not None:
            failures[reason] = failures.get(reason, 0) + 1
        if reached > best[0]:
            best = (reached, family, disk.rescaled(reached))
    rad, fam, bdisk = best
    recheck = True
    if bdisk is not None:
        z, w = bdisk(disk_grid(0j, rad, 4 * boundary, 4 * rings))
        recheck = bool(np.all(in_fd(params, d, z, w, snap_tol)))
    return ExclusionReport(d, r, rad >= r, rad, fam, bdisk, trials, failures, recheck)
