"""Kobayashi pseudometric brackets, walk-on-spheres harmonic measure, antipeak checks and
the mean-value certificate for disks in domains with a decaying psh function."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence
import math

import numpy as np
from scipy import ndimage, optimize

from .potential import DomainParams, log_psi, psi
from .wermer import branch_values

Membership = Callable[[np.ndarray], np.ndarray]
"""Maps an array of shape (dim, N) of complex points to a boolean array of shape (N,)."""


# ---------------------------------------------------------------- test domains

def unit_disk(points) -> np.ndarray:
    return np.abs(np.asarray(points, dtype=complex)[0]) < 1


def ball(R: float) -> Membership:
    def member(points):
        p = np.asarray(points, dtype=complex)
        return np.sum(np.abs(p) ** 2, axis=0) < R * R
    return member


def omega_eps(eps: float) -> Membership:
    """{(z, w) in C^2 : |w| < |z|, |z| > eps}."""
    def member(points):
        z, w = np.asarray(points, dtype=complex)
        return (np.abs(w) < np.abs(z)) & (np.abs(z) > eps)
    return member


def half_plane(points) -> np.ndarray:
    return np.real(np.asarray(points, dtype=complex)[0]) > 0


def omega_psi(params: DomainParams) -> Membership:
    """{(z, w, zeta) : Re zeta > Psi(z, w)}, tested as log Re zeta > log Psi."""
    def member(points):
        z, w, zeta = np.asarray(points, dtype=complex)
        re = np.real(zeta)
        out = re > 0
        if np.any(out):
            out = out.copy()
            out[out] = np.log(re[out]) > log_psi(params, z[out], w[out])
        return out
    return member


# ---------------------------------------------------------------- metric

@dataclass
class MetricEstimate:
    point: tuple[complex, ...]
    direction: tuple[complex, ...]
    upper: float = math.inf
    lower: float = 0.0
    upper_method: str | None = None
    lower_method: str | None = None
    best_radius: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not any(abs(c) > 0 for c in self.direction):
            raise ValueError("direction must be nonzero")

    @property
    def consistent(self) -> bool:
        return self.lower <= self.upper


def admissibility_grid(boundary: int = 64, interior: int = 256) -> np.ndarray:
    """Unit-disk sample points: `boundary` on the rim and about `interior` inside on rings."""
    rim = np.exp(2j * np.pi * np.arange(boundary) / boundary)
    rings = max(1, int(round(math.sqrt(interior / math.pi))))
    pts = [np.array([0j])]
    per = interior - 1
    weights = np.arange(1, rings + 1, dtype=float)
    counts = np.maximum(4, np.round(per * weights / weights.sum()).astype(int))
    for i, c in enumerate(counts, start=1):
        pts.append(i / (rings + 1) * np.exp(2j * np.pi * (np.arange(c) + 0.5 * (i % 2)) / c))
    return np.concatenate(pts + [rim])


def _disk_radius(member: Membership, h: Callable[[np.ndarray], np.ndarray], grid: np.ndarray,
                 r0: float, r_cap: float, rtol: float) -> float:
    """Largest r (doubling, then bisection) with h(r * grid) inside the domain; 0 if none."""
    def ok(r):
        return bool(np.all(member(h(r * grid))))

    r = r0
    while not ok(r):
        r /= 2
        if r < 1e-12:
            return 0.0
    lo = r
    hi = 2 * r
    while ok(hi):
        lo, hi = hi, 2 * hi
        if hi > r_cap:
            return r_cap
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _normalise_family(family_spec) -> tuple[str, ...]:
    if isinstance(family_spec, str):
        family_spec = (family_spec,)
    allowed = {"affine", "poly", "mobius"}
    bad = set(family_spec) - allowed
    if bad:
        raise ValueError(f"unknown disk families {sorted(bad)}")
    return tuple(family_spec)


def kobayashi_upper(member: Membership, z, v, family_spec=("affine", "mobius", "poly"), trials: int = 16,
                    seed: int = 0, degree: int = 3, boundary: int = 64, interior: int = 256,
                    r_cap: float = 1e6, rtol: float = 1e-7, optimise: bool = True) -> MetricEstimate:
    """Upper bound inf 1/r over sampled disks h with h(0) = z, h'(0) = v and h(r grid) in the domain.

    Families: affine z + v lam; Mobius z + v lam / (1 + b lam); polynomial
    z + v lam + sum_{i>=2} c_i lam^i with scaled complex Gaussian c_i. The Mobius parameter
    is refined by Nelder-Mead from the best sampled start.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    est = MetricEstimate(tuple(complex(x) for x in z), tuple(complex(x) for x in v))
    families = _normalise_family(family_spec)
    if not bool(member(z[:, None])[0]):
        raise ValueError("base point is not in the domain")
    rng = np.random.default_rng(seed)
    grid = admissibility_grid(boundary, interior)
    zc, vc = z[:, None], v[:, None]
    scale = 1.0 / max(np.linalg.norm(v), 1e-300)
    best, method = 0.0, None
    tried: dict[str, int] = {}

    def radius(h, cap=r_cap):
        return _disk_radius(member, h, grid, min(scale, cap / 2), cap, rtol)

    def consider(r, name):
        nonlocal best, method
        tried[name] = tried.get(name, 0) + 1
        if r > best:
            best, method = r, name

    if "affine" in families:
        consider(radius(lambda lam: zc + vc * lam), "affine")
    if "mobius" in families:
        def mob_radius(b):
            bb = complex(b[0], b[1])
            # the pole -1/b must stay outside the closed disk
            cap = r_cap if bb == 0 else min(r_cap, (1 - 1e-9) / abs(bb))
            return radius(lambda lam: zc + vc * lam / (1 + bb * lam), cap)

        starts = [np.zeros(2)] + [rng.normal(size=2) * scale for _ in range(trials)]
        vals = [mob_radius(b) for b in starts]
        i = int(np.argmax(vals))
        consider(vals[i], "mobius")
        if optimise and vals[i] > 0:
            res = optimize.minimize(lambda b: -mob_radius(b), starts[i], method="Nelder-Mead",
                                    options={"xatol": 1e-7 * scale, "fatol": 1e-9, "maxiter": 400})
            consider(-float(res.fun), "mobius")
    if "poly" in families:
        for _ in range(trials):
            coeffs = [(rng.normal(size=z.size) + 1j * rng.normal(size=z.size))[:, None] * 0.3 * scale ** i
                      for i in range(2, degree + 1)]
            consider(radius(lambda lam, cs=coeffs: zc + vc * lam
                            + sum(c * lam ** i for i, c in enumerate(cs, start=2))), "poly")
    est.best_radius = best
    est.upper = math.inf if best == 0 else 1.0 / best
    est.upper_method = method
    est.diagnostics = {"tried": tried, "boundary": boundary, "interior": interior, "seed": seed}
    if best == 0:
        est.diagnostics["failure"] = "no admissible disk at any radius"
    return est


def kobayashi_lower_projection(params: DomainParams, point, v) -> float:
    """|v_zeta| / (2 Re zeta): pullback of the half-plane metric under (z, w, zeta) -> zeta."""
    z, w, zeta = (complex(x) for x in point)
    if not np.real(zeta) > float(psi(params, z, w)):
        raise ValueError("point is not in Omega_Psi")
    vz = complex(np.asarray(v, dtype=complex)[2])
    return 0.0 if vz == 0 else abs(vz) / (2 * zeta.real)


def kobayashi_lower_map(F: Callable, dF: Callable, z, v, target: str = "disk") -> float:
    """Lower bound from a holomorphic map F of the domain into the unit disk or right half-plane."""
    z = np.asarray(z, dtype=complex)
    v = np.asarray(v, dtype=complex)
    fz = complex(F(z))
    dv = abs(complex(np.dot(np.atleast_1d(dF(z)), np.atleast_1d(v))))
    if target == "disk":
        if abs(fz) >= 1:
            raise ValueError("F(z) is outside the unit disk")
        return dv / (1 - abs(fz) ** 2)
    if target == "half-plane":
        if fz.real <= 0:
            raise ValueError("F(z) is outside the half-plane")
        return dv / (2 * fz.real)
    raise ValueError(f"unknown target {target!r}")


def cayley_metric(zeta: complex, v: complex) -> float:
    """Half-plane metric through the Cayley map C(zeta) = (zeta - 1)/(zeta + 1) onto the disk."""
    c = (zeta - 1) / (zeta + 1)
    dc = 2 / (zeta + 1) ** 2
    return abs(dc * v) / (1 - abs(c) ** 2)


# ---------------------------------------------------------------- harmonic measure

@dataclass(frozen=True)
class SlitDisk:
    """Delta_k(0) minus straight slits, each given by its two endpoints."""

    k: float
    slits: tuple[tuple[complex, complex], ...] = ()

    def validate(self):
        if not self.k > 0:
            raise ValueError("disk radius must be positive")
        for a, b in self.slits:
            if max(abs(a), abs(b)) > self.k * (1 + 1e-12):
                raise ValueError("slit leaves the closed disk")
            if _seg_dist(np.array([0j]), complex(a), complex(b))[0] == 0:
                raise ValueError("slit passes through 0")

    def distances(self, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(distance to the circle, distance to the nearest slit)."""
        dc = self.k - np.abs(p)
        ds = np.full(p.shape, np.inf)
        for a, b in self.slits:
            ds = np.minimum(ds, _seg_dist(p, complex(a), complex(b)))
        return dc, ds


def _seg_dist(p: np.ndarray, a: complex, b: complex) -> np.ndarray:
    d = b - a
    t = np.clip(np.real((p - a) * np.conj(d)) / max(abs(d) ** 2, 1e-300), 0, 1)
    return np.abs(p - (a + t * d))


@dataclass
class HarmonicMeasureEstimate:
    value: float
    stderr: float
    walkers: int
    seed: int
    dropped: int = 0
    shell: float = 0.0

    def __post_init__(self):
        if not 0 <= self.value <= 1 or self.stderr < 0:
            raise ValueError("invalid harmonic measure estimate")


def _in_arcs(theta: np.ndarray, arcs) -> np.ndarray:
    hit = np.zeros(theta.shape, dtype=bool)
    for start, length in arcs:
        if length >= 2 * np.pi:
            return np.ones(theta.shape, dtype=bool)
        hit |= np.mod(theta - start, 2 * np.pi) < length
    return hit


def wos_exits(domain: SlitDisk, p: complex, walkers: int, seed: int, shell_factor: float = 1e-4,
              step_cap: int = 1_000_000):
    """Walk on spheres from p: returns (exit points, terminated flags, circle-exit flags, shell)."""
    domain.validate()
    rng = np.random.default_rng(seed)
    shell = shell_factor * domain.k
    pos = np.full(walkers, complex(p))
    done = np.zeros(walkers, dtype=bool)
    circle = np.zeros(walkers, dtype=bool)
    dc, ds = domain.distances(pos)
    if not (dc[0] > 0 and ds[0] > 0):
        raise ValueError("start point is not interior")
    active = np.arange(walkers)
    steps = 0
    while active.size and steps < step_cap:
        dc, ds = domain.distances(pos[active])
        dist = np.minimum(dc, ds)
        stop = dist < shell
        if np.any(stop):
            idx = active[stop]
            done[idx] = True
            circle[idx] = dc[stop] <= ds[stop]
            active, dist = active[~stop], dist[~stop]
        if not active.size:
            break
        pos[active] += dist * np.exp(2j * np.pi * rng.random(active.size))
        steps += 1
    return pos, done, circle & done, shell


def harmonic_measure(domain: SlitDisk, arcs, p: complex = 0j, walkers: int = 100_000, seed: int = 0,
                     shell_factor: float = 1e-4, step_cap: int = 1_000_000) -> HarmonicMeasureEstimate:
    """omega(p, E, domain) for E the union of circle arcs (start angle, length); arcs="circle"
    selects the whole circle and arcs="slits" the slit boundary."""
    pos, done, circle, shell = wos_exits(domain, p, walkers, seed, shell_factor, step_cap)
    n = int(done.sum())
    if n == 0:
        raise RuntimeError("no walker terminated")
    if arcs == "circle":
        hits = circle
    elif arcs == "slits":
        hits = done & ~circle
    else:
        hits = circle & _in_arcs(np.angle(pos), arcs)
    # walkers dropped at the step cap are excluded from both counts
    value = float(np.sum(hits)) / n
    dropped = walkers - n
    return HarmonicMeasureEstimate(value, math.sqrt(value * (1 - value) / n), walkers, seed, dropped, shell)


@dataclass
class Sh93Report:
    k: float
    omega: HarmonicMeasureEstimate
    distance: float
    bound: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.distance >= self.bound - self.tolerance


def sh93_bound_check(k: float, slits: Sequence[tuple[complex, complex]] = (), walkers: int = 100_000,
                     seed: int = 0) -> Sh93Report:
    """dist(0, boundary of U) >= (pi^2 k / 16) omega^2 for U = Delta_k(0) minus slits."""
    dom = SlitDisk(float(k), tuple((complex(a), complex(b)) for a, b in slits))
    dom.validate()
    om = harmonic_measure(dom, "circle", 0j, walkers, seed)
    dc, ds = dom.distances(np.array([0j]))
    dist = float(min(dc[0], ds[0]))
    c = math.pi ** 2 * k / 16
    return Sh93Report(k, om, dist, c * om.value ** 2, 3 * c * 2 * om.value * om.stderr)


# ---------------------------------------------------------------- antipeak functions

@dataclass
class AntipeakReport:
    positivity_margin: float
    upper_bound: float
    decay_profile: list[tuple[float, float]]
    psh_violations: int
    samples: int
    decays: bool = False

    def __post_init__(self):
        radii = [r for r, _ in self.decay_profile]
        if any(b <= a for a, b in zip(radii, radii[1:])):
            raise ValueError("decay radii must increase")


def sample_domain(member: Membership, dim: int, count: int, r_min: float, r_max: float, rng,
                  max_rounds: int = 200) -> np.ndarray:
    """Rejection samples with log-uniform norm in [r_min, r_max] and uniform direction."""
    out = []
    have = 0
    for _ in range(max_rounds):
        g = rng.normal(size=(dim, count)) + 1j * rng.normal(size=(dim, count))
        g /= np.linalg.norm(g, axis=0)
        g *= np.exp(rng.uniform(math.log(r_min), math.log(r_max), count))
        keep = g[:, member(g)]
        out.append(keep)
        have += keep.shape[1]
        if have >= count:
            break
    pts = np.concatenate(out, axis=1)[:, :count]
    if pts.shape[1] == 0:
        raise RuntimeError("no domain samples found")
    return pts


def antipeak_check(member: Membership, phi: Callable | None, dim: int, radii: Sequence[float],
                   count: int = 4000, seed: int = 0, witness: Callable | None = None, r_min: float = 1e-2,
                   circles: int = 200, circle_points: int = 64, decay_tol: float = 1e-2) -> AntipeakReport:
    """Sampled checks of an antipeak candidate: positivity, bound C, decay table c_R and the
    sub-mean-value property on random complex-line circles inside the domain.

    A holomorphic `witness` h yields the candidate |h|.
    """
    if phi is None:
        if witness is None:
            raise ValueError("need a candidate phi or a holomorphic witness")
        phi = lambda p: np.abs(witness(p))
    radii = sorted(float(r) for r in radii)
    rng = np.random.default_rng(seed)
    pts = sample_domain(member, dim, count, r_min, 4 * radii[-1], rng)
    vals = np.asarray(phi(pts), dtype=float)
    norms = np.linalg.norm(pts, axis=0)
    profile = []
    for R in radii:
        outside = vals[norms >= R]
        profile.append((R, float(np.max(outside)) if outside.size else 0.0))
    violations = 0
    theta = np.exp(2j * np.pi * np.arange(circle_points) / circle_points)
    for i in rng.choice(pts.shape[1], size=min(circles, pts.shape[1]), replace=False):
        u = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        u /= np.linalg.norm(u)
        t = 0.25 * norms[i] * rng.uniform(0.01, 1)
        ring = pts[:, i:i + 1] + t * u[:, None] * theta
        if not np.all(member(ring)):
            continue
        if vals[i] > np.mean(phi(ring)) + 1e-9 * max(1.0, abs(vals[i])):
            violations += 1
    last = profile[-1][1]
    return AntipeakReport(float(np.min(vals)), float(np.max(vals)), profile, violations, pts.shape[1],
                          decays=bool(last < decay_tol and last <= profile[0][1]))


@dataclass
class LiouvilleReport:
    spread: float
    far_value: float
    samples: int
    inconsistent: bool


def liouville_check(params: DomainParams, phi: Callable, radii: Sequence[float] = (2, 4, 8, 16),
                    per_radius: int = 16, seed: int = 0, tol: float = 1e-6) -> LiouvilleReport:
    """Evaluate an antipeak candidate along E_m x {1} at growing |z|.

    A candidate that is numerically constant and positive there cannot decay to 0 along
    E_m x {1}, which reaches infinity, so it is flagged as inconsistent.
    """
    rng = np.random.default_rng(seed)
    pts = []
    for R in radii:
        zs = R * np.exp(2j * np.pi * rng.random(per_radius))
        for z in zs:
            ws = branch_values(params.schedule, z)
            pts.append((z, ws[rng.integers(ws.size)], 1.0 + 0j))
    pts = np.array(pts, dtype=complex).T
    vals = np.asarray(phi(pts), dtype=float)
    spread = float(np.max(vals) - np.min(vals))
    far = float(np.max(vals[-per_radius:]))
    return LiouvilleReport(spread, far, pts.shape[1], bool(spread <= tol and np.min(vals) > tol))


# ---------------------------------------------------------------- mean-value certificate

@dataclass
class MeanValueReport:
    k: float
    R: float
    alpha: float
    omega: float
    omega_stderr: float
    C: float
    c_R: float
    rhs: float
    status: str
    into_domain: bool
    component_cells: int
    seed: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _component_from_origin(f: Callable, k: float, R: float, raster: int):
    h = 2 * k / (raster - 1)
    ticks = np.linspace(-k, k, raster)
    X, Y = np.meshgrid(ticks, ticks, indexing="ij")
    lam = X + 1j * Y
    in_disk = np.abs(lam) < k
    img = np.asarray(f(lam.ravel()), dtype=complex).reshape((-1,) + lam.shape)
    mask = in_disk & (np.linalg.norm(img, axis=0) < R)
    labels, _ = ndimage.label(mask)
    c = raster // 2
    if labels[c, c] == 0:
        raise RuntimeError("origin is not in the component: f(0) is outside B_R")
    comp = labels == labels[c, c]
    return lam, comp, h


def mean_value_certificate(f: Callable, member: Membership, phi: Callable, k: float, R: float, C: float,
                           c_R: float, walkers: int = 20_000, seed: int = 0, raster: int = 401,
                           require_into: bool = True, slack_tol: float = 1e-3) -> MeanValueReport:
    """alpha = phi(f(0)) <= C omega + c_R (1 - omega), omega = omega(0, closure(U) cap circle, U)
    for U the component of f^{-1}(B_R) cap Delta_k containing 0 (rasterised).

    Walkers move on the raster distance field of U and stop within two cells of its
    boundary; a stop within two cells of the circle |lam| = k counts towards omega.
    """
    lam, comp, h = _component_from_origin(f, k, R, raster)
    inside = np.asarray(member(np.asarray(f(lam[comp]), dtype=complex).reshape(-1, int(comp.sum()))))
    into = bool(np.all(inside))
    if require_into and not into:
        raise ValueError("f does not map the component into the domain")
    dist = ndimage.distance_transform_edt(comp) * h
    rng = np.random.default_rng(seed)
    pos = np.zeros(walkers, dtype=complex)
    active = np.arange(walkers)
    circle = np.zeros(walkers, dtype=bool)
    c = (lam.shape[0] - 1) / 2
    for _ in range(100_000):
        if not active.size:
            break
        ij = np.clip(np.rint(np.stack([pos[active].real, pos[active].imag]) / h + c).astype(int), 0, lam.shape[0] - 1)
        d = dist[ij[0], ij[1]] - h
        stop = d < 2 * h
        if np.any(stop):
            circle[active[stop]] = np.abs(pos[active[stop]]) > k - 3 * h
            active, d = active[~stop], d[~stop]
        pos[active] += np.maximum(d, 0) * np.exp(2j * np.pi * rng.random(active.size))
    omega = float(np.mean(circle))
    alpha = float(np.asarray(phi(np.asarray(f(np.array([0j])), dtype=complex).reshape(-1, 1)))[0])
    rhs = C * omega + c_R * (1 - omega)
    if alpha > rhs:
        status = "violated"
    elif rhs - alpha <= slack_tol * max(1.0, abs(rhs)):
        status = "tight"
    else:
        status = "slack"
    return MeanValueReport(k, R, alpha, omega, math.sqrt(omega * (1 - omega) / walkers), C, c_R, rhs, status,
                           into, int(comp.sum()), seed)


def exponential_disk(z0: complex) -> Callable:
    """lam -> (z0 exp(lam / z0), 0): f(0) = (z0, 0), f'(0) = (1, 0)."""
    def f(lam):
        lam = np.asarray(lam, dtype=complex)
        return np.stack([z0 * np.exp(lam / z0), np.zeros_like(lam)])
    return f
