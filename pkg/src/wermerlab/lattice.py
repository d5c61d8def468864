"""Spiral enumeration of the Gaussian integers and the square frames S_n, T_n, S~_n."""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

REGION_KINDS = ("S", "T", "St")


@dataclass(frozen=True)
class RegionId:
    kind: str
    index: int

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}; expected one of {REGION_KINDS}")
        if int(self.index) != self.index or self.index < 1:
            raise ValueError("region index must be a positive integer")


def _as_point(z) -> complex:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError(f"non-finite point {z!r}")
    return z


def spiral_point(n: int) -> complex:
    """Return a_n, the n-th point of the anticlockwise square spiral (a_1 = 0).

    Ring k >= 1 holds the indices (2k-1)^2 + 1 .. (2k+1)^2 and starts at
    k - (k-1)i, so a_2 = 1, a_3 = 1+i, a_10 = 2-i.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"spiral index must be a positive integer, got {n!r}")
    n = int(n)
    if n == 1:
        return 0j
    k = (math.isqrt(n - 1) + 1) // 2
    o = n - (2 * k - 1) ** 2 - 1
    if o <= 2 * k - 1:
        x, y = k, -(k - 1) + o
    elif o < 4 * k:
        x, y = k - (o - (2 * k - 1)), k
    elif o < 6 * k:
        x, y = -k, k - (o - (4 * k - 1))
    else:
        x, y = -k + (o - (6 * k - 1)), -k
    return complex(x, y)


def spiral_index(p) -> int:
    """Inverse of :func:`spiral_point` on Z + iZ."""
    p = _as_point(p)
    if p.real != int(p.real) or p.imag != int(p.imag):
        raise ValueError(f"{p!r} is not a Gaussian integer")
    x, y = int(p.real), int(p.imag)
    k = max(abs(x), abs(y))
    if k == 0:
        return 1
    base = (2 * k - 1) ** 2 + 1
    if x == k and y > -k:
        o = y + k - 1
    elif y == k:
        o = 2 * k - 1 + (k - x)
    elif x == -k:
        o = 4 * k - 1 + (k - y)
    else:
        o = 6 * k - 1 + (x + k)
    return base + o


def spiral_points(count: int) -> np.ndarray:
    """Array of a_1 .. a_count."""
    return np.array([spiral_point(n) for n in range(1, count + 1)], dtype=complex)


def region_contains(region: RegionId, z) -> bool | np.ndarray:
    """Exact membership test for S_n, T_n or S~_n (vectorised over z)."""
    n = region.index
    z = np.asarray(z, dtype=complex)
    x, y = z.real, z.imag
    sup = np.maximum(np.abs(x), np.abs(y))
    if region.kind == "S":
        inside = (sup <= n + 0.75) & ~(sup < n + 0.25)
    elif region.kind == "St":
        inside = (sup <= n + 2) & ~(sup < n - 1)
    else:
        h = n + 0.5
        inside = ((np.abs(x) == h) & (np.abs(y) <= h)) | ((np.abs(x) <= h) & (np.abs(y) == h))
    return bool(inside) if inside.ndim == 0 else inside


def region_grid(region: RegionId, spacing: float) -> np.ndarray:
    """Lattice-aligned grid points (spacing `spacing`, containing 0) inside a closed region."""
    n = region.index
    half = {"S": n + 0.75, "St": n + 2, "T": n + 0.5}[region.kind]
    k = int(math.floor(half / spacing + 1e-9))
    ticks = np.arange(-k, k + 1) * spacing
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    z = (xx + 1j * yy).ravel()
    return z[region_contains(region, z)]


def boundary_samples(region: RegionId, per_side: int = 64) -> np.ndarray:
    """Points on the boundary squares of a region (used in inclusion checks)."""
    n = region.index
    if region.kind == "S":
        halves = [n + 0.25, n + 0.75]
    elif region.kind == "St":
        halves = [max(n - 1, 0), n + 2]
    else:
        halves = [n + 0.5]
    out = []
    for h in halves:
        if h == 0:
            out.append(np.array([0j]))
            continue
        s = np.linspace(-h, h, per_side + 1)
        out.extend([h + 1j * s, -h + 1j * s, s + 1j * h, s - 1j * h])
    return np.concatenate(out)
