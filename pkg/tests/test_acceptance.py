"""The thirteen acceptance criteria, one test each, at their stated tolerances.

The terminal summary prints one PASS/FAIL line per criterion (see conftest.py).
"""
from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from wermerlab.cli import main
from wermerlab.disks import (DiskSample, disk_exclusion_search, harnack_localize, random_omega_disk,
                             threshold_delta)
from wermerlab.kobayashi import (SlitDisk, ball, cayley_metric, harmonic_measure, kobayashi_lower_map,
                                 kobayashi_lower_projection, kobayashi_upper, omega_psi, sh93_bound_check,
                                 unit_disk)
from wermerlab.lattice import spiral_point, spiral_points
from wermerlab.potential import audit_fd_inclusion, audit_sublevel, psi
from wermerlab.profile import build_rho1, rho1_eval, rho_check
from wermerlab.wermer import (BranchSignature, ContinuationPath, alpha_bound, branch_eval, branch_values,
                              build_schedule, certify, kappa_k, monodromy, q0_from_alphas, shift_error)


def test_criterion_01():
    start = time.perf_counter()
    for n in range(1, 21):
        pts = spiral_points((2 * n + 1) ** 2)
        got = {(int(p.real), int(p.imag)) for p in pts}
        assert len(got) == (2 * n + 1) ** 2
        assert got == {(x, y) for x in range(-n, n + 1) for y in range(-n, n + 1)}
    assert [spiral_point(k) for k in (1, 2, 3, 10)] == [0j, 1 + 0j, 1 + 1j, 2 - 1j]
    assert time.perf_counter() - start < 1.0


def test_criterion_02():
    start = time.perf_counter()
    sched = build_schedule(12)
    rep = certify(sched)
    assert rep.k_margins and rep.p_margins
    assert all(v > 0 for v in rep.k_margins.values())
    assert all(v > 0 for v in rep.p_margins.values())
    assert abs(kappa_k(sched, 2, circle_samples=2048, radius=0.25) - math.sqrt(3)) <= 1e-3
    assert time.perf_counter() - start < 60


def test_criterion_03(sched12):
    start = time.perf_counter()
    for p in range(2, 9):
        scale = sched12.eps[p - 1] * math.sqrt(sched12.radius(p))
        level = sched12.truncated(p)
        assert abs(shift_error(level, p) - 2 * scale) <= 1e-9
        assert shift_error(level, p, delta=scale / 2) >= scale
    assert time.perf_counter() - start < 60


def _random_loop(points, base, rng, clearance=0.05):
    """Circle through `base` whose distance to every branch point differs from its radius by >= clearance."""
    while True:
        R = rng.uniform(0.2, 3.0)
        center = base + R * np.exp(2j * np.pi * rng.random())
        if np.all(np.abs(np.abs(points - center) - R) >= clearance):
            turns = 1 if rng.random() < 0.5 else -1
            loop = ContinuationPath.circle(center, R, turns, float(np.angle(base - center)), 256)
            wp = list(loop.waypoints)
            wp[0] = wp[-1] = base
            enclosed = np.abs(points - center) < R
            return ContinuationPath(tuple(wp), loop.max_step), enclosed


def _join(*loops):
    wp = list(loops[0].waypoints)
    for lp in loops[1:]:
        wp += list(lp.waypoints[1:])
    return ContinuationPath(tuple(wp), loops[0].max_step)


def test_criterion_04(sched12):
    rng = np.random.default_rng(2024)
    base = 0.5 + 0.5j
    tol = 1e-9
    for i in range(1000):
        m = 2 + i % 3
        sched = sched12.truncated(m)
        signs = tuple(int(s) for s in rng.choice([-1, 1], size=m))
        sig = BranchSignature(signs, base)
        start_value = branch_eval(sched, sig, ContinuationPath((base,)))
        loop, enclosed = _random_loop(sched.points, base, rng)
        # sign flip: exactly the enclosed branch points flip their sign
        after = monodromy(sched, sig, loop)
        expected = tuple(-s if e else s for s, e in zip(signs, enclosed))
        assert after.signs == expected
        assert abs(branch_eval(sched, sig, loop) - branch_eval(sched, after, ContinuationPath((base,)))) <= tol
        # order two
        twice = _join(loop, loop)
        assert monodromy(sched, sig, twice).signs == signs
        assert abs(branch_eval(sched, sig, twice) - start_value) <= tol
        # commutation
        other, _ = _random_loop(sched.points, base, rng)
        ab, ba = _join(loop, other), _join(other, loop)
        assert monodromy(sched, sig, ab).signs == monodromy(sched, sig, ba).signs
        assert abs(branch_eval(sched, sig, ab) - branch_eval(sched, sig, ba)) <= tol


def test_criterion_05(sched12):
    sched = sched12.truncated(10)
    coarse = {n: alpha_bound(sched, n, 32).alpha for n in range(1, 13)}
    fine = {n: alpha_bound(sched, n, 64).alpha for n in range(1, 13)}
    for alphas in (coarse, fine):
        assert all(alphas[n + 1] <= alphas[n] for n in range(1, 12))
    q0 = q0_from_alphas(coarse)
    assert q0 is not None and coarse[q0] < 0.5
    assert q0_from_alphas(fine) == q0
    for n in coarse:
        assert abs(coarse[n] - fine[n]) <= 0.05 * fine[n]


def test_criterion_06(run6):
    N = run6.config.horizon
    assert N == 10
    c = {r["n"]: r["c"] for r in run6.rows}
    prof = run6.profile
    seq = [c[1] - run6.config.c_step] + [c[n] for n in range(1, N + 1)]
    rep = rho_check(prof, seq, N, window_c={n: c[n] for n in range(1, N + 1)}, step=1e-2)
    assert rep.convex_ok and rep.min_second_difference >= -1e-9
    assert abs(rep.derivative_at_zero) <= 1e-6
    assert rep.dominance_ok and rep.min_dominance_margin > 0
    assert rep.window_ok and rep.min_window_margin >= 0
    assert rep.ok
    assert rho1_eval(build_rho1([0.5, 1.0, 3.0], 2), 2.0) == 3.0


def test_criterion_07(run6):
    start = time.perf_counter()
    params = run6.params
    for n in range(2, 7):
        row = run6.rows[n - 1]
        sub = audit_sublevel(run6.params.schedule, n, row["q"], row["kappa"], samples=10_000, seed=n)
        assert sub.violations == 0
        for d in (0.5, 1.0, 0.49 * math.exp(n)):
            assert 2 * d / math.exp(n) < 1
            rep = audit_fd_inclusion(params, n, d, row["kappa"], samples=10_000, seed=100 + n)
            assert rep.samples == 10_000
            assert rep.violations == 0
    assert time.perf_counter() - start < 300


def test_criterion_08(run6):
    params = run6.params
    q0 = run6.q0
    grid = np.geomspace(1e-4, 2.0, 25)
    for n in (q0, q0 + 1):
        ks = [k for k in range(n - 1, n + 3) if k >= 1]
        coarse = {k: DiskSample(params, k, 50, seed=0, grid_density=40) for k in ks}
        fine = {k: DiskSample(params, k, 50, seed=0, grid_density=80) for k in ks}
        for s in coarse.values():
            vals = [s.beta(d) for d in grid]
            assert all(b >= a for a, b in zip(vals, vals[1:]))
            per_disk = np.array([s.betas(d) for d in grid])
            assert np.all(np.diff(per_disk, axis=0) >= 0)
        star = threshold_delta(list(coarse.values()))
        assert star > 0
        delta = 0.5 * star
        for k in ks:
            assert coarse[k].beta(star) < 0.5
            assert coarse[k].beta(delta) < 0.5
            b40, b80 = coarse[k].beta(delta), fine[k].beta(delta)
            assert abs(b40 - b80) < 0.1 * max(b40, b80)


def test_criterion_09(run6):
    rng = np.random.default_rng(9)
    violations = 0
    for _ in range(1000):
        rep = harnack_localize(random_omega_disk(run6.params, rng), run6.params)
        violations += len(rep.violations)
        assert rep.max_psi_ratio < 1
    assert violations == 0


def test_criterion_10():
    start = time.perf_counter()
    disk = SlitDisk(1.0, ())
    walkers = 100_000
    for i, (a, length) in enumerate([(0.0, math.pi), (0.3, 1.0), (-1.0, 4.5), (2.0, 0.1)]):
        est = harmonic_measure(disk, [(a, length)], walkers=walkers, seed=10 + i)
        assert abs(est.value - length / (2 * math.pi)) <= 3 * est.stderr
        rest = harmonic_measure(disk, [(a + length, 2 * math.pi - length)], walkers=walkers, seed=50 + i)
        assert abs(est.value + rest.value - 1) <= 3 * math.hypot(est.stderr, rest.stderr)
    assert sh93_bound_check(1.0, (), walkers=walkers, seed=1).ok
    assert sh93_bound_check(3.0, [(1.0, 2.0)], walkers=walkers, seed=2).ok
    assert time.perf_counter() - start < 120


def test_criterion_11(run6):
    assert abs(kobayashi_upper(unit_disk, [0j], [1.0]).upper - 1) <= 1e-3
    for R in (0.5, 2.0, 5.0):
        assert abs(kobayashi_upper(ball(R), [0j, 0j], [1.0, 0.0], family_spec="affine").upper - 1 / R) <= 1e-3
    low = kobayashi_lower_map(lambda z: z[0], lambda z: np.array([1.0]), [1.0], [1.0], target="half-plane")
    assert low == 0.5 == cayley_metric(1.0, 1.0)
    params = run6.params
    member = omega_psi(params)
    rng = np.random.default_rng(11)
    for _ in range(1000):
        z = complex(*rng.uniform(-3, 3, 2))
        w = complex(branch_values(params.schedule, z)[rng.integers(2 ** params.m)])
        w += 0.2 * rng.normal() * np.exp(2j * np.pi * rng.random())
        zeta = float(psi(params, z, w)) * rng.uniform(1.01, 3) + rng.uniform(0, 1) + 1j * rng.normal()
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        lower = kobayashi_lower_projection(params, (z, w, zeta), v)
        upper = kobayashi_upper(member, [z, w, zeta], v, family_spec="affine", rtol=1e-4).upper
        assert lower <= upper


def test_criterion_12(run8):
    start = time.perf_counter()
    assert run8.params.m == 8
    radii = []
    for d in (0.5, 1.0, 2.0):
        rep = disk_exclusion_search(run8.params, d, 1.0)
        assert math.isfinite(rep.best_radius) and rep.best_radius > 0
        assert rep.recheck_ok
        radii.append(rep.best_radius)
    assert all(b >= a for a, b in zip(radii, radii[1:]))
    assert time.perf_counter() - start < 600


def test_criterion_13(tmp_path, capsys):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"m": 4, "horizon": 6, "audit_ns": [2, 3], "audit_samples": 500}))
    runs = [tmp_path / "first", tmp_path / "second"]
    for out in runs:
        assert main(["pipeline", "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    names = sorted(p.name for p in runs[0].iterdir())
    assert names == sorted(p.name for p in runs[1].iterdir())
    assert {"schedule.json", "profile.json", "calibration.csv", "audit.json", "manifest.json"} <= set(names)
    for name in names:
        assert (runs[0] / name).read_bytes() == (runs[1] / name).read_bytes(), name
