from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from wermerlab.kobayashi import (SlitDisk, antipeak_check, ball, cayley_metric, exponential_disk, half_plane,
                                 harmonic_measure, kobayashi_lower_map, kobayashi_lower_projection,
                                 kobayashi_upper, liouville_check, mean_value_certificate, omega_eps, sh93_bound_check,
                                 unit_disk)
from wermerlab.wermer import branch_values


def test_unit_disk_identity():
    est = kobayashi_upper(unit_disk, [0j], [1.0])
    assert est.upper == pytest.approx(1.0, rel=1e-6)
    assert est.lower <= est.upper


@pytest.mark.parametrize("x", [0.3, 0.6, 0.9, 0.5j, -0.4 + 0.4j])
def test_schwarz_pick(x):
    est = kobayashi_upper(unit_disk, [x], [1.0], family_spec=("affine", "mobius"), boundary=1024)
    exact = 1 / (1 - abs(x) ** 2)
    assert est.upper == pytest.approx(exact, rel=1e-3)
    assert est.upper >= exact * (1 - 1e-6)
    low = kobayashi_lower_map(lambda z: z[0], lambda z: np.array([1.0]), [x], [1.0])
    assert low == pytest.approx(exact, rel=1e-12)


@pytest.mark.parametrize("R", [0.5, 1.0, 3.0])
def test_ball_at_origin(R):
    v = np.array([0.6, 0.8j])
    est = kobayashi_upper(ball(R), [0j, 0j], v, family_spec="affine")
    assert est.upper == pytest.approx(1 / R, rel=1e-3)


def test_ball_monotone_under_inclusion():
    z, v = [0.2 + 0.1j, -0.3j], [1.0, 0.5]
    small = kobayashi_upper(ball(1.0), z, v, trials=4)
    large = kobayashi_upper(ball(2.0), z, v, trials=4)
    assert large.upper <= small.upper


def test_omega_eps_grows_near_the_hole():
    ups = [kobayashi_upper(omega_eps(0.1), [z, 0j], [1.0, 0.0], trials=4).upper for z in (4.0, 1.0, 0.4, 0.12)]
    assert all(b > a for a, b in zip(ups, ups[1:]))


def test_upper_rejects_bad_input():
    with pytest.raises(ValueError):
        kobayashi_upper(unit_disk, [2.0], [1.0])
    with pytest.raises(ValueError):
        kobayashi_upper(unit_disk, [0j], [0.0])
    with pytest.raises(ValueError):
        kobayashi_upper(unit_disk, [0j], [1.0], family_spec="spline")


def test_half_plane_lower_matches_cayley():
    low = kobayashi_lower_map(lambda z: z[0], lambda z: np.array([1.0]), [1.0], [1.0], target="half-plane")
    assert low == 0.5 == pytest.approx(cayley_metric(1.0, 1.0))
    for zeta in (0.3 + 2j, 5.0 - 1j):
        assert cayley_metric(zeta, 1.0) == pytest.approx(1 / (2 * zeta.real), rel=1e-12)


def test_half_plane_upper_above_lower():
    est = kobayashi_upper(half_plane, [2.0 + 1j], [1.0], trials=4)
    assert est.upper >= 1 / 4 * (1 - 1e-9)
    assert est.upper == pytest.approx(1 / 4, rel=1e-3)


def test_projection_lower_bound_below_upper(run6):
    from wermerlab.kobayashi import omega_psi
    from wermerlab.potential import psi
    rng = np.random.default_rng(5)
    member = omega_psi(run6.params)
    for _ in range(10):
        z = complex(*rng.uniform(-2, 2, 2))
        w = complex(branch_values(run6.schedule, z)[0]) + 0.05
        zeta = float(psi(run6.params, z, w)) + rng.uniform(0.1, 3)
        v = rng.normal(size=3) + 1j * rng.normal(size=3)
        low = kobayashi_lower_projection(run6.params, (z, w, zeta), v)
        up = kobayashi_upper(member, [z, w, zeta], v, family_spec="affine").upper
        assert low <= up


def test_projection_rejects_outside_point(run6):
    with pytest.raises(ValueError):
        kobayashi_lower_projection(run6.params, (3.0, 9.0, 0.5), [0, 0, 1])


def test_harmonic_measure_full_circle():
    assert harmonic_measure(SlitDisk(1.0, ()), "circle", walkers=1000).value == 1.0


@pytest.mark.parametrize("start, length", [(0.0, math.pi), (1.0, 0.5), (-2.0, 4.0)])
def test_harmonic_measure_arc_at_origin(start, length):
    est = harmonic_measure(SlitDisk(1.0, ()), [(start, length)], walkers=20_000, seed=3)
    assert abs(est.value - length / (2 * math.pi)) <= 3 * est.stderr


def _poisson_arc(p, start, length):
    r, t = abs(p), np.angle(p)
    kern = lambda s: (1 - r * r) / (1 - 2 * r * math.cos(s - t) + r * r) / (2 * math.pi)
    return integrate.quad(kern, start, start + length, epsabs=1e-12)[0]


@pytest.mark.parametrize("p", [0.5 + 0j, -0.3 + 0.6j, 0.8j])
def test_harmonic_measure_poisson_kernel(p):
    est = harmonic_measure(SlitDisk(1.0, ()), [(0.2, 1.3)], p=p, walkers=20_000, seed=1)
    assert abs(est.value - _poisson_arc(p, 0.2, 1.3)) <= 3 * est.stderr + 1e-3


def test_harmonic_measure_scales_with_k():
    est = harmonic_measure(SlitDisk(4.0, ()), [(0.0, 1.0)], p=2.0, walkers=20_000, seed=2)
    assert abs(est.value - _poisson_arc(0.5, 0.0, 1.0)) <= 3 * est.stderr + 1e-3


def test_harmonic_measure_complementary_arcs():
    dom = SlitDisk(1.0, ((0.5, 0.9j),))
    a = harmonic_measure(dom, [(0.0, 2.0)], p=-0.2, walkers=20_000, seed=1)
    b = harmonic_measure(dom, [(2.0, 2 * math.pi - 2.0)], p=-0.2, walkers=20_000, seed=2)
    s = harmonic_measure(dom, "slits", p=-0.2, walkers=20_000, seed=3)
    assert abs(a.value + b.value + s.value - 1) <= 3 * math.sqrt(a.stderr ** 2 + b.stderr ** 2 + s.stderr ** 2)


def test_harmonic_measure_is_seeded():
    dom = SlitDisk(2.0, ((1.0, 1.5 + 0.5j),))
    a = harmonic_measure(dom, "circle", walkers=5000, seed=9)
    b = harmonic_measure(dom, "circle", walkers=5000, seed=9)
    assert a == b


def test_slit_reduces_circle_measure():
    free = harmonic_measure(SlitDisk(2.0, ()), "circle", walkers=5000)
    slit = harmonic_measure(SlitDisk(2.0, ((-1.2 - 1.2j, -1.2 + 1.2j),)), "circle", walkers=20_000)
    assert slit.value < free.value


@pytest.mark.parametrize("slits", [(), ((1.0, 2.0),), ((0.5 + 0.5j, 0.5 - 0.5j),)])
def test_sh93_bound(slits):
    rep = sh93_bound_check(3.0, slits, walkers=20_000, seed=0)
    assert rep.ok


@pytest.mark.parametrize("slit", [(-1.0, 1.0), (2.0, 4.0)])
def test_sh93_rejects_invalid_slits(slit):
    with pytest.raises(ValueError):
        sh93_bound_check(3.0, [slit], walkers=100)


def test_antipeak_on_omega_eps_decays():
    rep = antipeak_check(omega_eps(0.1), lambda p: 0.1 / np.abs(p[0]), 2, (1, 10, 100), count=2000)
    assert rep.positivity_margin > 0
    assert rep.upper_bound <= 1
    assert rep.psh_violations == 0
    assert rep.decays
    vals = [v for _, v in rep.decay_profile]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_antipeak_half_plane_does_not_decay():
    rep = antipeak_check(half_plane, None, 1, (1, 10, 100), count=2000, witness=lambda p: np.exp(-p[0]))
    assert not rep.decays
    assert rep.psh_violations == 0


def test_antipeak_needs_candidate():
    with pytest.raises(ValueError):
        antipeak_check(half_plane, None, 1, (1, 2))


def test_liouville_flags_constant_candidate(run6):
    const = liouville_check(run6.params, lambda p: np.ones(p.shape[1]))
    assert const.inconsistent
    decaying = liouville_check(run6.params, lambda p: 1 / np.abs(p[0]))
    assert not decaying.inconsistent


def test_mean_value_certificate_trend():
    eps, R = 0.5, 3.0
    reps = [mean_value_certificate(exponential_disk(2.0), omega_eps(eps), lambda p: 1 / np.abs(p[0]), k, R,
                                   1 / eps, math.sqrt(2) / R, walkers=4000, seed=0, raster=201, require_into=False)
            for k in (1.0, 4.0, 8.0, 32.0)]
    assert all(b.omega <= a.omega for a, b in zip(reps, reps[1:]))
    assert reps[-1].rhs < reps[0].rhs
    for r in reps:
        assert r.alpha == pytest.approx(0.5)
        # the inequality is only guaranteed when the disk stays inside the domain
        if r.into_domain:
            assert r.status != "violated"


def test_mean_value_certificate_requires_domain():
    with pytest.raises(ValueError):
        mean_value_certificate(exponential_disk(2.0), omega_eps(0.5), lambda p: 1 / np.abs(p[0]), 16.0, 3.0,
                               2.0, 0.5, walkers=100, raster=101)
