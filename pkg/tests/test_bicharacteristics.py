import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magcalderon.bicharacteristics import (
    GlancingError,
    TracingError,
    boundary_covector,
    classify_and_lift,
    geodesic_through,
    integrate_null,
    lens_relation,
)
from magcalderon.checks import minkowski_chord
from magcalderon.geometry import hamiltonian
from magcalderon.reconstruction import hausdorff
from magcalderon.scenarios import get_scenario

from conftest import curve_distance

LORENTZ = ("minkowski-disk", "conformal-minkowski", "warped-disk", "aniso-disk")


def cyl_point(t, th):
    return np.array([t, np.cos(th), np.sin(th)])


def tangential(th, a, b):
    return np.array([a, -b * np.sin(th), b * np.cos(th)])


hyperbolic = st.tuples(
    st.floats(0.5, 2.5), st.floats(0.0, 2 * np.pi), st.sampled_from([-1.0, 1.0]), st.floats(0.5, 1.5), st.floats(-0.9, 0.9)
).map(lambda v: (cyl_point(v[0], v[1]), tangential(v[1], v[2] * v[3], v[2] * v[3] * v[4])))


def test_lift_minkowski_example(minkowski):
    cls, xin, xout = classify_and_lift(minkowski.metric, [0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], minkowski.domain)
    assert cls == "hyperbolic"
    assert np.allclose(xin, [-1.0, 1.0, 0.0], atol=1e-15)
    assert np.allclose(xout, [-1.0, -1.0, 0.0], atol=1e-15)


def test_lift_elliptic_and_glancing(minkowski):
    cls, a, b = classify_and_lift(minkowski.metric, [0.0, -1.0, 0.0], [0.0, 0.0, 1.0], minkowski.domain)
    assert cls == "elliptic" and a is None and b is None
    cls, _, _ = classify_and_lift(minkowski.metric, [0.0, -1.0, 0.0], [1.0, 0.0, 1.0], minkowski.domain)
    assert cls == "glancing"
    with pytest.raises(GlancingError):
        lens_relation(minkowski.metric, [0.0, -1.0, 0.0], [1.0, 0.0, 1.0], 0, minkowski.domain)


def test_lift_ignores_normal_component(minkowski):
    x = [1.0, -1.0, 0.0]
    a = classify_and_lift(minkowski.metric, x, [-1.0, 0.0, 0.4], minkowski.domain)
    b = classify_and_lift(minkowski.metric, x, [-1.0, 7.0, 0.4], minkowski.domain)
    assert np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])


@given(hyperbolic, st.floats(0.1, 10.0))
def test_lift_homogeneity(case, c):
    x, xi = case
    m = get_scenario("warped-disk").metric
    _, i1, o1 = classify_and_lift(m, x, xi)
    _, ic, oc = classify_and_lift(m, x, c * xi)
    assert np.allclose(ic, c * i1, rtol=1e-13, atol=1e-13 * c)
    assert np.allclose(oc, c * o1, rtol=1e-13, atol=1e-13 * c)


def test_lifts_are_null_with_inward_sign():
    sc = get_scenario("warped-disk")
    x = cyl_point(1.0, 0.4)
    _, xin, xout = classify_and_lift(sc.metric, x, tangential(0.4, -1.0, 0.5), sc.domain)
    for lift in (xin, xout):
        assert abs(float(hamiltonian(sc.metric, x, lift).p)) < 1e-14
    assert xin @ np.array([0.0, x[1], x[2]]) < 0 < xout @ np.array([0.0, x[1], x[2]])


def test_chord_minkowski(minkowski):
    b = integrate_null(minkowski.metric, [0.0, -1.0, 0.0], [-1.0, 1.0, 0.0], 1.0, minkowski.domain)
    assert np.allclose(b.x[-1], [2.0, 1.0, 0.0], atol=1e-10)
    assert np.allclose(b.exit_covector, [-1.0, 1.0, 0.0], atol=1e-10)
    assert b.null_residual <= 1e-9
    back = integrate_null(minkowski.metric, b.x[-1], b.exit_covector, -1.0, minkowski.domain)
    assert np.max(np.abs(back.x[-1] - [0.0, -1.0, 0.0])) <= 1e-8


def test_integrate_rejects_bad_starts(minkowski):
    with pytest.raises(TracingError):
        integrate_null(minkowski.metric, [0.0, 0.0, 0.0], [1.0, 0.5, 0.0])
    with pytest.raises(TracingError):
        integrate_null(minkowski.metric, [0.0, -1.0, 0.0], [-1.0, -1.0, 0.0], 1.0, minkowski.domain)


def test_lens_minkowski_examples(minkowski):
    r = lens_relation(minkowski.metric, [0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], 0, minkowski.domain)
    assert np.allclose(r.out.x, [2.0, 1.0, 0.0], atol=1e-10)
    assert np.allclose(r.out.xi, [-1.0, 0.0, 0.0], atol=1e-10)
    assert r.travel_time == pytest.approx(2.0, abs=1e-10)
    assert r.out.time_orientation == "future" and r.transversal
    r1 = lens_relation(minkowski.metric, [0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], 1, minkowski.domain)
    assert np.allclose(r1.out.x, [4.0, -1.0, 0.0], atol=1e-9)
    assert r1.trajectory.reflection_count == 1 and len(r1.trajectory.legs) == 2


@pytest.mark.parametrize("k", [0, 1, 2])
def test_lens_reversal(k):
    sc = get_scenario("warped-disk")
    x, xi = cyl_point(0.5, 2.0), tangential(2.0, -1.0, 0.3)
    r = lens_relation(sc.metric, x, xi, k, sc.domain)
    back = lens_relation(sc.metric, r.out.x, r.out.xi, k, sc.domain, direction="past")
    assert np.max(np.abs(back.out.x - x)) <= 1e-8
    assert np.max(np.abs(back.out.xi - xi)) <= 1e-8


def test_past_pointing_minus_dt_is_future(minkowski):
    bc = boundary_covector(minkowski.metric, minkowski.domain, [1.0, -1.0, 0.0], [-1.0, 0.0, 0.0])
    assert bc.time_orientation == "future"
    r = lens_relation(minkowski.metric, [3.0, -1.0, 0.0], [-1.0, 0.0, 0.0], 0, minkowski.domain, direction="past")
    assert np.allclose(r.out.x, [1.0, 1.0, 0.0], atol=1e-10)


@given(hyperbolic)
def test_lens_matches_flat_chord(case):
    x, xi = case
    sc = get_scenario("minkowski-disk")
    r = lens_relation(sc.metric, x, xi, 0, sc.domain)
    xe, xie = minkowski_chord(x, xi)
    assert np.max(np.abs(r.out.x - xe)) <= 1e-6
    assert np.max(np.abs(r.out.xi - xie)) <= 1e-6
    assert r.trajectory.null_residual <= 1e-9


@given(hyperbolic, st.floats(0.2, 5.0))
def test_lens_homogeneity(case, c):
    x, xi = case
    sc = get_scenario("warped-disk")
    r = lens_relation(sc.metric, x, xi, 0, sc.domain)
    rc = lens_relation(sc.metric, x, c * xi, 0, sc.domain)
    assert np.max(np.abs(rc.out.x - r.out.x)) <= 1e-9
    assert np.max(np.abs(rc.out.xi - c * r.out.xi)) <= 1e-9 * max(1.0, c)


@pytest.mark.parametrize("name", LORENTZ)
def test_null_residual_catalog(name):
    sc = get_scenario(name)
    rng = np.random.default_rng(11)
    for _ in range(5):
        th = rng.uniform(0, 2 * np.pi)
        x = cyl_point(rng.uniform(0.5, 1.5), th)
        r = lens_relation(sc.metric, x, tangential(th, -1.0, rng.uniform(-0.6, 0.6)), 1, sc.domain)
        assert r.trajectory.null_residual <= 1e-9


def test_conformal_point_sets_agree():
    base, conf = get_scenario("minkowski-disk"), get_scenario("conformal-minkowski")
    x, xi = np.array([1.5, -1.0, 0.0]), np.array([-1.0, 0.0, 0.3])
    ra = lens_relation(base.metric, x, xi, 0, base.domain)
    rb = lens_relation(conf.metric, x, xi, 0, conf.domain)
    # the probe ray crosses the conformal bump
    assert float(rb.trajectory.distance_to([[2.5, 0.0, 0.0]])[0]) < 0.6
    assert np.max(np.abs(ra.out.x - rb.out.x)) <= 1e-8
    pa, pb = ra.trajectory.point_cloud(0.02), rb.trajectory.point_cloud(0.02)
    d = max(np.max(curve_distance(ra.trajectory, pb)), np.max(curve_distance(rb.trajectory, pa)))
    assert d <= 1e-6


def test_geodesic_through_minkowski(minkowski):
    entry, ex, traj = geodesic_through(minkowski.metric, [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], minkowski.domain)
    assert np.allclose(entry.x, [0.0, -1.0, 0.0], atol=1e-10)
    assert np.allclose(ex.x, [2.0, 1.0, 0.0], atol=1e-10)
    _, _, traj2 = geodesic_through(minkowski.metric, [1.0, 0.0, 0.0], [2.0, 2.0, 0.0], minkowski.domain)
    assert hausdorff(traj.point_cloud(0.01), traj2.point_cloud(0.01)) <= 0.01 + 1e-9
    assert np.allclose(traj2.x[0], traj.x[0], atol=1e-10) and np.allclose(traj2.x[-1], traj.x[-1], atol=1e-10)


def test_geodesic_through_warped():
    sc = get_scenario("warped-disk")
    x = np.array([2.0, 0.3, -0.2])
    g = sc.metric.eval(x)
    d = np.array([0.6, 0.8])
    v = np.concatenate([[1.0], d / np.sqrt(d @ g[1:, 1:] @ d)])
    entry, ex, traj = geodesic_through(sc.metric, x, v, sc.domain)
    assert abs(float(sc.domain.rho(entry.x))) <= 1e-9
    assert abs(float(sc.domain.rho(ex.x))) <= 1e-9
    assert float(curve_distance(traj, x)[0]) < 1e-6


def test_geodesic_through_rejects_non_null(minkowski):
    with pytest.raises(TracingError):
        geodesic_through(minkowski.metric, [1.0, 0.0, 0.0], [1.0, 0.5, 0.0], minkowski.domain)


def test_reparametrization_keeps_points():
    sc = get_scenario("warped-disk")
    r = lens_relation(sc.metric, cyl_point(0.5, 2.0), tangential(2.0, -1.0, 0.3), 0, sc.domain)
    t2 = r.trajectory.reparametrized(3.0)
    lo, hi = r.trajectory.sigma_range
    s = np.linspace(lo, hi, 7)
    assert np.allclose(t2.state(3.0 * s)[:, :3], r.trajectory.state(s)[:, :3], atol=1e-12)
