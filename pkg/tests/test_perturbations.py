import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magcalderon import bump
from magcalderon.geometry import Ball, PreconditionError
from magcalderon.perturbations import (
    BumpProfile,
    ExactForm,
    GenericSampler,
    LocalizedOneForm,
    ck_norm,
    make_aligned_one_form,
    make_bump_scalar,
    make_exact_form,
    make_sym_tensor,
    sample_generic,
)

PROBE = (np.array([1.5, -1.0, 0.0]), np.array([-1.0, 0.0, 0.3]))


@pytest.fixture(scope="module")
def chord(mink_oracle):
    return mink_oracle.trace(*PROBE)


def mid_window(lens, frac=0.1):
    lo, hi = lens.trajectory.sigma_range
    return 0.5 * (lo + hi), frac * (hi - lo)


def test_profile_and_masses():
    assert float(bump.profile(0.0)) == np.exp(-1.0)
    assert float(bump.profile(1.0)) == 0.0 and float(bump.profile(-1.5)) == 0.0
    # independent midpoint-free Gauss-Legendre quadrature of the same integrals
    z, w = np.polynomial.legendre.leggauss(400)
    assert BumpProfile.mass() == pytest.approx(np.sum(w * bump.profile(z)), rel=1e-10)
    r = 0.5 * (z + 1.0)
    assert bump.ball_mass(3) == pytest.approx(4 * np.pi * 0.5 * np.sum(w * r**2 * bump.profile(r)), rel=1e-10)
    tau = np.linspace(-0.3, 0.3, 20001)
    assert np.trapezoid(BumpProfile.normalized(tau, 0.3), tau) == pytest.approx(1.0, abs=1e-8)


def test_bump_derivatives_fd():
    c, R = np.array([0.1, -0.2, 0.3]), 0.7
    x = np.array([0.3, 0.1, 0.2])
    h = 1e-5
    g = bump.radial_bump_gradient(x, c, R)
    H = bump.radial_bump_hessian(x, c, R)
    for j in range(3):
        e = np.eye(3)[j] * h
        assert g[j] == pytest.approx((bump.radial_bump(x + e, c, R) - bump.radial_bump(x - e, c, R)) / (2 * h), abs=1e-9)
        fd = (bump.radial_bump_gradient(x + e, c, R) - bump.radial_bump_gradient(x - e, c, R)) / (2 * h)
        assert np.allclose(H[j], fd, atol=1e-8)


def test_support_exactness():
    rng = np.random.default_rng(0)
    c, r = np.array([2.0, 0.1, -0.1]), 0.2
    X = c + rng.normal(size=(2000, 3))
    outside = np.linalg.norm(X - c, axis=1) >= r
    fields = [
        LocalizedOneForm(c, r, [1.0, 2.0, 3.0]),
        ExactForm(c, r, 2.0),
        make_sym_tensor("rank_one", c, r, beta=[1.0, 0.0, 0.0]),
        make_bump_scalar(c, r),
    ]
    for f in fields:
        v = np.asarray(f(X))
        assert np.all(v[outside] == 0.0)


def test_aligned_form_integral(mink_oracle, chord):
    s0, eps = mid_window(chord)
    form = make_aligned_one_form(chord.trajectory, s0, eps, 10.0, 0.05, metric=mink_oracle.metric, domain=mink_oracle.domain)
    assert mink_oracle.line_integral(chord, form) == pytest.approx(0.1, abs=1e-8)
    twice = make_aligned_one_form(chord.trajectory, s0, eps, 5.0, 0.05, metric=mink_oracle.metric, domain=mink_oracle.domain)
    assert mink_oracle.line_integral(chord, twice) == pytest.approx(2 * mink_oracle.line_integral(chord, form), abs=1e-9)


def test_aligned_form_off_curve(mink_oracle, chord):
    s0, eps = mid_window(chord)
    form = make_aligned_one_form(chord.trajectory, s0, eps, 10.0, 0.05, metric=mink_oracle.metric, domain=mink_oracle.domain)
    far = mink_oracle.trace([0.5, 1.0, 0.0], [-1.0, 0.0, 0.2])
    window = chord.trajectory.state(np.linspace(s0 - eps, s0 + eps, 50))[:, :3]
    assert float(np.min(far.trajectory.distance_to(window))) > 0.1
    assert mink_oracle.line_integral(far, form) == 0.0


def test_aligned_form_rejects_bad_windows(mink_oracle, chord):
    lo, hi = chord.trajectory.sigma_range
    with pytest.raises(PreconditionError):
        make_aligned_one_form(chord.trajectory, lo, 0.1 * (hi - lo), 10.0, metric=mink_oracle.metric)
    with pytest.raises(ValueError):
        make_aligned_one_form(chord.trajectory, 0.5 * (lo + hi), 0.1, 10.0)


def random_chords(oracle, count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        th = rng.uniform(0, 2 * np.pi)
        x = np.array([rng.uniform(0.5, 2.0), np.cos(th), np.sin(th)])
        a = rng.choice([-1.0, 1.0])
        b = a * rng.uniform(-0.8, 0.8)
        out.append(oracle.trace(x, np.array([a, -b * np.sin(th), b * np.cos(th)])))
    return out


def test_exact_forms_integrate_to_zero(mink_oracle):
    rng = np.random.default_rng(5)
    worst = 0.0
    for lens in random_chords(mink_oracle, 50, 1):
        lo, hi = lens.trajectory.sigma_range
        c = lens.trajectory.state(rng.uniform(lo + 0.3 * (hi - lo), hi - 0.3 * (hi - lo)))[:3]
        c = c + rng.uniform(-0.05, 0.05, 3)
        r = 0.15
        if not mink_oracle.domain.is_interior_ball(Ball(c, r)):
            continue
        worst = max(worst, abs(mink_oracle.line_integral(lens, make_exact_form(c, r, rng.uniform(-3, 3), mink_oracle.domain))))
    assert worst <= 1e-10


def test_exact_form_zero_amplitude_and_closedness():
    c, r = np.array([2.0, 0.0, 0.0]), 0.4
    assert np.all(ExactForm(c, r, 0.0)(c + 0.1) == 0.0)
    f = ExactForm(c, r, 1.5)
    x, h = c + np.array([0.1, -0.05, 0.12]), 1e-4
    J = np.empty((3, 3))  # J[i, j] = d_i A_j
    for i in range(3):
        e = np.eye(3)[i] * h
        J[i] = (f(x + e) - f(x - e)) / (2 * h)
    curl = J - J.T
    assert np.max(np.abs(curl)) < 1e-6
    assert np.max(np.abs(J)) > 1.0


def test_exact_form_rejects_boundary_support(minkowski):
    with pytest.raises(PreconditionError):
        make_exact_form([2.0, 0.9, 0.0], 0.2, 1.0, minkowski.domain)


def test_sym_tensor_modes(minkowski):
    c, r = np.array([2.0, 0.0, 0.0]), 0.3
    x = c + np.array([0.05, 0.1, -0.05])
    null = np.array([1.0, 0.6, 0.8])
    conf = make_sym_tensor("conformal", c, r, 2.0, metric=minkowski.metric)
    assert abs(null @ conf(x) @ null) < 1e-15
    ro = make_sym_tensor("rank_one", c, r, beta=[1.0, 0.0, 0.0])
    phi = float(bump.radial_bump(x, c, r))
    assert null @ ro(x) @ null == pytest.approx(phi * null[0] ** 2, rel=1e-14) and phi > 0
    sg = make_sym_tensor("semi_geodesic", c, r)
    assert np.allclose(sg(x), minkowski.metric.eval(x) @ np.diag([phi, 0.0, 0.0]), atol=1e-16)
    with pytest.raises(ValueError):
        make_sym_tensor("matrix", c, r, matrix=[[1.0, 2.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(ValueError):
        make_sym_tensor("rank_one", c, r)
    with pytest.raises(ValueError):
        make_sym_tensor("bogus", c, r)


def fd_ck_reference(fn, center, radius, k, points=21):
    """Loop based second order differences on the same lattice."""
    ax = [np.linspace(ci - radius, ci + radius, points) for ci in center]
    X = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1)
    F = np.asarray(fn(X), float)
    dx = 2 * radius / (points - 1)

    def diff(A, axis):
        A = np.moveaxis(A, axis, 0)
        out = np.empty_like(A)
        out[1:-1] = (A[2:] - A[:-2]) / (2 * dx)
        out[0] = (-3 * A[0] + 4 * A[1] - A[2]) / (2 * dx)
        out[-1] = (3 * A[-1] - 4 * A[-2] + A[-3]) / (2 * dx)
        return np.moveaxis(out, 0, axis)

    best = float(np.max(np.abs(F)))
    frontier = [F]
    for _ in range(k):
        frontier = [diff(A, ax_) for A in frontier for ax_ in range(3)]
        best = max(best, max(float(np.max(np.abs(A))) for A in frontier))
    return best


def test_ck_norm_values():
    c, r = np.zeros(3), 0.1
    f = make_bump_scalar(c, r)
    assert ck_norm(f, 0) == np.exp(-1.0)
    for k in (1, 2):
        assert ck_norm(f, k) == pytest.approx(fd_ck_reference(lambda X: bump.radial_bump(X, c, r), c, r, k), rel=1e-12)
    vals = [ck_norm(f, k) for k in range(5)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert ck_norm(make_bump_scalar(c, r, 0.0), 2) == 0.0
    with pytest.raises(ValueError):
        ck_norm(f, 5)


@given(st.floats(-50, 50).filter(lambda c: abs(c) > 1e-6), st.integers(0, 3))
def test_ck_norm_homogeneity(c, k):
    f = LocalizedOneForm(np.array([2.0, 0.1, 0.0]), 0.2, [0.3, -0.7, 0.2])
    assert ck_norm(f.scaled(c), k) == pytest.approx(abs(c) * ck_norm(f, k), rel=1e-12)


@pytest.mark.parametrize("kind", ["one_form", "sym_tensor", "exact"])
def test_sampler_bound_and_determinism(kind):
    s = GenericSampler(kind, np.array([2.0, 0.0, 0.1]), 0.1, delta=0.5, seed=3, stream=(1, 2))
    a, b = sample_generic(s, 100), sample_generic(GenericSampler(kind, np.array([2.0, 0.0, 0.1]), 0.1, delta=0.5, seed=3, stream=(1, 2)), 100)
    X = np.array([2.02, 0.03, 0.08])
    for fa, fb in zip(a, b):
        assert np.array_equal(fa(X), fb(X))
    assert max(ck_norm(f, 2) for f in a) <= 0.5
    if kind != "exact":
        other = sample_generic(GenericSampler(kind, np.array([2.0, 0.0, 0.1]), 0.1, delta=0.5, seed=4, stream=(1, 2)), 1)[0]
        assert not np.array_equal(other(X), a[0](X))
    else:
        # exact samples sit on the norm bound and only their sign is random
        signs = {float(np.sign(f(X)[0])) for f in a}
        assert signs == {-1.0, 1.0}


def test_sampler_trace_free(minkowski):
    c = np.array([2.0, 0.0, 0.1])
    g = minkowski.metric.eval(c)
    for h in GenericSampler("sym_tensor", c, 0.1, trace_free_metric=g, seed=1).fields(20):
        assert abs(np.trace(np.linalg.solve(g, h(c)))) < 1e-14


def test_sampler_rejects_bad_input():
    with pytest.raises(ValueError):
        GenericSampler("one_form", np.zeros(3), 0.1, delta=0.0)
    with pytest.raises(ValueError):
        GenericSampler("vector", np.zeros(3), 0.1)


def test_sampler_genericity(mink_oracle, chord):
    s0, _ = mid_window(chord)
    c = chord.trajectory.state(s0)[:3]
    fields = GenericSampler("sym_tensor", c, 0.1, seed=0).fields(100)
    hits = [abs(mink_oracle.first_variation_metric(h, *PROBE).value) > 1e-6 for h in fields]
    assert np.mean(hits) >= 0.95
