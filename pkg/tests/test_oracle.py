import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from magcalderon import bump
from magcalderon.bicharacteristics import LensResult
from magcalderon.geometry import OneFormField, PreconditionError, ScalarField
from magcalderon.oracle import ElectromagneticScenario, SymbolOracle, simpson
from magcalderon.perturbations import (
    ExactForm,
    GenericSampler,
    LocalizedOneForm,
    make_aligned_one_form,
    make_sym_tensor,
)
from magcalderon.scenarios import get_scenario

PROBE = (np.array([1.5, -1.0, 0.0]), np.array([-1.0, 0.0, 0.3]))
CENTER = np.array([2.5, 0.0, 0.0])


def on_probe(oracle, frac=0.5):
    lens = oracle.trace(*PROBE)
    lo, hi = lens.trajectory.sigma_range
    return lens, lens.trajectory.state(lo + frac * (hi - lo))[:3]


def generic(form):
    """Same field without the separable fast path."""
    return OneFormField(lambda X: form(X), form.support, 3, name="generic")


def test_simpson_exact_and_smooth():
    assert simpson(lambda s: s**3 - s, 0.0, 2.0) == pytest.approx(2.0, abs=1e-14)
    assert simpson(np.sin, 0.0, np.pi, tol=1e-12) == pytest.approx(2.0, abs=1e-11)
    vec = simpson(lambda s: np.stack([s, s * s], axis=1), 0.0, 1.0)
    assert np.allclose(vec, [0.5, 1.0 / 3.0])


def test_zero_difference_gives_unit_ratio(mink_oracle):
    _, c = on_probe(mink_oracle)
    r = mink_oracle.phase_ratio(LocalizedOneForm(c, 0.1, [1.0, 0.0, 0.0], 0.0), *PROBE)
    assert r.value == 1.0 and not r.detected


def test_exact_form_ratio(mink_oracle):
    _, c = on_probe(mink_oracle)
    r = mink_oracle.phase_ratio(ExactForm(c, 0.2, 2.5), *PROBE)
    assert abs(r.value - 1.0) <= 1e-9


@pytest.mark.parametrize("name", ["minkowski-disk", "warped-disk"])
@pytest.mark.parametrize("C", [4.0, 20.0])
def test_aligned_ratio(oracle_for, name, C):
    orc = oracle_for(name)
    lens = orc.trace(*PROBE)
    lo, hi = lens.trajectory.sigma_range
    s0, eps = 0.5 * (lo + hi), 0.1 * (hi - lo)
    form = make_aligned_one_form(lens.trajectory, s0, eps, C, 0.05, metric=orc.metric, domain=orc.domain)
    # independent quadrature of the pulled back profile
    ref, _ = integrate.quad(lambda t: float(bump.profile(t / eps)) / (eps * bump.one_d_mass()), -eps, eps, epsabs=1e-14)
    r = orc.phase_ratio(form, *PROBE)
    assert abs(r.value - np.exp(1j * ref / C)) <= 1e-8


def test_separable_route_matches_generic(oracle_for):
    orc = oracle_for("warped-disk")
    lens, c = on_probe(orc)
    form = LocalizedOneForm(c + 0.03, 0.12, [0.4, -1.0, 0.7], 1.3)
    assert orc.em_phase(lens, form) == pytest.approx(orc.line_integral(lens, generic(form)), abs=1e-9)
    h = make_sym_tensor("matrix", c, 0.12, 0.7, matrix=[[1.0, 0.2, 0.0], [0.2, -0.5, 0.3], [0.0, 0.3, 0.9]])
    slow = make_sym_tensor("conformal", c, 0.12, 1.0, metric=orc.metric)
    assert orc.metric_variation(lens, h) == pytest.approx(
        orc.metric_variation(lens, type(h)(lambda X: h(X), c, 0.12, 0.7, "matrix", None)), abs=1e-9
    )
    assert abs(orc.metric_variation(lens, slow)) <= 1e-10


form_params = st.tuples(
    st.floats(0.0, 1.0), st.floats(0.08, 0.2), st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.floats(-3, 3)
)


@given(form_params, form_params)
def test_ratio_modulus_and_additivity(pa, pb):
    orc = _warped_oracle()
    lens = orc.trace(*PROBE)
    lo, hi = lens.trajectory.sigma_range

    def build(p):
        frac, r, beta, amp = p
        c = lens.trajectory.state(lo + (0.25 + 0.5 * frac) * (hi - lo))[:3]
        return LocalizedOneForm(c, r, beta, amp)

    A, B = build(pa), build(pb)
    ratio = orc.phase_ratio(A, *PROBE)
    assert abs(abs(ratio.value) - 1.0) <= 1e-10
    qa, qb = orc.em_phase(lens, A), orc.em_phase(lens, B)
    qab = orc.line_integral(lens, OneFormField(lambda X: A(X) + B(X), None, 3))
    assert qa + qb == pytest.approx(qab, abs=1e-9)


_WARPED = {}


def _warped_oracle():
    if "o" not in _WARPED:
        _WARPED["o"] = SymbolOracle(ElectromagneticScenario.from_scenario(get_scenario("warped-disk")))
    return _WARPED["o"]


@pytest.mark.parametrize("factor", [0.5, 3.0])
def test_parametrization_independence(factor):
    orc = _warped_oracle()
    lens, c = on_probe(orc)
    form = generic(LocalizedOneForm(c, 0.15, [0.2, 1.0, -0.5], 2.0))
    re = LensResult(lens.out, lens.travel_parameter * factor, lens.transversal, lens.trajectory.reparametrized(factor))
    assert orc.line_integral(re, form) == pytest.approx(orc.line_integral(lens, form), abs=1e-9)
    h = make_sym_tensor("rank_one", c, 0.15, beta=[1.0, 0.3, 0.0])
    # h^{jk} xi_j xi_k ds scales like 1 / factor under xi -> xi / factor
    assert factor * orc.metric_variation(re, h) == pytest.approx(orc.metric_variation(lens, h), abs=1e-9)


def test_gauge_invariance_random_exact_forms(mink_oracle):
    rng = np.random.default_rng(9)
    lens = mink_oracle.trace(*PROBE)
    lo, hi = lens.trajectory.sigma_range
    worst = 0.0
    for _ in range(50):
        c = lens.trajectory.state(rng.uniform(lo + 0.35 * (hi - lo), hi - 0.35 * (hi - lo)))[:3] + rng.uniform(-0.1, 0.1, 3)
        form = ExactForm(c, rng.uniform(0.1, 0.25), rng.uniform(-5, 5))
        worst = max(worst, abs(mink_oracle.phase_ratio(form, *PROBE).value - 1.0))
    assert worst <= 1e-8


def test_full_symbol_past_pointing(minkowski):
    orc = SymbolOracle(ElectromagneticScenario.from_scenario(minkowski))
    fs = orc.full_principal_symbol([4.5, -1.0, 0.0], [1.0, 0.0, 0.0], k=1, time_orientation="past")
    assert fs.xi_n_entry == pytest.approx(1.0, abs=1e-12) and fs.xi_n_exit == pytest.approx(1.0, abs=1e-9)
    assert fs.sign == 1
    assert abs(fs.amplitude - (-2j)) <= 1e-9
    fut = orc.full_principal_symbol([0.5, -1.0, 0.0], [-1.0, 0.0, 0.0], k=1)
    assert abs(fut.amplitude - 2j) <= 1e-9
    with pytest.raises(ValueError):
        orc.full_principal_symbol([0.5, -1.0, 0.0], [-1.0, 0.0, 0.0], k=0)
    with pytest.raises(ValueError):
        orc.full_principal_symbol([0.5, -1.0, 0.0], [-1.0, 0.0, 0.0], k=1, time_orientation="past")


def test_full_symbol_background_dependence(minkowski):
    x, xi = [0.5, -1.0, 0.0], [-1.0, 0.0, 0.4]
    base = SymbolOracle(ElectromagneticScenario.from_scenario(minkowski)).full_principal_symbol(x, xi, 1)
    ex = SymbolOracle(ElectromagneticScenario.from_scenario(minkowski, background=ExactForm(np.array([1.5, 0.0, 0.1]), 0.4, 3.0)))
    assert abs(ex.full_principal_symbol(x, xi, 1).amplitude - base.amplitude) <= 1e-9
    orc = SymbolOracle(ElectromagneticScenario.from_scenario(minkowski))
    lens = orc.trace(x, xi, 1)
    lo, hi = lens.trajectory.legs[0].sigma[[0, -1]]
    al = make_aligned_one_form(lens.trajectory, 0.5 * (lo + hi), 0.1 * (hi - lo), 3.0, 0.05, metric=minkowski.metric)
    closed = SymbolOracle(ElectromagneticScenario.from_scenario(minkowski, background=al)).full_principal_symbol(x, xi, 1)
    assert abs(closed.amplitude) == pytest.approx(abs(base.amplitude), abs=1e-12)
    assert closed.background_phase == pytest.approx(1.0 / 3.0, abs=1e-8)
    assert closed.normalized == pytest.approx(base.normalized * np.exp(1j / 3.0), abs=1e-8)


def test_first_variation_cases(mink_oracle, minkowski):
    lens, c = on_probe(mink_oracle)
    conf = make_sym_tensor("conformal", c, 0.2, 3.0, metric=minkowski.metric)
    fv = mink_oracle.first_variation_metric(conf, *PROBE)
    assert abs(fv.value) <= 1e-10 and not fv.detected
    ro = make_sym_tensor("rank_one", c, 0.2, beta=[1.0, 0.0, 0.0])
    assert mink_oracle.first_variation_metric(ro, *PROBE).value > 1e-3
    far = make_sym_tensor("rank_one", [2.5, 0.0, 0.7], 0.2, beta=[1.0, 0.0, 0.0])
    assert float(lens.trajectory.distance_to([[2.5, 0.0, 0.7]])[0]) > 0.3
    fv = mink_oracle.first_variation_metric(far, *PROBE)
    assert fv.value == 0.0 and not fv.detected


def test_first_variation_quadrature_oracle(mink_oracle):
    # flat chord: xi is constant, so I = (beta . g^-1 xi)^2 int phi ds
    lens, c = on_probe(mink_oracle)
    beta = np.array([1.0, 0.5, 0.0])
    h = make_sym_tensor("rank_one", c, 0.2, beta=beta)
    xi = lens.trajectory.xi[0]
    u = np.diag([-1.0, 1.0, 1.0]) @ xi
    v = 2.0 * u
    x0 = lens.trajectory.x[0]
    speed = np.linalg.norm(v)
    ref, _ = integrate.quad(lambda s: float(bump.radial_bump(x0 + s * v, c, 0.2)), 0.0, 2.0 * np.linalg.norm(x0 - c) / speed, points=[np.dot(c - x0, v) / speed**2], epsabs=1e-13)
    assert mink_oracle.first_variation_metric(h, *PROBE).value == pytest.approx((beta @ u) ** 2 * ref, abs=1e-9)


def test_wavefront_flag(mink_oracle, minkowski):
    lens, c = on_probe(mink_oracle)
    assert not mink_oracle.wavefront_flag(make_sym_tensor("conformal", c, 0.15, metric=minkowski.metric), *PROBE)
    assert not mink_oracle.wavefront_flag(make_sym_tensor("rank_one", [2.5, 0.0, 0.7], 0.2, beta=[1.0, 0.0, 0.0]), *PROBE)
    fields = GenericSampler("sym_tensor", c, 0.1, seed=2, trace_free_metric=minkowski.metric.eval(c)).fields(60)
    assert np.mean([mink_oracle.wavefront_flag(h, *PROBE) for h in fields]) >= 0.95


def test_rejects_boundary_supported(mink_oracle):
    with pytest.raises(PreconditionError):
        mink_oracle.phase_ratio(LocalizedOneForm([2.0, 0.95, 0.0], 0.1, [1.0, 0.0, 0.0]), *PROBE)
    with pytest.raises(PreconditionError):
        mink_oracle.phase_ratio(OneFormField(lambda X: np.zeros(X.shape), None, 3), *PROBE)


def test_potential_does_not_enter(minkowski):
    q = ScalarField(lambda X: 7.0 + X[..., 0], None, 3, name="q")
    a = SymbolOracle(ElectromagneticScenario.from_scenario(minkowski))
    b = SymbolOracle(ElectromagneticScenario.from_scenario(minkowski, potential=q))
    lens, c = on_probe(a)
    form = LocalizedOneForm(c, 0.1, [0.3, 0.2, 1.0])
    h = make_sym_tensor("rank_one", c, 0.1, beta=[1.0, 0.2, 0.0])
    assert a.phase_ratio(form, *PROBE).value == b.phase_ratio(form, *PROBE).value
    assert a.first_variation_metric(h, *PROBE).value == b.first_variation_metric(h, *PROBE).value
    assert a.full_principal_symbol(*PROBE, k=1).amplitude == b.full_principal_symbol(*PROBE, k=1).amplitude


def test_log_export(tmp_path, minkowski):
    orc = SymbolOracle(ElectromagneticScenario.from_scenario(minkowski), record=True)
    _, c = on_probe(orc)
    orc.phase_ratio(LocalizedOneForm(c, 0.1, [1.0, 0.0, 0.0]), *PROBE)
    orc.first_variation_metric(make_sym_tensor("rank_one", c, 0.1, beta=[1.0, 0.0, 0.0]), *PROBE)
    path = tmp_path / "log.jsonl"
    orc.export_log(path)
    recs = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["kind"] for r in recs] == ["phase_ratio", "first_variation"]
    assert len(recs[0]["value"]) == 2 and set(recs[0]["covector"]) == {"x", "xi"}
