import math

import numpy as np
import pytest

from otoclab.pheno import (PhenoParams, ScalingLaw, bump, butterfly_velocity, diffusion_constant,
                           error_decay_and_crossovers, fit_scaling, front, global_otoc, global_otoc_fi_max,
                           max_slope, otoc_fi_max, otoc_profile, perturbed_toc_derivative, perturbed_toc_term,
                           predicted_fi_scaling, toc_profiles, weak_link_fi, weak_link_otoc, weak_link_toc)


def test_shapes():
    assert bump(0.0) == 1.0 and bump(1.0) == 0.0 and bump(-1.5) == 0.0
    assert front(0.5) == 1.0 and front(-1.0) == 0.0 and front(-0.5) == bump(-0.5)
    # analytic maximum of |d/ds exp(1 - 1/(1 - s^2))|, located by a fine grid search
    s = np.linspace(0, 1, 2_000_001)[1:-1]
    deriv = np.exp(1 - 1 / (1 - s**2)) * 2 * s / (1 - s**2) ** 2
    assert abs(max_slope("bump") - deriv.max()) < 1e-6
    assert abs(max_slope("front") - max_slope("bump")) < 1e-6


def test_uniform_couplings_give_constant_velocities():
    p = PhenoParams(v_B=0.3, D=4.0, couplings=(0.8,) * 10)
    for x in (0.5, 1, 3.7, 10, 25):
        assert math.isclose(butterfly_velocity(x, p), 0.8)
    for t in (0.1, 2.0, 9.0):
        assert math.isclose(diffusion_constant(t, p), 0.8)


def test_velocity_is_harmonic_mean():
    p = PhenoParams(couplings=(1.0, 0.5, 2.0))
    assert math.isclose(butterfly_velocity(2.9, p), 2 / (1 + 2))
    assert math.isclose(butterfly_velocity(3, p), 3 / (1 + 2 + 0.5))


def test_profile():
    p = PhenoParams(v_B=1.0, A=0.5)
    assert otoc_profile(1.0, 40.0, p) == 0.0  # deep inside the spread operator
    assert otoc_profile(5.0, 5.0, p) == 1.0
    with pytest.raises(ValueError):
        otoc_profile(1.0, 0.0, p)


def test_profile_depends_on_coupling_only_beyond_it():
    base = (1.0, 0.9, 1.1, 1.2, 0.8, 1.0)
    bumped = list(base)
    bumped[2] *= 1.1  # bond d = 3
    p, q = PhenoParams(A=0.7, couplings=base), PhenoParams(A=0.7, couplings=tuple(bumped))
    for x in (0.5, 1.0, 2.0, 2.9):
        assert otoc_profile(x, x, p) == otoc_profile(x, x, q)
    assert any(otoc_profile(x, t, p) != otoc_profile(x, t, q) for x in (3.0, 4.5) for t in (2.5, 3.0, 4.0))


def test_toc_profiles():
    p = PhenoParams(D=2.0, gamma=1.0)
    assert math.isclose(toc_profiles(3.0, p, conserved=False), math.exp(-3))
    ts = np.array([1.0, 2.0, 4.0, 8.0])
    ys = [toc_profiles(t, p, conserved=True) for t in ts]
    assert abs(np.polyfit(np.log(ts), np.log(ys), 1)[0] + 0.5) < 1e-12
    with pytest.raises(ValueError):
        toc_profiles(0.0, p, True)


def test_perturbed_toc_term_peak_and_scaling():
    p = PhenoParams(D=1.5)
    for x in (2.0, 4.0):
        # q(x, t/2)^2 = exp(-2 x^2 / (D t)) / (pi D t) peaks at D t = 2 x^2
        ts = np.linspace(0.1, 20 * x * x, 20_001)
        vals = [perturbed_toc_term(x, t, p) for t in ts]
        t_best = ts[int(np.argmax(vals))]
        assert abs(p.D * t_best / (x * x) - 2) < 0.01
    peaks = []
    for d in (2.0, 4.0, 8.0):
        ts = d * d / p.D * np.linspace(1.0001, 10, 20_000)
        peaks.append(max(abs(perturbed_toc_derivative(d, t, d, p)) for t in ts))
    ratios = np.log2(np.array(peaks[:-1]) / peaks[1:])
    assert np.allclose(ratios, 3.0, atol=1e-3)
    assert perturbed_toc_derivative(3.0, 1.0, 3.0, p) == 0.0  # outside sqrt(D t)


def test_global_otoc():
    p = PhenoParams(v_B=0.7)
    assert global_otoc(3.0, 0.0, p) == 1.0
    t = 2.5
    phi = 1 / math.sqrt(p.v_B * t)
    assert math.isclose(global_otoc(t, phi, p), math.exp(-1))
    ts = np.array([0.5, 1.0, 2.0, 4.0])
    logs = np.log([global_otoc(t, 0.3, p) for t in ts])
    assert np.allclose(np.diff(logs) / np.diff(ts), -0.09 * 0.7)


def test_fi_forms_scale_with_distance():
    p = PhenoParams(v_B=1.3, A=0.6)
    assert math.isclose(otoc_fi_max(2.0, p) / otoc_fi_max(6.0, p), 3.0)
    assert math.isclose(global_otoc_fi_max(2.0, p) / global_otoc_fi_max(6.0, p), 9.0)


@pytest.mark.parametrize("key,model,exponent", [
    (("OTOC", "local", False), "power", -1.0),
    (("OTOC", "global", False), "power", -2.0),
    (("TOC", "local", True), "power", -4.0),
    (("TOC", "global", True), "power", -4.0),
    (("TOC", "local", False), "exponential", -1.0),
    (("TOC", "global", False), "exponential", -1.0),
])
def test_table_descriptors(key, model, exponent):
    law = predicted_fi_scaling(*key)
    assert (law.model, law.exponent) == (model, exponent)


def test_unknown_scenario():
    with pytest.raises(KeyError):
        predicted_fi_scaling("OTOC", "remote")


def test_weak_link_forms():
    ts = np.linspace(0.01, 5, 500_001)
    vals = np.array([weak_link_toc(t, 0.2, 1.3) for t in ts])
    assert abs(ts[vals.argmax()] - 1 / 1.3) < 1e-5
    assert math.isclose(vals.max(), (0.2 / 1.3) ** 2 / math.e, rel_tol=1e-9)
    assert weak_link_otoc(12.0, 0.2, 1.0, L=10) == 0.0
    assert math.isclose(weak_link_otoc(2.0, 0.2, 1.0, L=10), 0.08)
    assert math.isclose(weak_link_fi(0.1, "TOC"), 1e-4)
    assert math.isclose(weak_link_fi(0.1, "OTOC", L=10), 1e-2)


def test_error_model():
    p = PhenoParams(v_B=1.0, gamma=0.5, eps=0.01, J=1.0, L=10)
    model = error_decay_and_crossovers(p)
    assert math.isclose(model.otoc_decay(10.0), math.exp(-1))
    assert math.isclose(model.crossover_d, 50.0)
    assert math.isclose(model.t_star, 10.0)
    tiny = error_decay_and_crossovers(PhenoParams(eps=1e-12, J=1.0, L=10))
    assert tiny.crossover_d > 1e11 and tiny.t_star == 10.0
    # branches cross where sqrt(eps / J) = 1 / L
    eps = 1.0 / 100
    a, b = error_decay_and_crossovers(PhenoParams(eps=eps, J=1.0, L=10)).link_fi_branches(0.3)
    assert math.isclose(a, b)
    with pytest.raises(ValueError):
        error_decay_and_crossovers(PhenoParams(L=10))


def test_fit_scaling_exact():
    d = np.arange(1, 8, dtype=float)
    fit = fit_scaling(d, 1 / d, "power")
    assert abs(fit.exponent + 1) < 1e-10 and fit.r2 > 1 - 1e-12
    fit = fit_scaling(d, np.exp(-2 * d), "exponential")
    assert abs(fit.exponent + 2) < 1e-10 and abs(fit.r + 1) < 1e-12
    law = fit.law()
    assert np.allclose(law(d), np.exp(-2 * d))


def test_fit_scaling_errors_and_floor():
    d = np.arange(1, 6, dtype=float)
    with pytest.raises(ValueError):
        fit_scaling(d, -d)
    with pytest.raises(ValueError):
        fit_scaling(d, np.array([1, 1e-20, 1e-20, 1e-20, 1e-20]))
    fit = fit_scaling(d, np.array([1, 0.5, 1 / 3, 0.25, 0.0]))
    assert fit.n_used == 4 and abs(fit.exponent + 1) < 1e-10
    with pytest.raises(ValueError):
        ScalingLaw("linear", 1.0)


def test_params_validation():
    with pytest.raises(ValueError):
        PhenoParams(v_B=0.0)
    with pytest.raises(ValueError):
        PhenoParams(couplings=(1.0, -1.0))
