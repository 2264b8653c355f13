import math

import numpy as np
import pytest

import oracles
from otoclab.correlate import CorrelatorEngine, CorrelatorSpec
from otoclab.fisher import (correlator_derivative, derivative_samples, disorder_average_fisher,
                            extrapolate_fisher, fisher_by_class, fisher_curve, max_fisher)
from otoclab.system import chain, make_system, ring, weak_link_ring


def oracle_derivative(system, spec, edge, step=1e-5):
    j = system.coupling(edge)
    hi = oracles.correlator(system.with_coupling(edge, j + step), spec)
    lo = oracles.correlator(system.with_coupling(edge, j - step), spec)
    return (hi - lo) / (2 * step)


def split_system():
    # link (2, 3) at zero and bond (5, 0) cut: fragments {0, 1, 2} and {3, 4, 5}
    return make_system(weak_link_ring(6, probe=0), 2, weak_link=0.0).with_coupling((0, 5), 0.0)


@pytest.mark.parametrize("spec", [
    CorrelatorSpec("AutoTOC", 1.5, "X"),
    CorrelatorSpec("PerturbedTOC", 2.0, site_x=2),
    CorrelatorSpec("LocalOTOC", 2.5, site_x=3),
])
def test_derivative_matches_oracle(spec):
    system = make_system(ring(4), 6)
    got = correlator_derivative(system, spec, (1, 2), step=1e-3, exact=True)
    ref = oracle_derivative(system, spec, (1, 2))
    assert abs(got - ref) <= 1e-3 * abs(ref)


def test_disconnected_coupling_has_zero_derivative():
    system = split_system()
    spec = CorrelatorSpec("LocalOTOC", 3.0, site_x=1, n_psi=6)
    deriv = derivative_samples(system, [spec], (3, 4), seed=1, n_psi=6)
    assert np.abs(deriv).max() < 1e-9


def test_step_halving_is_second_order():
    system = make_system(ring(5), 3)
    spec = CorrelatorSpec("LocalOTOC", 2.0, site_x=2)
    d = [correlator_derivative(system, spec, (0, 1), step=h, exact=True) for h in (0.04, 0.02, 0.01)]
    assert abs(d[0] - d[1]) <= 4 * abs(d[1] - d[2]) + 1e-9
    assert abs(d[0] - d[1]) / abs(d[1] - d[2]) == pytest.approx(4.0, rel=0.05)


def test_causality_before_any_coupling_step():
    system = make_system(chain(6), 1)
    specs = [CorrelatorSpec("AutoTOC", t) for t in (0.1, 0.3, 0.5)]
    est = max_fisher(system, (4, 5), specs, exact=True)
    assert est.max_fi < 1e-20


def test_log_scale_identity():
    system = make_system(weak_link_ring(6, probe=0), 4, weak_link=0.3)
    specs = [CorrelatorSpec("AutoTOC", 3.0), CorrelatorSpec("LocalOTOC", 3.0, site_x=3)]
    lin = max_fisher(system, "link", specs, exact=True)
    log = max_fisher(system, "link", specs, exact=True, log_scale=True)
    assert np.allclose(log.values, 0.3**2 * lin.values, rtol=1e-12)


def test_fisher_is_nonnegative_and_split_by_class():
    system = make_system(ring(5), 5)
    specs = [CorrelatorSpec("AutoTOC", 2.0), CorrelatorSpec("LocalOTOC", 2.0, site_x=2)]
    out = fisher_by_class(system, (1, 2), specs, n_psi=6, seed=1)
    assert set(out) == {"TOC", "OTOC"}
    for est in out.values():
        assert np.all(est.values >= 0) and all(v >= 0 for v in est.curve.values())
        assert est.fi_inf >= 0


def test_common_random_numbers_reduce_variance():
    system = make_system(ring(6), 9)
    spec = CorrelatorSpec("LocalOTOC", 2.0, site_x=3)
    edge = (2, 3)
    j = system.coupling(edge)
    h = 1e-2
    crn, ind = [], []
    for rep in range(20):
        crn.append(derivative_samples(system, [spec], edge, h, seed=(rep,), n_psi=1)[0, 0])
        hi = CorrelatorEngine(system.with_coupling(edge, j + h), 1, (rep, 0)).estimate(spec).mean
        lo = CorrelatorEngine(system.with_coupling(edge, j - h), 1, (rep, 1)).estimate(spec).mean
        ind.append((hi - lo) / (2 * h))
    assert np.var(ind) >= 10 * np.var(crn)


def test_extrapolation_exact_and_constant():
    ns = [1, 2, 5, 10, 25]
    fit = extrapolate_fisher({n: 0.3 + 0.7 / n for n in ns})
    assert abs(fit.fi_inf - 0.3) < 1e-12 and abs(fit.slope - 0.7) < 1e-12 and fit.residual < 1e-12
    flat = extrapolate_fisher({n: 0.25 for n in ns})
    assert abs(flat.slope) < 1e-12 and abs(flat.fi_inf - 0.25) < 1e-12
    neg = extrapolate_fisher({n: -0.1 + 1 / n for n in ns})
    assert neg.clamped and neg.fi_inf == 0.0 and neg.raw_intercept == pytest.approx(-0.1)
    with pytest.raises(ValueError):
        extrapolate_fisher({1: 1.0, 2: 0.5})


def test_curve_full_sample_point():
    deriv = np.array([[1.0, 3.0, 2.0], [0.5, 0.5, 0.5]])
    curve = fisher_curve(deriv, n_subsets=4000)
    assert curve[3] == pytest.approx(4.0)
    # single-state subsets: mean of (1, 9, 4), biased above the full-sample value
    assert curve[1] == pytest.approx(14 / 3, rel=0.05)


def test_disorder_average():
    specs = [CorrelatorSpec("AutoTOC", 1.5), CorrelatorSpec("LocalOTOC", 1.5, site_x=2)]

    def build(r):
        return make_system(chain(4), 11, r)

    one = disorder_average_fisher(build, (1, 2), specs, 1, exact=True)
    single = fisher_by_class(build(0), (1, 2), specs, exact=True)
    for label in ("TOC", "OTOC"):
        assert one[label].max_fi == single[label].max_fi and math.isnan(one[label].stderr)
    small = disorder_average_fisher(build, (1, 2), specs, 40, exact=True)
    big = disorder_average_fisher(build, (1, 2), specs, 160, exact=True)
    for label in ("TOC", "OTOC"):
        ratio = small[label].stderr / big[label].stderr
        assert 1.4 < ratio < 2.8
        assert big[label].n_realizations == 160 and len(big[label].per_realization) == 160


def test_errors():
    system = make_system(ring(4), 0)
    spec = CorrelatorSpec("AutoTOC", 1.0)
    with pytest.raises(KeyError):
        correlator_derivative(system, spec, (0, 2))
    with pytest.raises(KeyError):
        correlator_derivative(system, spec, "link")
    with pytest.raises(ValueError):
        correlator_derivative(system, spec, (0, 1), step=0.0)
    with pytest.raises(ValueError):
        max_fisher(system, (0, 1), [])
