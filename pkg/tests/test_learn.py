import math

import numpy as np
import pytest
from scipy import integrate, optimize, stats
from sklearn.preprocessing import StandardScaler
from sklearn.svm import SVC, SVR

from otoclab.learn.datasets import (ClassRecipe, Dataset, add_noise, feature_name, generate_dataset,
                                    geometry_feature_specs, link_feature_specs, parallel_map,
                                    probe_feature_specs)
from otoclab.learn.features import (DegenerateFeatureWarning, JSFeatureSelector, gaussian_js_divergence,
                                    js_feature_score, js_feature_scores)
from otoclab.learn.model_selection import build_model, cross_validate, feature_counts, make_folds
from otoclab.learn.svm import KernelSVC, KernelSVR, rbf_kernel, solve_dual
from otoclab.learn.tasks import (ABOVE_GRID, ProbeTaskConfig, WeakLinkTaskConfig, fit_and_score,
                                 interpolate_threshold, run_probe_distance_task, run_weak_link_task)
from otoclab.correlate import CorrelatorSpec
from otoclab.system import crossed_chains, weak_link_ring


def js_reference(means, stds):
    """Direct quadrature of the mixture JS divergence on a wide window."""
    comps = [stats.norm(m, s) for m, s in zip(means, stds)]
    lo = min(means) - 12 * max(stds)
    hi = max(means) + 12 * max(stds)

    def mix(z):
        return np.mean([c.pdf(z) for c in comps])

    total = 0.0
    for c in comps:
        def f(z, c=c):
            p = c.pdf(z)
            return p * math.log(p / mix(z)) if p > 0 else 0.0
        total += integrate.quad(f, lo, hi, limit=500, points=list(means))[0]
    return total / len(comps)


# -- Jensen-Shannon ---------------------------------------------------------------


def test_js_identical_is_zero():
    assert abs(gaussian_js_divergence([0.3, 0.3], [1.2, 1.2])) < 1e-6
    assert abs(gaussian_js_divergence([1.0, 1.0, 1.0], [0.1, 0.1, 0.1])) < 1e-6


@pytest.mark.parametrize("means,stds", [
    ([0.0, 1.0], [1.0, 1.0]),
    ([0.0, 4.0], [1.0, 1.0]),
    ([0.0, 0.5], [0.3, 2.0]),
    ([-1.0, 0.0, 2.0], [0.5, 1.0, 0.7]),
])
def test_js_matches_quadrature(means, stds):
    assert gaussian_js_divergence(means, stds) == pytest.approx(js_reference(means, stds), abs=1e-6)


def test_js_monotone_and_bounded():
    seps = np.linspace(0, 6, 13)
    vals = [gaussian_js_divergence([0, s], [1, 1]) for s in seps]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[8] >= 0.6  # 4 sigma apart
    assert vals[-1] <= math.log(2) + 1e-12
    assert gaussian_js_divergence([0, 50, 100], [1, 1, 1]) == pytest.approx(math.log(3), abs=1e-6)


def test_js_validation():
    for means, stds in (([0.0], [1.0]), ([0, 1], [1, 0]), ([0, 1], [1])):
        with pytest.raises(ValueError):
            gaussian_js_divergence(means, stds)


def test_separating_feature_ranks_first():
    rng = np.random.default_rng(0)
    for _ in range(100):
        y = np.repeat([0, 1], 20)
        X = rng.normal(size=(40, 6))
        X[:, 4] += 4 * y
        scores, degenerate = js_feature_scores(X, y)
        assert int(np.argmax(scores)) == 4 and not degenerate.any()


def test_single_column_and_variance_floor():
    y = np.repeat([0, 1], 5)
    col = np.r_[np.zeros(5), np.ones(5)]
    with pytest.warns(DegenerateFeatureWarning):
        sel = JSFeatureSelector(1).fit(np.c_[col, np.arange(10.0)], y)
    assert sel.degenerate_[0] and np.isfinite(sel.scores_).all()
    score, flag = js_feature_score(col, y)
    assert flag and score == pytest.approx(math.log(2), abs=1e-6)


def test_selector_keeps_top_k():
    rng = np.random.default_rng(1)
    y = np.repeat([0, 1], 30)
    X = rng.normal(size=(60, 5))
    X[:, 1] += 3 * y
    X[:, 3] += 1.5 * y
    sel = JSFeatureSelector(2).fit(X, y)
    assert list(np.flatnonzero(sel.get_support())) == [1, 3]
    assert sel.transform(X).shape == (60, 2)
    sel.set_params(k="all")
    assert sel.get_support().all()
    with pytest.raises(ValueError):
        JSFeatureSelector(9).fit(X, y)


# -- dual solver and kernel machines -----------------------------------------------


def qp_reference(Q, p, y, C):
    n = len(p)
    res = optimize.minimize(lambda a: 0.5 * a @ Q @ a + p @ a, np.zeros(n), jac=lambda a: Q @ a + p,
                            bounds=[(0, C)] * n, constraints=[{"type": "eq", "fun": lambda a: y @ a,
                                                               "jac": lambda a: y}],
                            method="SLSQP", options={"ftol": 1e-14, "maxiter": 1000})
    return res.fun


@pytest.mark.parametrize("seed", range(5))
def test_smo_matches_generic_qp(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(14, 2))
    y = np.where(X[:, 0] + 0.5 * rng.normal(size=14) > 0, 1.0, -1.0)
    C = 2.0
    Q = y[:, None] * y[None, :] * rbf_kernel(X, X, 0.7)
    sol = solve_dual(Q, -np.ones(14), y, C, tol=1e-9)
    assert sol.converged and sol.gap < 1e-9
    assert sol.objective == pytest.approx(qp_reference(Q, -np.ones(14), y, C), abs=1e-6)
    assert abs(y @ sol.alpha) < 1e-9 and sol.alpha.min() >= 0 and sol.alpha.max() <= C


def test_smo_iteration_cap_warns():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 2))
    y = np.where(rng.random(30) > 0.5, 1.0, -1.0)
    Q = y[:, None] * y[None, :] * rbf_kernel(X, X, 1.0)
    with pytest.warns(Warning):
        sol = solve_dual(Q, -np.ones(30), y, 10.0, tol=1e-12, max_iter=3)
    assert not sol.converged and sol.n_iter == 3
    with pytest.raises(ValueError):
        solve_dual(Q, -np.ones(30), y, 0.0)


def test_xor_is_fit_exactly():
    X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    y = np.array([0, 0, 1, 1])
    clf = KernelSVC(C=10, gamma=1).fit(X, y)
    assert np.array_equal(clf.predict(X), y)
    assert clf.kkt_gap() < 1e-3


def test_separable_data():
    rng = np.random.default_rng(3)
    X = np.r_[rng.normal(-3, 0.5, (25, 3)), rng.normal(3, 0.5, (25, 3))]
    y = np.repeat(["a", "b"], 25)
    clf = KernelSVC(C=1, gamma=0.5).fit(X, y)
    assert clf.score(X, y) == 1.0
    assert np.all((clf.decision_function(X) > 0) == (y == "b"))


def test_svc_matches_reference_implementation():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(60, 4))
    y = (X[:, 0] * X[:, 1] + 0.3 * rng.normal(size=60) > 0).astype(int)
    Z = StandardScaler().fit_transform(X)
    ref = SVC(C=3.0, gamma=0.4, tol=1e-8).fit(Z, y)
    ours = KernelSVC(C=3.0, gamma=0.4, tol=1e-8).fit(X, y)
    test = rng.normal(size=(40, 4))
    zt = (test - X.mean(0)) / X.std(0)
    assert np.allclose(ours.decision_function(test), ref.decision_function(zt), atol=1e-5)


def test_multiclass_one_vs_one():
    rng = np.random.default_rng(5)
    centers = np.array([[0, 0], [4, 0], [0, 4]])
    X = np.vstack([c + 0.4 * rng.normal(size=(15, 2)) for c in centers])
    y = np.repeat([7, 8, 9], 15)
    clf = KernelSVC(C=10, gamma=1).fit(X, y)
    assert len(clf.machines_) == 3 and clf.score(X, y) == 1.0
    Z = StandardScaler().fit_transform(X)
    ref = SVC(C=10, gamma=1, tol=1e-6).fit(Z, y)
    assert np.array_equal(clf.predict(X), ref.predict(Z))


def test_svr_matches_reference_implementation():
    rng = np.random.default_rng(6)
    X = rng.uniform(-2, 2, size=(50, 2))
    y = np.sin(X[:, 0]) + 0.5 * X[:, 1]
    Z = StandardScaler().fit_transform(X)
    ref = SVR(C=10.0, gamma=0.5, epsilon=0.05, tol=1e-8).fit(Z, y)
    ours = KernelSVR(C=10.0, gamma=0.5, epsilon=0.05, tol=1e-8).fit(X, y)
    assert np.allclose(ours.predict(X), ref.predict(Z), atol=1e-5)
    assert ours.intercept_ == pytest.approx(ref.intercept_[0], abs=1e-5)


def test_estimator_validation():
    with pytest.raises(ValueError):
        KernelSVC(C=-1).fit(np.zeros((4, 1)), [0, 1, 0, 1])
    with pytest.raises(ValueError):
        KernelSVC().fit(np.zeros((4, 1)), [0, 0, 0, 0])
    with pytest.raises(ValueError):
        KernelSVR(epsilon=-0.1).fit(np.zeros((4, 1)), np.zeros(4))


# -- model selection ---------------------------------------------------------------


def test_feature_counts():
    assert feature_counts((8, 32, 128, "all"), 40) == [8, 32, "all"]
    assert feature_counts((8, 32), 5) == ["all"]


def test_folds_are_stratified_and_seeded():
    y = np.repeat([0, 1, 2], 10)
    folds = make_folds(y, 5, 3, True)
    assert all(np.bincount(y[val]).tolist() == [2, 2, 2] for _, val in folds)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(folds, make_folds(y, 5, 3, True)))


def test_cv_tie_breaking():
    rng = np.random.default_rng(7)
    X = np.r_[rng.normal(-5, 0.3, (20, 2)), rng.normal(5, 0.3, (20, 2))]
    y = np.repeat([0, 1], 20)
    cv = cross_validate(X, y, {"C": (10.0, 1.0), "gamma": (3.0, 0.3)}, n_folds=4)
    assert cv.best_score == 1.0 and cv.best_params == {"C": 1.0, "gamma": 0.3, "k": "all"}
    assert len(cv.scores) == 4


def test_cv_regression_uses_negative_mae():
    rng = np.random.default_rng(8)
    X = rng.uniform(0, 1, (40, 1))
    y = 3 * X[:, 0]
    cv = cross_validate(X, y, {"C": (10.0,), "gamma": (1.0,)}, "regressor", n_folds=4)
    assert -0.2 < cv.best_score <= 0
    with pytest.raises(ValueError):
        build_model("regressor", {"C": 1, "gamma": 1, "k": 4})
    with pytest.raises(ValueError):
        build_model("ranker", {"C": 1, "gamma": 1})
    with pytest.raises(ValueError):
        cross_validate(X, y, {"C": ()}, "regressor")


def test_cv_selects_informative_columns():
    rng = np.random.default_rng(9)
    y = np.repeat([0, 1], 30)
    X = rng.normal(size=(60, 40))
    X[:, 5] += 4 * y
    cv = cross_validate(X, y, {"C": (1.0,), "gamma": (0.3,), "k": (2, "all")}, n_folds=3)
    assert cv.best_params["k"] == 2 and cv.best_score > 0.9


# -- datasets ----------------------------------------------------------------------


def toy(ids, names=("a", "b"), label=0):
    return Dataset(np.ones((len(ids), len(names))), [label] * len(ids), ids, names, [False, True])


def test_dataset_concatenate_and_columns():
    both = Dataset.concatenate([toy(["c0-r0", "c0-r1"]), toy(["c1-r0"], label=1)])
    assert len(both) == 3 and both.y.tolist() == [0, 0, 1]
    assert both.columns(otoc=False).feature_names == ("a",)
    assert both.relabel({0: "x", 1: "y"}).y.tolist() == ["x", "x", "y"]
    assert both.subset([2]).realization.tolist() == ["c1-r0"]
    with pytest.raises(ValueError):
        Dataset.concatenate([toy(["c0-r0"]), toy(["c0-r0"])])
    with pytest.raises(ValueError):
        Dataset.concatenate([toy(["c0-r0"]), toy(["c0-r1"], names=("a", "c"))])
    with pytest.raises(ValueError):
        Dataset(np.ones((2, 3)), [0, 1], ["p", "q"], ("a", "b"), [True, False])


def test_feature_names_and_spec_builders():
    assert feature_name(CorrelatorSpec("LocalOTOC", 2.0, site_x=3)) == "LocalOTOC:ZZ:x=3:t=2"
    specs = probe_feature_specs(4, [1.0, 2.0])
    assert len(specs) == 2 * (2 * (1 + 3) + 3)
    assert len(probe_feature_specs(4, [1.0], otoc=False)) == 8
    geom = weak_link_ring(6)
    link = link_feature_specs(geom, [1.0], radius=1)
    assert all(s.family.startswith("TwoPoint") for s in link)
    near = link_feature_specs(geom, [1.0], radius=2, max_pair_distance=1)
    assert len(near) < len(link_feature_specs(geom, [1.0], radius=2))
    glob = geometry_feature_specs([1.0], [0.5])
    assert [s.family for s in glob] == ["GlobalTOC"] * 4 + ["GlobalOTOC"]


def test_simulation_is_deterministic_and_split():
    recipes = [ClassRecipe(d, crossed_chains(5, d), d) for d in (0, 2)]
    specs = probe_feature_specs(5, [1.0, 2.0])
    a = generate_dataset(recipes, specs, 2, 1, delta=0.03, seed=4, n_psi=2)
    b = generate_dataset(recipes, specs, 2, 1, delta=0.03, seed=4, n_psi=2)
    assert np.array_equal(a["train"].X, b["train"].X) and np.array_equal(a["test"].X, b["test"].X)
    assert not set(a["train"].realization) & set(a["test"].realization)
    assert a["train"].provenance["delta"] == 0.03
    assert a["train"].otoc_mask.sum() == 2 * 4


def test_noise_is_independent_of_row_order():
    data = toy(["c0-r0", "c0-r1", "c1-r0"])
    noisy = add_noise(data, 0.1, 3)
    flipped = add_noise(data.subset([2, 1, 0]), 0.1, 3)
    assert np.array_equal(noisy.X[::-1], flipped.X)
    assert np.array_equal(add_noise(data, 0.0).X, data.X)
    with pytest.raises(ValueError):
        add_noise(data, -0.1)


def test_parallel_map_preserves_order():
    assert parallel_map(abs, [-3, 2, -1], workers=2) == [3, 2, 1]


# -- tasks -------------------------------------------------------------------------


def test_interpolate_threshold():
    assert interpolate_threshold([0.1, 0.3, 1.0], [0.5, 0.8, 1.0]) == pytest.approx(0.3 + 0.5 * 0.7)
    assert interpolate_threshold([0.1, 0.3], [0.95, 0.99]) == 0.1
    assert interpolate_threshold([0.1, 0.3], [0.95, 0.5]) == ABOVE_GRID
    # a dip after a first crossing moves the threshold past the dip
    assert interpolate_threshold([1, 2, 3, 4], [0.95, 0.7, 0.9, 1.0]) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        interpolate_threshold([1, 1], [0.5, 0.6])


def test_fit_and_score_rejects_shared_realizations():
    data = toy(["c0-r0", "c0-r1"])
    with pytest.raises(ValueError):
        fit_and_score(data, data, "classifier", {"C": (1.0,), "gamma": (1.0,)})


def test_probe_task_separates_extreme_distances():
    # noiseless, d in {0, L - 2}, early times: the OTOC columns pin down d
    n = 6
    config = ProbeTaskConfig(n_sites=n, d_values=(0, n - 2), n_train=20, n_test=10, times=(0.5, 0.75, 1.0),
                             delta=0.0, n_psi=4, seed=1, grid={"C": (10.0, 100.0), "gamma": (0.01, 0.03, 0.1)})
    report = run_probe_distance_task(config)
    assert report.mae["TOC+OTOC"] < 0.5 < report.mae["TOC"]
    near, far = (report.per_d["TOC+OTOC"][d][0] for d in (0, n - 2))
    assert near < 1 and far > n - 3
    rows = report.rows()
    assert {r["features"] for r in rows} == {"TOC", "TOC+OTOC"} and len(rows) == 4


def test_weak_link_task_strong_link_is_detected():
    config = WeakLinkTaskConfig(n_sites=6, links=(0.1, 1.0), n_train=30, n_test=20, times=(1.0,),
                                n_psi=4, seed=2, radius=1,
                                grid={"C": (1.0, 10.0), "gamma": (0.01, 0.1, 1.0), "k": (8, "all")})
    report = run_weak_link_task(config)
    assert report.accuracy[0.03]["TOC+OTOC"][1.0] >= 0.9
    assert len(report.rows()) == 4
    with pytest.raises(ValueError):
        run_weak_link_task(WeakLinkTaskConfig(links=()))
