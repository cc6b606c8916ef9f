import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degpd.distributions import ModelSpec
from degpd.errors import ConfigurationError, DataError, UnavailableError
from degpd.gam import (
    GamFit,
    GamFormula,
    LAMBDA_GRID,
    assemble,
    effective_dof,
    fit_gam,
    loglik_gradient,
    penalized_loglik,
    predict_parameters,
    term_key,
    term_tests,
    unpenalized_loglik,
    wald_z,
)
from degpd.inference import fit_mle, loglik
from degpd.links import ParamLinkMap

SPEC = ModelSpec("degpd1")


def simulate_sigma_curve(n, seed, fn=lambda x: 0.2 + np.sin(2 * np.pi * x)):
    """DEGPD(i) with kappa = 2, xi = 0.2 and log sigma(x) = fn(x)."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=n)
    w = rng.uniform(size=n)
    theta = dict(kappa=np.full(n, 2.0), sigma=np.exp(fn(x)), xi=np.full(n, 0.2))
    u = rng.uniform(size=n)
    y = np.zeros(n, dtype=np.int64)
    # inverse transform, one cell at a time, against the exact CDF
    while True:
        step = SPEC.cdf(theta, y) < u
        if not step.any():
            break
        y[step] += 1
    return {"x": x, "w": w, "y": y}


@pytest.fixture(scope="module")
def sin_data():
    return simulate_sigma_curve(3000, 7)


@pytest.fixture(scope="module")
def small_data():
    return simulate_sigma_curve(600, 3)


# -- formulas / assembly -------------------------------------------------------------


def test_formula_parsing():
    f = GamFormula.parse(SPEC, ["sigma ~ s(x) + s(w, k=6)", "xi ~ 1"])
    smooths = dict(f.smooths)
    assert [t.covariate for t in smooths["sigma"]] == ["x", "w"]
    assert smooths["sigma"][1].k == 6
    assert smooths["kappa"] == () and smooths["xi"] == ()
    assert f.covariates == ["w", "x"]
    assert GamFormula.parse(SPEC, f.lines()) == f
    for bad in ["sigma ~ s(x", "lambda ~ 1", "sigma ~ x", "sigma = s(x)"]:
        with pytest.raises(ConfigurationError):
            GamFormula.parse(SPEC, [bad])
    with pytest.raises(ConfigurationError):
        GamFormula.parse(SPEC, ["sigma ~ 1", "sigma ~ s(x)"])


def test_assemble_counts_and_order(small_data):
    m = assemble(GamFormula.parse(SPEC, []), small_data)
    assert m.n_coef == 3
    m = assemble(GamFormula.parse(SPEC, ["sigma ~ s(x)"]), small_data)
    assert m.n_coef == 3 + 9
    labels = [term_key(t) for t in m.terms]
    assert labels == ["kappa:(Intercept)", "sigma:(Intercept)", "sigma:s(x)", "xi:(Intercept)"]
    assert [t.slice.start for t in m.terms] == [0, 1, 2, 11]
    again = assemble(GamFormula.parse(SPEC, ["sigma ~ s(x)"]), small_data)
    assert all(np.array_equal(a, b) for a, b in zip(m.designs, again.designs))


def test_assemble_errors(small_data):
    f = GamFormula.parse(SPEC, ["sigma ~ s(z)"])
    with pytest.raises(ConfigurationError, match="'z'"):
        assemble(f, small_data)
    bad = dict(small_data, x=np.where(np.arange(600) == 5, np.nan, small_data["x"]))
    with pytest.raises(DataError):
        assemble(GamFormula.parse(SPEC, ["sigma ~ s(x)"]), bad)


# -- penalised likelihood --------------------------------------------------------------


def _matrices(data, lines=("sigma ~ s(x)",)):
    return assemble(GamFormula.parse(SPEC, list(lines)), data)


def test_penalized_loglik_identities(small_data):
    m = _matrices(small_data)
    y = small_data["y"]
    rng = np.random.default_rng(1)
    beta = np.r_[np.log(2), 0.2, rng.normal(0, 0.3, 9), np.log(0.2)]
    key = "sigma:s(x)"
    plain = unpenalized_loglik(beta, m, ParamLinkMap(SPEC.param_names), y)
    assert penalized_loglik(beta, {key: 0.0}, m, SPEC, y) == pytest.approx(plain, rel=1e-14)
    zero_smooth = beta.copy()
    zero_smooth[2:11] = 0
    assert penalized_loglik(zero_smooth, {key: 1e3}, m, SPEC, y) == penalized_loglik(zero_smooth, {key: 0.0}, m, SPEC, y)
    # monotone in lambda when the smooth block is nonzero
    vals = [penalized_loglik(beta, {key: lam}, m, SPEC, y) for lam in (0.0, 0.1, 1.0, 10.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_intercept_only_matches_iid_loglik(small_data):
    m = _matrices(small_data, ())
    y = small_data["y"]
    beta = np.array([np.log(1.7), np.log(2.1), np.log(0.3)])
    ref = loglik(SPEC, dict(kappa=1.7, sigma=2.1, xi=0.3), y)
    assert penalized_loglik(beta, {}, m, SPEC, y) == pytest.approx(ref, rel=1e-12)


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_gradient_matches_central_differences(seed):
    data = simulate_sigma_curve(300, 11)
    m = _matrices(data)
    y = data["y"]
    links = ParamLinkMap(SPEC.param_names)
    rng = np.random.default_rng(seed)
    beta = np.r_[rng.normal(0.5, 0.3), rng.normal(0.2, 0.3), rng.normal(0, 0.3, 9), rng.normal(-1.5, 0.3)]
    g = loglik_gradient(beta, m, links, y)

    def f(b):
        return unpenalized_loglik(b, m, links, y)

    h = 1e-5
    num = np.array([(f(beta + h * e) - f(beta - h * e)) / (2 * h) for e in np.eye(beta.size)])
    assert np.all(np.abs(g - num) <= 1e-3 * np.maximum(np.abs(num), 1.0))


# -- fitting -----------------------------------------------------------------------------


def test_intercept_only_matches_fit_mle(small_data):
    y = small_data["y"]
    gam = fit_gam([], SPEC, small_data)
    iid = fit_mle(SPEC, y)
    assert np.allclose(gam.beta, iid.link_estimates, atol=1e-4)
    assert effective_dof(gam)["total"] == pytest.approx(3.0, abs=1e-8)
    theta, flags = predict_parameters(gam, {"x": np.linspace(0, 1, 5)})
    assert not flags.any()
    assert np.allclose(theta["sigma"], np.exp(gam.beta[1]))


def test_sin_curve_recovery(sin_data):
    fit = fit_gam(["sigma ~ s(x)"], SPEC, sin_data)
    assert fit.converged
    grid = np.linspace(0, 1, 100)
    theta, _ = predict_parameters(fit, {"x": grid})
    r = np.corrcoef(np.log(theta["sigma"]), 0.2 + np.sin(2 * np.pi * grid))[0, 1]
    assert r > 0.9


def test_selected_lambda_minimises_aic(small_data):
    fit = fit_gam(["sigma ~ s(x)"], SPEC, small_data)
    scores = [aic for lams, aic in fit.selection]
    assert len(scores) == len(LAMBDA_GRID)
    best = min(scores)
    assert fit.aic == pytest.approx(best, abs=1e-6)
    assert all(best <= s for s in scores)


def test_edf_limits(small_data):
    key = "sigma:s(x)"
    loose = fit_gam(["sigma ~ s(x)"], SPEC, small_data, lambda_strategy=0.0)
    assert effective_dof(loose)["total"] == pytest.approx(loose.matrices.n_coef, abs=1e-6)
    stiff = fit_gam(["sigma ~ s(x)"], SPEC, small_data, lambda_strategy={key: 1e8})
    assert effective_dof(stiff)[key] == pytest.approx(1.0, abs=0.2)
    edf = effective_dof(fit_gam(["sigma ~ s(x)"], SPEC, small_data))
    assert edf["total"] <= 12 and 1.0 - 0.2 <= edf[key] <= 9


def test_linear_truth_gives_edf_near_one():
    data = simulate_sigma_curve(1500, 5, fn=lambda x: 0.2 + 0.8 * x)
    fit = fit_gam(["sigma ~ s(x)"], SPEC, data, lambda_strategy=1e3)
    assert effective_dof(fit)["sigma:s(x)"] == pytest.approx(1.0, abs=0.3)


def test_nested_likelihood_dominance(small_data):
    reduced = fit_gam(["sigma ~ s(x)"], SPEC, small_data, lambda_strategy=1.0)
    full = fit_gam(["sigma ~ s(x) + s(w)"], SPEC, small_data, lambda_strategy=1.0)
    assert full.loglik >= reduced.loglik - 1e-4


def test_term_tests_and_predictions(small_data):
    fit = fit_gam(["sigma ~ s(x)"], SPEC, small_data)
    rows = {r["term"] + r["param"]: r for r in term_tests(fit)}
    smooth = rows["s(x)sigma"]
    assert smooth["edf"] == pytest.approx(effective_dof(fit)["sigma:s(x)"])
    assert smooth["p_value"] < 1e-6
    k = rows["(Intercept)kappa"]
    assert k["z"] == pytest.approx(k["estimate"] / k["std_error"])
    theta, _ = predict_parameters(fit, small_data)
    in_sample = fit.links.from_link(fit.matrices.eta(fit.beta))
    for name in SPEC.param_names:
        assert np.array_equal(theta[name], in_sample[name])
        assert np.all(theta[name] > 0)
    _, flags = predict_parameters(fit, {"x": np.array([0.5, 1.5, -0.2])})
    assert flags.tolist() == [False, True, True]
    with pytest.raises(ConfigurationError):
        predict_parameters(fit, {"w": np.ones(3)})


def test_wald_basics():
    z, p = wald_z(0.0, 1.0)
    assert z == 0 and p == 1
    z, _ = wald_z(-1.83, 0.06)
    assert z == pytest.approx(-30.5, abs=1e-9)


def test_zero_smooth_gives_zero_chi_square(small_data):
    fit = fit_gam(["sigma ~ s(x)"], SPEC, small_data)
    fit.beta = fit.beta.copy()
    fit.beta[2:11] = 0.0
    smooth = [r for r in term_tests(fit) if r["term"] == "s(x)"][0]
    assert smooth["chi_sq"] == 0.0


def test_missing_covariance_is_unavailable(small_data):
    fit = fit_gam([], SPEC, small_data)
    fit.covariance = None
    with pytest.raises(UnavailableError):
        term_tests(fit)
    fit.hessian = None
    with pytest.raises(UnavailableError):
        effective_dof(fit)


def test_gamfit_round_trip(small_data):
    fit = fit_gam(["sigma ~ s(x, k=8)"], SPEC, small_data)
    back = GamFit.from_dict(fit.to_dict())
    grid = {"x": np.linspace(-0.1, 1.1, 13)}
    a, fa = predict_parameters(fit, grid)
    b, fb = predict_parameters(back, grid)
    assert np.array_equal(fa, fb)
    for name in SPEC.param_names:
        assert np.array_equal(a[name], b[name])
    assert effective_dof(back) == effective_dof(fit)
