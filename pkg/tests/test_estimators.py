import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpus import corpus
from realizer.errors import DimensionError, IllConditionedError, InsolubleTLSError, RankError
from realizer.estimators import (
    WlsConfig,
    kung_realize,
    ols_coeffs,
    ols_coeffs_min_norm,
    ols_realize,
    realize,
    tls_coeffs,
    tls_coeffs_corrected,
    tls_ols_difference,
    tls_realize,
    tls_realize_general_f,
    wls_realize,
    wls_step,
    wls_weighting,
)
from realizer.hankel import build_hankel
from realizer.model import char_poly_of, fit, markov, system1, system2

TRUE_A = {"s1": [0.01, -0.2], "s2": [0.81, -1.8]}


def exact(model, n=20, nx=2, f=None):
    return build_hankel(markov(model, n), nx, f)


def noisy(model, seed, n=20, std=1.0):
    rng = np.random.default_rng(seed)
    return build_hankel(markov(model, n) + std * rng.standard_normal(n), model.nx)


@pytest.mark.parametrize("model,key", [(system1(), "s1"), (system2(), "s2")])
@pytest.mark.parametrize("method", ["OLS", "TLS", "WLS", "KUNG"])
def test_exact_recovery(model, key, method):
    res = realize(exact(model), method)
    np.testing.assert_allclose(res.a_hat, TRUE_A[key], atol=1e-8)
    assert fit(res.model, model) >= 100 - 1e-6


def test_ols_min_norm_cross_check():
    for m, h, _ in corpus()[:50]:
        a = ols_coeffs(h)
        np.testing.assert_allclose(ols_coeffs_min_norm(h), a, atol=1e-8 * max(1, np.abs(a).max()))


def test_tls_two_formulas_agree_on_noisy_instance():
    h = noisy(system2(), 3)
    np.testing.assert_allclose(tls_coeffs(h), tls_coeffs_corrected(h), atol=1e-8)
    assert tls_realize(h).details["normal_equation_deviation"] < 1e-8


def test_tls_equals_ols_on_exact_data():
    h = exact(system1())
    np.testing.assert_allclose(tls_coeffs(h), ols_coeffs(h), atol=1e-8)


def test_difference_identity_sign():
    h = noisy(system2(), 11)
    a_ols, a_tls = ols_coeffs(h), tls_coeffs(h)
    np.testing.assert_allclose(a_tls - a_ols, tls_ols_difference(h, a_ols), atol=1e-8)


def test_difference_identity_literal_sign_is_wrong():
    # with a minus in front the prediction points the wrong way on generic data
    h = noisy(system2(), 11)
    a_ols, a_tls = ols_coeffs(h), tls_coeffs(h)
    assert not np.allclose(a_tls - a_ols, -tls_ols_difference(h, a_ols), atol=1e-8)


def test_general_f():
    h = exact(system2(), f=4)
    np.testing.assert_allclose(tls_realize_general_f(h).a_hat, TRUE_A["s2"], atol=1e-6)
    h2 = exact(system2())
    assert np.array_equal(tls_realize_general_f(h2).a_hat, tls_realize(h2).a_hat)
    with pytest.raises(DimensionError):
        ols_coeffs(h)


def test_general_f_noisy_is_comparable():
    rng = np.random.default_rng(5)
    g = markov(system2(), 20) + rng.standard_normal(20)
    fits = [fit(tls_realize_general_f(build_hankel(g, 2, f)).model, system2()) for f in (2, 4)]
    assert all(np.isfinite(fits))


def test_kung_matches_tls_on_noisy():
    h = noisy(system2(), 7)
    np.testing.assert_allclose(kung_realize(h).a_hat, tls_coeffs(h), atol=1e-8)
    h4 = build_hankel(h.g, 2, 4)
    assert kung_realize(h4).model.nx == 2


def test_kung_exact_fit():
    assert fit(kung_realize(exact(system1())).model, system1()) >= 100 - 1e-6


def test_wls_fixed_point_on_exact_data():
    rng = np.random.default_rng(0)
    m = rng.standard_normal((20, 20))
    res = wls_realize(exact(system2()), WlsConfig(p_g=m @ m.T + np.eye(20), max_iters=1))
    np.testing.assert_allclose(res.a_hat, TRUE_A["s2"], atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_wls_identity_weight_is_ols(seed):
    h = noisy(system2(), seed)
    np.testing.assert_allclose(wls_step(h, np.eye(h.p + 1)), ols_coeffs(h), atol=1e-10)


def test_wls_scale_invariance_and_details():
    h = noisy(system2(), 2)
    a1 = wls_realize(h, WlsConfig(p_g=np.eye(20))).a_hat
    a2 = wls_realize(h, WlsConfig(p_g=7.5 * np.eye(20))).a_hat
    np.testing.assert_allclose(a1, a2, atol=1e-10)
    assert wls_realize(h, WlsConfig(init="OLS")).details["init"] == "OLS"
    assert wls_weighting(TRUE_A["s2"], np.eye(20)).shape == (18, 18)
    with pytest.raises(DimensionError):
        wls_realize(h, WlsConfig(p_g=np.eye(5)))


def test_zero_data_errors():
    h = build_hankel(np.zeros(20), 2)
    with pytest.raises(IllConditionedError):
        ols_realize(h)
    with pytest.raises(InsolubleTLSError):
        tls_realize(h)
    with pytest.raises(RankError):
        kung_realize(h)


def test_unknown_method():
    with pytest.raises(ValueError):
        realize(exact(system1()), "ML")


def test_result_to_dict_is_json_ready():
    import json
    d = realize(noisy(system2(), 1), "TLS").to_dict()
    json.dumps(d)
    assert d["method"] == "TLS" and len(d["a_hat"]) == 2


def test_char_poly_invariant_under_similarity():
    model = system2().similar(np.array([[1.0, 2.0], [0.0, 3.0]]))
    res = realize(exact(model), "OLS")
    np.testing.assert_allclose(res.a_hat, char_poly_of(system2()), atol=1e-8)
