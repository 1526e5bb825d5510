"""Scalar resonance machinery: special functions, profiles, roots, widths."""

import json
import math
from functools import lru_cache

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import resolab.resonance as resonance
from resolab import (AssumptionError, DomainError, ModelConstants, RegimeTag,
                     anomalous_moment_predict, degenerate_profiles,
                     determine_regime, eta_sigma, eta_sigma_tilde, f_profile,
                     flux_params, g_profile, integer_profiles, predict,
                     predict_from_context, prepare, rational_field,
                     rational_potential, solve_position, superpotential,
                     zeta_omega)
from resolab.zeromodes import PerturbationData

mpmath.mp.dps = 40

TWO_PI = 2.0 * math.pi


def scalar_data(beta=1.0, **kw):
    """Minimal coefficient container for profile/root tests."""
    defaults = dict(w=0.0, w_zero=True, w1=0.0, w1_zero=True, w2=0.0,
                    w2_zero=True, w3=0.0, w3_zero=True, w4=0.0, w4_zero=True,
                    w5=0.0, w5_zero=True, w6=0.0, w6_zero=True, nu=None,
                    nu_tilde=None, phi2_form=0.0)
    defaults.update(kw)
    return PerturbationData(beta=beta, kappa_list=np.array([beta]),
                            selected_index=0, psi0V=None, **defaults)


@lru_cache(maxsize=None)
def _ctx(alpha0, potential_power, angular, base, mode):
    fld = rational_field(alpha0, power=2)
    gauge = superpotential(fld)
    V = rational_potential(potential_power, angular=angular, base=base)
    return prepare(fld, V, selected_mode_index=mode, gauge=gauge)


# -- zeta / omega --------------------------------------------------------

def test_zeta_half_closed_form():
    z, om = zeta_omega(0.5, TWO_PI)
    assert abs(z - (-1j / TWO_PI)) < 1e-12
    assert abs(om - 1j) < 1e-12


def test_zeta_against_high_precision_gamma():
    """Reference: zeta(s) = -4^(s-1) Gamma(s) e^(i pi s) / (pi Gamma(1-s))."""
    for s in [0.1, 0.3, 0.5, 0.9, 1.2, 1.5, 1.7, 2.5, 3.3, 4.7]:
        ref = (-mpmath.mpf(4) ** (s - 1) * mpmath.gamma(s)
               * mpmath.exp(1j * mpmath.pi * s)
               / (mpmath.pi * mpmath.gamma(1 - s)))
        z, _ = zeta_omega(s, 1.0)
        assert abs(z - complex(ref)) <= 1e-12 * abs(complex(ref))


def test_zeta_imaginary_part_negative():
    # Im zeta = -4^(s-1) Gamma(s)^2 sin^2(pi s) / pi^2 < 0 off the integers
    for s in np.linspace(0.05, 4.95, 50):
        if abs(s - round(s)) < 1e-3:
            continue
        z, _ = zeta_omega(float(s), 1.0)
        assert z.imag < 0.0


@pytest.mark.parametrize("bad", [1.0, 2.0, 3.0, 0.0, -0.5])
def test_zeta_rejects_integer_or_nonpositive(bad):
    with pytest.raises(DomainError):
        zeta_omega(bad, 1.0)


# -- eta / sigma ---------------------------------------------------------

def test_eta_sigma_closed_forms():
    eta, sigma = eta_sigma(1.5, TWO_PI)
    assert abs(eta - 1.0) < 1e-12
    assert abs(sigma - 1.0 / TWO_PI) < 1e-12


def test_eta_sigma_high_precision():
    for alpha in [1.1, 1.37, 1.5, 1.82, 1.99]:
        n = 3.7
        eta_ref = 4 * mpmath.pi ** 2 / (mpmath.mpf(4) ** alpha
                                        * mpmath.gamma(alpha) ** 2 * n)
        sig_ref = mpmath.mpf(4) ** alpha / (16 * mpmath.gamma(2 - alpha) ** 2)
        eta, sigma = eta_sigma(alpha, n)
        assert abs(eta - float(eta_ref)) <= 1e-12 * float(eta_ref)
        assert abs(sigma - float(sig_ref)) <= 1e-12 * float(sig_ref)


def test_sigma_vanishes_at_upper_endpoint():
    # Gamma(2 - alpha) blows up as alpha -> 2, killing sigma
    _, sigma = eta_sigma(2.0 - 1e-9, 1.0)
    assert sigma < 1e-15


def test_eta_sigma_tilde_closed_forms():
    eta_t, sigma_t = eta_sigma_tilde(0.5, ModelConstants())
    assert abs(eta_t - TWO_PI) < 1e-12
    assert abs(sigma_t - 1.0 / TWO_PI) < 1e-12


def test_sigma_tilde_vanishes_at_upper_endpoint():
    _, sigma_t = eta_sigma_tilde(1.0 - 1e-9, ModelConstants())
    assert sigma_t < 1e-15


@pytest.mark.parametrize("bad", [0.5, 1.0, 2.0, 2.5])
def test_eta_sigma_domain(bad):
    with pytest.raises(DomainError):
        eta_sigma(bad, 1.0)


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.4])
def test_eta_sigma_tilde_domain(bad):
    with pytest.raises(DomainError):
        eta_sigma_tilde(bad, ModelConstants())


@given(alpha=st.floats(1.01, 1.99), norm=st.floats(0.1, 50.0))
@settings(max_examples=40, deadline=None)
def test_im_omega_equals_eta(alpha, norm):
    """Im(1/zeta(a)) = 4 pi^2 / (4^a Gamma(a)^2), the width-constant link."""
    _, omega = zeta_omega(alpha, norm)
    eta, _ = eta_sigma(alpha, norm)
    assert abs(omega.imag - eta) <= 1e-12 * eta


def test_pointwise_imaginary_identity():
    """Im(om x^(a-2)/(1+om x^(a-1))) = eta x^(a-2)/|1+om x^(a-1)|^2."""
    for alpha in [1.2, 1.5, 1.8]:
        n = TWO_PI
        _, om = zeta_omega(alpha, n)
        eta, _ = eta_sigma(alpha, n)
        for x in np.geomspace(1e-6, 10.0, 25):
            lhs = (om * x ** (alpha - 2.0)
                   / (1.0 + om * x ** (alpha - 1.0))).imag
            rhs = eta * x ** (alpha - 2.0) / abs(1.0 + om * x ** (alpha - 1.0)) ** 2
            assert abs(lhs - rhs) <= 1e-12 * abs(rhs)


# -- profiles ------------------------------------------------------------

def test_f_profile_matches_rational_closed_form():
    # alpha = 3/2 with norm 2 pi gives omega = i, so f collapses to b^2/(1+x)
    params = flux_params(1.5)
    data = scalar_data(beta=0.37)
    for x in np.geomspace(1e-4, 50.0, 30):
        f = f_profile(float(x), data, params, ModelConstants(), TWO_PI)
        assert abs(f - 0.37 ** 2 / (1.0 + x)) < 1e-12


def test_profiles_zero_for_zero_coefficients():
    params = flux_params(1.5)
    data = scalar_data(beta=0.0)
    assert f_profile(0.3, data, params, ModelConstants(), TWO_PI) == 0.0
    assert g_profile(0.3, data, params, ModelConstants(), TWO_PI) == 0.0


@given(c=st.floats(0.01, 100.0))
@settings(max_examples=30, deadline=None)
def test_g_profile_quadratic_homogeneity(c):
    params = flux_params(1.7)
    base = scalar_data(beta=0.2, w=0.05, w_zero=False)
    scaled = scalar_data(beta=0.2 * c, w=0.05 * c, w_zero=False)
    x = 0.01
    g0 = g_profile(x, base, params, ModelConstants(), TWO_PI)
    g1 = g_profile(x, scaled, params, ModelConstants(), TWO_PI)
    assert abs(g1 - c ** 2 * g0) <= 1e-9 * abs(g1)


def test_g_profile_small_x_dominated_by_w_term():
    alpha = 1.7
    params = flux_params(alpha)
    data = scalar_data(beta=0.2, w=0.05, w_zero=False)
    _, sigma = eta_sigma(alpha, TWO_PI)
    x = 1e-14
    g = g_profile(x, data, params, ModelConstants(), TWO_PI)
    assert abs(g * x ** (alpha - 1.0) - sigma * 0.05 ** 2) < 1e-2 * sigma * 0.05 ** 2


def test_g_profile_rejects_nonpositive_x():
    params = flux_params(1.5)
    with pytest.raises(DomainError):
        g_profile(0.0, scalar_data(), params, ModelConstants(), TWO_PI)
    with pytest.raises(DomainError):
        g_profile(-1.0, scalar_data(), params, ModelConstants(), TWO_PI)


def test_integer_profiles_closed_forms():
    data = scalar_data(w2=1.0, w2_zero=False, phi2_form=math.pi ** 2)
    x = math.exp(-1.0)
    g, f, h = integer_profiles(x, data)
    assert abs(g - math.e) < 1e-12
    assert abs(f - (-math.e / math.pi)) < 1e-12
    assert abs(h - math.e ** 2) < 1e-12 * math.e ** 2


def test_integer_profiles_zero_when_w2_zero():
    g, f, h = integer_profiles(0.3, scalar_data())
    assert g == f == h == 0.0


def test_integer_profiles_domain():
    with pytest.raises(DomainError):
        integer_profiles(1.0, scalar_data())
    with pytest.raises(DomainError):
        integer_profiles(0.0, scalar_data())


def test_degenerate_profiles_single_term_limit():
    alpha = 2.5
    params = flux_params(alpha)
    data = scalar_data(beta=0.1, w3=0.04, w3_zero=False)
    eta_t, _ = eta_sigma_tilde(params.alpha_prime, ModelConstants())
    x = 1e-10
    g_t, _ = degenerate_profiles(x, data, params, ModelConstants(), TWO_PI)
    target = eta_t * 0.04 ** 2
    assert abs(g_t * x ** (1.0 - params.alpha_prime) - target) < 1e-4 * target


def test_degenerate_profiles_zero_overlaps():
    params = flux_params(2.5)
    g_t, f_t = degenerate_profiles(0.01, scalar_data(), params,
                                   ModelConstants(), TWO_PI)
    assert g_t == 0.0 and f_t == 0.0


# -- dispersion root ----------------------------------------------------

def test_root_with_flat_profile(monkeypatch):
    # f == 0 reduces K1 to beta eps - x
    monkeypatch.setattr(resonance, "f_profile", lambda *a, **k: 0.0)
    params = flux_params(1.5)
    data = scalar_data(beta=1.0)
    x = solve_position(RegimeTag.SimpleNonInt, data, params, ModelConstants(),
                       1e-3, TWO_PI)
    assert abs(x - 1e-3) < 1e-16


def test_root_with_unit_profile(monkeypatch):
    # f == 1 gives x = beta eps - eps^2 exactly
    monkeypatch.setattr(resonance, "f_profile", lambda *a, **k: 1.0)
    params = flux_params(1.5)
    data = scalar_data(beta=1.0)
    eps = 1e-2
    x = solve_position(RegimeTag.SimpleNonInt, data, params, ModelConstants(),
                       eps, TWO_PI)
    assert abs(x - (eps - eps ** 2)) < 1e-15


def test_root_bracket_failure_is_eps_too_large(monkeypatch):
    monkeypatch.setattr(resonance, "f_profile", lambda *a, **k: 1.0)
    params = flux_params(1.5)
    data = scalar_data(beta=1.0)
    with pytest.raises(AssumptionError):
        solve_position(RegimeTag.SimpleNonInt, data, params, ModelConstants(),
                       0.8, TWO_PI)


def test_root_stays_in_bracket():
    ctx = _ctx(1.5, 4.0, "none", 1.0, 0)
    beta = ctx.data.beta
    for eps in [3e-3, 1e-3, 3e-4]:
        x = solve_position(RegimeTag.SimpleNonInt, ctx.data, ctx.params,
                           ctx.constants, eps, ctx.norm_eh_sq)
        assert 0.5 * beta * eps < x < 1.5 * beta * eps


# -- regime dispatch -----------------------------------------------------

@pytest.mark.parametrize("alpha0,power,angular,mode,expected", [
    (1.5, 4.0, "none", 0, RegimeTag.SimpleNonInt),
    (1.7, 3.5, "dipole", 0, RegimeTag.SimpleNonInt),
    (2.0, 4.0, "none", 0, RegimeTag.SimpleIntW2Zero),
    (2.0, 4.0, "dipole", 0, RegimeTag.SimpleIntW2NonZero),
    (2.5, 5.0, "quadrupole", 0, RegimeTag.DegNonInt),
    (2.5, 5.0, "quadrupole", 1, RegimeTag.DegNonInt),
    (3.0, 5.0, "quadrupole", 0, RegimeTag.DegIntW6NonZero),
    (3.0, 5.0, "quadrupole", 1, RegimeTag.DegIntW6Zero),
])
def test_regime_classification(alpha0, power, angular, mode, expected):
    ctx = _ctx(alpha0, power, angular, 1.0, mode)
    assert determine_regime(ctx.params, ctx.data) is expected


def test_degenerate_needs_surviving_overlap():
    params = flux_params(2.5)
    with pytest.raises(AssumptionError):
        determine_regime(params, scalar_data())
    params_int = flux_params(3.0)
    with pytest.raises(AssumptionError):
        determine_regime(params_int, scalar_data())


# -- end-to-end predictions ----------------------------------------------

def test_radial_noninteger_prediction():
    """alpha0 = 3/2 with radial V: eta = 1, beta = 1/9, single leading term."""
    ctx = _ctx(1.5, 4.0, "none", 1.0, 0)
    pred = predict_from_context(ctx, 1e-3)
    assert pred.regime is RegimeTag.SimpleNonInt
    assert not pred.convention_sensitive
    assert pred.error_order == "eps^0.5"
    (coef, expo), = pred.leading_terms
    assert expo == 1.5
    assert abs(coef - (1.0 / 9.0) ** 1.5) < 1e-6 * (1.0 / 9.0) ** 1.5
    # width equals eps^2 g(x_eps) by construction; sanity check the order
    assert abs(pred.gamma_eps / (coef * 1e-3 ** 1.5) - 1.0) < 0.2


def test_dipole_noninteger_prediction_has_both_terms():
    ctx = _ctx(1.7, 3.5, "dipole", 1.0, 0)
    pred = predict_from_context(ctx, 1e-4)
    assert pred.regime is RegimeTag.SimpleNonInt
    assert pred.convention_sensitive
    exponents = sorted(e for _, e in pred.leading_terms)
    assert exponents == [pytest.approx(1.3), pytest.approx(1.7)]


def test_integer_radial_prediction_matches_quarter_formula():
    """alpha = 2 with V = (1+r^2)^(-4): gamma/eps^2 = pi^2 beta^2/(4 |e^h|^2)."""
    ctx = _ctx(2.0, 4.0, "none", 1.0, 0)
    beta, norm = ctx.data.beta, ctx.norm_eh_sq
    assert abs(beta - 0.2) < 1e-9
    assert abs(norm - math.pi) < 1e-9
    pred = predict_from_context(ctx, 1e-3)
    assert pred.regime is RegimeTag.SimpleIntW2Zero
    assert not pred.convention_sensitive
    target = math.pi / 100.0
    assert abs(pred.gamma_eps / 1e-3 ** 2 - target) < 1e-8 * target


def test_integer_dipole_prediction_log_width():
    ctx = _ctx(2.0, 4.0, "dipole", 1.0, 0)
    eps = 1e-3
    pred = predict_from_context(ctx, eps)
    assert pred.regime is RegimeTag.SimpleIntW2NonZero
    expected = eps * abs(ctx.data.w2) ** 2 / (ctx.data.beta * math.log(eps) ** 2)
    assert abs(pred.gamma_eps - expected) < 1e-12 * expected
    assert pred.leading_terms[0][1] == "eps/(log eps)^2"


def test_degenerate_predictions_two_modes():
    """alpha = 2.3: mode 0 decays like eps^1.7, mode 1 like eps^1.3."""
    ctx0 = _ctx(2.3, 5.0, "quadrupole", 1.0, 0)
    ctx1 = _ctx(2.3, 5.0, "quadrupole", 1.0, 1)
    p0 = predict_from_context(ctx0, 1e-4)
    p1 = predict_from_context(ctx1, 1e-4)
    assert p0.regime is RegimeTag.DegNonInt
    assert p1.regime is RegimeTag.DegNonInt
    assert min(e for _, e in p0.leading_terms) == pytest.approx(1.7)
    assert min(e for _, e in p1.leading_terms) == pytest.approx(1.3)


def test_degenerate_integer_prediction_closed_form():
    ctx = _ctx(3.0, 5.0, "quadrupole", 1, 1)
    eps = 1e-3
    pred = predict_from_context(ctx, eps)
    assert pred.regime is RegimeTag.DegIntW6Zero
    data, norm = ctx.data, ctx.norm_eh_sq
    expected = 0.25 * eps ** 2 * (abs(data.w5) ** 2
                                  + math.pi ** 2 * abs(data.w3) ** 2 / norm)
    assert abs(pred.gamma_eps - expected) < 1e-12 * expected


def test_width_monotone_in_eps():
    cases = [(1.5, 4.0, "none", 0), (2.0, 4.0, "none", 0),
             (2.0, 4.0, "dipole", 0), (2.5, 5.0, "quadrupole", 0),
             (3.0, 5.0, "quadrupole", 0), (3.0, 5.0, "quadrupole", 1)]
    for alpha0, power, angular, mode in cases:
        ctx = _ctx(alpha0, power, angular, 1.0, mode)
        widths = [predict_from_context(ctx, float(e)).gamma_eps
                  for e in np.geomspace(1e-4, 1e-3, 6)]
        assert all(w > 0 for w in widths)
        assert all(b > a for a, b in zip(widths, widths[1:]))


def test_prediction_eps_guard():
    ctx = _ctx(1.5, 4.0, "none", 1.0, 0)
    with pytest.raises(AssumptionError):
        predict_from_context(ctx, 0.06)  # > 0.5 * beta = 1/18
    with pytest.raises(DomainError):
        predict_from_context(ctx, 0.0)


def test_prediction_serializes_to_json():
    ctx = _ctx(1.5, 4.0, "none", 1.0, 0)
    blob = json.dumps(predict_from_context(ctx, 1e-3).to_dict(), sort_keys=True)
    decoded = json.loads(blob)
    assert decoded["regime"] == "simple-non-integer"
    assert decoded["gamma_eps"] > 0
    assert decoded["leading_terms"][0]["exponent"] == 1.5


def test_predict_one_shot_matches_context_path():
    fld = rational_field(1.5, power=2)
    V = rational_potential(4.0)
    pred = predict(fld, V, 1e-3)
    ctx = _ctx(1.5, 4.0, "none", 1.0, 0)
    ref = predict_from_context(ctx, 1e-3)
    assert abs(pred.gamma_eps - ref.gamma_eps) < 1e-12 * ref.gamma_eps
    assert abs(pred.x_eps - ref.x_eps) < 1e-12 * ref.x_eps


# -- anomalous moment ----------------------------------------------------

def test_anomalous_moment_radial_field():
    fld = rational_field(1.5, power=2)
    pred = anomalous_moment_predict(fld, 1.998)
    assert pred.eps == pytest.approx(1e-3)
    assert pred.regime is RegimeTag.SimpleNonInt
    assert not pred.convention_sensitive
    # beta = <psi0, B psi0> = 3/5 for this field
    assert abs(pred.beta - 0.6) < 1e-9


def test_anomalous_moment_integer_flux():
    fld = rational_field(2.0, power=2)
    pred = anomalous_moment_predict(fld, 1.9)
    assert pred.regime is RegimeTag.SimpleIntW2Zero
    assert pred.eps == pytest.approx(0.05)


def test_anomalous_moment_rejects_g_at_least_two():
    fld = rational_field(1.5, power=2)
    with pytest.raises(DomainError):
        anomalous_moment_predict(fld, 2.0)
    with pytest.raises(DomainError):
        anomalous_moment_predict(fld, 2.3)


def test_anomalous_moment_rejects_large_flux():
    fld = rational_field(2.5, power=2)
    with pytest.raises(DomainError):
        anomalous_moment_predict(fld, 1.99)
