"""Closed-form resonance positions and widths.

The scalar layer: special functions zeta/omega and the derived constants
eta/sigma, the spectral profile functions in each flux regime, the root
x_eps of the real dispersion relation, and the width gamma_eps.  Six
regimes are distinguished by the flux class and by which virtual-state
overlap survives.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .errors import AssumptionError, DomainError
from .fields import FieldSpec, FluxParams, PotentialSpec, flux_params
from .gauge import GaugeData, superpotential
from .zeromodes import (PerturbationData, VirtualStates, ZeroModeBasis,
                        build_virtual_states, build_zero_modes,
                        perturbation_data)

INTEGER_S_TOL = 1e-12
ROOT_RESIDUAL_RTOL = 1e-14
# above this eps the bracket (beta*eps/2, 3*beta*eps/2) loses meaning
EPS_OVER_BETA_MAX = 0.5


class RegimeTag(enum.Enum):
    SimpleNonInt = "simple-non-integer"
    SimpleIntW2NonZero = "simple-integer-w2-nonzero"
    SimpleIntW2Zero = "simple-integer-w2-zero"
    DegNonInt = "degenerate-non-integer"
    DegIntW6NonZero = "degenerate-integer-w6-nonzero"
    DegIntW6Zero = "degenerate-integer-w6-zero"


@dataclass(frozen=True)
class ModelConstants:
    """Constants of the resolvent expansion that have no closed form here.

    They enter only subleading denominators and additive log-shifts, so
    every leading-order width below is insensitive to the defaults.
    """

    c1: float = 1.0
    rho_const: float = 0.0
    m_circ: float = 0.0
    d_abs_sq: float = 1.0
    varkappa: float = 0.0


@dataclass(frozen=True)
class ResonancePrediction:
    regime: RegimeTag
    eps: float
    x_eps: float
    gamma_eps: float
    # (coefficient, exponent) pairs; exponent is a float power of eps or
    # the literal marker "eps/(log eps)^2"
    leading_terms: tuple
    error_order: str
    convention_sensitive: bool
    beta: float

    def to_dict(self):
        return {
            "regime": self.regime.value,
            "eps": self.eps,
            "x_eps": self.x_eps,
            "gamma_eps": self.gamma_eps,
            "leading_terms": [
                {"coefficient": c, "exponent": e} for c, e in self.leading_terms
            ],
            "error_order": self.error_order,
            "convention_sensitive": self.convention_sensitive,
            "beta": self.beta,
        }


# -- special functions -------------------------------------------------

def zeta_omega(s: float, norm_eh_sq: float):
    """The pair zeta(s), omega(s) = 1/(zeta(s) ||e^h||^2).

    Reflection replaces 1/Gamma(1-s) by sin(pi s) Gamma(s)/pi, so only
    log-gamma at positive argument is evaluated:
    zeta(s) = -4^{s-1} Gamma(s)^2 e^{i pi s} sin(pi s) / pi^2.
    """
    if s <= 0.0:
        raise DomainError(f"zeta(s) needs s > 0, got s = {s}")
    if abs(s - round(s)) < INTEGER_S_TOL:
        raise DomainError(f"zeta(s) undefined at integer s = {s}")
    mag = math.exp((s - 1.0) * math.log(4.0) + 2.0 * gammaln(s))
    z = -(mag * math.sin(math.pi * s) / math.pi ** 2) * complex(
        math.cos(math.pi * s), math.sin(math.pi * s))
    return z, 1.0 / (z * norm_eh_sq)


def eta_sigma(alpha: float, norm_eh_sq: float):
    """Width constants of the non-integer simple regime."""
    if not 1.0 < alpha < 2.0:
        raise DomainError(f"eta/sigma need 1 < alpha < 2, got {alpha}")
    eta = 4.0 * math.pi ** 2 / (4.0 ** alpha * math.gamma(alpha) ** 2
                                * norm_eh_sq)
    sigma = 4.0 ** alpha / (16.0 * math.gamma(2.0 - alpha) ** 2)
    return eta, sigma


def eta_sigma_tilde(alpha_prime: float, constants: ModelConstants):
    """Width constants of the degenerate non-integer regime.

    eta_tilde carries the defaulted |d|^2, so it is convention-dependent.
    """
    ap = alpha_prime
    if not 0.0 < ap < 1.0:
        raise DomainError(f"tilde constants need 0 < alpha' < 1, got {ap}")
    eta_t = (math.pi ** 2 * constants.d_abs_sq
             / (4.0 ** ap * math.gamma(1.0 + ap) ** 2))
    sigma_t = 4.0 ** (ap - 1.0) / math.gamma(1.0 - ap) ** 2
    return eta_t, sigma_t


# -- profile functions --------------------------------------------------

def _require_positive(x):
    if x <= 0.0:
        raise DomainError(f"profile argument must be positive, got x = {x}")


def g_profile(x: float, data: PerturbationData, params: FluxParams,
              constants: ModelConstants, norm_eh_sq: float) -> float:
    """Imaginary-part profile of the simple non-integer regime."""
    _require_positive(x)
    a = params.alpha
    eta, sigma = eta_sigma(a, norm_eh_sq)
    _, omega = zeta_omega(a, norm_eh_sq)
    zeta, _ = zeta_omega(a - 1.0, norm_eh_sq)
    beta, w = data.beta, data.w
    first = eta * beta ** 2 * x ** (a - 2.0) / abs(1.0 + omega * x ** (a - 1.0)) ** 2
    second = (sigma * abs(w) ** 2 * x ** (1.0 - a)
              / abs(1.0 + constants.rho_const * zeta * x ** (2.0 - a)) ** 2)
    return first + second


def f_profile(x: float, data: PerturbationData, params: FluxParams,
              constants: ModelConstants, norm_eh_sq: float) -> float:
    """Real-part profile entering K1 in the simple non-integer regime."""
    _require_positive(x)
    a = params.alpha
    _, omega = zeta_omega(a, norm_eh_sq)
    zeta, _ = zeta_omega(a - 1.0, norm_eh_sq)
    rho = constants.rho_const
    beta, w = data.beta, data.w
    first = (beta ** 2
             * (omega.real * x ** (a - 2.0) + abs(omega) ** 2 * x ** (2.0 * a - 3.0))
             / abs(1.0 + omega * x ** (a - 1.0)) ** 2)
    second = (abs(w) ** 2
              * (zeta.real * x ** (1.0 - a) + rho * abs(zeta) ** 2 * x ** (3.0 - 2.0 * a))
              / abs(1.0 + rho * zeta * x ** (2.0 - a)) ** 2)
    return first - second


def integer_profiles(x: float, data: PerturbationData,
                     constants: ModelConstants = ModelConstants()):
    """(g, f, h) profiles of the integer-flux expansion at small x < 1."""
    _require_positive(x)
    if x >= 1.0:
        raise DomainError(
            f"integer profiles hold in the threshold region x < 1, got {x}")
    w2_sq = abs(data.w2) ** 2
    lg = math.log(x)
    g = w2_sq / (x * lg ** 2)
    f = g * (lg + constants.m_circ) / math.pi
    h = w2_sq * (data.phi2_form or 0.0) / (math.pi ** 2 * (x * lg) ** 2)
    return g, f, h


def degenerate_profiles(x: float, data: PerturbationData, params: FluxParams,
                        constants: ModelConstants, norm_eh_sq: float):
    """(g_tilde, f_tilde) of the degenerate non-integer regime."""
    _require_positive(x)
    ap = params.alpha_prime
    eta_t, sigma_t = eta_sigma_tilde(ap, constants)
    _, omega1 = zeta_omega(1.0 + ap, norm_eh_sq)
    zeta_p, _ = zeta_omega(ap, norm_eh_sq)
    c1, rho = constants.c1, constants.rho_const
    w3_sq = abs(data.w3) ** 2
    w4_sq = abs(data.w4) ** 2
    den1 = abs(1.0 + c1 * omega1 * x ** ap) ** 2
    den2 = abs(1.0 + rho * zeta_p * x ** (1.0 - ap)) ** 2
    g_t = (eta_t * w3_sq * x ** (ap - 1.0) / den1
           + sigma_t * w4_sq * x ** (-ap) / den2)
    f_t = (w3_sq * (omega1.real * x ** (ap - 1.0)
                    + abs(omega1) ** 2 * x ** (2.0 * ap - 1.0)) / den1
           - w4_sq * (zeta_p.real * x ** (-ap)
                      + rho * abs(zeta_p) ** 2 * x ** (1.0 - 2.0 * ap)) / den2)
    return g_t, f_t


# -- regime classification and the dispersion root ----------------------

def determine_regime(params: FluxParams, data: PerturbationData) -> RegimeTag:
    if not params.is_integer:
        if params.alpha < 2.0:
            return RegimeTag.SimpleNonInt
        if data.w3_zero and data.w4_zero:
            raise AssumptionError(
                "degenerate non-integer regime needs |w3|^2 + |w4|^2 > 0; "
                "both overlaps vanish")
        return RegimeTag.DegNonInt
    if params.N == 1:
        return (RegimeTag.SimpleIntW2Zero if data.w2_zero
                else RegimeTag.SimpleIntW2NonZero)
    if data.w6_zero:
        if data.w3_zero and data.w5_zero:
            raise AssumptionError(
                "degenerate integer regime with w6 = 0 needs "
                "|w3|^2 + |w5|^2 > 0; both overlaps vanish")
        return RegimeTag.DegIntW6Zero
    return RegimeTag.DegIntW6NonZero


def _log_coefficient(data: PerturbationData, regime: RegimeTag,
                     norm_eh_sq: float) -> float:
    """The a1 coefficient of the eps^2 log x term in the w = 0 regimes.

    gamma = pi a1 eps^2, so a1 carries a 1/(4 pi) relative to the width.
    """
    if regime is RegimeTag.SimpleIntW2Zero:
        return (abs(data.w1) ** 2
                + math.pi ** 2 * data.beta ** 2 / norm_eh_sq) / (4.0 * math.pi)
    return (abs(data.w5) ** 2
            + math.pi ** 2 * abs(data.w3) ** 2 / norm_eh_sq) / (4.0 * math.pi)


def _k1_function(regime: RegimeTag, data: PerturbationData,
                 params: FluxParams, constants: ModelConstants,
                 eps: float, norm_eh_sq: float):
    """Real part of the scalar dispersion function on J_eps."""
    beta = data.beta

    if regime is RegimeTag.SimpleNonInt:
        return lambda x: (beta * eps - x
                          - eps ** 2 * f_profile(x, data, params, constants,
                                                 norm_eh_sq))
    if regime is RegimeTag.SimpleIntW2NonZero:
        def k1(x):
            _, f, h = integer_profiles(x, data, constants)
            return beta * eps - x - eps ** 2 * f + eps ** 3 * h
        return k1
    if regime is RegimeTag.DegNonInt:
        return lambda x: (beta * eps - x
                          - eps ** 2 * degenerate_profiles(x, data, params,
                                                           constants,
                                                           norm_eh_sq)[1])
    if regime is RegimeTag.DegIntW6NonZero:
        w6_sq = abs(data.w6) ** 2
        form = data.phi2_form or 0.0

        def k1(x):
            _require_positive(x)
            lg = math.log(x)
            g_hat = w6_sq / (x * lg ** 2)
            f_hat = g_hat * (lg + constants.m_circ) / math.pi
            h_hat = w6_sq * form / (math.pi ** 2 * (x * lg) ** 2)
            return beta * eps - x - eps ** 2 * f_hat + eps ** 3 * h_hat
        return k1

    # w = 0 integer regimes: K1 = beta eps - x + eps^2 a1 log x
    a1 = _log_coefficient(data, regime, norm_eh_sq)
    return lambda x: beta * eps - x + eps ** 2 * a1 * math.log(x)


def solve_position(regime: RegimeTag, data: PerturbationData,
                   params: FluxParams, constants: ModelConstants,
                   eps: float, norm_eh_sq: float) -> float:
    """Unique root of K1 in J_eps = (beta eps/2, 3 beta eps/2)."""
    beta = data.beta
    if eps <= 0.0:
        raise DomainError(f"eps must be positive, got {eps}")
    k1 = _k1_function(regime, data, params, constants, eps, norm_eh_sq)
    lo, hi = 0.5 * beta * eps, 1.5 * beta * eps
    f_lo, f_hi = k1(lo), k1(hi)
    if not (f_lo > 0.0 > f_hi):
        raise AssumptionError(
            f"eps = {eps} too large: K1 does not change sign over "
            f"J_eps = ({lo:.3e}, {hi:.3e})")
    x = brentq(k1, lo, hi, xtol=1e-18 * beta * eps, rtol=8.9e-16,
               maxiter=200)
    # Newton polish with a central-difference slope
    for _ in range(3):
        r = k1(x)
        if abs(r) < ROOT_RESIDUAL_RTOL * beta * eps:
            break
        dx = 1e-7 * x
        slope = (k1(x + dx) - k1(x - dx)) / (2.0 * dx)
        x -= r / slope
    if abs(k1(x)) >= ROOT_RESIDUAL_RTOL * beta * eps:
        raise AssumptionError(
            f"dispersion root did not converge: residual {k1(x):.3e}")
    return float(x)


# -- prediction pipeline ------------------------------------------------

@dataclass(frozen=True)
class PredictionContext:
    """Everything eps-independent, reusable across a sweep."""

    field: FieldSpec
    V: PotentialSpec
    params: FluxParams
    gauge: GaugeData
    modes: ZeroModeBasis
    virtuals: VirtualStates
    data: PerturbationData
    norm_eh_sq: float
    constants: ModelConstants = field(default_factory=ModelConstants)


def prepare(fld: FieldSpec, V: PotentialSpec, selected_mode_index: int = 0,
            constants: ModelConstants | None = None,
            gauge: GaugeData | None = None) -> PredictionContext:
    """Build the eps-independent prediction context for one field/potential."""
    constants = constants or ModelConstants()
    params = flux_params(fld.flux)
    if gauge is None:
        gauge = superpotential(fld)
    modes = build_zero_modes(gauge, params)
    virtuals = build_virtual_states(gauge, params)
    data = perturbation_data(modes, virtuals, V, selected_mode_index,
                             params=params)
    return PredictionContext(field=fld, V=V, params=params, gauge=gauge,
                             modes=modes, virtuals=virtuals, data=data,
                             norm_eh_sq=gauge.norm_eh_sq, constants=constants)


LOG_MARKER = "eps/(log eps)^2"


def predict_from_context(ctx: PredictionContext, eps: float) -> ResonancePrediction:
    data, params, constants = ctx.data, ctx.params, ctx.constants
    norm = ctx.norm_eh_sq
    beta = data.beta
    if eps <= 0.0:
        raise DomainError(f"eps must be positive, got {eps}")
    if eps > EPS_OVER_BETA_MAX * beta:
        raise AssumptionError(
            f"eps = {eps} exceeds {EPS_OVER_BETA_MAX} * beta = "
            f"{EPS_OVER_BETA_MAX * beta:.3e}: asymptotic bracket invalid")

    regime = determine_regime(params, data)
    x_eps = solve_position(regime, data, params, constants, eps, norm)

    if regime is RegimeTag.SimpleNonInt:
        a = params.alpha
        eta, sigma = eta_sigma(a, norm)
        gamma = eps ** 2 * g_profile(x_eps, data, params, constants, norm)
        terms = [(eta * beta ** a, a)]
        if not data.w_zero:
            terms.append((sigma * beta ** (1.0 - a) * abs(data.w) ** 2,
                          3.0 - a))
        error_order = f"eps^{data.nu:.6g}"
        sensitive = not data.w_zero
    elif regime is RegimeTag.SimpleIntW2NonZero:
        gamma = eps * abs(data.w2) ** 2 / (beta * math.log(eps) ** 2)
        terms = [(abs(data.w2) ** 2 / beta, LOG_MARKER)]
        error_order = "1/|log eps|"
        sensitive = True
    elif regime is RegimeTag.SimpleIntW2Zero:
        coef = 0.25 * (abs(data.w1) ** 2 + math.pi ** 2 * beta ** 2 / norm)
        gamma = eps ** 2 * coef
        terms = [(coef, 2.0)]
        error_order = "eps log eps"
        sensitive = not data.w1_zero
    elif regime is RegimeTag.DegNonInt:
        ap = params.alpha_prime
        eta_t, sigma_t = eta_sigma_tilde(ap, constants)
        gamma = eps ** 2 * degenerate_profiles(x_eps, data, params,
                                               constants, norm)[0]
        terms = []
        if not data.w3_zero:
            terms.append((eta_t * abs(data.w3) ** 2 * beta ** (ap - 1.0),
                          1.0 + ap))
        if not data.w4_zero:
            terms.append((sigma_t * abs(data.w4) ** 2 * beta ** (-ap),
                          2.0 - ap))
        error_order = f"eps^{data.nu_tilde:.6g}"
        sensitive = True
    elif regime is RegimeTag.DegIntW6NonZero:
        gamma = eps * abs(data.w6) ** 2 / (beta * math.log(eps) ** 2)
        terms = [(abs(data.w6) ** 2 / beta, LOG_MARKER)]
        error_order = "1/|log eps|"
        sensitive = True
    else:  # DegIntW6Zero
        coef = 0.25 * (abs(data.w5) ** 2
                       + math.pi ** 2 * abs(data.w3) ** 2 / norm)
        gamma = eps ** 2 * coef
        terms = [(coef, 2.0)]
        error_order = "eps log eps"
        sensitive = not data.w5_zero

    if not gamma > 0.0:
        raise AssumptionError(
            f"computed width gamma = {gamma} is not positive")
    return ResonancePrediction(regime=regime, eps=eps, x_eps=x_eps,
                               gamma_eps=float(gamma),
                               leading_terms=tuple(terms),
                               error_order=error_order,
                               convention_sensitive=sensitive, beta=beta)


def predict(fld: FieldSpec, V: PotentialSpec, eps: float,
            constants: ModelConstants | None = None,
            selected_mode_index: int = 0) -> ResonancePrediction:
    """One-shot prediction; use prepare() + predict_from_context for sweeps."""
    ctx = prepare(fld, V, selected_mode_index, constants)
    return predict_from_context(ctx, eps)


def anomalous_moment_predict(fld: FieldSpec, g_factor: float,
                             constants: ModelConstants | None = None
                             ) -> ResonancePrediction:
    """Resonance induced by a g-factor below 2, with V := B.

    The coupling is eps = (2 - g)/2; beta = <psi0, B psi0> is positive
    automatically (it equals || (i grad + A) psi0 ||^2).
    """
    if g_factor >= 2.0:
        raise DomainError(
            f"anomalous moment needs g < 2, got g = {g_factor}")
    alpha = fld.flux
    if not 1.0 < alpha <= 2.0:
        raise DomainError(
            f"anomalous-moment asymptotics cover 1 < alpha <= 2, got {alpha}")
    eps = 0.5 * (2.0 - g_factor)
    V = PotentialSpec(radial=fld.profile, angular="none",
                      rho=2.0 * fld.rho, base=1.0)
    return predict(fld, V, eps, constants)
