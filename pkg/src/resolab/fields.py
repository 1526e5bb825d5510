"""Magnetic-field and potential models on the plane.

Everything here is radial or radial-times-trig: a magnetic field B(x) = b(|x|)
with finite flux, and a perturbing potential built from a radial profile u(r)
with an optional low-order angular factor.  The flux

    alpha = (1/2pi) ∫ B dx = ∫_0^inf b(r) r dr

drives the entire downstream classification (number of zero modes, distance
to the nearest integer), so it is computed either from the analytic
antiderivative (closed-form profiles) or by adaptive quadrature at relative
tolerance 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import AssumptionError

FLUX_RTOL = 1e-10
INTEGER_FLUX_TOL = 1e-12
# decay exponent demanded of the field, |B| <~ (1+|x|^2)^(-rho)
FIELD_RHO_MIN = 3.5


@dataclass(frozen=True)
class RadialProfile:
    """A nonnegative radial profile r >= 0 -> value.

    kind "closed-form-rational": value = A (1 + (r/s)^2)^(-p) with
    params = (A, p) or (A, p, s).  kind "tabulated": cubic interpolation of
    the (r, value) table in ``samples``; zero beyond the last sample.
    """

    kind: str
    params: tuple = ()
    samples: tuple | None = None

    def __post_init__(self):
        if self.kind == "closed-form-rational":
            if len(self.params) not in (2, 3):
                raise AssumptionError(
                    "closed-form-rational profile needs params (amplitude, power[, scale])")
            if self.power <= 0:
                raise AssumptionError("closed-form-rational power must be positive")
        elif self.kind == "tabulated":
            if self.samples is None:
                raise AssumptionError("tabulated profile needs samples")
            r, v = self.samples
            r = np.asarray(r, dtype=float)
            if r.ndim != 1 or r.size < 4:
                raise AssumptionError("tabulated profile needs >= 4 samples")
            if r[0] < 0 or np.any(np.diff(r) <= 0):
                raise AssumptionError("tabulated r grid must be strictly increasing, r[0] >= 0")
            object.__setattr__(self, "samples", (r, np.asarray(v, dtype=float)))
            object.__setattr__(self, "_spline", CubicSpline(r, self.samples[1]))
        else:
            raise AssumptionError(f"unknown profile kind {self.kind!r}")

    # -- closed-form parameter accessors -------------------------------
    @property
    def amplitude(self) -> float:
        return float(self.params[0])

    @property
    def power(self) -> float:
        return float(self.params[1])

    @property
    def scale(self) -> float:
        return float(self.params[2]) if len(self.params) > 2 else 1.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "closed-form-rational":
            t = (r / self.scale) ** 2
            out = self.amplitude * (1.0 + t) ** (-self.power)
        else:
            rt, _ = self.samples
            out = np.where((r >= rt[0]) & (r <= rt[-1]), self._spline(r), 0.0)
        return out if out.ndim else float(out)

    def support_radius(self, tiny: float = 1e-14) -> float:
        """Radius beyond which the profile is negligible relative to its peak."""
        if self.kind == "tabulated":
            return float(self.samples[0][-1])
        # A(1+(r/s)^2)^-p <= tiny*A  ->  r/s >= tiny^(-1/2p)
        return self.scale * tiny ** (-0.5 / self.power)


@dataclass
class FieldSpec:
    """Radial magnetic field b(r) with decay exponent rho.

    rho refers to the envelope |B(x)| <= C (1+|x|^2)^(-rho); the asymptotic
    theory assumes rho > 7/2.
    """

    profile: RadialProfile
    rho: float
    _flux: float | None = field(default=None, repr=False)

    def b(self, r):
        return self.profile(r)

    @property
    def flux(self) -> float:
        if self._flux is None:
            self._flux = flux(self)
        return self._flux


@dataclass
class PotentialSpec:
    """Perturbing potential V built from a radial profile u(r).

    angular "none":        V = u(r)
    angular "quadrupole":  V = (1 + x1^2 - x2^2) u  = (1 + r^2 cos 2θ) u
    angular "dipole":      V = (base + x1) u        = (base + r cos θ) u

    rho is the decay exponent in the |V(x)| <= C <x>^(-rho) sense.
    ``base`` only matters for the dipole family; it sets the radial
    (angle-averaged) part relative to the cos θ part.
    """

    radial: RadialProfile
    angular: str = "none"
    rho: float = 8.0
    base: float = 1.0

    def __post_init__(self):
        if self.angular not in ("none", "quadrupole", "dipole"):
            raise AssumptionError(f"unknown angular family {self.angular!r}")

    def u(self, r):
        return self.radial(r)

    def __call__(self, x1, x2):
        """Pointwise V(x); accepts arrays."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        r = np.hypot(x1, x2)
        u = self.radial(r)
        if self.angular == "none":
            return u
        if self.angular == "quadrupole":
            return (1.0 + x1 * x1 - x2 * x2) * u
        return (self.base + x1) * u

    def harmonics(self) -> dict[int, Callable]:
        """Angular Fourier components: V = sum_q V_q(r) e^{i q θ}.

        Every supported family is a trig polynomial in θ, so this
        decomposition is exact and finite.
        """
        u = self.radial
        if self.angular == "none":
            return {0: lambda r: u(r)}
        if self.angular == "quadrupole":
            half = lambda r: 0.5 * np.asarray(r) ** 2 * u(r)
            return {0: lambda r: u(r), 2: half, -2: half}
        half = lambda r: 0.5 * np.asarray(r) * u(r)
        return {0: lambda r: self.base * u(r), 1: half, -1: half}


@dataclass(frozen=True)
class FluxParams:
    """Flux-derived classification scalars.

    N: zero-mode multiplicity; mu: distance from alpha to the nearest
    integer; alpha_prime: alpha - N in (0,1) for non-integer alpha, None
    at integers.
    """

    alpha: float
    N: int
    mu: float
    alpha_prime: float | None
    is_integer: bool


def flux(fld: FieldSpec) -> float:
    """alpha = ∫_0^inf b(r) r dr (relative tolerance 1e-10)."""
    prof = fld.profile
    if prof.kind == "closed-form-rational":
        if prof.power <= 1.0:
            raise AssumptionError(
                "divergent flux: closed-form power must exceed 1 for integrable B")
        return prof.amplitude * prof.scale ** 2 / (2.0 * (prof.power - 1.0))
    r, _ = prof.samples
    val, err = integrate.quad(lambda s: prof(s) * s, r[0], r[-1],
                              epsabs=0.0, epsrel=FLUX_RTOL, limit=200)
    if val != 0.0 and abs(err / val) > 1e-6:
        raise AssumptionError("flux quadrature failed to reach requested tolerance")
    return val


def check_decay(fld: FieldSpec) -> dict:
    """Sample |b(r)| (1+r^2)^rho on a geometric grid up to r = 1e3.

    satisfied requires rho > 7/2 and a bounded (non-growing) ratio.  Never
    raises; the report is advisory.
    """
    r = np.geomspace(1e-3, 1e3, 241)
    ratio = np.abs(fld.b(r)) * (1.0 + r * r) ** fld.rho
    worst = float(ratio.max())
    if worst == 0.0:
        return {"satisfied": True, "worst_ratio": 0.0, "rho": fld.rho}
    tail = ratio[r >= 100.0]
    growing = bool(tail.size >= 2 and tail[-1] > 2.0 * max(tail[0], 1e-300))
    satisfied = (fld.rho > FIELD_RHO_MIN) and not growing
    return {"satisfied": satisfied, "worst_ratio": worst, "rho": fld.rho}


def flux_params(alpha: float) -> FluxParams:
    """Classify the flux: multiplicity, integer distance, fractional part."""
    if not alpha > 1.0:
        raise AssumptionError(
            f"no zero modes: flux alpha = {alpha} but the theory requires alpha > 1")
    nearest = round(alpha)
    mu = abs(alpha - nearest)
    if mu < INTEGER_FLUX_TOL:
        return FluxParams(alpha=alpha, N=int(nearest) - 1, mu=0.0,
                          alpha_prime=None, is_integer=True)
    n = math.floor(alpha)
    return FluxParams(alpha=alpha, N=n, mu=mu, alpha_prime=alpha - n,
                      is_integer=False)


# -- stock examples ----------------------------------------------------

def rational_field(alpha0: float, power: int = 2, scale: float = 1.0) -> FieldSpec:
    """b(r) = A (1+(r/s)^2)^(-p) normalized so the flux equals alpha0."""
    amp = 2.0 * (power - 1.0) * alpha0 / scale ** 2
    return FieldSpec(profile=RadialProfile("closed-form-rational", (amp, power, scale)),
                     rho=float(power))


def rational_potential(power: float = 4.0, angular: str = "none",
                       amplitude: float = 1.0, base: float = 1.0) -> PotentialSpec:
    """u(r) = amplitude (1+r^2)^(-power) with the requested angular factor."""
    rho = 2.0 * power - {"none": 0.0, "quadrupole": 2.0, "dipole": 1.0}[angular]
    return PotentialSpec(radial=RadialProfile("closed-form-rational", (amplitude, power)),
                         angular=angular, rho=rho, base=base)
