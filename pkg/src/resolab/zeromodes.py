"""Threshold eigenfunctions, virtual states, and perturbation coefficients.

All constructions assume a radial field, so each basis function factorizes
as c r^m e^{i m theta} e^{h(r)}.  Matrix elements against a potential with
finitely many angular harmonics then reduce to one-dimensional radial
quadratures selected by the harmonic index; the angular factor of the
product rule is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError
from .fields import FluxParams, PotentialSpec
from .gauge import GaugeData, segment_quadrature, weighted_norm

# |w| below W_ZERO_RTOL * ||V psi0|| * ||state|| counts as exactly zero
W_ZERO_RTOL = 1e-10
# relative gap under which the selected eigenvalue is treated as degenerate
KAPPA_GAP_RTOL = 1e-8


@dataclass(frozen=True)
class AngularState:
    """One angular-momentum channel: coeff * (x1+ix2)^m * e^h."""

    m: int
    coeff: float
    gauge: GaugeData

    def radial(self, r):
        """Modulus profile coeff * r^m * e^{h(r)}."""
        r = np.asarray(r, dtype=float)
        return self.coeff * r ** self.m * np.exp(self.gauge.h(r))

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        r = np.hypot(x1, x2)
        out = self.coeff * (x1 + 1j * x2) ** self.m * np.exp(self.gauge.h(r))
        return out if out.ndim else complex(out)


@dataclass(frozen=True)
class ZeroModeBasis:
    """Orthonormal kernel basis psi_j = c_j z^{j-1} e^h, j = 1..N."""

    N: int
    modes: tuple
    gauge: GaugeData


@dataclass(frozen=True)
class VirtualStates:
    """Bounded threshold solutions that fail to be square-integrable.

    Non-integer flux has a single state phi = z^N e^h; integer flux has the
    pair phi1 = z^{N+1} e^h and phi2 = z^N e^h.  For flux above 2 the extra
    square-integrable helper psi = z e^h / ||z e^h||^2 is attached as well.
    The monomial prefactor is fixed to normalization_convention (default 1);
    overlap magnitudes inherit that convention, vanishing patterns do not.
    """

    integer_flux: bool
    phi: AngularState | None
    phi1: AngularState | None
    phi2: AngularState | None
    psi: AngularState | None
    normalization_convention: float = 1.0


class ModeSum:
    """Linear combination of zero modes with fixed coefficients."""

    def __init__(self, coeffs, basis: ZeroModeBasis):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.basis = basis

    def __call__(self, x1, x2):
        out = sum(c * mode(x1, x2) for c, mode in zip(self.coeffs, self.basis.modes))
        return out

    def components(self):
        """Map angular momentum m -> scalar amplitude multiplying r^m e^h."""
        return {mode.m: float(c * mode.coeff)
                for c, mode in zip(self.coeffs, self.basis.modes)
                if c != 0.0}


@dataclass(frozen=True)
class PerturbationData:
    """Overlap coefficients of one selected kernel eigenfunction.

    Entries that do not apply to the flux class at hand are None.  The
    *_zero flags record whether the corresponding overlap fell below the
    quadrature noise floor; exponents nu and nu_tilde are derived from them.
    """

    beta: float
    kappa_list: np.ndarray
    selected_index: int
    psi0V: ModeSum
    w: float | None = None
    w1: float | None = None
    w2: float | None = None
    w3: float | None = None
    w4: float | None = None
    w5: float | None = None
    w6: float | None = None
    w_zero: bool | None = None
    w1_zero: bool | None = None
    w2_zero: bool | None = None
    w3_zero: bool | None = None
    w4_zero: bool | None = None
    w5_zero: bool | None = None
    w6_zero: bool | None = None
    nu: float | None = None
    nu_tilde: float | None = None
    phi2_form: float | None = None  # <phi2, V phi2>, integer flux only


def _moment_breakpoints(r_max: float) -> np.ndarray:
    """Graded breakpoints for integrands smooth on (0, r_max)."""
    n = max(200, int(120 * math.log10(max(r_max / 1e-4, 10.0))))
    return np.concatenate([[0.0], np.geomspace(1e-4, r_max, n)])


def radial_moment(gauge: GaugeData, power: int, weight=None, r_max=None):
    """Integrate r^{power+1} e^{2h(r)} weight(r) over (0, r_max).

    The extra factor of r is the area measure; weight=None means 1.  A
    graded fixed-order product rule is exact to roundoff for these smooth
    decaying integrands.
    """
    if r_max is None:
        r_max = float(gauge.r_table[-1])

    def f(r):
        v = r ** (power + 1) * np.exp(2.0 * gauge.h(r))
        return v * weight(r) if weight is not None else v

    return float(np.sum(segment_quadrature(f, _moment_breakpoints(r_max))))


def build_zero_modes(gauge: GaugeData, params: FluxParams) -> ZeroModeBasis:
    """Normalized kernel basis; c_j makes each mode unit norm."""
    if params.alpha <= 1.0:
        raise AssumptionError("zero modes require flux alpha > 1")
    modes = tuple(
        AngularState(m, weighted_norm(gauge, m) ** -0.5, gauge)
        for m in range(params.N)
    )
    return ZeroModeBasis(N=params.N, modes=modes, gauge=gauge)


def build_virtual_states(gauge: GaugeData, params: FluxParams) -> VirtualStates:
    """Monomial virtual states for the given flux class, convention 1."""
    if params.alpha <= 1.0:
        raise AssumptionError("virtual states require flux alpha > 1")
    conv = 1.0
    psi = None
    if params.alpha > 2.0:
        psi = AngularState(1, 1.0 / weighted_norm(gauge, 1), gauge)
    if params.is_integer:
        return VirtualStates(
            integer_flux=True,
            phi=None,
            phi1=AngularState(params.N + 1, conv, gauge),
            phi2=AngularState(params.N, conv, gauge),
            psi=psi,
            normalization_convention=conv,
        )
    return VirtualStates(
        integer_flux=False,
        phi=AngularState(params.N, conv, gauge),
        phi1=None,
        phi2=None,
        psi=psi,
        normalization_convention=conv,
    )


def project_potential(modes: ZeroModeBasis, V: PotentialSpec) -> np.ndarray:
    """Matrix <psi_j, V psi_k> in the zero-mode basis, exactly Hermitian."""
    harm = V.harmonics()
    n = modes.N
    M = np.zeros((n, n))
    for j, mj in enumerate(modes.modes):
        for k, mk in enumerate(modes.modes):
            if k < j:
                continue
            q = mj.m - mk.m
            if q not in harm:
                continue
            M[j, k] = (2.0 * math.pi * mj.coeff * mk.coeff
                       * radial_moment(modes.gauge, mj.m + mk.m, harm[q]))
            M[k, j] = M[j, k]
    return 0.5 * (M + M.T)


def state_overlap(basis: ZeroModeBasis, coeffs, V: PotentialSpec,
                  state: AngularState) -> float:
    """<V psi0, state> for psi0 = sum_j coeffs[j] psi_j (all factors real)."""
    harm = V.harmonics()
    total = 0.0
    for c, mode in zip(coeffs, basis.modes):
        if c == 0.0:
            continue
        q = mode.m - state.m
        if q not in harm:
            continue
        total += (c * 2.0 * math.pi * mode.coeff * state.coeff
                  * radial_moment(basis.gauge, mode.m + state.m, harm[q]))
    return total


def state_quadratic_form(state: AngularState, V: PotentialSpec) -> float:
    """<state, V state>; only the isotropic harmonic survives."""
    harm = V.harmonics()
    if 0 not in harm:
        return 0.0
    return (2.0 * math.pi * state.coeff ** 2
            * radial_moment(state.gauge, 2 * state.m, harm[0]))


def _perturbed_mode_norm(basis: ZeroModeBasis, coeffs, V: PotentialSpec) -> float:
    """||V psi0||_2 by a radial-by-angular product rule.

    The angular rule is a uniform trapezoid, exact for the finite trig
    degree of |V psi0|^2.
    """
    n_theta = 64
    theta = np.arange(n_theta) * (2.0 * math.pi / n_theta)
    ct, st = np.cos(theta), np.sin(theta)

    def f(r):
        x1 = r[:, None] * ct[None, :]
        x2 = r[:, None] * st[None, :]
        psi = sum(c * mode(x1, x2) for c, mode in zip(coeffs, basis.modes))
        v = V(x1, x2)
        return r * np.mean(np.abs(v * psi) ** 2, axis=1)

    r_max = float(basis.gauge.r_table[-1])
    val = float(np.sum(segment_quadrature(f, _moment_breakpoints(r_max))))
    return math.sqrt(2.0 * math.pi * max(val, 0.0))


def _state_norm_on_support(state: AngularState, V: PotentialSpec) -> float:
    """||state||_2 restricted to |x| <= the effective support of V.

    Unbounded rational tails are truncated at the gauge table end; the
    result only scales the w = 0 detection threshold.
    """
    r_sup = V.radial.support_radius()
    r_max = min(float(state.gauge.r_table[-1]), r_sup)
    val = radial_moment(state.gauge, 2 * state.m, None, r_max=r_max)
    return state.coeff * math.sqrt(2.0 * math.pi * val)


def perturbation_data(modes: ZeroModeBasis, virtuals: VirtualStates,
                      V: PotentialSpec, selected_mode_index: int = 0,
                      params: FluxParams | None = None) -> PerturbationData:
    """All overlap coefficients for one eigenfunction of P0 V P0.

    selected_mode_index counts eigenvalues in descending order.  The
    selected eigenvalue must be simple (relative gap > KAPPA_GAP_RTOL) and
    positive, otherwise the resonance picture does not apply.
    """
    M = project_potential(modes, V)
    evals, evecs = np.linalg.eigh(M)
    order = np.argsort(evals)[::-1]
    kappa_list = evals[order]
    evecs = evecs[:, order]

    k = selected_mode_index
    if not 0 <= k < modes.N:
        raise AssumptionError(
            f"selected_mode_index {k} outside 0..{modes.N - 1}")
    kappa = float(kappa_list[k])

    gap_scale = float(np.max(np.abs(kappa_list))) or 1.0
    for i, other in enumerate(kappa_list):
        if i != k and abs(kappa - other) <= KAPPA_GAP_RTOL * gap_scale:
            raise AssumptionError(
                "selected eigenvalue of P0 V P0 is degenerate: "
                f"kappa[{k}] = {kappa:.3e} vs kappa[{i}] = {other:.3e}")
    if kappa <= 0.0:
        raise AssumptionError(
            f"selected eigenvalue kappa = {kappa:.3e} <= 0: the threshold "
            "eigenvalue moves into the discrete spectrum (bound state), "
            "no resonance")

    coeffs = evecs[:, k]
    # sign convention: make the largest-magnitude coefficient positive
    pivot = int(np.argmax(np.abs(coeffs)))
    if coeffs[pivot] < 0:
        coeffs = -coeffs
    psi0V = ModeSum(coeffs, modes)

    norm_vpsi = _perturbed_mode_norm(modes, coeffs, V)

    def overlap_and_flag(state):
        val = state_overlap(modes, coeffs, V, state)
        floor = W_ZERO_RTOL * norm_vpsi * _state_norm_on_support(state, V)
        return val, bool(abs(val) <= floor)

    data = dict(beta=kappa, kappa_list=kappa_list, selected_index=k,
                psi0V=psi0V)

    alpha = _flux_alpha(modes, params)
    integer = virtuals.integer_flux

    if not integer:
        data["w"], data["w_zero"] = overlap_and_flag(virtuals.phi)
        data["nu"] = _nu_simple(alpha, data["w_zero"])
    else:
        data["w1"], data["w1_zero"] = overlap_and_flag(virtuals.phi1)
        data["w2"], data["w2_zero"] = overlap_and_flag(virtuals.phi2)
        data["phi2_form"] = state_quadratic_form(virtuals.phi2, V)

    if virtuals.psi is not None:
        data["w3"], data["w3_zero"] = overlap_and_flag(virtuals.psi)
        if not integer:
            data["w4"], data["w4_zero"] = data["w"], data["w_zero"]
            data["nu_tilde"] = _nu_degenerate(alpha, data["w3_zero"],
                                              data["w4_zero"])
        else:
            data["w5"], data["w5_zero"] = overlap_and_flag(virtuals.phi1)
            data["w6"], data["w6_zero"] = overlap_and_flag(virtuals.phi2)

    return PerturbationData(**data)


def _flux_alpha(modes: ZeroModeBasis, params: FluxParams | None) -> float:
    if params is not None:
        return params.alpha
    return modes.gauge.alpha


def _nu_simple(alpha: float, w_zero: bool) -> float:
    """Error exponent of the non-integer expansion."""
    if w_zero:
        return alpha - 1.0
    return min(alpha - math.floor(alpha), math.ceil(alpha) - alpha)


def _nu_degenerate(alpha: float, w3_zero: bool, w4_zero: bool) -> float | None:
    ap = alpha - math.floor(alpha)
    mu = min(ap, 1.0 - ap)
    if not w3_zero and not w4_zero:
        return mu
    if not w3_zero and w4_zero:
        return ap
    if w3_zero and not w4_zero:
        return 1.0 - ap
    return None
