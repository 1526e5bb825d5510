"""Half-line sector reduction: discretization oracles and channel coupling."""

import functools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import jn_zeros

from resolab import (
    AngularState,
    AssumptionError,
    DomainError,
    ModeSum,
    build_zero_modes,
    flux_params,
    rational_field,
    rational_potential,
    superpotential,
)
from resolab.radial import (
    RadialGrid,
    assemble_channels,
    assemble_sector,
    radial_grid,
    restrict_radial,
    sector_potential,
    state_channels,
)


@functools.lru_cache(maxsize=None)
def _setup(alpha0):
    fld = rational_field(alpha0)
    gauge = superpotential(fld)
    return fld, gauge


@functools.lru_cache(maxsize=None)
def _small_grid():
    return radial_grid(r_core=8.0, h_core=0.1, r_max=40.0, h_far=1.0, ratio=1.1)


def _dense_from_band(ab, nc):
    """Unpack LAPACK band storage (lower = upper = nc) to a dense matrix."""
    dim = ab.shape[1]
    out = np.zeros((dim, dim), dtype=ab.dtype)
    for off in range(-nc, nc + 1):
        row = nc + off
        for j in range(dim):
            i = j + off
            if 0 <= i < dim:
                out[i, j] = ab[row, j]
    return out


# --- grid construction ---


def test_grid_shapes_and_masses():
    g = _small_grid()
    assert g.edges[0] == 0.0
    assert len(g.edges) == g.n + 1
    assert np.all(np.diff(g.edges) > 0)
    # nodes sit strictly inside their cells
    assert np.all(g.r > g.edges[:-1])
    assert np.all(g.r < g.edges[1:])
    # cell masses integrate r dr exactly
    np.testing.assert_allclose(
        g.mu, 0.5 * (g.edges[1:] ** 2 - g.edges[:-1] ** 2), rtol=1e-14)


@settings(max_examples=40, deadline=None)
@given(
    h_core=st.floats(0.02, 0.5),
    span=st.floats(2.0, 30.0),
    h_far=st.floats(0.5, 5.0),
    ratio=st.floats(1.01, 1.5),
)
def test_grid_invariants(h_core, span, h_far, ratio):
    r_core = 20.0 * h_core
    g = radial_grid(r_core=r_core, h_core=h_core, r_max=r_core + span,
                    h_far=max(h_far, h_core), ratio=ratio)
    steps = np.diff(g.edges)
    assert g.edges[0] == 0.0
    assert np.all(steps > 0)
    assert steps.max() <= max(h_far, h_core) * (1 + 1e-12)
    assert g.edges[-1] >= r_core + span


def test_grid_rejects_bad_parameters():
    with pytest.raises(DomainError):
        radial_grid(h_core=0.0)
    with pytest.raises(DomainError):
        radial_grid(h_core=2.0, h_far=1.0)
    with pytest.raises(DomainError):
        radial_grid(r_core=100.0, r_max=50.0)
    with pytest.raises(DomainError):
        radial_grid(ratio=1.0)


def test_grid_validation_catches_inconsistent_arrays():
    with pytest.raises(DomainError):
        RadialGrid(r=np.array([1.0, 2.0]), edges=np.array([0.5, 1.5, 2.5]))
    with pytest.raises(DomainError):
        RadialGrid(r=np.array([2.0, 1.0]), edges=np.array([0.0, 1.5, 2.5]))
    with pytest.raises(DomainError):
        RadialGrid(r=np.array([1.0]), edges=np.array([0.0, 2.0, 3.0]))


# --- free-field oracle: Dirichlet Bessel spectrum ---


def test_free_sector_matches_bessel_zeros():
    g = radial_grid(r_core=30.0, h_core=0.05, r_max=200.0, h_far=0.5,
                    ratio=1.05)
    fld, gauge = _setup(0.0)
    op = assemble_sector(gauge, fld, None, 0.0, 0, g)
    wall = g.r[-1] + (g.r[-1] - g.r[-2])
    ev = op.eig_window(0.0, 0.01, vectors=False)
    assert len(ev) >= 5
    exact = (jn_zeros(0, len(ev)) / wall) ** 2
    np.testing.assert_allclose(ev, exact, rtol=2e-4)


def test_eig_window_vectors_are_eigenpairs():
    g = _small_grid()
    fld, gauge = _setup(1.5)
    op = assemble_sector(gauge, fld, None, 0.0, 0, g)
    w, v = op.eig_window(0.0, 0.5, vectors=True)
    assert len(w) == op.count_levels(0.0, 0.5)
    for k in range(len(w)):
        res = op.apply(v[:, k]) - w[k] * v[:, k]
        assert np.linalg.norm(res) < 1e-10 * max(1.0, abs(w[k]))


# --- zero modes annihilated to second order ---


@pytest.mark.parametrize("m", [0, 1])
def test_zero_mode_residual_shrinks_quadratically(m):
    fld, gauge = _setup(2.5)
    res = []
    for h_core in (0.04, 0.02):
        g = radial_grid(r_core=60.0, h_core=h_core, r_max=2000.0,
                        h_far=2.0, ratio=1.05)
        op = assemble_sector(gauge, fld, None, 0.0, m, g)
        v = op.to_vector(lambda r: r ** m * np.exp(gauge.h(r)))
        v = v / np.linalg.norm(v)
        res.append(np.linalg.norm(op.apply(v)))
    assert res[0] < 5e-3
    # halving the core step should cut the residual by about four
    assert res[1] / res[0] < 0.35


def test_sector_potential_centrifugal_tail():
    fld, gauge = _setup(1.5)
    r = np.array([50.0, 120.0, 300.0])
    w = sector_potential(gauge, fld, 3, r)
    # far field: b ~ 0 and Phi ~ alpha, so W -> (m - alpha)^2 / r^2
    np.testing.assert_allclose(w, (3.0 - 1.5) ** 2 / r ** 2, rtol=1e-3)


def test_mode_norm_matches_closed_form():
    # alpha0 = 2 profile has e^h = (1+r^2)^(-1), giving |e^h|^2 = pi
    fld, gauge = _setup(2.0)
    g = radial_grid(r_core=20.0, h_core=0.02, r_max=500.0, h_far=2.0,
                    ratio=1.05)
    op = assemble_sector(gauge, fld, None, 0.0, 0, g)
    v = op.to_vector(lambda r: np.exp(gauge.h(r)))
    assert abs(np.vdot(v, v).real - math.pi) < 2e-3 * math.pi


# --- resolvent through the shifted solver ---


def test_zero_mode_resolvent_coupling_is_minus_z():
    fld, gauge = _setup(2.5)
    g = radial_grid(r_core=40.0, h_core=0.02, r_max=2000.0, h_far=2.0,
                    ratio=1.05)
    op = assemble_sector(gauge, fld, None, 0.0, 0, g)
    mode = AngularState(m=0, coeff=1.0, gauge=gauge)
    v0 = restrict_radial(op, mode)
    z = 0.2 + 0.05j
    u = op.solve_shifted([z], v0)[0]
    f = 1.0 / np.vdot(v0, u)
    assert abs(f + z) < 2e-3 * abs(z)


def test_solve_shifted_actually_solves():
    g = _small_grid()
    fld, gauge = _setup(1.5)
    op = assemble_sector(gauge, fld, None, 0.0, 1, g)
    rng = np.random.default_rng(7)
    rhs = rng.standard_normal(op.dimension) + 1j * rng.standard_normal(op.dimension)
    shifts = np.array([0.3 + 0.01j, -0.2 + 0.2j])
    sols = op.solve_shifted(shifts, rhs)
    for z, u in zip(shifts, sols):
        res = op.apply(u) - z * u - rhs
        assert np.linalg.norm(res) < 1e-10 * np.linalg.norm(rhs)


# --- sector assembly contracts ---


def test_anisotropic_potential_refused_in_single_sector():
    fld, gauge = _setup(1.5)
    V = rational_potential(power=4.0, angular="quadrupole")
    with pytest.raises(AssumptionError):
        assemble_sector(gauge, fld, V, 1e-3, 0, _small_grid())
    # eps = 0 keeps the unperturbed operator usable
    assemble_sector(gauge, fld, V, 0.0, 0, _small_grid())


def test_radial_potential_shifts_diagonal_only():
    fld, gauge = _setup(1.5)
    V = rational_potential(power=4.0, angular="none")
    g = _small_grid()
    base = assemble_sector(gauge, fld, None, 0.0, 0, g)
    pert = assemble_sector(gauge, fld, V, 1e-2, 0, g)
    np.testing.assert_allclose(pert.e, base.e, rtol=0, atol=0)
    # absolute floor covers cancellation noise in the stiff kinetic diagonal
    np.testing.assert_allclose(pert.d - base.d,
                               1e-2 * (1.0 + g.r ** 2) ** -4.0,
                               rtol=1e-9, atol=1e-13)


# --- coupled channels ---


def test_channel_band_is_hermitian_and_selection_ruled():
    fld, gauge = _setup(2.5)
    V = rational_potential(power=4.0, angular="quadrupole")
    g = _small_grid()
    op = assemble_channels(gauge, fld, V, 1e-2, (0, 1, 2), g)
    dense = _dense_from_band(op.ab, op.nc)
    np.testing.assert_allclose(dense, dense.T, rtol=0, atol=1e-12)

    n, nc = g.n, op.nc
    blocks = {}
    for ci in range(nc):
        for cj in range(nc):
            blocks[ci, cj] = dense[ci::nc, cj::nc]
    # quadrupole couples channels two apart; one apart stays empty
    assert np.abs(blocks[0, 1]).max() == 0.0
    assert np.abs(blocks[1, 2]).max() == 0.0
    assert np.abs(blocks[0, 2]).max() > 0.0
    np.testing.assert_allclose(blocks[0, 2], blocks[2, 0].T, atol=1e-15)
    # coupling blocks are diagonal in radius
    off = blocks[0, 2] - np.diag(np.diag(blocks[0, 2]))
    assert np.abs(off).max() == 0.0


def test_channel_action_on_mode_is_pure_coupling():
    # assembly is affine in eps, so H(eps) - H(0) applied to a single
    # channel must reproduce exactly the routed harmonics of V
    fld, gauge = _setup(2.5)
    V = rational_potential(power=4.0, angular="quadrupole")
    g = radial_grid(r_core=30.0, h_core=0.05, r_max=300.0, h_far=2.0,
                    ratio=1.05)
    eps = 1e-2
    ms = (0, 1, 2)
    pert = assemble_channels(gauge, fld, V, eps, ms, g)
    base = assemble_channels(gauge, fld, V, 0.0, ms, g)
    coupling = _dense_from_band(pert.ab - base.ab, pert.nc)

    prof = lambda r: r * np.exp(gauge.h(r))
    v = pert.to_vector({1: prof})
    got = coupling @ v

    harm = V.harmonics()
    # m = 1 +/- 2 leaves the retained set, so only q = 0 survives
    expected = eps * pert.to_vector({1: lambda r: harm[0](r) * prof(r)})
    scale = np.linalg.norm(v)
    assert np.linalg.norm(got - expected) < 1e-12 * scale


def test_channel_action_routes_quadrupole_two_up():
    fld, gauge = _setup(2.5)
    V = rational_potential(power=4.0, angular="quadrupole")
    g = radial_grid(r_core=30.0, h_core=0.05, r_max=300.0, h_far=2.0,
                    ratio=1.05)
    eps = 1e-2
    ms = (0, 2)
    pert = assemble_channels(gauge, fld, V, eps, ms, g)
    base = assemble_channels(gauge, fld, V, 0.0, ms, g)
    coupling = _dense_from_band(pert.ab - base.ab, pert.nc)

    prof = lambda r: np.exp(gauge.h(r))
    v = pert.to_vector({0: prof})
    got = coupling @ v

    harm = V.harmonics()
    expected = eps * pert.to_vector({
        0: lambda r: harm[0](r) * prof(r),
        2: lambda r: harm[2](r) * prof(r),
    })
    scale = np.linalg.norm(v)
    assert np.linalg.norm(got - expected) < 1e-12 * scale
    # the m = 2 component really is populated
    assert np.linalg.norm(got[pert.ms.index(2)::pert.nc]) > 0.01 * eps * scale


def test_channel_solver_matches_dense():
    fld, gauge = _setup(2.5)
    V = rational_potential(power=4.0, angular="quadrupole")
    g = _small_grid()
    op = assemble_channels(gauge, fld, V, 5e-3, (0, 1, 2), g)
    dense = _dense_from_band(op.ab, op.nc)
    rng = np.random.default_rng(11)
    rhs = rng.standard_normal(op.dimension) + 1j * rng.standard_normal(op.dimension)
    z = 0.15 + 0.02j
    u = op.solve_shifted([z], rhs)[0]
    oracle = np.linalg.solve(dense - z * np.eye(op.dimension), rhs)
    np.testing.assert_allclose(u, oracle, rtol=1e-9, atol=1e-9 * np.abs(oracle).max())


def test_channel_count_levels_tracks_dense_spectrum():
    fld, gauge = _setup(2.5)
    g = _small_grid()
    V = rational_potential(power=4.0, angular="quadrupole")
    op = assemble_channels(gauge, fld, V, 0.0, (0, 1), g)
    dense = _dense_from_band(op.ab, op.nc)
    ev = np.linalg.eigvalsh(dense)
    lo, hi = 0.0, 0.4
    exact = int(np.sum((ev >= lo) & (ev <= hi)))
    assert op.count_levels(lo, hi) == exact


def test_channel_rejects_duplicates_and_unknown_channel():
    fld, gauge = _setup(2.5)
    V = rational_potential(power=4.0, angular="quadrupole")
    with pytest.raises(DomainError):
        assemble_channels(gauge, fld, V, 1e-3, (0, 1, 0), _small_grid())
    op = assemble_channels(gauge, fld, V, 1e-3, (0, 2), _small_grid())
    with pytest.raises(DomainError):
        op.to_vector({1: lambda r: np.exp(-r)})


# --- state plumbing ---


def test_state_channels_for_mode_and_sum():
    fld, gauge = _setup(2.5)
    params = flux_params(2.5)
    basis = build_zero_modes(gauge, params)
    state = ModeSum([0.6, 0.8], basis)
    chans = state_channels(state)
    assert set(chans) == {0, 1}
    r = np.array([0.5, 1.5, 4.0])
    amps = state.components()
    for m, fn in chans.items():
        np.testing.assert_allclose(
            fn(r), amps[m] * r ** m * np.exp(gauge.h(r)), rtol=1e-12)

    single = AngularState(m=2, coeff=1.3, gauge=gauge)
    chans = state_channels(single)
    assert set(chans) == {2}
    np.testing.assert_allclose(chans[2](r), single.radial(r), rtol=0)

    with pytest.raises(DomainError):
        state_channels(object())


def test_restrict_radial_contracts():
    fld, gauge = _setup(2.5)
    g = _small_grid()
    sector = assemble_sector(gauge, fld, None, 0.0, 0, g)
    mode = AngularState(m=0, coeff=2.0, gauge=gauge)
    v = restrict_radial(sector, mode)
    assert abs(np.linalg.norm(v) - 1.0) < 1e-12

    wrong = AngularState(m=1, coeff=1.0, gauge=gauge)
    with pytest.raises(DomainError):
        restrict_radial(sector, wrong)

    V = rational_potential(power=4.0, angular="quadrupole")
    chan = assemble_channels(gauge, fld, V, 1e-3, (0, 1), g)
    params = flux_params(2.5)
    basis = build_zero_modes(gauge, params)
    vv = restrict_radial(chan, ModeSum([1.0, 1.0], basis))
    assert abs(np.linalg.norm(vv) - 1.0) < 1e-12
    # both channels carry weight
    assert np.linalg.norm(vv[0::2]) > 0.1
    assert np.linalg.norm(vv[1::2]) > 0.1

    with pytest.raises(DomainError):
        restrict_radial(sector, AngularState(m=0, coeff=0.0, gauge=gauge))
