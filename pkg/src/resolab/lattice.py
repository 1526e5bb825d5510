"""Sparse lattice discretization of the perturbed spin Hamiltonian.

The magnetic kinetic term is discretized with Peierls link phases
U = exp(-i theta), theta the midpoint-rule line integral of A along the
link.  The pair sum over +-e reproduces (i nabla + A)^2 to O(spacing^2)
and keeps the assembled matrix Hermitian bit-exactly.  The diagonal adds
-B(x) + eps V(x) and truncation is Dirichlet at |x1|, |x2| <= L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import AssumptionError, ConfigError, DomainError
from .fields import FieldSpec, PotentialSpec
from .gauge import GaugeData
from . import kernels

PHASE_GUARD = 0.5           # max |A| * spacing allowed by the midpoint rule
TAIL_MASS_TOL = 1e-6        # boundary-ring mass allowed when restricting
RESIDUAL_RTOL = 1e-10       # direct-solve residual accepted by extract_F


@dataclass(frozen=True)
class Grid:
    """Uniform square grid on [-L, L]^2 with n points per axis."""

    half_width: float
    n: int

    def __post_init__(self):
        if self.n < 16:
            raise ConfigError(f"grid needs n >= 16 points per axis, got {self.n}")
        if not self.half_width > 0.0:
            raise ConfigError("grid half-width must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n - 1)

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.n)

    def meshes(self):
        """(X1, X2) with X1 varying along columns, X2 along rows."""
        a = self.axis
        return np.broadcast_to(a[None, :], (self.n, self.n)), \
            np.broadcast_to(a[:, None], (self.n, self.n))


@dataclass
class LatticeOperator:
    """Hermitian 5-point operator in stencil form plus sparse assembly.

    diag is real; px[i, j] (py[i, j]) multiplies the neighbor one step up
    in x1 (x2), with the Hermitian conjugate hop implied.  The last
    column of px and last row of py are unused.
    """

    grid: Grid
    eps: float
    diag: np.ndarray
    px: np.ndarray
    py: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.grid.n * self.grid.n

    def apply(self, v: np.ndarray) -> np.ndarray:
        """H v for a state shaped (n, n) complex."""
        out = np.zeros_like(v)
        kernels.chebyshev_step(self.diag, self.px, self.py, v, out, 1.0, 0.0)
        return out

    @cached_property
    def matrix(self) -> sparse.csr_matrix:
        """CSR form, built once on demand (stencil and matrix agree)."""
        n = self.grid.n
        idx = np.arange(n * n).reshape(n, n)
        rows = [idx.ravel()]
        cols = [idx.ravel()]
        vals = [self.diag.ravel().astype(complex)]
        hop_x = -self.px[:, :-1]
        rows += [idx[:, :-1].ravel(), idx[:, 1:].ravel()]
        cols += [idx[:, 1:].ravel(), idx[:, :-1].ravel()]
        vals += [hop_x.ravel(), np.conj(hop_x).ravel()]
        hop_y = -self.py[:-1, :]
        rows += [idx[:-1, :].ravel(), idx[1:, :].ravel()]
        cols += [idx[1:, :].ravel(), idx[:-1, :].ravel()]
        vals += [hop_y.ravel(), np.conj(hop_y).ravel()]
        m = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * n, n * n))
        return m.tocsr()


def _link_ratio(gauge: GaugeData, r: np.ndarray) -> np.ndarray:
    """h'(r)/r, extended by its finite limit -b(0)/2 at r = 0."""
    r = np.asarray(r, dtype=float)
    safe = np.where(r > 0.0, r, 1.0)
    out = np.asarray(gauge.dh(safe)) / safe
    return np.where(r > 0.0, out, -0.5 * gauge.b0)


def assemble(gauge: GaugeData, fld: FieldSpec, V: PotentialSpec | None,
             eps: float, grid: Grid) -> LatticeOperator:
    """Discretize (i nabla + A_h)^2 - B + eps V with Dirichlet walls.

    A_h = h'(r) (x2, -x1)/r is the gauge field of the superpotential;
    its magnitude |h'(r)| peaks at O(alpha/r*) so the phase guard is a
    real constraint only for coarse grids.
    """
    n, h = grid.n, grid.spacing
    X1, X2 = grid.meshes()
    R = np.hypot(X1, X2)

    a_max = float(np.max(np.abs(gauge.dh(np.geomspace(1e-3, max(
        2.0 * grid.half_width, 1.0), 512)))))
    if h * a_max > PHASE_GUARD:
        raise AssumptionError(
            f"refine grid: spacing*max|A| = {h * a_max:.3g} exceeds "
            f"{PHASE_GUARD}; the midpoint link phase is unresolved")

    diag = np.full((n, n), 4.0 / h ** 2)
    diag -= fld.b(R)
    if V is not None and eps != 0.0:
        diag += eps * V(X1, X2)

    # link phases: theta = h * (A . e) at the link midpoint
    rx = np.hypot(X1 + 0.5 * h, X2)
    theta_x = h * _link_ratio(gauge, rx) * X2
    ry = np.hypot(X1, X2 + 0.5 * h)
    theta_y = h * _link_ratio(gauge, ry) * (-(X1))
    px = np.exp(-1j * theta_x) / h ** 2
    py = np.exp(-1j * theta_y) / h ** 2

    op = LatticeOperator(grid=grid, eps=eps, diag=diag, px=px, py=py,
                         meta={"alpha": gauge.alpha, "eps": eps,
                               "angular": getattr(V, "angular", "none")})

    # Gershgorin floor: diag - (sum of hop moduli) must respect the
    # continuum lower bound -max|B| - eps max|V^-|
    floor = float(np.min(diag)) - 4.0 / h ** 2
    b_max = float(np.max(np.abs(fld.b(R))))
    v_neg = 0.0
    if V is not None and eps != 0.0:
        v_neg = float(max(0.0, -np.min(np.sign(eps) * V(X1, X2)))) * abs(eps)
    if floor < -b_max - v_neg - 1e-9 * (1.0 + b_max):
        raise AssumptionError(
            "assembled diagonal violates the spectral floor -max|B| - eps max|V^-|")
    return op


def restrict(mode, grid: Grid) -> np.ndarray:
    """Sample a continuum state on the grid and l2-normalize.

    The outer two-cell ring carries the Dirichlet truncation error; its
    relative mass must be below TAIL_MASS_TOL.
    """
    X1, X2 = grid.meshes()
    vals = np.asarray(mode(X1, X2), dtype=complex)
    total = float(np.sum(np.abs(vals) ** 2))
    if total == 0.0:
        raise DomainError("restrict: state vanishes identically on the grid")
    ring = np.ones_like(vals, dtype=bool)
    ring[2:-2, 2:-2] = False
    tail = float(np.sum(np.abs(vals[ring]) ** 2)) / total
    if tail > TAIL_MASS_TOL:
        raise AssumptionError(
            f"enlarge domain: boundary tail mass {tail:.3g} exceeds "
            f"{TAIL_MASS_TOL}; the state does not decay inside the box")
    return vals / math.sqrt(total)


@dataclass(frozen=True)
class SchurBlocks:
    """Blocks of the inverse: b11 = S^-1 with S = a11 - a12 a22^-1 a21."""

    b11: np.ndarray
    b12: np.ndarray
    b21: np.ndarray
    b22: np.ndarray
    schur: np.ndarray


def schur_inverse(a: np.ndarray, k: int) -> SchurBlocks:
    """Block inverse of a square matrix split after the first k rows."""
    a = np.asarray(a)
    m = a.shape[0]
    if a.ndim != 2 or a.shape[1] != m:
        raise DomainError("schur_inverse needs a square matrix")
    if not 0 < k < m:
        raise DomainError(f"partition size {k} outside 1..{m - 1}")
    a11, a12 = a[:k, :k], a[:k, k:]
    a21, a22 = a[k:, :k], a[k:, k:]
    try:
        y21 = np.linalg.solve(a22, a21)       # a22^-1 a21
        s = a11 - a12 @ y21
        b11 = np.linalg.inv(s)
    except np.linalg.LinAlgError as exc:
        raise DomainError(f"schur_inverse: singular block ({exc})") from exc
    # a12 a22^-1 via a solve on the transposed system
    a12_inv22 = np.linalg.solve(a22.T, a12.T).T
    b12 = -b11 @ a12_inv22
    b21 = -y21 @ b11
    b22 = np.linalg.inv(a22) + y21 @ b11 @ a12_inv22
    return SchurBlocks(b11=b11, b12=b12, b21=b21, b22=b22, schur=s)


def extract_F(op: LatticeOperator, psi0: np.ndarray, x: float, y: float) -> complex:
    """F(x+iy) = 1/<psi0, (H - x - iy)^-1 psi0> via a direct solve."""
    if not y > 0.0:
        raise DomainError("extract_F needs Im z = y > 0")
    v0 = np.asarray(psi0, dtype=complex).ravel()
    z = complex(x, y)
    m = (op.matrix - z * sparse.identity(op.dimension, format="csr",
                                         dtype=complex)).tocsc()
    try:
        u = splu(m).solve(v0)
    except RuntimeError as exc:
        raise AssumptionError(f"resolvent solve failed at z = {z}: {exc}") from exc
    res = np.linalg.norm(m @ u - v0) / np.linalg.norm(v0)
    if res > RESIDUAL_RTOL:
        raise AssumptionError(
            f"resolvent solve residual {res:.3g} exceeds {RESIDUAL_RTOL}")
    g = np.vdot(v0, u)
    if g == 0.0:
        raise AssumptionError("projected resolvent vanished; F undefined")
    return 1.0 / g


def enclosed_flux(op: LatticeOperator) -> float:
    """Loop sum of link phases around the boundary, divided by 2 pi.

    Discrete Stokes: the sum telescopes over plaquettes, so it equals the
    flux through the box up to the midpoint-rule O(h^2) error.
    """
    h2 = op.grid.spacing ** 2
    tx = -np.angle(op.px * h2)
    ty = -np.angle(op.py * h2)
    loop = (float(np.sum(tx[0, :-1])) + float(np.sum(ty[:-1, -1]))
            - float(np.sum(tx[-1, :-1])) - float(np.sum(ty[:-1, 0])))
    return loop / (2.0 * math.pi)


def dump_operator(op: LatticeOperator, path: str) -> None:
    """Write sparse triplets as text rows: row col re im."""
    m = op.matrix.tocoo()
    arr = np.column_stack([m.row, m.col, m.data.real, m.data.imag])
    np.savetxt(path, arr, fmt=["%d", "%d", "%.17g", "%.17g"],
               header="row col re im", comments="# ")
