"""Grids and positivity-preserving Q-matrix assembly.

The exponential-fitting stencil keeps every off-diagonal nonnegative for
any drift/diffusion ratio, so the discrete maximum principle holds by
construction; central differencing is excluded because it violates it on
coarse grids.  Zero row sums are enforced exactly in 1-D (see
``_exact_row_pair``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import fd
from .errors import (
    DomainError,
    NonEllipticCoefficient,
    ShapeError,
    UnsupportedTensor,
)

DEGENERACY_THRESHOLD = 1e-14


def bernoulli_ratio(z):
    """B(z) = z / (e^z - 1), with B(0) = 1.

    Stable for all z: a Taylor branch near zero, expm1 elsewhere.  For
    large positive z the result underflows to 0 and for large negative z
    it approaches -z, both correct limits.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-5
    zs = z[small]
    out[small] = 1.0 - zs / 2 + zs**2 / 12
    with np.errstate(over="ignore"):
        zb = z[~small]
        out[~small] = np.where(np.isinf(np.exp(zb)), 0.0, zb / np.expm1(zb))
    return out


@dataclass(frozen=True)
class Grid:
    """Tensor-product grid with strictly increasing nodes per axis."""

    axes: tuple
    boundary_condition: str = "no-flux"

    def __post_init__(self):
        axes = tuple(np.asarray(ax, dtype=float) for ax in self.axes)
        object.__setattr__(self, "axes", axes)
        for ax in axes:
            if ax.size < 3:
                raise DomainError("each axis needs at least 3 nodes")
            if np.any(np.diff(ax) <= 0):
                raise DomainError("axis nodes must be strictly increasing")
        if self.boundary_condition not in ("no-flux", "absorbing"):
            raise DomainError(f"unknown boundary condition {self.boundary_condition!r}")

    @classmethod
    def from_domain(cls, domain, n):
        """Uniform grid over a DomainSpec; n is per-axis node count."""
        if np.isscalar(n):
            n = (int(n),) * len(domain.bounds)
        axes = tuple(np.linspace(lo, hi, k) for (lo, hi), k in zip(domain.bounds, n))
        return cls(axes, domain.boundary_condition)

    @classmethod
    def from_interval(cls, lo, hi, n, boundary_condition="no-flux"):
        return cls((np.linspace(lo, hi, n),), boundary_condition)

    @property
    def ndim(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(ax.size for ax in self.axes)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def x(self):
        """1-D node coordinates (convenience accessor)."""
        if self.ndim != 1:
            raise ShapeError("x is only defined for 1-D grids")
        return self.axes[0]

    def spacing(self, axis=0):
        """Gaps between consecutive nodes along one axis."""
        return np.diff(self.axes[axis])

    def nodes(self):
        """All node coordinates, shape (size, ndim), C-order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def nodes_for_eval(self):
        """Coordinates in the shape coefficient callables expect."""
        return self.x if self.ndim == 1 else self.nodes()

    def weights(self):
        """Trapezoidal quadrature weights, flattened in C-order."""
        per_axis = [fd.trapezoid_weights(ax) for ax in self.axes]
        w = per_axis[0]
        for wk in per_axis[1:]:
            w = np.multiply.outer(w, wk)
        return w.ravel()

    def is_uniform(self, axis=0):
        d = np.diff(self.axes[axis])
        return bool(np.allclose(d, d[0], rtol=1e-12, atol=0.0))


@dataclass
class DiscreteGenerator:
    """Sparse Q-matrix (observable side) with assembly metadata.

    Invariants: off-diagonals >= -1e-12 and row sums within 1e-10 of
    zero; both are checked at construction.
    """

    Q: sp.csr_matrix
    grid: Grid | None = None
    scheme: str = "raw"
    lambda_max: float = 0.0

    def __post_init__(self):
        if not sp.issparse(self.Q):
            self.Q = sp.csr_matrix(np.asarray(self.Q, dtype=float))
        else:
            self.Q = self.Q.tocsr()
        n, m = self.Q.shape
        if n != m:
            raise ShapeError(f"Q must be square, got {self.Q.shape}")
        self.lambda_max = float(np.max(np.abs(self.Q.diagonal()))) if n else 0.0
        self._check_invariants()

    def _check_invariants(self):
        off = self.Q.copy().tolil()
        off.setdiag(0.0)
        data = off.tocsr().data
        if data.size and data.min() < -1e-12:
            raise NonEllipticCoefficient(
                f"negative off-diagonal {data.min():g} breaks the discrete maximum principle")
        rs = np.abs(np.asarray(self.Q.sum(axis=1)).ravel())
        if rs.size and rs.max() > 1e-10:
            raise ShapeError(f"row sums deviate from zero by {rs.max():g}")

    @classmethod
    def from_matrix(cls, Q, grid=None, scheme="raw"):
        return cls(sp.csr_matrix(np.asarray(Q, dtype=float)), grid, scheme)

    @property
    def size(self):
        return self.Q.shape[0]

    def node_coordinates(self):
        """Grid x-coordinates, or node indices for grid-free chains."""
        if self.grid is None:
            return np.arange(self.size, dtype=float)
        return self.grid.x if self.grid.ndim == 1 else self.grid.nodes()

    def quadrature_weights(self):
        """Grid weights, or ones for grid-free chains."""
        if self.grid is None:
            return np.ones(self.size)
        return self.grid.weights()


def _exact_row_pair(q_left, q_right):
    """Adjust the smaller neighbor rate so the row sums to zero exactly.

    With p = max, q = min, s = fl(p + q): q' = s - p is exact (Sterbenz)
    and {p, q', -s} sums to zero in every accumulation order.  The
    perturbation is below one ulp of the diagonal and q' stays >= 0.
    """
    p = np.maximum(q_left, q_right)
    q = np.minimum(q_left, q_right)
    s = p + q
    q_adj = s - p
    left_is_big = q_left >= q_right
    new_left = np.where(left_is_big, p, q_adj)
    new_right = np.where(left_is_big, q_adj, p)
    return new_left, new_right, -s


def _axis_rates(a, b, h_minus, h_plus, scheme, wall="half-cell"):
    """Neighbor rates (q_minus, q_plus) for one axis of nodes.

    a, b sampled at nodes; h_minus/h_plus are distances to the neighbors
    (nan where the neighbor does not exist).  Degenerate nodes fall back
    to pure upwind drift.

    wall='half-cell' treats boundary nodes as half-width finite-volume
    cells, which pins the zero-flux plane to the wall node itself (the
    invariant density then matches trapezoid cell widths and the
    boundary flux of evolved fields is second-order small).
    wall='mirrored' reflects the missing spacing instead, which keeps
    constant-coefficient pure diffusion exactly self-adjoint.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    hm = np.asarray(h_minus, dtype=float)
    hp = np.asarray(h_plus, dtype=float)
    has_m = ~np.isnan(hm)
    has_p = ~np.isnan(hp)
    hm_eff = np.where(has_m, hm, hp)
    hp_eff = np.where(has_p, hp, hm)
    if wall == "half-cell":
        span = np.where(has_m, hm, 0.0) + np.where(has_p, hp, 0.0)
    elif wall == "mirrored":
        span = hm_eff + hp_eff
    else:
        raise DomainError(f"unknown wall convention {wall!r}")

    q_m = np.zeros_like(a)
    q_p = np.zeros_like(a)
    degenerate = a <= DEGENERACY_THRESHOLD
    nd = ~degenerate
    if np.any(nd):
        an = a[nd]
        bn = b[nd]
        if scheme == "exponential-fitting":
            zp = bn * hp_eff[nd] / an
            zm = bn * hm_eff[nd] / an
            q_p[nd] = (2 * an / (hp_eff[nd] * span[nd])) * bernoulli_ratio(-zp)
            q_m[nd] = (2 * an / (hm_eff[nd] * span[nd])) * bernoulli_ratio(zm)
        elif scheme == "upwind":
            q_p[nd] = 2 * an / (hp_eff[nd] * span[nd]) + np.maximum(bn, 0.0) / hp_eff[nd]
            q_m[nd] = 2 * an / (hm_eff[nd] * span[nd]) + np.maximum(-bn, 0.0) / hm_eff[nd]
        else:
            raise DomainError(f"unknown scheme {scheme!r}")
    if np.any(degenerate):
        bd = b[degenerate]
        q_p[degenerate] = np.maximum(bd, 0.0) / hp_eff[degenerate]
        q_m[degenerate] = np.maximum(-bd, 0.0) / hm_eff[degenerate]
    q_m[~has_m] = 0.0
    q_p[~has_p] = 0.0
    return q_m, q_p


def build_qmatrix(spec, grid, scheme="exponential-fitting", wall="half-cell"):
    """Assemble the discrete generator on a grid.

    1-D: exponential-fitting (default) or upwind rates as documented in
    ``_axis_rates``; no-flux walls couple inward only, absorbing walls
    get zero rows.  n-D: dimension-by-dimension splitting for diagonal
    diffusion tensors; off-diagonal entries raise UnsupportedTensor.
    """
    if scheme not in ("exponential-fitting", "upwind"):
        raise DomainError(f"unknown scheme {scheme!r}")
    if grid.ndim != spec.dimension:
        raise ShapeError("grid dimension does not match spec dimension")
    if grid.ndim == 1:
        return _build_1d(spec, grid, scheme, wall)
    return _build_nd(spec, grid, scheme, wall)


def _build_1d(spec, grid, scheme, wall="half-cell"):
    x = grid.x
    n = x.size
    a = np.broadcast_to(np.asarray(spec.a(x), dtype=float), x.shape).copy()
    b = np.broadcast_to(np.asarray(spec.b(x), dtype=float), x.shape).copy()
    if a.min() < -1e-12:
        i = int(np.argmin(a))
        raise NonEllipticCoefficient(f"a({x[i]:g}) = {a[i]:g} < 0")
    a = np.maximum(a, 0.0)

    h = np.diff(x)
    hm = np.concatenate(([np.nan], h))
    hp = np.concatenate((h, [np.nan]))
    q_m, q_p = _axis_rates(a, b, hm, hp, scheme, wall)

    absorbing = grid.boundary_condition == "absorbing"
    if absorbing:
        q_m[0] = q_p[0] = 0.0
        q_m[-1] = q_p[-1] = 0.0

    q_m, q_p, diag = _exact_row_pair(q_m, q_p)

    rows = []
    cols = []
    vals = []
    idx = np.arange(n)
    mask = q_m > 0
    rows.append(idx[1:][mask[1:]])
    cols.append(idx[:-1][mask[1:]])
    vals.append(q_m[1:][mask[1:]])
    mask = q_p > 0
    rows.append(idx[:-1][mask[:-1]])
    cols.append(idx[1:][mask[:-1]])
    vals.append(q_p[:-1][mask[:-1]])
    rows.append(idx)
    cols.append(idx)
    vals.append(diag)
    Q = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    return DiscreteGenerator(Q, grid, scheme)


def _build_nd(spec, grid, scheme, wall="half-cell"):
    shape = grid.shape
    n = grid.size
    pts = grid.nodes()
    dim = grid.ndim

    a_diag = np.empty((n, dim))
    b_vec = np.empty((n, dim))
    for i, p in enumerate(pts):
        amat = np.asarray(spec.a(p), dtype=float)
        amat = 0.5 * (amat + amat.T)
        off = amat - np.diag(np.diag(amat))
        scale = max(1.0, float(np.max(np.abs(amat))))
        if np.max(np.abs(off)) > 1e-12 * scale:
            raise UnsupportedTensor(
                "off-diagonal diffusion entries are not supported in v1")
        d = np.diag(amat)
        if d.min() < -1e-12:
            raise NonEllipticCoefficient(f"a({p}) has negative diagonal {d.min():g}")
        a_diag[i] = np.maximum(d, 0.0)
        b_vec[i] = np.asarray(spec.b(p), dtype=float).reshape(dim)

    multi = np.unravel_index(np.arange(n), shape)
    absorbing = grid.boundary_condition == "absorbing"
    on_wall = np.zeros(n, dtype=bool)
    for ax in range(dim):
        on_wall |= (multi[ax] == 0) | (multi[ax] == shape[ax] - 1)

    rows = []
    cols = []
    vals = []
    diag = np.zeros(n)
    strides = np.array([int(np.prod(shape[ax + 1:])) for ax in range(dim)])
    for ax in range(dim):
        axis_nodes = grid.axes[ax]
        dxs = np.diff(axis_nodes)
        k = multi[ax]
        hm = np.where(k > 0, dxs[np.maximum(k - 1, 0)], np.nan)
        hp = np.where(k < shape[ax] - 1, dxs[np.minimum(k, dxs.size - 1)], np.nan)
        q_m, q_p = _axis_rates(a_diag[:, ax], b_vec[:, ax], hm, hp, scheme, wall)
        if absorbing:
            q_m[on_wall] = 0.0
            q_p[on_wall] = 0.0
        sel = q_m > 0
        rows.append(np.arange(n)[sel])
        cols.append(np.arange(n)[sel] - strides[ax])
        vals.append(q_m[sel])
        sel = q_p > 0
        rows.append(np.arange(n)[sel])
        cols.append(np.arange(n)[sel] + strides[ax])
        vals.append(q_p[sel])
        diag -= q_m + q_p
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    Q = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()
    return DiscreteGenerator(Q, grid, scheme)


def adjoint_qmatrix(Q):
    """Transpose of the Q-matrix: the density-side evolution operator."""
    mat = Q.Q if isinstance(Q, DiscreteGenerator) else sp.csr_matrix(Q)
    return mat.transpose().tocsr()
