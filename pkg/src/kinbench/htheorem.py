"""Invariant measures, convex-functional decay curves, and the dissipation identity.

Chain-level vectors here follow the measure convention (one number per
node, plain sums): with the invariant measure solved from the transpose
null space, the decay of sum_i m_i h(nu_i / m_i) is exact for every convex
h, so only rounding shows up in the monotonicity checks.  Quadrature
weights enter only where discrete fields are compared against continuum
densities and integrals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph

from . import fd
from .errors import (
    NoInvariantDensity,
    NonSmoothH,
    ParameterOutOfRange,
    SupportViolation,
)
from .generator import EquilibriumDensity, ScalarField, compute_Hi
from .semigroup import _as_qmatrix, evolve_series

_CONVEXITY_PROBE = np.linspace(1e-6, 10.0, 1000)


@dataclass(frozen=True)
class HFunctional:
    """Convex function h on [0, inf) with an explicit value convention at 0.

    The built-in family: xlogx (h(0) = 0 by limit), square, abs-dev,
    square-dev, and tabulated custom functions.  Convexity is certified
    by sampled second differences at construction.
    """

    kind: str
    fn: object
    dfn: object = None
    d2fn: object = None
    value_at_zero: float = 0.0
    probe: object = None

    def __post_init__(self):
        grid = _CONVEXITY_PROBE if self.probe is None else np.asarray(self.probe)
        vals = self.fn(grid)
        second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
        if np.min(second) < -1e-12:
            raise ParameterOutOfRange(
                f"{self.kind}: sampled second differences dip to {np.min(second):g}; not convex")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ParameterOutOfRange("h is defined on nonnegative arguments")
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(u > 0, self.fn(np.maximum(u, 1e-300)), self.value_at_zero)
        return vals if vals.ndim else float(vals)

    def d1(self, u):
        if self.dfn is None:
            raise NonSmoothH(f"{self.kind} has no first derivative")
        return self.dfn(np.asarray(u, dtype=float))

    def d2(self, u):
        if self.d2fn is None:
            raise NonSmoothH(f"{self.kind} has no second derivative")
        return self.d2fn(np.asarray(u, dtype=float))

    @staticmethod
    def from_name(name, value_at_zero=None):
        if name == "xlogx":
            h = HFunctional("xlogx", lambda u: u * np.log(u),
                            lambda u: np.log(u) + 1.0, lambda u: 1.0 / u,
                            0.0 if value_at_zero is None else value_at_zero)
        elif name == "square":
            h = HFunctional("square", lambda u: u * u, lambda u: 2 * u,
                            lambda u: 2.0 * np.ones_like(u),
                            0.0 if value_at_zero is None else value_at_zero)
        elif name == "abs-dev":
            h = HFunctional("abs-dev", lambda u: np.abs(u - 1.0), None, None,
                            1.0 if value_at_zero is None else value_at_zero)
        elif name == "square-dev":
            h = HFunctional("square-dev", lambda u: (u - 1.0) ** 2,
                            lambda u: 2 * (u - 1.0),
                            lambda u: 2.0 * np.ones_like(u),
                            1.0 if value_at_zero is None else value_at_zero)
        else:
            raise ParameterOutOfRange(
                f"unknown h functional {name!r}; "
                "choose xlogx, square, abs-dev, square-dev, or build from_table")
        return h

    @staticmethod
    def from_table(points, values, value_at_zero=None):
        points = np.asarray(points, dtype=float)
        values = np.asarray(values, dtype=float)
        if points.size != values.size or points.size < 3:
            raise ParameterOutOfRange("table needs matching arrays of >= 3 points")
        order = np.argsort(points)
        points, values = points[order], values[order]
        fn = lambda u: np.interp(u, points, values)  # noqa: E731
        vz = values[0] if value_at_zero is None else value_at_zero
        # constant extrapolation beyond the table would fake concavity,
        # so certify convexity on the tabulated span only
        probe = np.linspace(points[0], points[-1], 1000)
        return HFunctional("custom-table", fn, None, None, vz, probe=probe)


BUILTIN_H = ("xlogx", "square", "abs-dev", "square-dev")


@dataclass
class InvariantSolution:
    """Invariant measure(s) of a chain: pi solves Q^T pi = 0."""

    pi: np.ndarray
    unique: bool
    basis: list
    residual: float


def _gth(A):
    """GTH elimination on a dense irreducible rate matrix (no subtractions)."""
    A = np.array(A, dtype=float)
    m = A.shape[0]
    if m == 1:
        return np.ones(1)
    s = np.zeros(m)
    for n in range(m - 1, 0, -1):
        s[n] = A[n, :n].sum()
        if s[n] <= 0:
            raise NoInvariantDensity("GTH hit a non-communicating state")
        A[:n, :n] += np.outer(A[:n, n], A[n, :n]) / s[n]
    pi = np.zeros(m)
    pi[0] = 1.0
    for n in range(1, m):
        pi[n] = float(pi[:n] @ A[:n, n]) / s[n]
    return pi / pi.sum()


def _tridiagonal_balance(Q):
    """Detailed-balance product for an irreducible tridiagonal chain.

    Returns None when the pattern is not strictly tridiagonal with
    positive neighbor rates.
    """
    n = Q.shape[0]
    coo = Q.tocoo()
    if np.any(np.abs(coo.row - coo.col) > 1):
        return None
    up = np.asarray(Q.diagonal(1)).ravel()
    down = np.asarray(Q.diagonal(-1)).ravel()
    if up.size != n - 1 or np.any(up <= 0) or np.any(down <= 0):
        return None
    log_pi = np.concatenate(([0.0], np.cumsum(np.log(up) - np.log(down))))
    log_pi -= log_pi.max()
    pi = np.exp(log_pi)
    return pi / pi.sum()


def solve_invariant(Q):
    """Invariant measure(s) with a uniqueness flag.

    Transient states mean no strictly positive invariant density exists
    (absorbing walls are the canonical case) and raise
    NoInvariantDensity.  Reducible chains return one basis vector per
    closed class with unique=False.
    """
    qm = _as_qmatrix(Q)
    mat = qm.Q
    n = qm.size

    pi = _tridiagonal_balance(mat) if n >= 2 else None
    if pi is not None:
        residual = float(np.max(np.abs(mat.T @ pi)))
        return InvariantSolution(pi, True, [pi], residual)

    off = mat.copy().tolil()
    off.setdiag(0.0)
    adj = (off.tocsr() > 0).astype(np.int8)
    ncomp, labels = csgraph.connected_components(adj, directed=True, connection="strong")
    coo = adj.tocoo()
    closed = np.ones(ncomp, dtype=bool)
    for i, j in zip(coo.row, coo.col):
        if labels[i] != labels[j]:
            closed[labels[i]] = False
    closed_classes = [np.flatnonzero(labels == c) for c in range(ncomp) if closed[c]]
    covered = np.zeros(n, dtype=bool)
    for nodes in closed_classes:
        covered[nodes] = True
    if not np.all(covered):
        raise NoInvariantDensity(
            f"{int(np.sum(~covered))} transient state(s); "
            "no strictly positive invariant density exists")

    basis = []
    dense = mat.toarray()
    for nodes in closed_classes:
        sub = dense[np.ix_(nodes, nodes)]
        v = np.zeros(n)
        v[nodes] = _gth(sub)
        basis.append(v)
    unique = len(basis) == 1
    pi = basis[0] if unique else sum(basis) / len(basis)
    residual = float(np.max(np.abs(mat.T @ pi)))
    return InvariantSolution(pi, unique, basis, residual)


def _reference_measure(Q, reference):
    """Normalize reference input to a measure vector on the chain nodes."""
    qm = _as_qmatrix(Q)
    if reference is None:
        sol = solve_invariant(qm)
        return sol.pi
    if isinstance(reference, InvariantSolution):
        return reference.pi
    if isinstance(reference, EquilibriumDensity):
        if reference.values is None or reference.grid is None:
            raise ParameterOutOfRange("reference density has no grid samples")
        return np.asarray(reference.values, dtype=float) * reference.grid.weights()
    return np.asarray(reference, dtype=float)


def h_function(reference, state, h, weights=None):
    """Convex functional sum_i h(state_i / ref_i) ref_i w_i.

    ``reference`` may be an EquilibriumDensity (grid quadrature weights
    are used by default) or a plain vector (unit weights: the
    stochastic-matrix form).  Mass where the reference vanishes raises
    SupportViolation.
    """
    if isinstance(reference, EquilibriumDensity):
        ref = np.asarray(reference.values, dtype=float)
        if weights is None and reference.grid is not None:
            weights = reference.grid.weights()
    else:
        ref = np.asarray(reference, dtype=float)
    state_vals = state.values if isinstance(state, ScalarField) else np.asarray(state, dtype=float)
    if weights is None:
        weights = np.ones_like(ref)
    if ref.shape != state_vals.shape:
        raise ParameterOutOfRange("reference and state lengths differ")
    dead = ref <= 0
    if np.any(dead):
        live_scale = float(np.max(np.abs(state_vals))) if state_vals.size else 0.0
        if np.any(np.abs(state_vals[dead]) > 1e-14 * max(live_scale, 1.0)):
            raise SupportViolation("state has mass where the reference density vanishes")
    alive = ~dead
    ratio = np.zeros_like(ref)
    ratio[alive] = state_vals[alive] / ref[alive]
    hvals = h(ratio[alive])
    return float(np.dot(hvals * ref[alive], np.asarray(weights)[alive]))


@dataclass
class HCurve:
    """H values along a time schedule with the worst observed increase."""

    times: np.ndarray
    H: np.ndarray
    max_increase: float
    dissipation: np.ndarray | None = None
    boundary: np.ndarray | None = None
    mass: np.ndarray | None = None

    def is_monotone(self, tol=0.0):
        return self.max_increase <= tol


def h_curve(Q, nu0, h, times, tol=1e-9, reference=None):
    """H(t) along the density evolution, against an invariant reference.

    With the default reference (the solved invariant measure) the curve
    is nonincreasing up to rounding; the worst increase is recorded.
    """
    m = _reference_measure(Q, reference)
    result = evolve_series(Q, nu0, times, tol=tol, side="density")
    values = []
    for fld in result.fields:
        vals = fld.values if isinstance(fld, ScalarField) else fld
        values.append(h_function(m, vals, h, weights=np.ones_like(m)))
    H = np.array(values)
    increases = np.diff(H)
    max_inc = float(increases.max()) if increases.size else 0.0
    return HCurve(result.times, H, max(max_inc, 0.0), mass=result.mass)


def _density_inputs(rho0, phi_tilde, grid):
    if isinstance(rho0, EquilibriumDensity):
        grid = grid if grid is not None else rho0.grid
        rho = np.asarray(rho0.values, dtype=float)
    else:
        rho = np.asarray(rho0, dtype=float)
    if grid is None:
        raise ParameterOutOfRange("need a grid for quadrature")
    phi = phi_tilde.values if isinstance(phi_tilde, ScalarField) else np.asarray(phi_tilde, dtype=float)
    return rho, phi, grid


def dissipation_rate(spec, rho0, phi_tilde, h, grid=None):
    """Quadrature of -rho0 h''(phi) a (phi')^2: the dissipation integral.

    Nonpositive whenever the diffusion coefficient is nonnegative and h
    is convex; this is the discrete face of the positivity/H-decay
    equivalence.
    """
    rho, phi, grid = _density_inputs(rho0, phi_tilde, grid)
    if h.d2fn is None:
        raise NonSmoothH(f"{h.kind} lacks the second derivative the identity needs")
    x = grid.x
    w = grid.weights()
    a = np.broadcast_to(np.asarray(spec.a(x), dtype=float), x.shape)
    grad = np.gradient(phi, x, edge_order=2)
    integrand = rho * h.d2(phi) * a * grad * grad
    return -float(np.dot(integrand, w))


def boundary_term(spec, rho0, phi_tilde, h, grid=None):
    """Max magnitude of the boundary flux rho0 a d/dx h(phi) + h(phi) H_i."""
    rho, phi, grid = _density_inputs(rho0, phi_tilde, grid)
    x = grid.x
    hvals = h(np.maximum(phi, 0.0))
    if isinstance(rho0, EquilibriumDensity):
        eq = rho0 if rho0.grid is not None else None
    else:
        eq = None
    if eq is None:
        eq = EquilibriumDensity(values=rho, grid=grid)
    Hi = compute_Hi(spec, eq, grid)
    a_lo = float(np.asarray(spec.a(x[0]), dtype=float))
    a_hi = float(np.asarray(spec.a(x[-1]), dtype=float))
    dh_lo = fd.one_sided_d1(hvals, x, at_start=True)
    dh_hi = fd.one_sided_d1(hvals, x, at_start=False)
    flux_lo = rho[0] * a_lo * dh_lo + hvals[0] * Hi[0]
    flux_hi = rho[-1] * a_hi * dh_hi + hvals[-1] * Hi[-1]
    return float(max(abs(flux_lo), abs(flux_hi)))


@dataclass
class ConsistencyReport:
    numeric_slope: float
    analytic_rate: float
    relative_gap: float
    boundary: float


def dH_dt_consistency(Q, spec, rho0, nu0, h, t, dt, tol=1e-12):
    """Centered-difference dH/dt against the dissipation quadrature.

    Both sides are evaluated on the same discrete fields: the H curve
    uses the invariant measure, the rate uses the matching density form,
    so the reported gap isolates discretization error.
    """
    qm = _as_qmatrix(Q)
    if t - dt < 0:
        raise ParameterOutOfRange("need t - dt >= 0 for the centered slope")
    m = _reference_measure(qm, rho0)
    w = qm.quadrature_weights()
    grid = qm.grid

    result = evolve_series(qm, nu0, [t - dt, t, t + dt], tol=tol, side="density")
    nus = [f.values if isinstance(f, ScalarField) else f for f in result.fields]
    ones = np.ones_like(m)
    H_minus = h_function(m, nus[0], h, weights=ones)
    H_plus = h_function(m, nus[2], h, weights=ones)
    slope = (H_plus - H_minus) / (2 * dt)

    if np.any(m <= 0):
        raise NoInvariantDensity("reference measure must be strictly positive")
    phi = nus[1] / m
    rho_density = m / w
    rate = dissipation_rate(spec, rho_density, phi, h, grid=grid)
    bterm = boundary_term(spec, rho_density, phi, h, grid=grid)
    denom = max(abs(rate), abs(slope))
    gap = 0.0 if denom < 1e-14 else abs(slope - rate) / denom
    return ConsistencyReport(float(slope), float(rate), float(gap), float(bterm))
