"""Continuous diffusion generators, their formal adjoints, and the example catalog.

A generator acts on observables as ``a(x) f'' + b(x) f'`` (sums over axes in
higher dimension); the formal adjoint drives densities.  Coefficients may be
plain callables or compiled expressions (see :mod:`kinbench.expressions`),
the latter carrying analytic derivatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import fd
from .errors import (
    DomainError,
    InsufficientSmoothness,
    MissingGibbsForm,
    NonEllipticCoefficient,
    ParameterOutOfRange,
    UnknownExample,
    UnsupportedTensor,
)
from .expressions import CompiledExpression

EIG_FLOOR = -1e-12


@dataclass(frozen=True)
class DomainSpec:
    """Truncated computational domain.

    kind: 'full-line' | 'half-line' | 'box'; bounds per axis as (lo, hi);
    half-line truncation requires lo > 0.
    """

    kind: str
    bounds: tuple
    boundary_condition: str = "no-flux"

    def __post_init__(self):
        if self.kind not in ("full-line", "half-line", "box"):
            raise DomainError(f"unknown domain kind {self.kind!r}")
        if self.boundary_condition not in ("no-flux", "absorbing"):
            raise DomainError(f"unknown boundary condition {self.boundary_condition!r}")
        bounds = tuple(tuple(float(v) for v in ax) for ax in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        for lo, hi in bounds:
            if not lo < hi:
                raise DomainError(f"bounds must satisfy lo < hi, got ({lo}, {hi})")
            if self.kind == "half-line" and lo <= 0:
                raise DomainError("half-line truncation requires lo > 0")

    @property
    def dimension(self):
        return len(self.bounds)

    def contains(self, x, interior=False, margin=0.0):
        pt = np.atleast_1d(np.asarray(x, dtype=float))
        if pt.shape[-1] != self.dimension:
            return False
        for k, (lo, hi) in enumerate(self.bounds):
            v = pt[..., k]
            if interior:
                if np.any(v <= lo + margin) or np.any(v >= hi - margin):
                    return False
            else:
                if np.any(v < lo) or np.any(v > hi):
                    return False
        return True


def _as_point(x, dimension):
    if dimension == 1:
        return float(np.asarray(x).reshape(()))
    pt = np.asarray(x, dtype=float).reshape(dimension)
    return pt


def _derivative_of(coeff, var=0):
    """Analytic derivative callable if the coefficient carries one."""
    if isinstance(coeff, CompiledExpression):
        return coeff.derivative(var)
    return None


@dataclass(frozen=True)
class GeneratorSpec:
    """Second-order generator: diffusion field a, drift field b, domain.

    In 1-D, ``a`` and ``b`` map x to scalars.  In n-D, ``a`` maps a point
    to a symmetric (n, n) matrix and ``b`` to an (n,) vector.  Optional
    derivative callables (``da``, ``d2a``, ``db``) are used by the formal
    adjoint; compiled-expression coefficients provide them automatically.
    """

    dimension: int
    a: Callable
    b: Callable
    domain: DomainSpec
    da: Callable | None = None
    d2a: Callable | None = None
    db: Callable | None = None
    label: str = ""

    def __post_init__(self):
        if self.dimension < 1:
            raise DomainError("dimension must be a positive integer")
        if self.domain.dimension != self.dimension:
            raise DomainError("domain dimension does not match spec dimension")
        if self.dimension == 1:
            if self.da is None:
                d = _derivative_of(self.a)
                if d is not None:
                    object.__setattr__(self, "da", d)
            if self.d2a is None and self.da is not None:
                d = _derivative_of(self.da)
                if d is not None:
                    object.__setattr__(self, "d2a", d)
            if self.db is None:
                d = _derivative_of(self.b)
                if d is not None:
                    object.__setattr__(self, "db", d)

    def a_matrix(self, x):
        """Symmetrized diffusion matrix at a point (n-D) or scalar (1-D)."""
        if self.dimension == 1:
            return float(self.a(_as_point(x, 1)))
        m = np.asarray(self.a(_as_point(x, self.dimension)), dtype=float)
        return 0.5 * (m + m.T)

    def check_admissible(self, points):
        """Raise NonEllipticCoefficient if a(x) dips below the eigenvalue floor."""
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        if self.dimension == 1:
            vals = np.asarray(self.a(pts), dtype=float)
            vals = np.broadcast_to(vals, pts.shape)
            bad = vals < EIG_FLOOR
            if np.any(bad):
                i = int(np.argmax(bad))
                raise NonEllipticCoefficient(
                    f"a({pts[i]:g}) = {vals[i]:g} < 0")
        else:
            for p in pts.reshape(-1, self.dimension):
                w = np.linalg.eigvalsh(self.a_matrix(p))
                if w.min() < EIG_FLOOR:
                    raise NonEllipticCoefficient(
                        f"a({p}) has eigenvalue {w.min():g} < 0")


@dataclass
class EquilibriumDensity:
    """Reference density: analytic form, optional Gibbs data, grid samples.

    ``gibbs`` is a pair (beta, H) with density proportional to
    exp(-beta*H); when absent it can be recovered from positive samples
    as beta*H = -ln(rho/max rho).
    """

    rho_fn: Callable | None = None
    gibbs: tuple | None = None
    values: np.ndarray | None = None
    grid: object | None = None
    normalizable: bool = True
    normalized: bool = False
    total_mass: float = math.nan
    label: str = ""

    def on_grid(self, grid, normalize=False):
        """Materialize node values on a grid (optionally quadrature-normalized)."""
        if self.rho_fn is None:
            raise MissingGibbsForm("no analytic density to sample")
        x = grid.nodes_for_eval()
        vals = np.asarray(self.rho_fn(x), dtype=float)
        vals = np.broadcast_to(vals, (grid.size,)).copy()
        if np.any(vals < 0):
            raise ParameterOutOfRange("equilibrium density has negative samples")
        normalized = self.normalized
        if normalize:
            vals /= float(np.dot(vals, grid.weights()))
            normalized = True
        return replace(self, values=vals, grid=grid, normalized=normalized)

    def gibbs_or_recovered(self):
        """Return (beta, H values on grid, dH values on grid).

        Prefers analytic Gibbs data; otherwise recovers beta*H from the
        samples via -ln(rho/max rho) with beta = 1.  Raises
        MissingGibbsForm when neither is available.
        """
        if self.gibbs is not None:
            beta, H = self.gibbs
            if self.grid is None:
                raise MissingGibbsForm("no grid attached to evaluate H on")
            x = self.grid.nodes_for_eval()
            hvals = np.broadcast_to(np.asarray(H(x), dtype=float), (self.grid.size,))
            dH = _derivative_of(H)
            if dH is not None:
                dhvals = np.broadcast_to(np.asarray(dH(x), dtype=float), (self.grid.size,))
            else:
                dhvals = fd.grid_d1(hvals, self.grid.x)
            return float(beta), np.asarray(hvals), np.asarray(dhvals)
        if self.values is None or self.grid is None:
            raise MissingGibbsForm("no gibbs data and no samples to recover it from")
        vals = np.asarray(self.values, dtype=float)
        if np.any(vals <= 0):
            raise MissingGibbsForm("recovery needs strictly positive samples")
        bh = -np.log(vals / vals.max())
        return 1.0, bh, fd.grid_d1(bh, self.grid.x)

    def validate(self, rel_tol=1e-10):
        """Check nonnegativity and gibbs consistency of the samples."""
        if self.values is None:
            return
        vals = np.asarray(self.values, dtype=float)
        if np.any(vals < 0):
            raise ParameterOutOfRange("density values must be nonnegative")
        if self.gibbs is not None and self.grid is not None:
            beta, H = self.gibbs
            x = self.grid.nodes_for_eval()
            model = np.exp(-float(beta) * np.asarray(H(x), dtype=float))
            k = int(np.argmax(vals))
            if model[k] == 0:
                return
            c = vals[k] / model[k]
            err = np.abs(vals - c * model)
            scale = np.maximum(np.abs(vals), np.abs(c * model))
            mask = scale > 0
            if np.any(err[mask] / scale[mask] > rel_tol):
                raise ParameterOutOfRange(
                    "samples are not proportional to exp(-beta H) within tolerance")


@dataclass
class ScalarField:
    """Node values bound to a grid."""

    values: np.ndarray
    grid: object | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.grid is not None and self.values.shape != (self.grid.size,):
            raise DomainError("field length does not match grid node count")


def _call_derivs(f, x, df=None, d2f=None, step=None):
    """Value, first and second derivative of f at x (1-D).

    Order of preference: explicit callables, compiled-expression
    derivatives, then 4th-order central differences.
    """
    fx = float(f(x))
    if df is None:
        d = _derivative_of(f)
        if d is not None:
            df = d
            d2f = d2f or _derivative_of(d)
    if df is not None:
        d1 = float(df(x))
        if d2f is not None:
            d2 = float(d2f(x))
        else:
            h = step or 1e-3 * max(1.0, abs(x))
            d2 = fd.central_d2(f, x, h)
        return fx, d1, d2
    h = step or 1e-3 * max(1.0, abs(x))
    return fx, fd.central_d1(f, x, h), fd.central_d2(f, x, h)


def _coefficient_derivs_1d(spec, x, step=None):
    """a, a', a'', b, b' at a point, analytic when the spec carries them."""
    a = float(spec.a(x))
    b = float(spec.b(x))
    h = step or 1e-3 * max(1.0, abs(x))
    da = float(spec.da(x)) if spec.da is not None else fd.central_d1(spec.a, x, h)
    d2a = float(spec.d2a(x)) if spec.d2a is not None else fd.central_d2(spec.a, x, h)
    db = float(spec.db(x)) if spec.db is not None else fd.central_d1(spec.b, x, h)
    return a, da, d2a, b, db


def apply_generator(spec, f, x, df=None, d2f=None, step=None):
    """Evaluate (a f'' + b f') at a point.

    ``f`` may carry analytic derivatives (compiled expression or the
    ``df``/``d2f`` arguments); otherwise 4th-order central differences
    are used, which requires room around x inside the domain.
    """
    if spec.dimension == 1:
        x = _as_point(x, 1)
        if not spec.domain.contains(x, interior=True):
            raise DomainError(f"x = {x:g} is not in the domain interior")
        if df is None and _derivative_of(f) is None:
            h = step or 1e-3 * max(1.0, abs(x))
            lo, hi = spec.domain.bounds[0]
            if x - 2 * h < lo or x + 2 * h > hi:
                raise InsufficientSmoothness(
                    "no analytic derivatives and the difference stencil leaves the domain")
        fx, d1, d2 = _call_derivs(f, x, df, d2f, step)
        return float(spec.a(x)) * d2 + float(spec.b(x)) * d1
    # n-D path: quadratic form with the Hessian
    pt = _as_point(x, spec.dimension)
    if not spec.domain.contains(pt, interior=True):
        raise DomainError(f"{pt} is not in the domain interior")
    amat = spec.a_matrix(pt)
    bvec = np.asarray(spec.b(pt), dtype=float).reshape(spec.dimension)
    if d2f is not None and df is not None:
        hess = np.asarray(d2f(pt), dtype=float)
        grad = np.asarray(df(pt), dtype=float)
    else:
        grad, hess = _fd_grad_hess(f, pt, step)
    return float(np.sum(amat * hess) + np.dot(bvec, grad))


def _fd_grad_hess(f, pt, step=None):
    n = pt.size
    h = step or 1e-4 * max(1.0, float(np.max(np.abs(pt))))
    grad = np.empty(n)
    hess = np.empty((n, n))
    f0 = float(f(pt))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        fp, fm = float(f(pt + ei)), float(f(pt - ei))
        grad[i] = (fp - fm) / (2 * h)
        hess[i, i] = (fp - 2 * f0 + fm) / h**2
    for i in range(n):
        for j in range(i + 1, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = h
            ej[j] = h
            val = (float(f(pt + ei + ej)) - float(f(pt + ei - ej))
                   - float(f(pt - ei + ej)) + float(f(pt - ei - ej))) / (4 * h**2)
            hess[i, j] = hess[j, i] = val
    return grad, hess


def apply_formal_adjoint(spec, rho, x, drho=None, d2rho=None, step=None):
    """Evaluate the density-side operator (a rho)'' - (b rho)' at a point."""
    if spec.dimension != 1:
        return _formal_adjoint_nd(spec, rho, x, step)
    x = _as_point(x, 1)
    if not spec.domain.contains(x, interior=True):
        raise DomainError(f"x = {x:g} is not in the domain interior")
    a, da, d2a, b, db = _coefficient_derivs_1d(spec, x, step)
    r, dr, d2r = _call_derivs(rho, x, drho, d2rho, step)
    return a * d2r + (2 * da - b) * dr + (d2a - db) * r


def _formal_adjoint_nd(spec, rho, x, step=None):
    """n-D adjoint via second differences of the product fields."""
    pt = _as_point(x, spec.dimension)
    if not spec.domain.contains(pt, interior=True):
        raise DomainError(f"{pt} is not in the domain interior")
    n = spec.dimension
    h = step or 1e-4 * max(1.0, float(np.max(np.abs(pt))))

    def a_rho(i, j):
        return lambda y: spec.a_matrix(y)[i, j] * float(rho(y))

    def b_rho(i):
        return lambda y: np.asarray(spec.b(y), dtype=float)[i] * float(rho(y))

    total = 0.0
    for i in range(n):
        for j in range(n):
            g = a_rho(i, j)
            if i == j:
                ei = np.zeros(n)
                ei[i] = h
                total += (g(pt + ei) - 2 * g(pt) + g(pt - ei)) / h**2
            else:
                ei = np.zeros(n)
                ej = np.zeros(n)
                ei[i] = h
                ej[j] = h
                total += (g(pt + ei + ej) - g(pt + ei - ej)
                          - g(pt - ei + ej) + g(pt - ei - ej)) / (4 * h**2)
    for i in range(n):
        gi = b_rho(i)
        ei = np.zeros(n)
        ei[i] = h
        total -= (gi(pt + ei) - gi(pt - ei)) / (2 * h)
    return float(total)


def residual_invariant(spec, rho0, grid=None, method="auto"):
    """Max |adjoint applied to rho0| over interior grid nodes.

    method 'analytic' differentiates Gibbs data or the analytic density;
    'fd' uses centered second differences of the sampled products
    a*rho and b*rho; 'auto' prefers analytic whenever available.
    """
    grid = grid if grid is not None else rho0.grid
    if grid is None:
        raise DomainError("rho0 carries no grid and none was supplied")
    x = grid.x
    if method not in ("auto", "analytic", "fd"):
        raise ParameterOutOfRange(f"unknown method {method!r}")

    analytic_ok = False
    if method in ("auto", "analytic"):
        analytic_ok = _has_analytic_rho(rho0) and spec.da is not None \
            and spec.d2a is not None and spec.db is not None
        if method == "analytic" and not analytic_ok:
            raise InsufficientSmoothness("analytic residual needs derivative data")

    if analytic_ok:
        r, dr, d2r = _rho_derivs_on(rho0, x)
        a = np.asarray(spec.a(x), dtype=float)
        da = np.asarray(spec.da(x), dtype=float)
        d2a = np.asarray(spec.d2a(x), dtype=float)
        b = np.asarray(spec.b(x), dtype=float)
        db = np.asarray(spec.db(x), dtype=float)
        res = a * d2r + (2 * da - b) * dr + (d2a - db) * r
        return float(np.max(np.abs(res[1:-1])))

    vals = rho0.values
    if vals is None:
        if rho0.rho_fn is None:
            raise InsufficientSmoothness("rho0 has neither samples nor analytic form")
        vals = np.asarray(rho0.rho_fn(x), dtype=float)
    a = np.broadcast_to(np.asarray(spec.a(x), dtype=float), x.shape)
    b = np.broadcast_to(np.asarray(spec.b(x), dtype=float), x.shape)
    arho = a * vals
    brho = b * vals
    dx = np.diff(x)
    if not np.allclose(dx, dx[0], rtol=1e-12, atol=0):
        # nonuniform fallback: three-point formulas
        d2 = _nonuniform_d2(arho, x)
        d1 = np.gradient(brho, x, edge_order=2)[1:-1]
        res = d2 - d1
    else:
        h = dx[0]
        d2 = (arho[2:] - 2 * arho[1:-1] + arho[:-2]) / h**2
        d1 = (brho[2:] - brho[:-2]) / (2 * h)
        res = d2 - d1
    return float(np.max(np.abs(res)))


def _nonuniform_d2(vals, x):
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    return 2 * (hm * vals[2:] - (hm + hp) * vals[1:-1] + hp * vals[:-2]) / (hm * hp * (hm + hp))


def _has_analytic_rho(rho0):
    if rho0.gibbs is not None and _derivative_of(rho0.gibbs[1]) is not None:
        return True
    return rho0.rho_fn is not None and _derivative_of(rho0.rho_fn) is not None


def _rho_derivs_on(rho0, x):
    """rho, rho', rho'' on sample points from analytic data."""
    if rho0.gibbs is not None and _derivative_of(rho0.gibbs[1]) is not None:
        beta, H = rho0.gibbs
        beta = float(beta)
        dH = _derivative_of(H)
        d2H = _derivative_of(dH)
        hv = np.asarray(H(x), dtype=float)
        dhv = np.asarray(dH(x), dtype=float)
        if d2H is not None:
            d2hv = np.asarray(d2H(x), dtype=float)
        else:
            d2hv = fd.grid_d1(dhv, x)
        if rho0.values is not None:
            r = np.asarray(rho0.values, dtype=float)
        elif rho0.rho_fn is not None:
            r = np.asarray(rho0.rho_fn(x), dtype=float)
        else:
            r = np.exp(-beta * hv)
        dr = -beta * dhv * r
        d2r = (beta**2 * dhv**2 - beta * d2hv) * r
        return r, dr, d2r
    f = rho0.rho_fn
    d1 = _derivative_of(f)
    d2 = _derivative_of(d1)
    r = np.asarray(f(x), dtype=float)
    dr = np.asarray(d1(x), dtype=float)
    d2r = np.asarray(d2(x), dtype=float) if d2 is not None else fd.grid_d1(dr, x)
    return r, dr, d2r


def compute_Hi(spec, rho0, grid=None):
    """Departure-from-gradient-structure field 2(beta a H' - a' + b) on the grid.

    Needs Gibbs data on rho0 (or strictly positive samples from which
    beta*H is recovered as -ln(rho/max rho)).
    """
    grid = grid if grid is not None else rho0.grid
    if grid is None:
        raise MissingGibbsForm("need a grid to evaluate on")
    if rho0.grid is None and rho0.gibbs is None:
        raise MissingGibbsForm("rho0 carries neither gibbs data nor grid samples")
    work = rho0 if rho0.grid is not None else replace(rho0, grid=grid)
    if spec.dimension != 1:
        raise UnsupportedTensor("compute_Hi supports dimension 1 in v1")
    beta, _, dh = work.gibbs_or_recovered()
    x = grid.x
    a = np.broadcast_to(np.asarray(spec.a(x), dtype=float), x.shape)
    b = np.broadcast_to(np.asarray(spec.b(x), dtype=float), x.shape)
    if spec.da is not None:
        da = np.broadcast_to(np.asarray(spec.da(x), dtype=float), x.shape)
    else:
        da = fd.grid_d1(a, x)
    return 2.0 * (beta * a * dh - da + b)


# --------------------------------------------------------------------------
# Example catalog
# --------------------------------------------------------------------------

CATALOG_NAMES = ("appendix2a", "appendix2b", "ornstein-uhlenbeck", "pure-diffusion")


def catalog_example(name, alpha=1.0):
    """Build a cataloged generator and its analytic equilibrium density.

    Returns (GeneratorSpec, EquilibriumDensity).  The equilibrium is
    analytic (no grid attached); materialize with ``on_grid``.  For the
    two parametric families the density is flagged non-normalizable for
    -1/2 <= alpha <= 0.
    """
    if name not in CATALOG_NAMES:
        raise UnknownExample(f"unknown example {name!r}; choose from {CATALOG_NAMES}")
    alpha = 1.0 if alpha is None else float(alpha)

    if name == "ornstein-uhlenbeck":
        domain = DomainSpec("full-line", ((-8.0, 8.0),))
        spec = GeneratorSpec(
            1,
            CompiledExpression("1"),
            CompiledExpression("-x"),
            domain,
            label="ornstein-uhlenbeck",
        )
        rho = EquilibriumDensity(
            rho_fn=CompiledExpression("exp(-x^2/2)"),
            gibbs=(1.0, CompiledExpression("x^2/2")),
            normalizable=True,
            total_mass=math.sqrt(2 * math.pi),
            label="ornstein-uhlenbeck",
        )
        return spec, rho

    if name == "pure-diffusion":
        domain = DomainSpec("box", ((-1.0, 1.0),))
        spec = GeneratorSpec(
            1,
            CompiledExpression("1"),
            CompiledExpression("0"),
            domain,
            label="pure-diffusion",
        )
        rho = EquilibriumDensity(
            rho_fn=CompiledExpression("1"),
            gibbs=(1.0, CompiledExpression("0")),
            normalizable=False,
            total_mass=math.inf,
            label="pure-diffusion",
        )
        return spec, rho

    if alpha < -0.5:
        raise ParameterOutOfRange(f"alpha = {alpha:g} < -1/2")
    normalizable = alpha > 0.0
    c = 2 * alpha - 1

    if name == "appendix2a":
        domain = DomainSpec("full-line", ((-10.0, 10.0),))
        spec = GeneratorSpec(
            1,
            CompiledExpression("1 + x^2"),
            CompiledExpression(f"-({c!r})*x"),
            domain,
            label=f"appendix2a(alpha={alpha:g})",
        )
        p = alpha + 0.5
        mass = math.sqrt(math.pi) * math.gamma(alpha) / math.gamma(alpha + 0.5) \
            if normalizable else math.inf
        rho = EquilibriumDensity(
            rho_fn=CompiledExpression(f"(1 + x^2)^(-({p!r}))"),
            gibbs=(1.0, CompiledExpression(f"({p!r})*ln(1 + x^2)")),
            normalizable=normalizable,
            total_mass=mass,
            label=f"appendix2a(alpha={alpha:g})",
        )
        return spec, rho

    # appendix2b: degenerate half-line family
    domain = DomainSpec("half-line", ((0.05, 20.0),))
    spec = GeneratorSpec(
        1,
        CompiledExpression("x^2"),
        CompiledExpression(f"1 - ({c!r})*x"),
        domain,
        label=f"appendix2b(alpha={alpha:g})",
    )
    q = 2 * alpha + 1
    mass = math.gamma(2 * alpha) if normalizable else math.inf
    rho = EquilibriumDensity(
        rho_fn=CompiledExpression(f"x^(-({q!r}))*exp(-1/x)"),
        gibbs=(1.0, CompiledExpression(f"({q!r})*ln(x) + 1/x")),
        normalizable=normalizable,
        total_mass=mass,
        label=f"appendix2b(alpha={alpha:g})",
    )
    return spec, rho
