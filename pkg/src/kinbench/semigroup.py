"""Semigroup evolution by uniformization, resolvents, and kernel diagnostics.

Uniformization writes e^{Qt} as a Poisson mixture of powers of the
stochastic matrix P = I + Q/lambda, so nonnegativity and row sums survive
exactly up to the scalar Poisson tail; that is why it is used here instead
of Pade or Krylov exponentials.  Long horizons are split into repeated
squaring of a short-time kernel with the defect tracked.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import DiscreteGenerator
from .errors import (
    MomentBiasWarning,
    ParameterOutOfRange,
    ShapeError,
    SpectrumError,
    TimeError,
    TruncationBudgetExceeded,
)
from .generator import ScalarField

LEVEL_MEAN = 64.0        # max Poisson mean per series level
MAX_TERMS = 1_000_000
MAX_SPLITS = 60
LAMBDA_MARGIN = 1.05     # keeps P's diagonal positive under rounding


def _as_qmatrix(Q):
    if isinstance(Q, DiscreteGenerator):
        return Q
    return DiscreteGenerator.from_matrix(np.asarray(Q, dtype=float))


def _poisson_weights(mu, tail):
    """Poisson(mu) pmf truncated once the missed mass drops below tail."""
    if mu <= 0:
        return np.ones(1)
    w = math.exp(-mu)
    weights = [w]
    cum = w
    n = 0
    while cum < 1.0 - tail:
        n += 1
        if n > MAX_TERMS:
            raise TruncationBudgetExceeded(
                f"Poisson series needs more than {MAX_TERMS} terms at mean {mu:g}; "
                "split the horizon into shorter steps")
        w = w * mu / n
        weights.append(w)
        cum += w
        if w < 1e-18 and n > mu:
            break  # machine completeness reached
    return np.array(weights)


def _split_count(mu):
    if mu <= LEVEL_MEAN:
        return 0
    k = int(math.ceil(math.log2(mu / LEVEL_MEAN)))
    if k > MAX_SPLITS:
        raise TruncationBudgetExceeded(
            f"horizon needs 2^{k} splits; reduce t or lambda")
    return k


def _check_tol(tol):
    if not (0.0 < tol <= 1e-6):
        raise ParameterOutOfRange(f"tol must lie in (0, 1e-6], got {tol:g}")


def _series_matvec(P, v, weights):
    acc = weights[0] * v
    pv = v
    for w in weights[1:]:
        pv = P @ pv
        acc = acc + w * pv
    return acc


@dataclass
class TransitionKernel:
    """Row-substochastic kernel matrix P(t) with its truncation defect."""

    P: np.ndarray
    t: float
    truncation: float

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        n, m = self.P.shape
        if n != m:
            raise ShapeError(f"kernel must be square, got {self.P.shape}")

    def row_sum_defect(self):
        return float(np.max(np.abs(self.P.sum(axis=1) - 1.0)))


def _kernel_matrix(Q, t, tol):
    """Dense e^{Qt} by uniformization with scaling and squaring."""
    qm = _as_qmatrix(Q)
    n = qm.size
    if t == 0 or qm.lambda_max == 0.0:
        return np.eye(n), 0.0
    lam = LAMBDA_MARGIN * qm.lambda_max
    mu = lam * t
    k = _split_count(mu)
    tail = max(min(tol, 1e-13) / (2 ** k), 1e-17)
    weights = _poisson_weights(mu / (2 ** k), tail)
    P = sp.identity(n, format="csr") + qm.Q / lam
    M = _series_matvec(P, np.eye(n), weights)
    defect = tail
    for _ in range(k):
        M = M @ M
        defect *= 2
    # rows of e^{Qt} sum to one exactly (Q has zero row sums); restore that
    # identity against the Poisson tail and squaring roundoff
    rs = M.sum(axis=1)
    good = rs > 0
    M[good] /= rs[good, None]
    return M, defect


def transition_kernel(Q, t, tol=1e-9):
    """Transition kernel P(t); rows sum to one within the reported defect."""
    if t < 0:
        raise TimeError(f"t = {t:g} < 0")
    _check_tol(tol)
    M, defect = _kernel_matrix(Q, t, tol)
    return TransitionKernel(M, float(t), defect)


_KERNEL_CUTOFF = 5_000  # above this Poisson mean a dense kernel is cheaper


def _propagate_vector(Q, v, t, tol, transpose):
    qm = _as_qmatrix(Q)
    v = np.asarray(v, dtype=float)
    if v.shape != (qm.size,):
        raise ShapeError(f"vector length {v.shape} does not match chain size {qm.size}")
    if t == 0 or qm.lambda_max == 0.0:
        return v.copy()
    lam = LAMBDA_MARGIN * qm.lambda_max
    mu = lam * t
    if mu > _KERNEL_CUTOFF and qm.size <= 2048:
        M, _ = _kernel_matrix(qm, t, tol)
        return (M.T @ v) if transpose else (M @ v)
    k = _split_count(mu)
    tail = max(min(tol, 1e-13) / (2 ** k), 1e-17)
    weights = _poisson_weights(mu / (2 ** k), tail)
    mat = qm.Q.T.tocsr() if transpose else qm.Q
    P = sp.identity(qm.size, format="csr") + mat / lam
    out = v
    for _ in range(2 ** k):
        out = _series_matvec(P, out, weights)
    return out


def _unwrap(f):
    if isinstance(f, ScalarField):
        return np.asarray(f.values, dtype=float), f.grid
    return np.asarray(f, dtype=float), None


def evolve_observable(Q, f0, t, tol=1e-9):
    """Observable-side evolution e^{Qt} f0.

    Guarantees, by construction: nonnegative input stays nonnegative,
    constants stay constant within tol, and the sup norm does not grow
    beyond tol.
    """
    if t < 0:
        raise TimeError(f"t = {t:g} < 0")
    _check_tol(tol)
    vals, grid = _unwrap(f0)
    out = _propagate_vector(Q, vals, t, tol, transpose=False)
    return ScalarField(out, grid) if grid is not None else out


def evolve_density(Q, nu0, t, tol=1e-9):
    """Density-side evolution e^{Q^T t} nu0; conserves the total mass sum(nu)."""
    if t < 0:
        raise TimeError(f"t = {t:g} < 0")
    _check_tol(tol)
    vals, grid = _unwrap(nu0)
    if np.any(vals < 0):
        raise ParameterOutOfRange("initial density must be nonnegative")
    out = _propagate_vector(Q, vals, t, tol, transpose=True)
    return ScalarField(out, grid) if grid is not None else out


@dataclass
class EvolutionResult:
    """Density snapshots with conserved-mass and minimum-value series."""

    times: np.ndarray
    fields: list
    mass: np.ndarray
    min_value: np.ndarray
    sup_norm: np.ndarray
    grid: object = None


def evolve_series(Q, nu0, times, tol=1e-9, side="density"):
    """Evolve through an increasing time schedule, reusing step kernels.

    Steps with equal spacing share one uniformized kernel, so a long
    schedule costs a handful of kernel builds plus one dense matvec per
    sample.
    """
    qm = _as_qmatrix(Q)
    times = np.asarray(list(times), dtype=float)
    if times.size == 0:
        raise ParameterOutOfRange("empty time schedule")
    if np.any(times < 0):
        raise TimeError("negative time in schedule")
    if np.any(np.diff(times) < 0):
        raise TimeError("time schedule must be nondecreasing")
    _check_tol(tol)
    vals, grid = _unwrap(nu0)
    transpose = side == "density"
    if side not in ("density", "observable"):
        raise ParameterOutOfRange(f"unknown side {side!r}")

    kernels = {}
    fields = []
    current = vals.copy()
    t_now = 0.0
    small = qm.size <= 2048
    for t in times:
        dt = t - t_now
        if dt > 0:
            key = round(dt, 15)
            if small:
                if key not in kernels:
                    kernels[key], _ = _kernel_matrix(qm, dt, tol)
                M = kernels[key]
                current = (M.T @ current) if transpose else (M @ current)
            else:
                current = _propagate_vector(qm, current, dt, tol, transpose)
            t_now = t
        fields.append(current.copy())
    arr = np.array(fields)
    return EvolutionResult(
        times=times,
        fields=[ScalarField(f, grid) if grid is not None else f for f in fields],
        mass=arr.sum(axis=1),
        min_value=arr.min(axis=1),
        sup_norm=np.abs(arr).max(axis=1),
        grid=grid,
    )


def chapman_kolmogorov_defect(Q, t, s, tol=1e-9):
    """Sup-norm defect between P(t+s) and P(t) P(s)."""
    if t < 0 or s < 0:
        raise TimeError("times must be nonnegative")
    _check_tol(tol)
    whole, _ = _kernel_matrix(Q, t + s, tol)
    left, _ = _kernel_matrix(Q, t, tol)
    right, _ = _kernel_matrix(Q, s, tol)
    diff = whole - left @ right
    return float(np.max(np.abs(diff).sum(axis=1)))


def resolvent(Q, lam, g):
    """Solve (lam - Q) f = g; the M-matrix structure bounds ||lam f|| by ||g||."""
    if lam <= 0:
        raise SpectrumError(f"resolvent parameter must be positive, got {lam:g}")
    qm = _as_qmatrix(Q)
    vals, grid = _unwrap(g)
    A = (lam * sp.identity(qm.size, format="csc") - qm.Q.tocsc())
    f = spla.spsolve(A, vals)
    return ScalarField(f, grid) if grid is not None else f


def generator_at_max(Q, f):
    """Value of Qf at the argmax of f (ties broken to the lowest index)."""
    qm = _as_qmatrix(Q)
    vals, _ = _unwrap(f)
    return float((qm.Q @ vals)[int(np.argmax(vals))])


@dataclass
class MomentRecovery:
    """Drift/diffusion fields recovered from short-time kernel moments."""

    x: np.ndarray
    drift: np.ndarray
    diffusion: np.ndarray
    third_abs_over_t: np.ndarray
    t: float


def recover_coefficients(Q, t_small, tol=1e-12, kernel=None):
    """First two kernel moments over t: drift and diffusion estimates.

    Also returns the third absolute moment over t, which must vanish as
    t -> 0 for a true diffusion.  Emits MomentBiasWarning when
    lambda_max * t exceeds 0.1 (the O(t) bias scale).
    """
    qm = _as_qmatrix(Q)
    if t_small <= 0:
        raise TimeError("t_small must be positive")
    if qm.lambda_max * t_small > 0.1:
        warnings.warn(
            f"lambda_max*t = {qm.lambda_max * t_small:.3g} > 0.1; "
            f"O(t) moment bias of order {0.5 * t_small:.2g} relative may be visible",
            MomentBiasWarning,
        )
    x = qm.node_coordinates()
    if x.ndim != 1:
        raise ShapeError("moment recovery supports 1-D grids in v1")
    if kernel is None:
        P, _ = _kernel_matrix(qm, t_small, tol)
    else:
        P = kernel.P
    rs = P.sum(axis=1)
    px = P @ x
    px2 = P @ (x * x)
    drift = (px - x * rs) / t_small
    diffusion = (px2 - 2 * x * px + x * x * rs) / (2 * t_small)
    third = np.abs(x[None, :] - x[:, None]) ** 3
    third_abs = np.einsum("ij,ij->i", P, third) / t_small
    return MomentRecovery(x, drift, diffusion, third_abs, t_small)


@dataclass
class ContinuityDefect:
    """1 - p(t, x_i, ball(x_i, r)) series, plus the interior-max series."""

    times: np.ndarray
    at_node: np.ndarray
    max_interior: np.ndarray
    node: int
    radius: float


def stochastic_continuity_defect(Q, node, radius, times, tol=1e-12):
    """Kernel mass escaping a ball around each node, as t decreases to 0."""
    qm = _as_qmatrix(Q)
    x = qm.node_coordinates()
    times = np.asarray(list(times), dtype=float)
    if np.any(times < 0):
        raise TimeError("times must be nonnegative")
    inside = np.abs(x[None, :] - x[:, None]) <= radius
    at_node = np.empty(times.size)
    max_interior = np.empty(times.size)
    interior = slice(1, -1) if qm.size > 2 else slice(None)
    for k, t in enumerate(times):
        P, _ = _kernel_matrix(qm, t, tol)
        ball_mass = np.einsum("ij,ij->i", P, inside.astype(float))
        defect = 1.0 - ball_mass
        at_node[k] = defect[node]
        max_interior[k] = float(defect[interior].max())
    return ContinuityDefect(times, at_node, max_interior, int(node), float(radius))
