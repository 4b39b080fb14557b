"""Finite-difference helpers used by several modules."""

from __future__ import annotations

import math

import numpy as np


def central_d1(f, x, h):
    """Fourth-order central first derivative of a callable."""
    return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)


def central_d2(f, x, h):
    """Fourth-order central second derivative of a callable."""
    return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x)
            + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h)


def central_dm(f, x, h, m):
    """Order-m central difference (2nd-order accurate), m <= 6.

    Coefficients are binomial; odd m uses the half-offset average form.
    """
    if m == 0:
        return f(x)
    k = np.arange(m + 1)
    signs = (-1.0) ** k
    binom = np.array([float(math.comb(m, int(j))) for j in k])
    offsets = (m / 2.0 - k) * h
    if m % 2 == 0:
        vals = np.array([f(x + o) for o in offsets])
        return float(np.dot(signs * binom, vals)) / h**m
    # average the two staggered stencils to land back on x
    vals_plus = np.array([f(x + o + h / 2) for o in offsets])
    vals_minus = np.array([f(x + o - h / 2) for o in offsets])
    d_plus = float(np.dot(signs * binom, vals_plus)) / h**m
    d_minus = float(np.dot(signs * binom, vals_minus)) / h**m
    return 0.5 * (d_plus + d_minus)


def richardson_dm(f, x, m, h=None):
    """Richardson-extrapolated order-m derivative, roughly 4th-order accurate."""
    if h is None:
        h = 5e-2 * max(1.0, abs(float(np.max(np.abs(x)))))
    d_h = central_dm(f, x, h, m)
    d_h2 = central_dm(f, x, h / 2, m)
    return (4.0 * d_h2 - d_h) / 3.0


def grid_d1(values, x):
    """Second-order first derivative of sampled values (one-sided at ends)."""
    return np.gradient(values, x, edge_order=2)


def grid_d2_uniform(values, dx):
    """Centered second derivative on a uniform grid; ends are invalid."""
    out = np.full_like(np.asarray(values, dtype=float), np.nan)
    out[1:-1] = (values[2:] - 2 * values[1:-1] + values[:-2]) / dx**2
    return out


def one_sided_d1(values, x, at_start=True):
    """Second-order one-sided first derivative at a boundary node."""
    if at_start:
        h1 = x[1] - x[0]
        h2 = x[2] - x[1]
        # 3-point nonuniform one-sided stencil
        c0 = -(2 * h1 + h2) / (h1 * (h1 + h2))
        c1 = (h1 + h2) / (h1 * h2)
        c2 = -h1 / (h2 * (h1 + h2))
        return c0 * values[0] + c1 * values[1] + c2 * values[2]
    h1 = x[-1] - x[-2]
    h2 = x[-2] - x[-3]
    c0 = (2 * h1 + h2) / (h1 * (h1 + h2))
    c1 = -(h1 + h2) / (h1 * h2)
    c2 = h1 / (h2 * (h1 + h2))
    return c0 * values[-1] + c1 * values[-2] + c2 * values[-3]


def trapezoid_weights(x):
    """Trapezoidal quadrature weights for strictly increasing nodes."""
    x = np.asarray(x, dtype=float)
    w = np.empty_like(x)
    w[1:-1] = 0.5 * (x[2:] - x[:-2])
    w[0] = 0.5 * (x[1] - x[0])
    w[-1] = 0.5 * (x[-1] - x[-2])
    return w
