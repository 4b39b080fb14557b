#!/usr/bin/env python3
"""Certificate demo: higher-order truncations vs admissible second-order operators.

Prints the witness polynomial for a third-order term and the pass verdict
for the quadratic-diffusion example coefficients.
"""

import numpy as np

from kinbench import TruncatedOperator, pawula_counterexample, second_order_sign_check
from kinbench.pawula import apply_operator

if __name__ == "__main__":
    op3 = TruncatedOperator(3, {2: 1.0, 3: 1.0})
    cert = pawula_counterexample(op3, 0.0, epsilon=0.1, amplitude=0.1)
    print("third-order truncation:")
    print(f"  witness {cert.describe()}")
    print(f"  operator value at the local maximum: {cert.value:g} > 0")
    print(f"  validity radius: {cert.validity_radius:g}")
    recheck = apply_operator(op3, cert.polynomial(), cert.x0)
    print(f"  re-evaluated through the generic apply path: {recheck:g}")

    xs = np.linspace(-10, 10, 201)
    op2 = TruncatedOperator(2, {1: lambda x: -x, 2: lambda x: 1 + x**2})
    ok, worst = second_order_sign_check(op2, xs)
    print(f"second-order operator with c2 = 1 + x^2: "
          f"{'pass' if ok else 'FAIL'} (min c2 sampled = {worst:g})")
