"""kinbench: positivity-preserving Markov semigroups from diffusion generators.

Pipeline: a generator spec (diffusion a, drift b) is discretized into a
Q-matrix whose off-diagonals are nonnegative by construction, evolved by
uniformization (exactly positivity-preserving), and checked against the
semigroup axioms, the H-theorem with its dissipation identity, and an
independent particle simulation.  All evaluation paths are pure functions
over immutable inputs; results are deterministic for fixed seeds.
"""

from .discretize import DiscreteGenerator, Grid, adjoint_qmatrix, build_qmatrix
from .errors import KinbenchError
from .expressions import CompiledExpression, compile_expression
from .generator import (
    DomainSpec,
    EquilibriumDensity,
    GeneratorSpec,
    ScalarField,
    apply_formal_adjoint,
    apply_generator,
    catalog_example,
    compute_Hi,
    residual_invariant,
)
from .htheorem import (
    HCurve,
    HFunctional,
    boundary_term,
    dH_dt_consistency,
    dissipation_rate,
    h_curve,
    h_function,
    solve_invariant,
)
from .oracle import (
    ParticleEnsemble,
    empirical_density,
    gaussian_source,
    moment_estimates,
    point_source,
    simulate,
    uniform_source,
)
from .pawula import (
    PawulaCertificate,
    TruncatedOperator,
    cube_test,
    maximum_principle_check,
    pawula_counterexample,
    scan_certificate,
    second_order_sign_check,
)
from .semigroup import (
    EvolutionResult,
    TransitionKernel,
    chapman_kolmogorov_defect,
    evolve_density,
    evolve_observable,
    evolve_series,
    generator_at_max,
    recover_coefficients,
    resolvent,
    stochastic_continuity_defect,
    transition_kernel,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
