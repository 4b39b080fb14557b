import numpy as np
import pytest

import kinbench as kb
from kinbench.discretize import Grid
from kinbench.errors import EmptyEnsemble, NonEllipticCoefficient, ParameterOutOfRange
from kinbench.expressions import CompiledExpression as CE
from kinbench.generator import DomainSpec, GeneratorSpec
from kinbench.oracle import (
    empirical_density,
    gaussian_source,
    moment_estimates,
    point_source,
    simulate,
    uniform_source,
)


def test_same_seed_bitwise_identical():
    spec, _ = kb.catalog_example("ornstein-uhlenbeck")
    a = simulate(spec, gaussian_source(0.0, 1.0), 2000, 1e-3, 0.05, seed=99)
    b = simulate(spec, gaussian_source(0.0, 1.0), 2000, 1e-3, 0.05, seed=99)
    assert np.array_equal(a.positions, b.positions)
    c = simulate(spec, gaussian_source(0.0, 1.0), 2000, 1e-3, 0.05, seed=100)
    assert not np.array_equal(a.positions, c.positions)


def test_frozen_dynamics_without_coefficients():
    spec = GeneratorSpec(1, CE("0"), CE("0"), DomainSpec("box", ((-1.0, 1.0),)))
    ens = simulate(spec, uniform_source(-0.5, 0.5), 500, 1e-2, 0.2, seed=1)
    ens2 = simulate(spec, uniform_source(-0.5, 0.5), 500, 1e-2, 0.0, seed=1)
    assert np.array_equal(ens.positions, ens2.positions)


def test_negative_diffusion_rejected():
    spec = GeneratorSpec(1, CE("-1"), CE("0"), DomainSpec("box", ((-1.0, 1.0),)))
    with pytest.raises(NonEllipticCoefficient):
        simulate(spec, point_source(0.0), 100, 1e-2, 0.1, seed=1)


def test_ou_stationary_moments():
    spec, _ = kb.catalog_example("ornstein-uhlenbeck")
    n = 20_000
    ens = simulate(spec, point_source(0.0), n, 2e-3, 5.0, seed=2024)
    mean = ens.positions.mean()
    var = ens.positions.var()
    assert abs(mean) <= 3.5 / np.sqrt(n) + 0.01
    assert abs(var - 1.0) <= 3.5 * np.sqrt(2.0 / n) + 0.01


def test_reflection_conserves_particles_and_domain():
    spec = GeneratorSpec(1, CE("1"), CE("0"), DomainSpec("box", ((-1.0, 1.0),)))
    ens = simulate(spec, uniform_source(-1.0, 1.0), 5000, 1e-2, 1.0, seed=5)
    assert not np.any(ens.absorbed)
    assert ens.positions.min() >= -1.0
    assert ens.positions.max() <= 1.0


def test_absorbing_walls_freeze_particles():
    spec = GeneratorSpec(1, CE("1"), CE("2"),
                         DomainSpec("box", ((-1.0, 1.0),), "absorbing"))
    ens = simulate(spec, point_source(0.5), 2000, 1e-2, 2.0, seed=6)
    assert np.any(ens.absorbed)
    assert np.all(np.isin(ens.positions[ens.absorbed], [-1.0, 1.0]))


def test_empirical_density_delta():
    grid = Grid.from_interval(0.0, 1.0, 11)
    spec = GeneratorSpec(1, CE("0"), CE("0"), DomainSpec("box", ((0.0, 1.0),)))
    ens = simulate(spec, point_source(0.5), 1000, 1e-2, 0.0, seed=1)
    dens = empirical_density(ens, grid)
    k = np.argmin(np.abs(grid.x - 0.5))
    w = grid.weights()
    assert dens[k] == pytest.approx(1.0 / w[k])
    assert np.dot(dens, w) == pytest.approx(1.0)


def test_empirical_density_uniform_sampler():
    grid = Grid.from_interval(0.0, 1.0, 41)
    spec = GeneratorSpec(1, CE("0"), CE("0"), DomainSpec("box", ((0.0, 1.0),)))
    ens = simulate(spec, uniform_source(0.0, 1.0), 50_000, 1e-2, 0.0, seed=3)
    dens = empirical_density(ens, grid)
    assert np.max(np.abs(dens[1:-1] - 1.0)) <= 0.12


def test_empirical_density_empty():
    grid = Grid.from_interval(0.0, 1.0, 11)
    spec = GeneratorSpec(1, CE("1"), CE("5"),
                         DomainSpec("box", ((0.0, 1.0),), "absorbing"))
    ens = simulate(spec, point_source(0.9), 50, 1e-2, 5.0, seed=9)
    assert np.all(ens.absorbed)
    with pytest.raises(EmptyEnsemble):
        empirical_density(ens, grid)


def test_moment_estimates_ou():
    spec, _ = kb.catalog_example("ornstein-uhlenbeck")
    est = moment_estimates(spec, 0.0, 1e-2, 100_000, seed=17)
    assert abs(est.drift - 0.0) <= 3 * est.drift_se + 1e-3
    assert abs(est.diffusion - 1.0) <= 3 * est.diffusion_se + 0.01


def test_moment_estimates_quadratic_diffusion():
    spec, _ = kb.catalog_example("appendix2a", 1.0)
    est = moment_estimates(spec, 2.0, 1e-2, 100_000, seed=18)
    # a(2) = 5, b(2) = -2; finite-window bias is O(t)
    assert abs(est.drift + 2.0) <= 3 * est.drift_se + 0.1
    assert abs(est.diffusion - 5.0) <= 3 * est.diffusion_se + 0.15


def test_third_moment_trend():
    spec, _ = kb.catalog_example("ornstein-uhlenbeck")
    thirds = [moment_estimates(spec, 0.0, t, 50_000, seed=21).third_abs_over_t
              for t in [1e-2, 5e-3, 2.5e-3]]
    assert thirds[0] > thirds[1] > thirds[2]


def test_bad_parameters_rejected():
    spec, _ = kb.catalog_example("ornstein-uhlenbeck")
    with pytest.raises(ParameterOutOfRange):
        simulate(spec, point_source(0.0), 10, -1e-3, 1.0, seed=1)
    with pytest.raises(ParameterOutOfRange):
        moment_estimates(spec, 0.0, 1e-2, 100, seed=1, substeps=0)
