import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from evodyn.dynamics import (
    ContractViolation,
    IntegratorConfig,
    NumericalAbort,
    RK4Fixed,
    RK45Adaptive,
    VectorField,
    integrate,
    integrate_field,
    mean_dynamics_rhs,
    read_trajectory_csv,
    rhs,
)
from evodyn.games import AnticoordinationBump, AnticoordinationDiscrete, ConstantZero
from evodyn.measures import grid_points
from evodyn.protocols import BNN, REPLICATOR, SMITH

from conftest import simplex_points


@settings(max_examples=200)
@given(simplex_points(), st.integers(0, 2**32 - 1), st.sampled_from([BNN, SMITH]))
def test_fast_rhs_matches_dense_oracle(x, seed, protocol):
    rng = np.random.default_rng(seed)
    rho = rng.normal(size=x.size)
    lam = rng.dirichlet(np.ones(x.size))
    np.testing.assert_allclose(rhs(x, lam, protocol, rho), mean_dynamics_rhs(x, lam, protocol, rho),
                               atol=1e-13)


@given(simplex_points(), st.integers(0, 2**32 - 1))
def test_replicator_closed_form(x, seed):
    rho = np.random.default_rng(seed).normal(size=x.size)
    expected = x * (rho - x @ rho)
    np.testing.assert_allclose(mean_dynamics_rhs(x, x, REPLICATOR, rho), expected, atol=1e-12)
    np.testing.assert_allclose(rhs(x, None, REPLICATOR, rho), expected, atol=1e-12)


@given(simplex_points(), st.sampled_from([REPLICATOR, BNN, SMITH]))
def test_velocity_is_tangent(x, protocol):
    rho = np.sin(np.arange(x.size) * 1.7)
    lam = None if protocol is REPLICATOR else np.full(x.size, 1.0 / x.size)
    assert abs(rhs(x, lam, protocol, rho).sum()) <= 1e-13


def test_replicator_rejects_decoupled_reference():
    x = np.array([0.5, 0.5])
    with pytest.raises(ContractViolation):
        rhs(x, np.array([0.9, 0.1]), REPLICATOR, np.zeros(2))


def test_length_mismatch():
    with pytest.raises(ValueError):
        rhs(np.array([0.5, 0.5]), None, REPLICATOR, np.zeros(3))


@pytest.mark.parametrize("n", [2, 10, 100])
@pytest.mark.parametrize("protocol", [REPLICATOR, BNN, SMITH])
def test_uniform_state_is_exact_rest_point(n, protocol):
    pts = grid_points(n)
    u = np.full(n, 1.0 / n)
    f = VectorField(AnticoordinationDiscrete(), protocol, pts, None if protocol is REPLICATOR else u)
    assert np.all(f(u) == 0.0)


def test_fixed_reference_required():
    with pytest.raises(ValueError):
        VectorField(ConstantZero(), SMITH, grid_points(3))


def test_constant_game_is_stationary():
    x0 = np.array([0.2, 0.3, 0.5])
    cfg = IntegratorConfig(RK45Adaptive(), t_end=2.0, emit=5)
    traj = integrate(ConstantZero(), SMITH, grid_points(3), x0, np.full(3, 1 / 3), cfg)
    np.testing.assert_array_equal(traj.states, np.tile(x0, (5, 1)))


def test_rk4_and_rk45_agree():
    pts = grid_points(10)
    x0 = np.random.default_rng(1).dirichlet(np.ones(10))
    a = integrate(AnticoordinationBump(0.3), SMITH, pts, x0, np.full(10, 0.1),
                  IntegratorConfig(RK4Fixed(0.005), t_end=3.0, emit=7))
    b = integrate(AnticoordinationBump(0.3), SMITH, pts, x0, np.full(10, 0.1),
                  IntegratorConfig(RK45Adaptive(1e-10, 1e-12), t_end=3.0, emit=7))
    np.testing.assert_allclose(a.times, b.times)
    np.testing.assert_allclose(a.states, b.states, atol=1e-9)


def test_replicator_against_logistic_solution():
    # two strategies with rho = -x: p' = p (1 - p) (1 - 2p); t = F(p) - F(p0)
    x0 = np.array([0.9, 0.1])
    traj = integrate(AnticoordinationDiscrete(), REPLICATOR, grid_points(2), x0, None,
                     IntegratorConfig(RK45Adaptive(1e-11, 1e-13), t_end=4.0, emit=9))
    u = traj.states[:, 0]

    p = sp.symbols("p", positive=True)
    invariant = sp.lambdify(p, sp.integrate(1 / (p * (1 - p) * (1 - 2 * p)), p), "numpy")

    # log of negative arguments only adds a constant imaginary part
    F = invariant(u.astype(complex)).real
    np.testing.assert_allclose(F - F[0], traj.times, atol=1e-7)


def test_emission_grid_and_mass():
    cfg = IntegratorConfig(RK45Adaptive(), t_end=5.0)
    pts = grid_points(20)
    x0 = np.random.default_rng(2).dirichlet(np.ones(20))
    traj = integrate(AnticoordinationBump(0.2), BNN, pts, x0, np.full(20, 0.05), cfg)
    np.testing.assert_array_equal(traj.times, np.linspace(0, 5, 200))
    assert traj.max_mass_drift <= 1e-8
    assert np.all(np.abs(traj.states.sum(axis=1) - 1) <= 1e-14)
    assert np.all(traj.states >= 0)


def test_faces_are_invariant_under_replicator():
    x0 = np.array([0.0, 0.3, 0.0, 0.7])
    traj = integrate(AnticoordinationBump(0.5), REPLICATOR, grid_points(4), x0, None,
                     IntegratorConfig(RK45Adaptive(), t_end=10.0, emit=20))
    assert np.all(traj.states[:, [0, 2]] == 0.0)


def test_large_negative_excursion_aborts():
    def push(x):
        return np.array([-10.0, 10.0])

    with pytest.raises(NumericalAbort):
        integrate_field(push, np.array([0.5, 0.5]), IntegratorConfig(RK4Fixed(1.0), t_end=2.0))


def test_non_finite_field_aborts():
    with pytest.raises(NumericalAbort):
        integrate_field(lambda x: np.full_like(x, np.nan), np.array([0.5, 0.5]),
                        IntegratorConfig(RK4Fixed(0.1), t_end=1.0))


@pytest.mark.parametrize("kwargs", [dict(t_end=0.0), dict(renorm_every=0), dict(emit=1),
                                    dict(negative_clip=0.0)])
def test_integrator_config_validation(kwargs):
    with pytest.raises(ValueError):
        IntegratorConfig(**kwargs)


def test_invalid_initial_state():
    with pytest.raises(ValueError):
        integrate(ConstantZero(), REPLICATOR, grid_points(2), [0.7, 0.7], None, IntegratorConfig())


def test_trajectory_csv_roundtrip(tmp_path):
    pts = grid_points(5)
    x0 = np.random.default_rng(3).dirichlet(np.ones(5))
    traj = integrate(AnticoordinationBump(0.4), SMITH, pts, x0, np.full(5, 0.2),
                     IntegratorConfig(t_end=1.0, emit=11))
    path = tmp_path / "t.csv"
    traj.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,0.0,0.25,0.5,0.75,1.0"
    assert len(lines) == 12
    back = read_trajectory_csv(path)
    np.testing.assert_array_equal(back.states, traj.states)
    np.testing.assert_array_equal(back.times, traj.times)
    np.testing.assert_array_equal(back.support, pts)


def test_documented_velocities():
    np.testing.assert_allclose(rhs([0.5, 0.5], None, REPLICATOR, [1.0, 0.0]), [0.25, -0.25])
    assert np.all(rhs([1.0, 0.0], None, REPLICATOR, [0.3, 2.0]) == 0.0)
    np.testing.assert_allclose(rhs([1.0, 0.0], [0.5, 0.5], BNN, [0.0, 1.0]), [-0.5, 0.5])


def test_stationary_start_stays_put():
    n = 16
    u = np.full(n, 1 / n)
    traj = integrate(AnticoordinationDiscrete(), REPLICATOR, grid_points(n), u, None,
                     IntegratorConfig(t_end=10.0))
    assert np.abs(traj.final_state - u).max() <= 1e-9
