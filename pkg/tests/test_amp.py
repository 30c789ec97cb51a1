import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from ampnnspl.amp import (
    AmpState,
    DegenerateMatrixError,
    Status,
    factor_update,
    init_state,
    iterate_once,
    solve,
    variable_update,
)
from ampnnspl.bench import BlockSparseSpec, make_problem, nmse_db
from ampnnspl.denoiser import posterior_batch
from ampnnspl.fileio import read_vector
from ampnnspl.learning import build_topology, update_lambda, update_noise, update_slab
from ampnnspl.model import Hyperparams, MeasurementModel, SolverConfig, generate_matrix, make_rng

from oracles import loop_factor_update, loop_variable_update

DATA = Path(__file__).parent / "data"

# 2x3 fixture shared by the factor/variable tests
A_FIX = np.array([[0.5, -1.0, 0.25], [1.5, 0.75, -0.5]])
Y_FIX = np.array([0.9, -0.35])
XHAT_FIX = np.array([0.2, -0.4, 1.1])
NU_FIX = np.array([0.3, 0.05, 0.6])
Z_PREV = np.array([0.4, 0.1])
V_PREV = np.array([0.7, 1.3])
DELTA_FIX = 0.2


def fixture_state():
    mm = MeasurementModel(A_FIX, Y_FIX)
    hp = Hyperparams(mu0=0.5, tau0=1.0, delta0=DELTA_FIX, lam=np.full(3, 0.5))
    state = AmpState(xhat=XHAT_FIX, nu=NU_FIX, V=V_PREV, Z=Z_PREV, t=2)
    return mm, hp, state


def test_init_state_zero_mean_prior():
    mm = MeasurementModel(np.eye(4), np.arange(4.0))
    state = init_state(mm, Hyperparams(0.0, 1.0, 1.0, np.full(4, 0.5)))
    np.testing.assert_array_equal(state.xhat, 0.0)
    np.testing.assert_array_equal(state.nu, 0.5)
    np.testing.assert_array_equal(state.V, 1.0)
    assert state.Z.tobytes() == mm.y.tobytes()
    assert state.t == 1


def test_init_state_prior_moments_monte_carlo():
    mm = MeasurementModel(np.eye(3), np.ones(3))
    state = init_state(mm, Hyperparams(3.0, 1.0, 1.0, np.full(3, 0.5)))
    np.testing.assert_allclose(state.xhat, 1.5, rtol=1e-15)
    np.testing.assert_allclose(state.nu, 2.75, rtol=1e-15)
    rng = np.random.default_rng(0)
    n = 400_000
    samples = np.where(rng.uniform(size=n) < 0.5, rng.normal(3.0, 1.0, n), 0.0)
    assert samples.mean() == pytest.approx(1.5, abs=0.01)
    assert samples.var() == pytest.approx(2.75, abs=0.03)


def test_factor_update_first_iteration_has_no_correction():
    rng = make_rng(4)
    A = generate_matrix(5, 8, rng)
    mm = MeasurementModel(A, rng.normal(size=5))
    hp = Hyperparams(1.0, 2.0, 0.1, np.full(8, 0.3))
    state = init_state(mm, hp)
    V, Z = factor_update(state, mm, hp)
    np.testing.assert_array_equal(Z, A @ state.xhat)


def test_factor_update_zero_variance():
    mm, hp, state = fixture_state()
    V, Z = factor_update(replace(state, nu=np.zeros(3)), mm, hp)
    np.testing.assert_array_equal(V, 0.0)
    np.testing.assert_allclose(Z, A_FIX @ XHAT_FIX, rtol=1e-15)


def test_factor_update_fixture():
    mm, hp, state = fixture_state()
    V, Z = factor_update(state, mm, hp)
    # frozen from an independent pure-Python evaluation
    np.testing.assert_allclose(V, [0.1625, 0.8531249999999999], rtol=1e-14)
    np.testing.assert_allclose(Z, [0.6847222222222222, -0.29406250000000006], rtol=1e-14)


def test_variable_update_scalar():
    mm = MeasurementModel(np.array([[1.0]]), np.array([2.0]))
    hp = Hyperparams(0.0, 1.0, 0.25, np.array([0.5]))
    state = AmpState(xhat=np.array([0.3]), nu=np.array([0.1]), V=np.array([0.75]), Z=np.array([1.2]))
    Sigma, R = variable_update(state, mm, hp)
    assert Sigma[0] == 1.0
    assert R[0] == pytest.approx(0.3 + (2.0 - 1.2), rel=1e-15)


def test_variable_update_zero_residual():
    mm, hp, state = fixture_state()
    _, R = variable_update(replace(state, Z=Y_FIX.copy()), mm, hp)
    np.testing.assert_array_equal(R, XHAT_FIX)


def test_variable_update_fixture():
    mm, hp, state = fixture_state()
    V, Z = factor_update(state, mm, hp)
    Sigma, R = variable_update(replace(state, V=V, Z=Z), mm, hp)
    np.testing.assert_allclose(Sigma, [0.35383779869659665, 0.3036979490366688, 2.44019975031211], rtol=1e-13)
    np.testing.assert_allclose(R, [0.2768752514281117, -0.5924553725571439, 1.527096684699681], rtol=1e-13)


def test_updates_match_loop_oracle_on_random_instances():
    rng = np.random.default_rng(8)
    for _ in range(5):
        m, n = rng.integers(2, 9, size=2)
        A = rng.normal(size=(m, n))
        mm = MeasurementModel(A, rng.normal(size=m))
        hp = Hyperparams(0.3, 1.0, rng.uniform(0.01, 1), np.full(n, 0.4))
        state = AmpState(xhat=rng.normal(size=n), nu=rng.uniform(size=n),
                         V=rng.uniform(0.1, 1, size=m), Z=rng.normal(size=m))
        V, Z = factor_update(state, mm, hp)
        V_ref, Z_ref = loop_factor_update(A.tolist(), state.xhat, state.nu, mm.y, state.Z, state.V, hp.delta0)
        np.testing.assert_allclose(V, V_ref, rtol=1e-12)
        np.testing.assert_allclose(Z, Z_ref, rtol=1e-12, atol=1e-14)
        Sigma, R = variable_update(replace(state, V=V, Z=Z), mm, hp)
        S_ref, R_ref = loop_variable_update(A.tolist(), state.xhat, mm.y, Z, V, hp.delta0)
        np.testing.assert_allclose(Sigma, S_ref, rtol=1e-12)
        np.testing.assert_allclose(R, R_ref, rtol=1e-12, atol=1e-14)


def test_degenerate_matrix_rejected():
    A = np.array([[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(DegenerateMatrixError):
        solve(MeasurementModel(A, np.ones(2)))


def test_iterate_once_is_composition_of_steps():
    mm, hp, state = fixture_state()
    topo = build_topology("nnspl1d", 3)
    new_state, new_hp = iterate_once(state, mm, hp, topo)

    V, Z = factor_update(state, mm, hp)
    Sigma, R = variable_update(replace(state, V=V, Z=Z), mm, hp)
    post = posterior_batch(R, Sigma, hp.mu0, hp.tau0, hp.lam)
    lam = update_lambda(post.pi, topo)
    mu0, tau0 = update_slab(post.pi, post.m, post.v, hp.mu0, hp.tau0)
    delta0 = update_noise(mm.y, Z, V, hp.delta0)

    np.testing.assert_array_equal(new_state.xhat, post.ga)
    np.testing.assert_array_equal(new_state.nu, post.gc)
    np.testing.assert_array_equal(new_state.V, V)
    np.testing.assert_array_equal(new_state.Z, Z)
    np.testing.assert_array_equal(new_hp.lam, lam)
    assert (new_hp.mu0, new_hp.tau0, new_hp.delta0) == (mu0, tau0, delta0)
    assert new_state.t == state.t + 1


def test_undamped_equals_damping_one():
    x, mm = make_problem(BlockSparseSpec(), 0.5, 3)
    a = solve(mm, SolverConfig())
    b = solve(mm, SolverConfig(damping=1.0))
    assert a.xhat.tobytes() == b.xhat.tobytes()
    assert a.iterations == b.iterations


def test_damping_mixes_estimates():
    mm, hp, state = fixture_state()
    topo = build_topology("nnspl1d", 3)
    full, _ = iterate_once(state, mm, hp, topo)
    half, _ = iterate_once(state, mm, hp, topo, SolverConfig(damping=0.5))
    np.testing.assert_allclose(half.xhat, 0.5 * full.xhat + 0.5 * state.xhat, rtol=1e-15)
    np.testing.assert_allclose(half.nu, 0.5 * full.nu + 0.5 * state.nu, rtol=1e-15)


def test_fullset_lambda_is_mean_pi():
    mm, hp, state = fixture_state()
    new_state, new_hp = iterate_once(state, mm, hp, build_topology("fullset", 3))
    assert np.all(new_hp.lam == new_hp.lam[0])
    assert new_hp.lam[0] == pytest.approx(new_state.pi.mean(), rel=1e-15)


def test_zero_measurements_converge_to_zero():
    A = generate_matrix(10, 20, make_rng(1))
    res = solve(MeasurementModel(A, np.zeros(10)))
    assert res.status is Status.CONVERGED
    np.testing.assert_array_equal(res.xhat, 0.0)


def test_large_noise_shrinks_to_prior_mean():
    rng = make_rng(6)
    A = generate_matrix(20, 40, rng)
    y = rng.normal(size=20)
    lam = np.full(40, 0.3)
    hp = Hyperparams(mu0=2.0, tau0=1.0, delta0=1e12, lam=lam)
    mm = MeasurementModel(A, y)
    state, _ = iterate_once(init_state(mm, hp), mm, hp, build_topology("indep", 40))
    np.testing.assert_allclose(state.xhat, lam * 2.0, rtol=1e-6)


def test_solve_is_deterministic():
    x, mm = make_problem(BlockSparseSpec(), 0.45, 77)
    a = solve(mm, SolverConfig(record_trajectory=True))
    b = solve(mm, SolverConfig(record_trajectory=True))
    assert a.xhat.tobytes() == b.xhat.tobytes()
    assert a.iterations == b.iterations and a.status == b.status
    assert a.trajectory == b.trajectory
    assert len(a.trajectory) == a.iterations


def test_iterations_bounded_by_t_max():
    x, mm = make_problem(BlockSparseSpec(), 0.3, 5)
    res = solve(mm, SolverConfig(t_max=7))
    assert res.iterations <= 7
    assert res.status in (Status.MAX_ITERATIONS, Status.CONVERGED)


def test_divergence_is_a_status():
    x, mm = make_problem(BlockSparseSpec(), 0.5, 5)
    res = solve(mm, SolverConfig(diverge_norm=1e-3))
    assert res.status is Status.DIVERGED
    assert np.all(np.isfinite(res.xhat))


def test_noiseless_block_sparse_recovery_majority():
    good = 0
    for seed in range(20):
        x, mm = make_problem(BlockSparseSpec(), 0.6, seed)
        res = solve(mm, SolverConfig())
        good += res.status is Status.CONVERGED and nmse_db(res.xhat, x) < -60
    assert good >= 18


def test_golden_regression():
    meta = json.loads((DATA / "golden_solve.json").read_text())
    x, mm = make_problem(BlockSparseSpec(), meta["ratio"], meta["seed"])
    res = solve(mm, SolverConfig())
    assert res.status.value == meta["status"]
    assert res.iterations == meta["iterations"]
    np.testing.assert_allclose(res.xhat, read_vector(DATA / "golden_solve_xhat.csv"), rtol=1e-8, atol=1e-10)
    assert nmse_db(res.xhat, x) < -60
