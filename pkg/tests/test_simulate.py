import math

import numpy as np
import pytest

from bibranch.cumulant import solve_backward
from bibranch.densities import Density
from bibranch.environment import JumpKernel, validate
from bibranch.measures import Dirac, ExpProduct, StableAxis
from bibranch.moments import first_moment
from bibranch.noise import NoiseStream
from bibranch.simulate import (
    SimOptions,
    coupled_order_violations,
    coupled_pair,
    extinction_frequency,
    simulate_atom,
    simulate_ensemble,
    simulate_path,
    truncate_large_jumps,
)

from conftest import atoms_only, const, feller_env, make_env


def test_zero_env_constant_path():
    traj = simulate_path(make_env(), (1.0, 2.0), 1.0, SimOptions(step=1e-2), NoiseStream(1))
    assert np.all(traj.states == [1.0, 2.0])
    assert traj.absorbed_at is None


def test_origin_is_absorbing():
    env = make_env(b11=const(1.0), c1=const(0.5),
                   m1=JumpKernel(((Density.constant(0.5), Dirac((0.3, 0.1), 1.0)),)))
    traj = simulate_path(env, (0.0, 0.0), 1.0, SimOptions(step=1e-2), NoiseStream(1))
    assert np.all(traj.states == 0.0)
    assert traj.absorbed_at == 0.0


def test_deterministic_env_tracks_linear_flow():
    env = make_env(b11=const(0.8), b12=const(0.4), b21=const(0.2), b22=const(-0.3))
    h = 1e-4
    traj = simulate_path(env, (1.0, 2.0), 1.0, SimOptions(step=h), NoiseStream(3))
    exact = first_moment(env, (1.0, 2.0), 1.0).at(1.0)
    assert np.max(np.abs(traj.states[-1] - exact)) < 5 * h


def test_all_states_nonnegative_and_absorption_sticky():
    env = make_env(b11=const(1.5), c1=const(0.8))
    for pid in range(5):
        traj = simulate_path(env, (0.3, 0.0), 1.0, SimOptions(step=1e-3), NoiseStream(11),
                             path_id=pid)
        assert np.all(traj.states >= 0.0)
        if traj.absorbed_at is not None:
            after = traj.states[traj.times >= traj.absorbed_at]
            assert np.all(after == 0.0)


def test_path_reproducibility_bitwise():
    env = make_env(b11=const(0.5), c1=const(0.3),
                   m1=JumpKernel(((Density.constant(0.6), Dirac((0.4, 0.2), 1.0)),)))
    opts = SimOptions(step=1e-3)
    t1 = simulate_path(env, (1.0, 1.0), 1.0, opts, NoiseStream(9), path_id=4)
    t2 = simulate_path(env, (1.0, 1.0), 1.0, opts, NoiseStream(9), path_id=4)
    assert np.array_equal(t1.states, t2.states)
    t3 = simulate_path(env, (1.0, 1.0), 1.0, opts, NoiseStream(9), path_id=5)
    assert not np.array_equal(t1.states, t3.states)


def test_ensemble_reproducible_and_zero_env_exact():
    stats = simulate_ensemble(make_env(), (1.0, 0.5), 1.0, (0.5, 1.0),
                              [(1.0, 1.0)], 500, SimOptions(step=1e-2), NoiseStream(5))
    assert stats.laplace[-1, 0] == pytest.approx(math.exp(-1.5), rel=1e-12)
    # identical samples: SE vanishes up to the rounding of the sample mean
    assert stats.laplace_se[-1, 0] < 1e-15
    assert np.all(stats.se_mean < 1e-15)
    again = simulate_ensemble(make_env(), (1.0, 0.5), 1.0, (0.5, 1.0),
                              [(1.0, 1.0)], 500, SimOptions(step=1e-2), NoiseStream(5))
    assert np.array_equal(stats.mean, again.mean)


def test_simulate_atom_identity_and_bottleneck():
    env = make_env(b11=atoms_only((0.5, 1.0)))
    rng = NoiseStream(2).substream("atom")
    out = simulate_atom(env, 0.3, (1.7, 0.4), rng)
    assert out == pytest.approx([1.7, 0.4])
    out = simulate_atom(env, 0.5, (1.7, 0.4), rng)
    assert out[0] == 0.0
    assert out[1] == pytest.approx(0.4)


def test_simulate_atom_martingale_identity():
    # atom only in m_1: 0.4 Dirac((1,0)); conditional mean is preserved
    env = make_env(m1=JumpKernel((), ((0.5, Dirac((1.0, 0.0), 0.4)),)))
    rng = NoiseStream(7).substream("atom")
    n = 1_000_000
    x_left = np.tile([2.0, 0.0], (n, 1))
    out = simulate_atom(env, 0.5, x_left, rng)
    # X_1(s) = 2 * 0.6 + Poisson(0.8); mean 2.0, sd sqrt(0.8)
    se = math.sqrt(0.8 / n)
    assert abs(out[:, 0].mean() - 2.0) < 4 * se
    assert np.all(out[:, 1] == 0.0)


def test_atom_cross_mass_reaches_other_coordinate():
    env = make_env(m2=JumpKernel((), ((0.5, Dirac((0.7, 0.2), 1.0)),)))
    rng = NoiseStream(8).substream("atom")
    n = 200_000
    out = simulate_atom(env, 0.5, np.tile([0.0, 1.0], (n, 1)), rng)
    # every m_2 event adds (0.7, 0.2); N ~ Poisson(1.0)
    assert out[:, 0].mean() == pytest.approx(0.7, abs=4 * 0.7 / math.sqrt(n))
    # X_2 keeps (1 - delta_2) + own jumps, delta_2 = 0.2
    assert out[:, 1].mean() == pytest.approx(1.0, abs=4 * 0.2 / math.sqrt(n))


def test_truncate_identity_below_cap():
    env = make_env(m1=JumpKernel(((Density.constant(1.0), Dirac((3.0, 0.0), 1.0)),)))
    out = truncate_large_jumps(env, 5.0)
    assert out.m[0].density_components[0][1].z == (3.0, 0.0)
    assert out.b[0][0].is_zero


def test_truncate_dirac_adds_killing_drift():
    env = make_env(m1=JumpKernel(((Density.constant(1.0), Dirac((3.0, 0.0), 1.0)),)))
    out = truncate_large_jumps(env, 2.0)
    assert out.m[0].density_components[0][1].z == (2.0, 0.0)
    assert out.b[0][0].density_at(0.4) == pytest.approx(1.0)  # (3-2) * rate * weight
    assert validate(out).passed


def test_truncate_atom_keeps_delta():
    from bibranch.environment import delta
    env = make_env(m1=JumpKernel((), ((0.5, Dirac((3.0, 0.0), 0.3)),)))
    assert delta(env, 0, 0.5) == pytest.approx(0.9)
    out = truncate_large_jumps(env, 1.0)
    # capped own mass 0.3*1 plus killing atom 0.3*(3-1) keeps delta at 0.9
    assert delta(out, 0, 0.5) == pytest.approx(0.9)
    assert validate(out).passed


def test_truncated_cumulants_monotone_in_cap():
    env = make_env(b11=const(0.5),
                   m1=JumpKernel(((Density.constant(0.5), StableAxis(0, 1.5, 0.15)),)))
    lam = (2.0, 1.0)
    v_full = solve_backward(env, 1.0, lam).at(0.0)
    prev = None
    dists = []
    for k in (1.0, 2.0, 4.0, 8.0):
        vk = solve_backward(truncate_large_jumps(env, k), 1.0, lam).at(0.0)
        if prev is not None:
            assert np.all(vk >= prev - 1e-10)
        assert np.all(vk <= v_full + 1e-10)
        dists.append(np.linalg.norm(vk - v_full))
        prev = vk
    assert dists[-1] < dists[0]


def test_coupled_equal_starts_identical_jump_only():
    env = make_env(b11=const(0.4),
                   m1=JumpKernel(((Density.constant(1.0), Dirac((0.5, 0.2), 1.0)),)))
    lo, hi = coupled_pair(env, (1.0, 0.5), (1.0, 0.5), 1.0, SimOptions(step=1e-2),
                          NoiseStream(13))
    assert np.array_equal(lo.states, hi.states)


def test_coupled_pair_jump_only_ordered_exactly():
    env = make_env(b11=const(0.4), b12=const(0.1),
                   m1=JumpKernel(((Density.constant(1.0), Dirac((0.5, 0.2), 1.0)),)),
                   m2=JumpKernel(((Density.constant(0.7), ExpProduct(3.0, 2.0, 0.5)),)))
    for pid in range(5):
        lo, hi = coupled_pair(env, (1.0, 0.0), (2.0, 0.5), 1.0, SimOptions(step=1e-2),
                              NoiseStream(17), pair_id=pid)
        assert np.all(lo.states <= hi.states)


def test_coupled_batch_matches_zero_violations():
    env = make_env(b11=const(0.4), b12=const(0.1),
                   m1=JumpKernel(((Density.constant(1.0), Dirac((0.5, 0.2), 1.0)),)))
    viol, checks = coupled_order_violations(env, (1.0, 0.0), (2.0, 0.5), 1.0, 200,
                                            SimOptions(step=5e-3), NoiseStream(19))
    assert viol == 0
    assert checks == 200 * 200


def test_coupled_batch_requires_diffusion_free():
    with pytest.raises(ValueError):
        coupled_order_violations(feller_env(), (1.0, 0.0), (2.0, 0.0), 1.0, 10,
                                 SimOptions(), NoiseStream(1))


def test_coupled_diffusive_violations_shrink_with_step():
    # Empirical convergence study for the binned diffusion coupling: the
    # order-violation rate is controlled by the time step (the bin width
    # stops mattering once it is small); at step 5e-4 and du 1e-3 the rate
    # is below 2% of mesh points for this pair.
    env = feller_env(1.0, 0.5)
    rates = []
    for h, n_pairs in ((1e-2, 120), (5e-4, 30)):
        viol = 0
        steps = 0
        for pid in range(n_pairs):
            lo, hi = coupled_pair(env, (1.0, 0.0), (2.0, 0.0), 1.0,
                                  SimOptions(step=h, du=1e-3), NoiseStream(23),
                                  pair_id=pid)
            viol += int(np.sum((lo.states > hi.states).any(axis=1)))
            steps += len(lo.times)
        rates.append(viol / steps)
    assert rates[1] <= rates[0]
    assert rates[1] < 0.02


def test_extinction_frequency_trivials():
    p, se = extinction_frequency(make_env(), (1.0, 0.0), 1.0, 200,
                                 SimOptions(step=1e-2), NoiseStream(3))
    assert p == 0.0
    env = make_env(b11=atoms_only((0.5, 1.0)))
    p, se = extinction_frequency(env, (1.0, 0.0), 1.0, 200,
                                 SimOptions(step=1e-2), NoiseStream(3))
    assert p == 1.0 and se == 0.0


def test_gaussian_small_jump_mode_runs():
    env = make_env(b11=const(0.5),
                   m1=JumpKernel(((Density.constant(0.5), StableAxis(0, 1.5, 0.15)),)))
    stats = simulate_ensemble(env, (1.0, 0.0), 0.5, (0.5,), [(1.0, 0.0)], 2000,
                              SimOptions(step=2e-3, small_jump_mode="gaussian"),
                              NoiseStream(29))
    assert np.all(stats.mean >= 0.0)
    assert 0.0 < stats.laplace[-1, 0] < 1.0
