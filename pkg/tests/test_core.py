import numpy as np
import pytest

from parseq.core import (
    Trajectory,
    load_trajectory_csv,
    merit,
    merit_gradient,
    residual,
    save_trajectory_csv,
    sequential_rollout,
)

from conftest import ScalarLinear, TanhNet, fd_jacobian, random_tanh_net


class TestTrajectory:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            Trajectory(s0=np.zeros(2), states=np.zeros((3, 4)))
        with pytest.raises(ValueError):
            Trajectory(s0=np.zeros(2), states=np.zeros((4,)))

    def test_finite_flag(self):
        good = Trajectory(s0=np.zeros(1), states=np.ones((3, 1)))
        assert good.finite
        bad = Trajectory(s0=np.zeros(1), states=np.array([[1.0], [np.nan], [1.0]]))
        assert not bad.finite

    def test_immutable(self):
        traj = Trajectory(s0=np.zeros(1), states=np.ones((3, 1)))
        with pytest.raises(ValueError):
            traj.states[0, 0] = 2.0


class TestSequentialRollout:
    def test_geometric_decay(self):
        traj = sequential_rollout(ScalarLinear(0.5, 3), np.array([1.0]), 3)
        np.testing.assert_array_equal(traj.states[:, 0], [0.5, 0.25, 0.125])

    def test_identity_fixed_point(self):
        class Identity(ScalarLinear):
            def step(self, t, s):
                return np.asarray(s, dtype=np.float64)

        v = np.array([3.2])
        traj = sequential_rollout(Identity(1.0, 5), v, 5)
        assert np.all(traj.states == v)

    def test_overflow_flags_tail(self):
        traj = sequential_rollout(ScalarLinear(1e300, 4), np.array([1.0]), 4)
        assert not traj.finite
        # inf appears at step 2; everything from there on is flagged
        assert np.isfinite(traj.states[0, 0])
        assert not np.any(np.isfinite(traj.states[1:, 0]))

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            sequential_rollout(ScalarLinear(0.5, 1), np.array([1.0]), 0)
        with pytest.raises(ValueError):
            sequential_rollout(ScalarLinear(0.5, 1), np.array([np.inf]), 1)


class TestResidual:
    def test_rollout_gives_bitwise_zero(self, rng):
        model = random_tanh_net(rng, D=3, T=20)
        traj = sequential_rollout(model, rng.standard_normal(3), 20)
        res = residual(model, traj)
        assert np.all(res.values == 0.0)

    def test_hand_recursion(self):
        # f(s) = 2s, s0 = 1, states (3, 6): r = (3 - 2*1, 6 - 2*3) = (1, 0)
        model = ScalarLinear(2.0, 2)
        traj = Trajectory(s0=np.array([1.0]), states=np.array([[3.0], [6.0]]))
        res = residual(model, traj)
        np.testing.assert_array_equal(res.values[:, 0], [1.0, 0.0])

    def test_locality_of_state_edits(self, rng):
        model = random_tanh_net(rng, D=2, T=12)
        traj = sequential_rollout(model, rng.standard_normal(2), 12)
        base = residual(model, traj).values
        k = 5
        states = traj.states.copy()
        states[k] += 0.37
        bumped = residual(model, Trajectory(s0=traj.s0, states=states)).values
        changed = np.any(bumped != base, axis=1)
        assert changed[k] and changed[k + 1]
        mask = np.ones(12, dtype=bool)
        mask[[k, k + 1]] = False
        np.testing.assert_array_equal(bumped[mask], base[mask])


class TestMerit:
    def test_values(self):
        model = ScalarLinear(2.0, 2)
        zero = residual(model, sequential_rollout(model, np.array([1.0]), 2))
        assert merit(zero) == 0.0
        one_zero = residual(
            model, Trajectory(s0=np.array([1.0]), states=np.array([[3.0], [6.0]]))
        )
        assert merit(one_zero) == pytest.approx(0.5)

    def test_three_four(self):
        model = ScalarLinear(0.0, 2)
        traj = Trajectory(s0=np.array([0.0]), states=np.array([[3.0], [4.0]]))
        assert merit(residual(model, traj)) == pytest.approx(12.5)

    def test_nonfinite_propagates(self):
        model = ScalarLinear(2.0, 2)
        traj = Trajectory(s0=np.array([1.0]), states=np.array([[np.inf], [0.0]]))
        assert not np.isfinite(merit(residual(model, traj)))


class TestMeritGradient:
    def test_zero_at_rollout(self, rng):
        model = random_tanh_net(rng, D=4, T=15)
        traj = sequential_rollout(model, rng.standard_normal(4), 15)
        assert np.all(merit_gradient(model, traj) == 0.0)

    def test_scalar_hand_assembly(self):
        model = ScalarLinear(2.0, 2)
        traj = Trajectory(s0=np.array([1.0]), states=np.array([[3.0], [6.0]]))
        grad = merit_gradient(model, traj)
        np.testing.assert_array_equal(grad[:, 0], [1.0, 0.0])

    def test_matches_finite_differences(self, rng):
        # 50 random small systems; relative error <= 1e-5 against central FD
        for _ in range(50):
            D = int(rng.integers(1, 6))
            T = int(rng.integers(2, 11))
            model = random_tanh_net(rng, D, T, scale=float(rng.uniform(0.5, 1.5)))
            traj = Trajectory(
                s0=rng.standard_normal(D), states=rng.standard_normal((T, D))
            )
            grad = merit_gradient(model, traj)
            fd = np.empty_like(grad)
            h = 1e-6
            for t in range(T):
                for j in range(D):
                    up = traj.states.copy()
                    dn = traj.states.copy()
                    up[t, j] += h
                    dn[t, j] -= h
                    m_up = merit(residual(model, Trajectory(s0=traj.s0, states=up)))
                    m_dn = merit(residual(model, Trajectory(s0=traj.s0, states=dn)))
                    fd[t, j] = (m_up - m_dn) / (2.0 * h)
            scale = np.linalg.norm(grad) + 1.0
            assert np.abs(grad - fd).max() / scale <= 1e-5


class TestJacobianContract:
    def test_analytic_jacobians_match_fd(self, rng):
        model = random_tanh_net(rng, D=4, T=8)
        for _ in range(25):
            t = int(rng.integers(1, 9))
            s = rng.standard_normal(4)
            J = model.jacobian(t, s)
            Jfd = fd_jacobian(model, t, s)
            assert np.abs(J - Jfd).max() / (1.0 + np.abs(J).max()) <= 1e-5

    def test_batched_hooks_agree_with_loops(self, rng):
        # batched hooks may reassociate floats; agreement is tolerance-level
        model = random_tanh_net(rng, D=3, T=9)
        prev = rng.standard_normal((9, 3))
        loop_steps = np.stack([model.step(t, prev[t - 1]) for t in range(1, 10)])
        loop_jacs = np.stack([model.jacobian(t, prev[t - 1]) for t in range(1, 10)])
        np.testing.assert_allclose(model.step_all(prev), loop_steps, atol=1e-13)
        np.testing.assert_allclose(model.jacobian_all(prev), loop_jacs, atol=1e-13)


class TestGoldenRollout:
    def test_mean_field_rnn_reference_trajectory(self):
        # the rollout IS the oracle; the pinned file guards against any
        # change in dynamics, seeding, or rollout order
        from pathlib import Path

        from parseq.systems import mean_field_rnn

        golden = load_trajectory_csv(
            Path(__file__).parent / "golden" / "meanfield_rnn_g08_d20_t1000_seed0.csv"
        )
        model = mean_field_rnn(D=20, g=0.8, T=1000, seed=0)
        traj = sequential_rollout(model, np.zeros(20), 1000)
        np.testing.assert_array_equal(traj.states, golden.states)
        np.testing.assert_array_equal(traj.s0, golden.s0)


class TestTrajectoryCsv:
    def test_roundtrip_exact(self, tmp_path, rng):
        traj = Trajectory(s0=rng.standard_normal(3), states=rng.standard_normal((7, 3)))
        path = tmp_path / "traj.csv"
        save_trajectory_csv(traj, path)
        header = path.read_text().splitlines()[0]
        assert header == "t,x0,x1,x2"
        back = load_trajectory_csv(path)
        np.testing.assert_array_equal(back.s0, traj.s0)
        np.testing.assert_array_equal(back.states, traj.states)
