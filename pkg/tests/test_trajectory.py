import numpy as np
import pytest

from netident.errors import ParameterError
from netident.trajectory import (
    Trajectory,
    add_noise,
    load_binary,
    load_csv,
    save_binary,
    save_csv,
    subsample,
    truncate,
)


def make_traj(T=20, n=3, d=2, dt=0.1, seed=0):
    rng = np.random.default_rng(seed)
    return Trajectory.regular(rng.standard_normal((T, n, d)), dt=dt)


class TestContainer:
    def test_shape_accessors(self):
        traj = make_traj(T=7, n=4, d=2, dt=0.5)
        assert (traj.n_steps, traj.n_nodes, traj.state_dim) == (7, 4, 2)
        assert traj.dt == pytest.approx(0.5)
        assert traj.times[-1] == pytest.approx(3.0)

    def test_rejects_nonuniform_times(self):
        with pytest.raises(ParameterError):
            Trajectory(values=np.zeros((3, 1, 1)), times=np.array([0.0, 1.0, 3.0]))

    def test_rejects_nonfinite(self):
        vals = np.zeros((3, 1, 1))
        vals[1] = np.nan
        with pytest.raises(ParameterError):
            Trajectory.regular(vals, dt=1.0)

    def test_select_nodes(self):
        traj = make_traj(n=4)
        index_map = np.array([0, -1, 1, 2])
        sub = traj.select_nodes(index_map)
        assert sub.n_nodes == 3
        assert np.array_equal(sub.values[:, 1], traj.values[:, 2])


class TestNoise:
    def test_clean_sentinel_identity(self):
        traj = make_traj()
        assert add_noise(traj, None, seed=0) is traj
        assert add_noise(traj, np.inf, seed=0) is traj

    def test_noise_std_from_snr(self):
        # oracle: 10^(-20/20) * signal rms = 0.1 for a unit constant signal
        vals = np.ones((200, 100, 1))
        traj = Trajectory.regular(vals, dt=0.1)
        noisy = add_noise(traj, 20.0, seed=1)
        resid = noisy.values - 1.0
        assert resid.std() == pytest.approx(0.1, rel=0.05)

    def test_deterministic_in_seed(self):
        traj = make_traj()
        a = add_noise(traj, 30.0, seed=5)
        b = add_noise(traj, 30.0, seed=5)
        assert np.array_equal(a.values, b.values)

    def test_per_dimension_power(self):
        rng = np.random.default_rng(0)
        vals = np.stack([10.0 * rng.standard_normal((400, 50)), 0.1 * rng.standard_normal((400, 50))], axis=2)
        traj = Trajectory.regular(vals, dt=0.1)
        noisy = add_noise(traj, 20.0, seed=2)
        resid = noisy.values - vals
        for dim in range(2):
            power = np.mean(vals[:, :, dim] ** 2)
            expect = np.sqrt(power / 10.0**2)
            assert resid[:, :, dim].std() == pytest.approx(expect, rel=0.05)

    def test_mean_preserved(self):
        traj = make_traj(T=100, n=50, d=1, seed=3)
        noisy = add_noise(traj, 10.0, seed=4)
        sigma = np.sqrt(np.mean(traj.values**2) / 10.0)
        bound = 3.0 * sigma / np.sqrt(traj.values.size)
        assert abs(noisy.values.mean() - traj.values.mean()) < bound

    def test_original_unmodified(self):
        traj = make_traj()
        before = traj.values.copy()
        add_noise(traj, 10.0, seed=0)
        assert np.array_equal(traj.values, before)


class TestDegradation:
    def test_subsample_identity(self):
        traj = make_traj()
        assert subsample(traj, 1) is traj

    def test_subsample_length_and_dt(self):
        traj = make_traj(T=1000, dt=0.01)
        sub = subsample(traj, 5)
        assert sub.n_steps == 200
        assert sub.dt == pytest.approx(0.05)

    def test_truncate(self):
        traj = make_traj(T=300)
        cut = truncate(traj, 200)
        assert cut.n_steps == 200
        assert cut.times[-1] == pytest.approx(traj.times[199])

    def test_truncate_bounds(self):
        traj = make_traj(T=10)
        with pytest.raises(ParameterError):
            truncate(traj, 11)
        with pytest.raises(ParameterError):
            subsample(traj, 0)


class TestIO:
    def test_binary_round_trip(self, tmp_path):
        traj = make_traj(T=13, n=5, d=3, dt=0.02)
        path = tmp_path / "traj.bin"
        save_binary(traj, path)
        back = load_binary(path)
        assert np.array_equal(back.values, traj.values)
        assert back.dt == pytest.approx(traj.dt)

    def test_binary_magic_check(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTATRAJ!" + b"\0" * 40)
        with pytest.raises(ParameterError):
            load_binary(path)

    def test_csv_round_trip(self, tmp_path):
        traj = make_traj(T=6, n=3, d=2, dt=0.25)
        path = tmp_path / "traj.csv"
        save_csv(traj, path)
        back = load_csv(path)
        assert np.allclose(back.values, traj.values)
        assert np.allclose(back.times, traj.times)

    def test_csv_preserves_time_offset(self, tmp_path):
        traj = Trajectory.regular(np.random.default_rng(1).standard_normal((4, 2, 1)), dt=0.5, t0=10.0)
        path = tmp_path / "traj.csv"
        save_csv(traj, path)
        assert load_csv(path).times[0] == pytest.approx(10.0)
