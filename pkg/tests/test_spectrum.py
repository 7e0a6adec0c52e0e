import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from netipomdp.domains.spectrum import (
    Fading,
    SpectrumConfig,
    Trajectory,
    avg_rate_update,
    build_spectrum_model,
    pf_step_reward,
    pf_utility_check,
    shannon_rate,
    simulate_exact,
    sinr,
    snap,
    station_frame,
)
from netipomdp.errors import DegenerateAverage, GridTooCoarse, InvalidModel
from netipomdp.ipomdp import level0_frame
from netipomdp.pomdp import PomdpProblem
from netipomdp.solver import run_decentralized_bp
from netipomdp.tabulation import tabulate

from oracles import spectrum_row_oracle


def two_station(h=((1.0, 0.3), (0.2, 0.8)), grid=(0.5, 1.0, 2.0), **kw):
    return SpectrumConfig(channel=np.array(h), grid=grid, **kw)


class TestArithmetic:
    def test_silent_station(self):
        assert sinr(0, [0, 1], two_station()) == 0.0

    def test_no_interferer(self):
        cfg = SpectrumConfig(channel=np.array([[1.0, 0.0], [0.0, 1.0]]), noise=0.1)
        assert sinr(0, [1, 0], cfg) == pytest.approx(10.0)

    def test_interferer_at_noise_level_halves(self):
        cfg = SpectrumConfig(channel=np.array([[1.0, 0.0], [0.1, 1.0]]), noise=0.1)
        assert sinr(0, [1, 1], cfg) == pytest.approx(sinr(0, [1, 0], cfg) / 2)

    @pytest.mark.parametrize("x,w,expected", [(0.0, 1.0, 0.0), (1.0, 1.0, 1.0), (10.0, 1.0, 3.4594316186372973)])
    def test_shannon(self, x, w, expected):
        assert shannon_rate(x, w) == pytest.approx(expected, abs=1e-12)

    def test_average_update(self):
        assert avg_rate_update(4.0, 2.0, 2.0) == 3.0
        assert avg_rate_update(1.7, 1.7, 5.0) == pytest.approx(1.7)

    @given(st.floats(0.01, 10), st.floats(0, 10), st.floats(1e3, 1e6))
    def test_large_averaging_moves_little(self, prev, rate, B):
        assert abs(avg_rate_update(prev, rate, B) - prev) <= abs(rate - prev) / B + 1e-12

    def test_snap_ties_down(self):
        grid = (1.0, 2.0, 4.0)
        assert snap(1.5, grid) == 0
        assert snap(3.0, grid) == 1
        assert snap(3.01, grid) == 2
        assert snap(0.1, grid) == 0 and snap(9.0, grid) == 2
        assert avg_rate_update(2.0, 1.0, 2.0, grid) == 1.0

    def test_step_reward(self):
        assert pf_step_reward(1.3, 1.3, 2.0) == pytest.approx(0.0, abs=1e-15)
        assert pf_step_reward(1.0, 0.0, 4.0) == pytest.approx(math.log(0.75))
        assert pf_step_reward(2.0, 6.0, 2.0) == pytest.approx(math.log(2))

    @pytest.mark.parametrize("prev", [0.0, -1.0])
    def test_degenerate_average(self, prev):
        with pytest.raises(DegenerateAverage):
            pf_step_reward(prev, 1.0, 2.0)

    def test_telescoping_trivial(self):
        assert pf_utility_check(Trajectory(np.array([[1.0]]), np.zeros((0, 1)))) == 0.0
        x0, rate, B = 1.5, 2.5, 3.0
        x1 = avg_rate_update(x0, rate, B)
        traj = Trajectory(np.array([[x0], [x1]]), np.array([[pf_step_reward(x0, rate, B)]]))
        assert pf_utility_check(traj) <= 1e-12

    @given(st.integers(0, 2**32 - 1))
    def test_telescoping_random(self, seed):
        rng = np.random.default_rng(seed)
        cfg = SpectrumConfig(channel=rng.uniform(0.05, 1, (3, 3)), averaging=float(rng.uniform(1.5, 40)))
        assert pf_utility_check(simulate_exact(cfg, 100, rng, initial=rng.uniform(0.1, 3, 3))) <= 1e-6


class TestProperties:
    @given(st.integers(0, 2**32 - 1), st.floats(1.0, 10.0), st.floats(1.0, 10.0))
    def test_sinr_nonincreasing_in_interference_and_noise(self, seed, gain_factor, noise_factor):
        rng = np.random.default_rng(seed)
        h = rng.uniform(0.05, 1, (3, 3))
        a = [1, int(rng.integers(2)), int(rng.integers(2))]
        base = SpectrumConfig(channel=h, noise=0.1)
        louder = h.copy()
        louder[1, 0] *= gain_factor
        louder[2, 0] *= gain_factor
        assert sinr(0, a, SpectrumConfig(channel=louder, noise=0.1)) <= sinr(0, a, base) + 1e-15
        assert sinr(0, a, SpectrumConfig(channel=h, noise=0.1 * noise_factor)) <= sinr(0, a, base) + 1e-15

    def test_rate_increasing_and_concave(self):
        x = np.linspace(0, 50, 2001)
        r = np.array([shannon_rate(v, 2.0) for v in x])
        d = np.diff(r)
        assert np.all(d > 0)
        assert np.all(np.diff(d) < 0)


class TestModel:
    @pytest.mark.parametrize("averaging", [2.0, 5.0])
    def test_rows_match_construction(self, averaging):
        cfg = two_station(averaging=averaging)
        for i in (0, 1):
            f = station_frame(cfg, i, 0.9)
            for (x, a_i, a_j), row in spectrum_row_oracle(cfg, i).items():
                np.testing.assert_array_equal(f.transition[x, a_i, a_j], row)

    def test_frames_are_stochastic(self):
        cfg = two_station(fading=Fading((1.0, 0.4), 0.2))
        for i in (0, 1):
            f = station_frame(cfg, i, 0.9)
            np.testing.assert_allclose(f.transition.sum(axis=-1), 1.0, atol=1e-12)
            np.testing.assert_allclose(f.observation.sum(axis=-1), 1.0, atol=1e-12)

    def test_fading_reaches_both_channel_states(self):
        cfg = two_station(fading=Fading((1.0, 0.4), 0.2))
        f = station_frame(cfg, 0, 0.9)
        # state index = grid point * 2 + channel state
        T = f.transition.reshape(3, 2, 2, 2, 3, 2)
        np.testing.assert_allclose(T.sum(axis=4)[:, 0], 0.8 * np.ones((3, 2, 2, 1)) * [1, 0] + 0.2 * np.array([0, 1]))
        np.testing.assert_allclose(T.sum(axis=4)[:, 1], 0.2 * np.ones((3, 2, 2, 1)) * [1, 0] + 0.8 * np.array([0, 1]))

    def test_symmetric_stations_have_equal_frames(self):
        cfg = two_station(h=((1.0, 0.3), (0.3, 1.0)))
        f0, f1 = station_frame(cfg, 0, 0.9), station_frame(cfg, 1, 0.9)
        for a, b in ((f0.transition, f1.transition), (f0.observation, f1.observation), (f0.reward, f1.reward)):
            np.testing.assert_array_equal(a, b)

    def test_single_station_is_a_plain_pomdp(self):
        cfg = SpectrumConfig(channel=np.array([[1.0]]), grid=(0.5, 1.0, 2.0))
        f = station_frame(cfg, 0, 0.9)
        assert f.n_neighbors == 0
        flat = level0_frame(f)
        np.testing.assert_array_equal(flat.transition, f.transition[:, :, 0, :])
        graph = tabulate(PomdpProblem(flat), [([1.0, 0.0, 0.0], ())], depth=3)
        v, _, _, _ = graph.solve()
        assert np.all(np.isfinite(v))
        sc, sim = build_spectrum_model(cfg)
        assert run_decentralized_bp(sim, sc).rounds >= 1

    def test_grid_too_coarse(self):
        with pytest.raises(GridTooCoarse):
            station_frame(two_station(grid=(0.5, 5.0), reward_error_bound=0.01), 0, 0.9)

    def test_belief_messages_rejected(self):
        with pytest.raises(InvalidModel):
            build_spectrum_model(two_station(), message_type="belief")

    def test_bad_config(self):
        with pytest.raises(InvalidModel):
            SpectrumConfig(channel=np.ones((2, 2)), averaging=1.0)
        with pytest.raises(InvalidModel):
            SpectrumConfig(channel=np.ones((2, 2)), grid=(1.0, 0.5))

    def test_observation_is_deterministic(self):
        f = station_frame(two_station(), 0, 0.9)
        assert set(np.unique(f.observation)) <= {0.0, 1.0}
