"""Tests for trajectory sampling: dwell-time laws, exact per-bin bright
dwell bookkeeping, reproducibility contracts, and CSV interchange.

Statistical checks run at 5 sigma (or KS significance 1e-3) so they are
deterministic in practice for the pinned seeds.
"""

import numpy as np
import pytest
from scipy import stats

from ionread.photon_model import DEFAULT_PARAMS, IonState, RateParams
from ionread.trajectory import (
    CHUNK,
    DataFormatError,
    Ensemble,
    SimConfig,
    Trajectory,
    bright_dwell_per_bin,
    deterministic_uniforms,
    ensembles_from_counts,
    n_bins,
    read_counts_csv,
    sample_change_times,
    sample_counts,
    simulate_ensemble,
    simulate_ensemble_from_states,
    write_change_times_csv,
    write_ensemble_csv,
)

P = DEFAULT_PARAMS


def python_dwell(initial, change_times, t_b, t_s):
    """Reference bright-dwell computation: explicit interval sweep."""
    m = n_bins(t_b, t_s)
    bounds = [0.0] + [float(t) for t in change_times] + [t_b]
    dwell = np.zeros(m)
    state = int(initial)
    for seg in range(len(bounds) - 1):
        if state == int(IonState.BRIGHT):
            lo, hi = bounds[seg], bounds[seg + 1]
            for k in range(m):
                a, b = k * t_s, (k + 1) * t_s
                dwell[k] += max(0.0, min(hi, b) - max(lo, a))
        state = 1 - state
    return dwell


def occupancy_bright(initial, t, params):
    """Closed-form P(bright at t | initial): relaxation toward the
    stationary split tau_B/(tau_B+tau_D) with rate 1/tau_B + 1/tau_D."""
    b = params.tau_B / (params.tau_B + params.tau_D)
    a = params.tau_D / (params.tau_B + params.tau_D)
    tau = params.tau_B * params.tau_D / (params.tau_B + params.tau_D)
    if initial == IonState.BRIGHT:
        return b + a * np.exp(-t / tau)
    return b - b * np.exp(-t / tau)


class TestNBins:
    def test_exact_multiples(self):
        assert n_bins(3.0, 0.1) == 30
        assert n_bins(0.1, 0.1) == 1
        assert n_bins(1.0, 1.0 / 30.0) == 30

    def test_rejects_non_multiple(self):
        with pytest.raises(ValueError):
            n_bins(0.25, 0.1)
        with pytest.raises(ValueError):
            n_bins(-1.0, 0.1)
        with pytest.raises(ValueError):
            n_bins(1.0, 0.0)


class TestSimConfig:
    def test_t_s_defaults_from_params(self):
        cfg = SimConfig(n_trials=10, t_b=1.0, seed=1, params=P)
        assert cfg.t_s == P.t_s
        assert cfg.n_bins == 10

    def test_t_s_mismatch_rejected(self):
        with pytest.raises(ValueError, match="t_s"):
            SimConfig(n_trials=10, t_b=1.0, seed=1, params=P, t_s=0.2)

    def test_bad_trials(self):
        with pytest.raises(ValueError):
            SimConfig(n_trials=0, t_b=1.0, seed=1, params=P)


class TestSampleChangeTimes:
    def test_increasing_within_window(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            ct = sample_change_times(IonState.BRIGHT, 3.0, P, rng)
            if ct.size:
                assert ct[0] > 0 and ct[-1] <= 3.0
                assert np.all(np.diff(ct) > 0)

    def test_infinite_dark_lifetime_freezes_dark_ion(self):
        p_inf = RateParams(P.R_B, P.R_D, P.tau_B, np.inf, P.t_s)
        rng = np.random.default_rng(1)
        for _ in range(50):
            assert sample_change_times(IonState.DARK, 5.0, p_inf, rng).size == 0

    def test_infinite_dark_lifetime_bright_ion_decays_once(self):
        p_inf = RateParams(P.R_B, P.R_D, P.tau_B, np.inf, P.t_s)
        rng = np.random.default_rng(2)
        sizes = [sample_change_times(IonState.BRIGHT, 200.0, p_inf, rng).size
                 for _ in range(200)]
        assert set(sizes) <= {0, 1}
        assert 1 in sizes

    def test_first_dwell_is_exponential(self):
        """KS test of the first dwell against Exp(tau_B) truncated at t_b."""
        cfg = SimConfig(n_trials=100_000, t_b=3.0, seed=42, params=P)
        ens = simulate_ensemble(cfg, IonState.BRIGHT)
        first = ens.change_times[:, 0]
        first = first[~np.isnan(first)]
        norm = 1.0 - np.exp(-3.0 / P.tau_B)

        def truncated_cdf(t):
            return np.where(t >= 3.0, 1.0, (1.0 - np.exp(-t / P.tau_B)) / norm)

        res = stats.kstest(first, truncated_cdf)
        assert res.pvalue > 1e-3

    def test_second_dwell_is_exponential_with_other_lifetime(self):
        rng = np.random.default_rng(3)
        gaps = []
        while len(gaps) < 2000:
            ct = sample_change_times(IonState.BRIGHT, 500.0, P, rng)
            if ct.size >= 2:
                gaps.append(ct[1] - ct[0])
        res = stats.kstest(np.array(gaps), "expon", args=(0, P.tau_D))
        assert res.pvalue > 1e-3


class TestBrightDwell:
    def test_change_mid_bin(self):
        dwell = bright_dwell_per_bin(IonState.BRIGHT, np.array([0.15]), 0.3, 0.1)
        assert np.allclose(dwell, [0.1, 0.05, 0.0], atol=1e-15)

    def test_change_on_bin_boundary(self):
        dwell = bright_dwell_per_bin(IonState.DARK, np.array([0.1]), 0.3, 0.1)
        assert np.allclose(dwell, [0.0, 0.1, 0.1], atol=1e-15)
        dwell = bright_dwell_per_bin(IonState.BRIGHT, np.array([0.1]), 0.3, 0.1)
        assert np.allclose(dwell, [0.1, 0.0, 0.0], atol=1e-15)

    def test_no_changes(self):
        assert np.allclose(
            bright_dwell_per_bin(IonState.BRIGHT, np.array([]), 0.3, 0.1), 0.1
        )
        assert np.allclose(
            bright_dwell_per_bin(IonState.DARK, np.array([]), 0.3, 0.1), 0.0
        )

    def test_matches_interval_sweep_reference(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            initial = IonState(int(rng.integers(2)))
            ct = sample_change_times(initial, 2.0, P, rng)
            fast = bright_dwell_per_bin(initial, ct, 2.0, 0.1)
            slow = python_dwell(initial, ct, 2.0, 0.1)
            assert np.allclose(fast, slow, atol=1e-12)

    def test_ragged_rows_with_nan_padding(self):
        ct = np.array([[0.15, np.nan], [0.05, 0.25]])
        dwell = bright_dwell_per_bin(np.array([0, 1]), ct, 0.3, 0.1)
        assert np.allclose(dwell[0], [0.1, 0.05, 0.0], atol=1e-15)
        assert np.allclose(dwell[1], [0.05, 0.1, 0.05], atol=1e-15)

    def test_total_dwell_sums_to_bright_time(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            ct = sample_change_times(IonState.BRIGHT, 3.0, P, rng)
            dwell = bright_dwell_per_bin(IonState.BRIGHT, ct, 3.0, 0.1)
            bounds = np.concatenate([[0.0], ct, [3.0]])
            segs = np.diff(bounds)
            assert np.isclose(dwell.sum(), segs[::2].sum(), atol=1e-12)


class TestSampleCounts:
    def test_count_length_and_dtype(self):
        rng = np.random.default_rng(5)
        traj = Trajectory(IonState.BRIGHT, np.array([1.23]), np.zeros(30, int), 3.0, 0.1)
        counts = sample_counts(traj, P, rng)
        assert counts.shape == (30,)
        assert counts.dtype.kind == "i"

    def test_dark_ion_sees_background_only(self):
        rng = np.random.default_rng(6)
        traj = Trajectory(IonState.DARK, np.array([]), np.zeros(50, int), 5.0, 0.1)
        counts = np.array([sample_counts(traj, P, rng) for _ in range(2000)])
        mean = counts.mean()
        se = counts.std() / np.sqrt(counts.size)
        assert abs(mean - P.dark_mean) < 5 * se


@pytest.fixture(scope="module")
def bright():
    cfg = SimConfig(n_trials=100_000, t_b=3.0, seed=101, params=P)
    return simulate_ensemble(cfg, IonState.BRIGHT)


@pytest.fixture(scope="module")
def dark():
    cfg = SimConfig(n_trials=100_000, t_b=3.0, seed=101, params=P)
    return simulate_ensemble(cfg, IonState.DARK)


class TestEnsembleStatistics:
    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 3.0])
    def test_occupancy_matches_relaxation_law_bright(self, bright, t):
        states = bright.states_at(t)
        frac = np.mean(states == int(IonState.BRIGHT))
        expect = occupancy_bright(IonState.BRIGHT, t, P)
        se = np.sqrt(expect * (1 - expect) / len(bright))
        assert abs(frac - expect) < 5 * se

    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 3.0])
    def test_occupancy_matches_relaxation_law_dark(self, dark, t):
        states = dark.states_at(t)
        frac = np.mean(states == int(IonState.BRIGHT))
        expect = occupancy_bright(IonState.DARK, t, P)
        se = np.sqrt(expect * (1 - expect) / len(dark))
        assert abs(frac - expect) < 5 * se

    @pytest.mark.parametrize("k", [0, 4, 14, 29])
    def test_mean_count_per_bin_matches_closed_form(self, bright, k):
        """Mean counts integrate the occupancy law over the sub-bin."""
        t0 = k * P.t_s
        b = P.tau_B / (P.tau_B + P.tau_D)
        a = P.tau_D / (P.tau_B + P.tau_D)
        tau = P.tau_B * P.tau_D / (P.tau_B + P.tau_D)
        integral = b * P.t_s + a * tau * np.exp(-t0 / tau) * (1 - np.exp(-P.t_s / tau))
        expect = P.R_D * P.t_s + P.R_B * integral
        col = bright.counts[:, k]
        se = col.std() / np.sqrt(len(bright))
        assert abs(col.mean() - expect) < 5 * se

    def test_counts_given_no_changes_are_plain_poisson(self, bright):
        no_change = bright.change_counts_at() == 0
        sub = bright.counts[no_change]
        mean = sub.mean()
        se = sub.std() / np.sqrt(sub.size)
        assert abs(mean - P.bright_mean) < 5 * se

    def test_change_count_distribution_head(self, bright):
        """P(no change in t_b) is the bright survival probability."""
        p0 = np.mean(bright.change_counts_at() == 0)
        expect = np.exp(-3.0 / P.tau_B)
        se = np.sqrt(expect * (1 - expect) / len(bright))
        assert abs(p0 - expect) < 5 * se

    def test_bin_edge_states_match_trajectory_view(self, bright):
        edge_states = bright.states_at_bin_edges()
        for i in range(100):
            traj = bright[i]
            for k in (1, 7, 30):
                assert edge_states[i, k - 1] == int(traj.state_at(k * P.t_s))


class TestReproducibility:
    def test_same_seed_same_ensemble(self):
        cfg = SimConfig(n_trials=5000, t_b=1.0, seed=77, params=P)
        a = simulate_ensemble(cfg, IonState.BRIGHT)
        b = simulate_ensemble(cfg, IonState.BRIGHT)
        assert np.array_equal(a.counts, b.counts)
        assert np.array_equal(a.change_times, b.change_times, equal_nan=True)

    def test_trials_are_pure_functions_of_index(self):
        """Growing n_trials must not disturb earlier trials."""
        big = simulate_ensemble(
            SimConfig(n_trials=2 * CHUNK + 100, t_b=1.0, seed=77, params=P),
            IonState.BRIGHT)
        small = simulate_ensemble(
            SimConfig(n_trials=CHUNK + 3, t_b=1.0, seed=77, params=P),
            IonState.BRIGHT)
        assert np.array_equal(big.counts[:CHUNK + 3], small.counts)

    def test_thread_count_does_not_change_results(self):
        cfg = SimConfig(n_trials=3 * CHUNK, t_b=1.0, seed=78, params=P)
        serial = simulate_ensemble(cfg, IonState.BRIGHT)
        threaded = simulate_ensemble(cfg, IonState.BRIGHT, threads=4)
        assert np.array_equal(serial.counts, threaded.counts)
        assert np.array_equal(serial.change_times, threaded.change_times,
                              equal_nan=True)

    def test_initial_states_use_distinct_streams(self):
        cfg = SimConfig(n_trials=1000, t_b=1.0, seed=79, params=P)
        bright = simulate_ensemble(cfg, IonState.BRIGHT)
        dark = simulate_ensemble(cfg, IonState.DARK)
        assert not np.array_equal(bright.counts, dark.counts)

    def test_context_namespaces_streams(self):
        cfg = SimConfig(n_trials=1000, t_b=1.0, seed=79, params=P)
        a = simulate_ensemble(cfg, IonState.BRIGHT)
        b = simulate_ensemble(cfg, IonState.BRIGHT, context=(1,))
        assert not np.array_equal(a.counts, b.counts)

    def test_frozen_regression_values(self):
        """Pin the byte-level reproducibility contract across versions."""
        cfg = SimConfig(n_trials=8, t_b=1.0, seed=20260817, params=P)
        ens = simulate_ensemble(cfg, IonState.BRIGHT)
        assert ens.counts[0].tolist() == [2, 5, 0, 3, 2, 2, 4, 2, 3, 0]
        assert ens.counts[5].tolist() == [3, 4, 2, 1, 0, 4, 0, 1, 3, 3]
        dark = simulate_ensemble(cfg, IonState.DARK)
        assert dark.counts[0].tolist() == [0, 0, 0, 1, 0, 0, 0, 0, 0, 0]

    def test_deterministic_uniforms_prefix_invariance(self):
        u1 = deterministic_uniforms(123, (1,), CHUNK + 500)
        u2 = deterministic_uniforms(123, (1,), CHUNK + 100)
        assert np.array_equal(u1[:CHUNK + 100], u2)
        u3 = deterministic_uniforms(123, (2,), CHUNK + 100)
        assert not np.array_equal(u2, u3)


class TestMixedInitialStates:
    def test_per_trial_initial_respected(self):
        cfg = SimConfig(n_trials=20_000, t_b=0.5, seed=55, params=P)
        init = (np.arange(20_000) % 2).astype(np.int8)
        ens = simulate_ensemble_from_states(cfg, init)
        assert np.array_equal(ens.initial_array(), init)
        bright_rows = ens.counts[init == 0]
        dark_rows = ens.counts[init == 1]
        assert bright_rows[:, 0].mean() > 1.0
        assert dark_rows[:, 0].mean() < 0.2

    def test_shape_validation(self):
        cfg = SimConfig(n_trials=10, t_b=0.5, seed=55, params=P)
        with pytest.raises(ValueError):
            simulate_ensemble_from_states(cfg, np.zeros(5, dtype=np.int8))


class TestTrajectoryValidation:
    def test_rejects_wrong_count_length(self):
        with pytest.raises(ValueError):
            Trajectory(IonState.BRIGHT, np.array([]), np.zeros(5, int), 1.0, 0.1)

    def test_rejects_unsorted_change_times(self):
        with pytest.raises(ValueError):
            Trajectory(IonState.BRIGHT, np.array([0.5, 0.2]), np.zeros(10, int), 1.0, 0.1)

    def test_rejects_out_of_window_change(self):
        with pytest.raises(ValueError):
            Trajectory(IonState.BRIGHT, np.array([1.5]), np.zeros(10, int), 1.0, 0.1)

    def test_state_at(self):
        traj = Trajectory(IonState.BRIGHT, np.array([0.25, 0.6]), np.zeros(10, int), 1.0, 0.1)
        assert traj.state_at(0.1) is IonState.BRIGHT
        assert traj.state_at(0.25) is IonState.DARK
        assert traj.state_at(0.5) is IonState.DARK
        assert traj.final_state is IonState.BRIGHT


class TestCsvInterchange:
    def test_round_trip(self, tmp_path):
        cfg = SimConfig(n_trials=50, t_b=0.5, seed=9, params=P)
        bright = simulate_ensemble(cfg, IonState.BRIGHT)
        dark = simulate_ensemble(cfg, IonState.DARK)
        path = tmp_path / "counts.csv"
        write_ensemble_csv(path, [bright, dark], comments=["t_b_ms=0.5"])
        trials, initials, counts = read_counts_csv(path)
        assert counts.shape == (100, 5)
        assert np.array_equal(counts[:50], bright.counts)
        assert np.array_equal(counts[50:], dark.counts)
        assert np.array_equal(initials[:50], np.zeros(50, dtype=np.int8))
        assert np.array_equal(initials[50:], np.ones(50, dtype=np.int8))
        groups = ensembles_from_counts(initials, counts, 0.5, 0.1)
        assert set(groups) == {IonState.BRIGHT, IonState.DARK}
        assert np.array_equal(groups[IonState.BRIGHT].counts, bright.counts)

    def test_change_time_sidecar(self, tmp_path):
        cfg = SimConfig(n_trials=20, t_b=3.0, seed=10, params=P)
        ens = simulate_ensemble(cfg, IonState.BRIGHT)
        path = tmp_path / "changes.csv"
        write_change_times_csv(path, [ens])
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "trial,initial,change_times_ms"
        assert len(lines) == 21

    def test_bad_header_rejected_with_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("foo,bar,n_1\n0,B,1\n")
        with pytest.raises(DataFormatError) as err:
            read_counts_csv(path)
        assert err.value.line == 1

    def test_bad_count_column_order(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("trial,initial,n_2,n_1\n0,B,1,2\n")
        with pytest.raises(DataFormatError):
            read_counts_csv(path)

    def test_bad_state_label(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("trial,initial,n_1\n0,B,1\n1,Q,2\n")
        with pytest.raises(DataFormatError) as err:
            read_counts_csv(path)
        assert err.value.line == 3

    def test_negative_count(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("trial,initial,n_1\n0,B,-1\n")
        with pytest.raises(DataFormatError) as err:
            read_counts_csv(path)
        assert err.value.line == 2

    def test_ragged_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("trial,initial,n_1,n_2\n0,B,1\n")
        with pytest.raises(DataFormatError) as err:
            read_counts_csv(path)
        assert err.value.line == 2

    def test_empty_and_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DataFormatError):
            read_counts_csv(path)
        path.write_text("trial,initial,n_1\n")
        with pytest.raises(DataFormatError):
            read_counts_csv(path)

    def test_ingested_ensembles_refuse_truth_queries(self, tmp_path):
        ens = Ensemble(IonState.BRIGHT, np.zeros((4, 5), dtype=int), None, 0.5, 0.1)
        with pytest.raises(ValueError, match="ground-truth"):
            ens.final_states()
        with pytest.raises(ValueError, match="ground-truth"):
            ens[0]
