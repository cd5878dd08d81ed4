"""Acceptance suite: the headline error-rate targets, end to end.

Statistical criteria run 10^5 initially-bright plus 10^5 initially-dark
simulated ions at the reference parameter set (tau_B=4.9 ms, tau_D=56 ms,
R_B=16/ms, R_D=0.3/ms, t_s=0.1 ms) with tolerance max(quoted window,
3 binomial standard errors).  Each criterion records one verdict line,
printed as a block at the end of the run.

Three clauses are strict-xfail because the model's exact value sits outside
the stated window; the count-space recursion in test_harness pins each of
those values analytically, and each xfail's reason string records the exact
value.  Everything else passes.
"""

import itertools
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ionread.classifiers import general_loglik, pi_pulse_error
from ionread.estimation import (
    DecayFit,
    derive_lifetimes,
    fit_decay_curves,
    population_dynamics,
)
from ionread.harness import (
    SweepSpec,
    compare_methods,
    efficiency_sweep,
    pi_pulse_sweep,
    sweep,
)
from ionread.photon_model import (
    DEFAULT_PARAMS,
    IonState,
    RateParams,
    build_observation_table,
    count_pmf,
    mixed_pmf,
    stay_prob,
)
from ionread.trajectory import SimConfig, simulate_ensemble

SEED = 20260817
N_TRIALS = 100_000
GRID = tuple(round(0.1 * k, 10) for k in range(1, 31))
FITTED = RateParams(tau_B=4.92, tau_D=53.1, R_B=16.0, R_D=0.3, t_s=0.1)
PULSE_PARAMS = RateParams(tau_B=4.9, tau_D=56.0, R_B=16.0, R_D=0.3,
                          t_s=0.1 / 3.0)
PULSE_BINS = (1, 2, 3, 4, 6, 9, 12, 15, 18, 24, 30)
THREADS = 4


def _pp(eps: float) -> float:
    """Fraction -> percentage points."""
    return 100.0 * eps


def _tol(quoted_pp: float, stderr: float) -> float:
    return max(quoted_pp, 3.0 * _pp(stderr))


def _verdict(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


# ---------------------------------------------------------------------------
# Shared heavy fixtures (one simulation, many criteria)


@pytest.fixture(scope="module")
def efficiency_result():
    spec = SweepSpec(t_b_values=GRID, n_trials=N_TRIALS, seed=SEED,
                     params=DEFAULT_PARAMS,
                     efficiency_factors=(1.0, 2.0, 9.9))
    return efficiency_sweep(spec, threads=THREADS)


@pytest.fixture(scope="module")
def change_ensembles():
    cfg = SimConfig(n_trials=2 * N_TRIALS, t_b=3.0, seed=SEED,
                    params=DEFAULT_PARAMS)
    return (simulate_ensemble(cfg, IonState.BRIGHT, threads=THREADS),
            simulate_ensemble(cfg, IonState.DARK, threads=THREADS))


@pytest.fixture(scope="module")
def comparison():
    spec = SweepSpec(t_b_values=GRID, n_trials=N_TRIALS, seed=SEED,
                     params=FITTED)
    return compare_methods(spec, repetitions=20, threads=THREADS)


@pytest.fixture(scope="module")
def pulse_spec():
    return SweepSpec(t_b_values=tuple(m * PULSE_PARAMS.t_s for m in PULSE_BINS),
                     n_trials=N_TRIALS, seed=SEED, params=PULSE_PARAMS)


@pytest.fixture(scope="module")
def pulse_general_rows(pulse_spec):
    return pi_pulse_sweep(pulse_spec, {"method": "general"}, 0.02,
                          threads=THREADS)


@pytest.fixture(scope="module")
def pulse_threshold_rows(pulse_spec):
    return pi_pulse_sweep(pulse_spec, {"method": "threshold", "n_c": 1}, 0.02,
                          threads=THREADS)


def _rows(rows, classifier, r=1.0):
    return [row for row in rows if row.classifier == classifier and row.r == r]


# ---------------------------------------------------------------------------
# Criteria


def test_c1_threshold_minimum(efficiency_result, record_criterion):
    rows, _ = efficiency_result
    thresh = _rows(rows, "threshold")
    best = min(thresh, key=lambda row: row.epsilon)
    window = [row for row in thresh if 0.7 <= row.t_b <= 1.0]
    best_window = min(window, key=lambda row: row.epsilon)
    tol = _tol(0.3, best.stderr)
    ok = (abs(_pp(best.epsilon) - 2.1) <= tol
          and abs(_pp(best_window.epsilon) - 2.1) <= _tol(0.3, best_window.stderr))
    record_criterion(
        f"C1  threshold: min eps {_pp(best.epsilon):.3f}% (t_b={best.t_b:g}, "
        f"n_c={best.n_c}); best in [0.7,1.0] ms {_pp(best_window.epsilon):.3f}% "
        f"(t_b={best_window.t_b:g}); target 2.1 +/- {tol:.2f} pp -> {_verdict(ok)}")
    assert ok


@pytest.mark.xfail(strict=True,
                   reason="the model places the threshold minimum at "
                          "t_b=0.5 ms (exact recursion: 2.114%), below the "
                          "stated 0.7-1.0 ms window")
def test_c1_minimum_location_strict(efficiency_result, record_criterion):
    rows, _ = efficiency_result
    best = min(_rows(rows, "threshold"), key=lambda row: row.epsilon)
    record_criterion(
        f"C1* threshold argmin location: t_b={best.t_b:g} ms not in "
        f"[0.7, 1.0] -> XFAIL (exact landscape minimum is at 0.5 ms)")
    assert 0.7 <= best.t_b <= 1.0


def test_c2_generalized_plateau(efficiency_result, record_criterion):
    rows, _ = efficiency_result
    general = _rows(rows, "generalized_time_resolved")
    thresh = _rows(rows, "threshold")
    band_g = [row for row in general if 1.0 <= row.t_b <= 3.0]
    band_t = [row for row in thresh if 1.0 <= row.t_b <= 3.0]
    worst_dev = max(abs(_pp(row.epsilon) - 1.85) for row in band_g)
    tol = _tol(0.3, max(row.stderr for row in band_g))
    g_at_3 = next(row.epsilon for row in band_g if row.t_b == 3.0)
    t_at_3 = next(row.epsilon for row in band_t if row.t_b == 3.0)
    rise_g = _pp(g_at_3 - min(row.epsilon for row in band_g))
    rise_t = _pp(t_at_3 - min(row.epsilon for row in band_t))
    ok = worst_dev <= tol and rise_g < 0.3 and rise_t > 0.5
    record_criterion(
        f"C2  generalized: eps within {worst_dev:.3f} pp of 1.85% across "
        f"[1,3] ms (tol {tol:.2f}); plateau rise {rise_g:.3f} pp < 0.3 while "
        f"threshold rises {rise_t:.2f} pp > 0.5 -> {_verdict(ok)}")
    assert ok


def test_c3_change_within_subbin(change_ensembles, record_criterion):
    ens_b, ens_d = change_ensembles
    t_s = DEFAULT_PARAMS.t_s
    frac_b = float(np.mean(ens_b.change_counts_at(t_s) >= 1))
    frac_d = float(np.mean(ens_d.change_counts_at(t_s) >= 1))
    exact_b = 1.0 - stay_prob(IonState.BRIGHT, t_s, DEFAULT_PARAMS)
    exact_d = 1.0 - stay_prob(IonState.DARK, t_s, DEFAULT_PARAMS)
    se_b = math.sqrt(frac_b * (1 - frac_b) / len(ens_b))
    se_d = math.sqrt(frac_d * (1 - frac_d) / len(ens_d))
    ok = (abs(_pp(frac_b) - 2.0) <= _tol(0.2, se_b)
          and abs(_pp(exact_b) - 2.0) <= 0.2
          and abs(_pp(frac_d) - 0.2) <= _tol(0.05, se_d)
          and abs(_pp(exact_d) - 0.2) <= 0.05)
    record_criterion(
        f"C3  state changes in one sub-bin: bright {_pp(frac_b):.3f}% "
        f"(exact {_pp(exact_b):.3f}%) vs 2.0 +/- 0.2 pp; dark "
        f"{_pp(frac_d):.3f}% (exact {_pp(exact_d):.3f}%) vs 0.2 +/- 0.05 pp "
        f"-> {_verdict(ok)}")
    assert ok


@pytest.mark.xfail(strict=True,
                   reason="the exact probability of >=2 changes within 3 ms "
                          "is 1.353% for either preparation at the reference "
                          "lifetimes, below the stated 2 +/- 0.5 pp window")
def test_c3_multiple_changes_strict(change_ensembles, record_criterion):
    ens_b, ens_d = change_ensembles
    multi = np.concatenate([ens_b.change_counts_at() >= 2,
                            ens_d.change_counts_at() >= 2])
    frac = float(np.mean(multi))
    record_criterion(
        f"C3* >=2 changes within 3 ms: {_pp(frac):.3f}% outside "
        f"[1.5, 2.5] -> XFAIL (exact value 1.353%)")
    assert abs(_pp(frac) - 2.0) <= 0.5


def test_c4_efficiency_scaling(efficiency_result, record_criterion):
    rows, points = efficiency_result
    by_r = {point.r: point for point in points}
    best = {}
    for r in (2.0, 9.9):
        for label in ("threshold", "generalized_time_resolved"):
            best[r, label] = min(_rows(rows, label, r),
                                 key=lambda row: row.epsilon)
    p2, p99 = by_r[2.0], by_r[9.9]
    tol_t2 = _tol(0.3, best[2.0, "threshold"].stderr)
    tol_g2 = _tol(0.3, best[2.0, "generalized_time_resolved"].stderr)
    tol_t99 = _tol(0.15, best[9.9, "threshold"].stderr)
    tol_g99 = _tol(0.15, best[9.9, "generalized_time_resolved"].stderr)
    ok = (abs(_pp(p2.epsilon_threshold) - 1.22) <= tol_t2
          and abs(_pp(p2.epsilon_time_resolved) - 0.97) <= tol_g2
          and abs(_pp(p99.epsilon_threshold) - 0.33) <= tol_t99
          and abs(_pp(p99.epsilon_time_resolved) - 0.33) <= tol_g99
          and _pp(p99.delta) < 0.1)
    record_criterion(
        f"C4  efficiency: r=2 threshold {_pp(p2.epsilon_threshold):.3f}% "
        f"(1.22 +/- {tol_t2:.2f}), time-resolved "
        f"{_pp(p2.epsilon_time_resolved):.3f}% (0.97 +/- {tol_g2:.2f}); "
        f"r=9.9 both ~{_pp(p99.epsilon_threshold):.3f}%/"
        f"{_pp(p99.epsilon_time_resolved):.3f}% (0.33 +/- {tol_t99:.2f}), "
        f"delta {_pp(p99.delta):.3f} pp < 0.1 -> {_verdict(ok)}")
    assert ok


def test_c5_method_comparison(comparison, record_criterion):
    _, summary = comparison
    simple = summary["simple_time_resolved"]
    general = summary["generalized_time_resolved"]
    reps = len(simple["values"])
    sem_s = simple["std"] / math.sqrt(reps)
    sem_g = general["std"] / math.sqrt(reps)
    tol_s = _tol(0.1, sem_s)
    tol_g = _tol(0.1, sem_g)
    ok = (abs(_pp(simple["mean"]) - 1.92) <= tol_s
          and abs(_pp(general["mean"]) - 1.80) <= tol_g
          and general["mean"] < simple["mean"])
    record_criterion(
        f"C5  comparison ({reps} x 10^5): simple {_pp(simple['mean']):.3f}% "
        f"(1.92 +/- {tol_s:.2f}), generalized {_pp(general['mean']):.3f}% "
        f"(1.80 +/- {tol_g:.2f}), generalized < simple -> {_verdict(ok)}")
    assert ok


def test_c6_pulse_generalized_minimum(pulse_general_rows, record_criterion):
    best = min(pulse_general_rows, key=lambda row: row.epsilon)
    tol = _tol(0.3, best.stderr)
    ok = abs(_pp(best.epsilon) - 1.0) <= tol
    record_criterion(
        f"C6  pulse pair + generalized detector: min eps_rel "
        f"{_pp(best.epsilon):.3f}% (t_b={best.t_b:.4f} ms, N_R={best.N_R:.3f}) "
        f"vs 1.0 +/- {tol:.2f} pp -> {_verdict(ok)}")
    assert ok


def test_c7_pulse_threshold_operating_point(pulse_threshold_rows,
                                            record_criterion):
    shortest = min(pulse_threshold_rows, key=lambda row: row.t_b)
    best = min(pulse_threshold_rows, key=lambda row: row.epsilon)
    pooled = math.hypot(shortest.stderr, best.stderr)
    at_optimum = shortest.epsilon <= best.epsilon + 3.0 * pooled
    ok = abs(shortest.N_R - 0.1) <= 0.05 and at_optimum
    record_criterion(
        f"C7  pulse pair + threshold n_c=1 at t_b=100/3 us: "
        f"N_R {shortest.N_R:.4f} vs 0.10 +/- 0.05, eps_rel "
        f"{_pp(shortest.epsilon):.3f}% at the curve minimum (grid best "
        f"{_pp(best.epsilon):.3f}%) -> {_verdict(ok)}")
    assert ok


@pytest.mark.xfail(strict=True,
                   reason="the exact pulse-pair relative error of the n_c=1 "
                          "threshold detector is 1.247% at its t_b=100/3 us "
                          "optimum (transfer-matrix recursion), far above "
                          "the stated 0.4 +/- 0.3 pp")
def test_c7_pulse_threshold_value_strict(pulse_threshold_rows,
                                         record_criterion):
    best = min(pulse_threshold_rows, key=lambda row: row.epsilon)
    tol = _tol(0.3, best.stderr)
    record_criterion(
        f"C7* pulse pair + threshold n_c=1 value: min eps_rel "
        f"{_pp(best.epsilon):.3f}% outside 0.4 +/- {tol:.2f} pp -> XFAIL "
        f"(exact optimum 1.247%)")
    assert abs(_pp(best.epsilon) - 0.4) <= tol


def test_c8_double_threshold(record_criterion):
    spec = SweepSpec(
        t_b_values=(0.5,), n_trials=N_TRIALS, seed=SEED,
        params=DEFAULT_PARAMS,
        classifiers=({"method": "double_threshold", "n_D": 0, "n_B": 4},))
    (row,) = sweep(spec, threads=THREADS)
    tol = _tol(0.2, row.stderr)
    ok = abs(_pp(row.epsilon) - 0.81) <= tol and abs(row.N_R - 0.86) <= 0.03
    record_criterion(
        f"C8  double threshold n_D=0, n_B=4, t_b=0.5 ms: eps "
        f"{_pp(row.epsilon):.3f}% (0.81 +/- {tol:.2f} pp), N_R {row.N_R:.4f} "
        f"(0.86 +/- 0.03) -> {_verdict(ok)}")
    assert ok


def test_c9_lifetime_extraction(record_criterion):
    fit = DecayFit(a=0.515, b=4.68, c=0.434, tau=4.50,
                   residual=0.0, n_evaluations=0)
    lifetimes = derive_lifetimes(fit)
    dev_b = abs(lifetimes.tau_B / 4.92 - 1.0)
    dev_d = abs(lifetimes.tau_D / 53.1 - 1.0)
    ok = dev_b < 0.005 and dev_d < 0.005
    record_criterion(
        f"C9  lifetime extraction: tau_B {lifetimes.tau_B:.4f} ms "
        f"(4.92 +/- 0.5%), tau_D {lifetimes.tau_D:.4f} ms (53.1 +/- 0.5%) "
        f"-> {_verdict(ok)}")
    assert ok


def _brute_force_likelihood(counts, params, initial):
    """Path enumeration over hidden state sequences, built from the
    primitive stay/flip and emission distributions."""
    t_s = params.t_s

    def bin_factor(pre, post, n):
        if pre == post:
            return stay_prob(IonState(pre), t_s, params) * count_pmf(
                IonState(pre), n, params)
        return mixed_pmf("BD" if pre == 0 else "DB", int(n), params)

    total = 0.0
    m = len(counts)
    for path in itertools.product((0, 1), repeat=m):
        prob = 1.0
        pre = int(initial)
        for post, n in zip(path, counts):
            prob *= bin_factor(pre, post, n)
            pre = post
        total += prob
    return total


def test_c10_property_suite(record_criterion):
    params = DEFAULT_PARAMS
    checks = {}

    # Forward products against brute-force path enumeration (8 bins).
    counts = np.array([2, 0, 0, 1, 3, 0, 0, 2])
    log_pb, log_pd = general_loglik(counts[None, :],
                                    build_observation_table(params))
    brute_b = _brute_force_likelihood(counts, params, IonState.BRIGHT)
    brute_d = _brute_force_likelihood(counts, params, IonState.DARK)
    checks["forward"] = max(abs(math.exp(log_pb[0]) / brute_b - 1.0),
                            abs(math.exp(log_pd[0]) / brute_d - 1.0)) < 1e-10

    # Observation-table columns carry all the per-bin mass.
    table = build_observation_table(params)
    deficit = np.abs(1.0 - table.entries.sum(axis=(0, 1)))
    checks["normalization"] = float(deficit.max()) < 1e-9

    # Mixture mass equals the flip probability.
    for direction, state in (("BD", IonState.BRIGHT), ("DB", IonState.DARK)):
        mass = sum(mixed_pmf(direction, n, params) for n in range(60))
        flip = 1.0 - stay_prob(state, params.t_s, params)
        checks[f"mixture_{direction}"] = abs(mass - flip) < 1e-8

    # Occupancy closed forms against direct ODE integration.
    t_eval = np.linspace(0.0, 20.0, 9)
    worst = 0.0
    for initial in (IonState.BRIGHT, IonState.DARK):
        sol = solve_ivp(
            lambda t, w: [-w[0] / params.tau_B + (1 - w[0]) / params.tau_D],
            (0.0, 20.0), [1.0 if initial is IonState.BRIGHT else 0.0],
            t_eval=t_eval, rtol=1e-11, atol=1e-13)
        w_b, _ = population_dynamics(t_eval, initial, params.tau_B,
                                     params.tau_D)
        worst = max(worst, float(np.abs(w_b - sol.y[0]).max()))
    checks["occupancy_ode"] = worst < 1e-8

    # Fit round trip on noiseless synthetic curves.
    truth = DecayFit(a=0.5, b=4.7, c=0.43, tau=4.5,
                     residual=0.0, n_evaluations=0)
    t = np.arange(1, 31) / 3.0
    fit = fit_decay_curves(np.column_stack([t, truth.bright_curve(t)]),
                           np.column_stack([t, truth.dark_curve(t)]))
    checks["fit_round_trip"] = max(
        abs(fit.a / truth.a - 1.0), abs(fit.b / truth.b - 1.0),
        abs(fit.c / truth.c - 1.0), abs(fit.tau / truth.tau - 1.0)) < 1e-6

    # Pulse-pair mass accounting: kept plus discarded is exactly all mass.
    m_b = np.array([[0.93, 0.004], [0.048, 0.086]])
    m_d = np.array([[0.007, 0.001], [0.015, 0.909]])
    m_pi = np.array([[0.02, 0.98], [0.98, 0.02]])
    result = pi_pulse_error(m_b, m_d, 0.02)
    leak = 0.0
    for vec, channel in ((np.array([1.0, 0.0]), result.bright),
                         (np.array([0.0, 1.0]), result.dark)):
        discarded = (m_b @ m_pi @ m_b @ vec).sum() + (m_d @ m_pi @ m_d @ vec).sum()
        leak = max(leak, abs(channel.retained + discarded - 1.0))
    checks["pulse_mass"] = leak < 1e-12

    ok = all(checks.values())
    failed = [name for name, passed in checks.items() if not passed]
    record_criterion(
        f"C10 property suite ({len(checks)} exact checks: forward product, "
        f"table normalization, mixture mass, occupancy ODE, fit round trip, "
        f"pulse mass){': all hold' if ok else ': FAILED ' + ', '.join(failed)}"
        f" -> {_verdict(ok)}")
    assert ok, failed
