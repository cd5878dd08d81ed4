"""State discrimination methods for photon count sequences.

Five methods are provided.  Two ignore arrival times (single and double
count threshold), two exploit the time structure of the counts (the
single-change likelihood formula, and the full two-state hidden-Markov
matrix product), and one composes any single-detection method with an
inverting pulse between two detection windows.

All classifiers are pure functions.  The batch entry points operate on
(n_trials, n_bins) count arrays in the log domain and can evaluate every
prefix of the window in one pass, which is what the sweep harness uses.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from .photon_model import IonState, ObservationTable, RateParams


class Decision(enum.IntEnum):
    """Outcome of one classification. Integer values match IonState where
    applicable so decision arrays compare directly against true states."""

    BRIGHT = 0
    DARK = 1
    INCONCLUSIVE = 2

    @property
    def label(self) -> str:
        return {0: "B", 1: "D", 2: "I"}[int(self)]

    @classmethod
    def from_label(cls, label: str) -> "Decision":
        try:
            return {"B": cls.BRIGHT, "D": cls.DARK, "I": cls.INCONCLUSIVE}[label]
        except KeyError:
            raise ValueError(f"unknown decision label {label!r}") from None


@dataclass(frozen=True, eq=False)
class LikelihoodPair:
    """Likelihoods that a count sequence arose from each initial state.

    ``matrix`` is the accumulated 2x2 array
    ``[[B^(iB), B^(iD)], [D^(iB), D^(iD)]]`` (rows: state after the window,
    columns: initial state), scaled by ``exp(log_scale)`` to keep entries in
    floating range.  Column sums give the initial-state likelihoods.
    """

    matrix: np.ndarray
    log_scale: float = 0.0
    flags: tuple = ()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 2):
            raise ValueError("likelihood matrix must be 2x2")
        if np.any(m < -1e-15):
            raise ValueError("likelihood matrix entries must be >= 0")
        object.__setattr__(self, "matrix", np.maximum(m, 0.0))

    @property
    def log_p_B(self) -> float:
        s = self.matrix[:, 0].sum()
        return float(np.log(s) + self.log_scale) if s > 0 else -np.inf

    @property
    def log_p_D(self) -> float:
        s = self.matrix[:, 1].sum()
        return float(np.log(s) + self.log_scale) if s > 0 else -np.inf

    @property
    def p_B(self) -> float:
        return float(self.matrix[:, 0].sum() * np.exp(self.log_scale))

    @property
    def p_D(self) -> float:
        return float(self.matrix[:, 1].sum() * np.exp(self.log_scale))

    @property
    def decision(self) -> Decision:
        # Scale cancels in the comparison; ties resolve to Dark.
        if self.matrix[:, 0].sum() > self.matrix[:, 1].sum():
            return Decision.BRIGHT
        return Decision.DARK


def _as_counts(counts) -> np.ndarray:
    arr = np.asarray(counts)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("counts must be a non-empty 1-d sequence")
    if np.any(arr < 0):
        raise ValueError("counts must be >= 0")
    return arr.astype(np.int64)


# ---------------------------------------------------------------------------
# Threshold methods


def threshold_classify(counts, n_c: int) -> Decision:
    """Bright iff strictly more than n_c photons arrived in total."""
    total = int(_as_counts(counts).sum())
    return Decision.BRIGHT if total > n_c else Decision.DARK


def double_threshold_classify(counts, n_D: int, n_B: int) -> Decision:
    """Dark if the total is <= n_D, Bright if > n_B, else Inconclusive."""
    if n_D > n_B:
        raise ValueError(f"n_D={n_D} must not exceed n_B={n_B}")
    total = int(_as_counts(counts).sum())
    if total <= n_D:
        return Decision.DARK
    if total > n_B:
        return Decision.BRIGHT
    return Decision.INCONCLUSIVE


def threshold_decide(totals: np.ndarray, n_c: int) -> np.ndarray:
    """Vectorized threshold decisions from total counts."""
    return np.where(np.asarray(totals) > n_c, Decision.BRIGHT, Decision.DARK).astype(np.int8)


def double_threshold_decide(totals: np.ndarray, n_D: int, n_B: int) -> np.ndarray:
    if n_D > n_B:
        raise ValueError(f"n_D={n_D} must not exceed n_B={n_B}")
    totals = np.asarray(totals)
    out = np.full(totals.shape, Decision.INCONCLUSIVE, dtype=np.int8)
    out[totals <= n_D] = Decision.DARK
    out[totals > n_B] = Decision.BRIGHT
    return out


# ---------------------------------------------------------------------------
# Simple time-resolved method (single dark->bright change)


def _log_poisson(counts: np.ndarray, mean: float) -> np.ndarray:
    return -mean + xlogy(counts, mean) - gammaln(counts + 1.0)


def simple_loglik(counts: np.ndarray, params: RateParams, tau: float | None = None,
                  *, decaying: IonState = IonState.DARK, prefixes: bool = False):
    """Log-likelihoods of the single-change formula, vectorized.

    One designated state may change exactly once inside the window; the other
    is taken as stable.  With ``decaying=DARK`` the dark hypothesis reads
    p_D = (1 - t_b/tau) prod_k P_D(n_k)
        + (t_s/tau) sum_k prod_{j<k} P_D(n_j) prod_{j>=k} P_B(n_j)
    while p_B = prod_k P_B(n_k); ``decaying=BRIGHT`` mirrors the roles (a
    bright prefix that may drop to dark once), which is the variant suited to
    qubits whose dominant change is bright-to-dark.  ``tau`` defaults to the
    decaying state's lifetime.  With ``prefixes`` the formula is evaluated
    for every leading sub-window length in one pass.

    Returns (log_p_B, log_p_D, clamped): arrays of shape (n_trials,) or, with
    prefixes, (n_trials, n_bins); ``clamped`` marks rows (or prefix cells)
    whose linear-in-t_b prefactor went negative and was clamped to zero.
    """
    decaying = IonState(decaying)
    if tau is None:
        tau = params.tau_D if decaying is IonState.DARK else params.tau_B
    if tau <= 0:
        raise ValueError("tau must be > 0")
    counts2d = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    n, m = counts2d.shape
    log_pb_bin = _log_poisson(counts2d, params.bright_mean)
    log_pd_bin = _log_poisson(counts2d, params.dark_mean)
    cum_b = np.cumsum(log_pb_bin, axis=1)
    cum_d = np.cumsum(log_pd_bin, axis=1)
    if decaying is IonState.DARK:
        cum_stay, cum_after = cum_d, cum_b
    else:
        cum_stay, cum_after = cum_b, cum_d
    # Change during bin i contributes exp(cum_stay[i-1] + cum_after[k]
    # - cum_after[i-1]) to the k-bin prefix; factor exp(cum_after[k]) out of
    # the inner sum.
    delta = np.concatenate([np.zeros((n, 1)), cum_stay - cum_after], axis=1)[:, :-1]
    inner = np.logaddexp.accumulate(delta, axis=1)
    k = np.arange(1, m + 1)
    prefac = 1.0 - k * params.t_s / tau
    clamped2d = np.broadcast_to(prefac < 0, (n, m))
    log_prefac = np.where(prefac > 0, np.log(np.maximum(prefac, 1e-300)), -np.inf)
    with np.errstate(divide="ignore"):  # tau = inf gives a vanishing change term
        log_rate = np.log(params.t_s / tau)
    log_mixed = np.logaddexp(log_prefac[None, :] + cum_stay,
                             log_rate + cum_after + inner)
    if decaying is IonState.DARK:
        log_pb, log_pd = cum_b, log_mixed
    else:
        log_pb, log_pd = log_mixed, cum_d
    if prefixes:
        return log_pb, log_pd, np.array(clamped2d)
    return log_pb[:, -1], log_pd[:, -1], clamped2d[:, -1].copy()


def simple_time_resolved_classify(counts, params: RateParams,
                                  tau: float | None = None,
                                  *, decaying: IonState = IonState.DARK):
    """Classify one count sequence with the single-change formula.

    Returns (Decision, LikelihoodPair).  The pair's matrix keeps the two
    terms of the changeable hypothesis separate; with ``decaying=DARK`` the
    no-change term lands in D^(iD) and the changed term in B^(iD), while the
    bright hypothesis has no decay channel, so D^(iB) = 0 (mirrored for
    ``decaying=BRIGHT``).  A window longer than tau drives the no-change
    prefactor negative; it is clamped to zero and flagged, since the
    single-change expansion has left its domain of validity.
    """
    decaying = IonState(decaying)
    if tau is None:
        tau = params.tau_D if decaying is IonState.DARK else params.tau_B
    arr = _as_counts(counts)
    m = arr.size
    t_b = m * params.t_s
    log_pb_bin = _log_poisson(arr, params.bright_mean)
    log_pd_bin = _log_poisson(arr, params.dark_mean)
    cum_b = np.concatenate([[0.0], np.cumsum(log_pb_bin)])
    cum_d = np.concatenate([[0.0], np.cumsum(log_pd_bin)])
    if decaying is IonState.DARK:
        cum_stay, cum_after = cum_d, cum_b
    else:
        cum_stay, cum_after = cum_b, cum_d
    prefac = 1.0 - t_b / tau
    flags = ()
    if prefac < 0:
        warnings.warn("t_b >= tau: single-change prefactor clamped to 0",
                      RuntimeWarning, stacklevel=2)
        flags = ("prefactor_clamped",)
        prefac = 0.0
    # Stabilize in the log domain around the largest contribution.
    with np.errstate(divide="ignore"):
        log_terms = (cum_stay[:-1] + (cum_after[m] - cum_after[:-1])
                     + np.log(params.t_s / tau))
    log_stay = (np.log(prefac) if prefac > 0 else -np.inf) + cum_stay[m]
    log_pure = cum_after[m]
    scale = max(log_pure, log_stay, np.max(log_terms))
    stayed = np.exp(log_stay - scale)
    changed = np.exp(log_terms - scale).sum()
    pure = np.exp(log_pure - scale)
    if decaying is IonState.DARK:
        matrix = np.array([[pure, changed], [0.0, stayed]])
    else:
        matrix = np.array([[stayed, 0.0], [changed, pure]])
    pair = LikelihoodPair(matrix=matrix, log_scale=float(scale), flags=flags)
    return pair.decision, pair


# ---------------------------------------------------------------------------
# Generalized time-resolved method (full two-state hidden Markov model)


def general_loglik(counts: np.ndarray, table: ObservationTable,
                   *, prefixes: bool = False):
    """Log initial-state likelihoods under the full hidden-Markov model.

    Left-multiplies the per-bin observation matrices in sequence order with
    per-step renormalization, so arbitrarily long windows stay in range.
    Returns (log_p_B, log_p_D) of shape (n_trials,) or (n_trials, n_bins)
    with ``prefixes``.
    """
    counts2d = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    if counts2d.shape[1] == 0:
        raise ValueError("counts must contain at least one bin")
    n, m = counts2d.shape
    clamped = table.clamp_counts(counts2d)
    acc = np.broadcast_to(np.eye(2), (n, 2, 2)).copy()
    log_scale = np.zeros(n)
    if prefixes:
        out_b = np.empty((n, m))
        out_d = np.empty((n, m))
    for k in range(m):
        step = table.entries[clamped[:, k]]
        acc = step @ acc
        norm = acc.sum(axis=(1, 2))
        norm = np.where(norm > 0, norm, 1.0)
        acc /= norm[:, None, None]
        log_scale += np.log(norm)
        if prefixes:
            with np.errstate(divide="ignore"):
                out_b[:, k] = np.log(acc[:, :, 0].sum(axis=1)) + log_scale
                out_d[:, k] = np.log(acc[:, :, 1].sum(axis=1)) + log_scale
    if prefixes:
        return out_b, out_d
    with np.errstate(divide="ignore"):
        log_pb = np.log(acc[:, :, 0].sum(axis=1)) + log_scale
        log_pd = np.log(acc[:, :, 1].sum(axis=1)) + log_scale
    return log_pb, log_pd


def general_matrix(counts, table: ObservationTable):
    """Accumulated 2x2 likelihood matrix and its log scale for one sequence."""
    arr = _as_counts(counts)
    acc = np.eye(2)
    log_scale = 0.0
    for n in table.clamp_counts(arr):
        acc = table.entries[n] @ acc
        norm = acc.sum()
        if norm > 0:
            acc /= norm
            log_scale += np.log(norm)
    return acc, log_scale


def generalized_time_resolved_classify(counts, table: ObservationTable):
    """Classify one count sequence with the hidden-Markov matrix product.

    Returns (Decision, LikelihoodPair); the pair carries the accumulated
    matrix, so both the final-state split and the initial-state likelihoods
    are available to callers.
    """
    matrix, log_scale = general_matrix(counts, table)
    pair = LikelihoodPair(matrix=matrix, log_scale=log_scale)
    return pair.decision, pair


def decide_from_logs(log_pb: np.ndarray, log_pd: np.ndarray) -> np.ndarray:
    """Vectorized Bright/Dark decisions from log-likelihoods (tie -> Dark)."""
    return np.where(np.asarray(log_pb) > np.asarray(log_pd),
                    Decision.BRIGHT, Decision.DARK).astype(np.int8)


# ---------------------------------------------------------------------------
# Pulse-composed detection


def pi_pulse_classify(first: Decision, second: Decision) -> Decision:
    """Combine the two detections of a pulse pair.

    The pulse inverts the state between windows, so a kept (different
    outcomes) pair is reported as the first detection's outcome, which names
    the pre-pulse state.  Equal outcomes are physically inconsistent with a
    perfect inversion and are discarded as Inconclusive.
    """
    if first is Decision.INCONCLUSIVE or second is Decision.INCONCLUSIVE:
        raise ValueError("single detections feeding a pulse pair never abstain")
    if first is second:
        return Decision.INCONCLUSIVE
    return first


def pi_pulse_combine(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Vectorized pulse-pair combination of two decision code arrays."""
    first = np.asarray(first)
    second = np.asarray(second)
    if np.any(first == Decision.INCONCLUSIVE) or np.any(second == Decision.INCONCLUSIVE):
        raise ValueError("single detections feeding a pulse pair never abstain")
    return np.where(first == second, Decision.INCONCLUSIVE, first).astype(np.int8)


# ---------------------------------------------------------------------------
# Transfer matrices and analytic pulse-pair error propagation


def estimate_transfer_matrices(ensemble_bright, ensemble_dark, detector):
    """Empirical transfer matrices of one detection window.

    ``detector`` maps an (n_trials, n_bins) count array to Bright/Dark
    decision codes.  Entry [y, z] of M_B is the fraction of initially-z ions
    that were detected bright and ended the window in state y; M_D likewise
    for detected dark.  Columns of (M_B + M_D) sum to 1 exactly because every
    trial lands in exactly one of the four cells.
    """
    m_b = np.zeros((2, 2))
    m_d = np.zeros((2, 2))
    for col, ens in ((0, ensemble_bright), (1, ensemble_dark)):
        if ens is None or len(ens) == 0:
            raise ValueError("transfer matrix estimation needs non-empty ensembles")
        decisions = np.asarray(detector(ens.counts))
        if np.any(decisions == Decision.INCONCLUSIVE):
            raise ValueError("detector must return Bright or Dark for every trial")
        finals = ens.final_states()
        n = len(ens)
        for y in (0, 1):
            m_b[y, col] = np.count_nonzero((decisions == Decision.BRIGHT) & (finals == y)) / n
            m_d[y, col] = np.count_nonzero((decisions == Decision.DARK) & (finals == y)) / n
    return m_b, m_d


def _check_transfer_matrix(m, name: str):
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise ValueError(f"{name} must be 2x2")
    if np.any(m < 0) or np.any(m > 1):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return m


@dataclass(frozen=True)
class PulseChannel:
    """Detection-pair outcome masses for one initial state."""

    f: np.ndarray            # misdetected-and-kept mass, by final state
    r: np.ndarray            # correctly-detected-and-kept mass, by final state
    @property
    def retained(self) -> float:
        return float(self.f.sum() + self.r.sum())

    @property
    def epsilon_rel(self) -> float:
        kept = self.retained
        return float(self.f.sum() / kept) if kept > 0 else np.nan


@dataclass(frozen=True)
class PiPulseResult:
    """Analytic pulse-pair figures for both initial states.

    ``epsilon_rel`` averages the two per-state relative errors; ``N_R`` is
    the retained fraction averaging the two preparations.  When an initial
    state retains no ions its relative error is undefined: ``defined`` goes
    False and the epsilon fields are NaN (every pair was discarded).
    """

    bright: PulseChannel
    dark: PulseChannel
    epsilon_rel: float
    N_R: float
    defined: bool


def pi_pulse_error(m_b, m_d, epsilon_pi: float) -> PiPulseResult:
    """Propagate transfer matrices through an imperfect inverting pulse.

    The pulse acts as M_pi = [[eps, 1-eps], [1-eps, eps]].  For initially
    bright ions the kept-but-wrong chain is detect-dark, pulse, detect-bright
    (f_B = M_B M_pi M_D v_B) and the kept-and-right chain is detect-bright,
    pulse, detect-dark (r_B = M_D M_pi M_B v_B); initially dark ions mirror
    the roles.  Relative errors are per kept mass.
    """
    m_b = _check_transfer_matrix(m_b, "M_B")
    m_d = _check_transfer_matrix(m_d, "M_D")
    if not 0.0 <= epsilon_pi <= 1.0:
        raise ValueError("epsilon_pi must lie in [0, 1]")
    m_pi = np.array([[epsilon_pi, 1.0 - epsilon_pi],
                     [1.0 - epsilon_pi, epsilon_pi]])
    v_b = np.array([1.0, 0.0])
    v_d = np.array([0.0, 1.0])
    bright = PulseChannel(f=m_b @ m_pi @ m_d @ v_b, r=m_d @ m_pi @ m_b @ v_b)
    dark = PulseChannel(f=m_d @ m_pi @ m_b @ v_d, r=m_b @ m_pi @ m_d @ v_d)
    defined = bright.retained > 0 and dark.retained > 0
    if defined:
        eps = 0.5 * (bright.epsilon_rel + dark.epsilon_rel)
    else:
        warnings.warn("no ions retained: relative error undefined",
                      RuntimeWarning, stacklevel=2)
        eps = np.nan
    n_r = 0.5 * (bright.retained + dark.retained)
    return PiPulseResult(bright=bright, dark=dark, epsilon_rel=eps,
                         N_R=n_r, defined=defined)
