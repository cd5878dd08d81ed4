"""Monte Carlo generation of ion readout trajectories.

A trajectory is one simulated ion: its initial state, the times at which it
flipped between bright and dark (alternating exponential dwells with means
tau_B and tau_D), and one Poisson photon count per sub-bin whose mean is the
background plus the bright rate weighted by the exact bright dwell time
inside that sub-bin.

Reproducibility contract: every trial's randomness is a pure function of
(seed, stream context, trial index).  Trials are processed in fixed-width
chunks; each chunk owns counter-based (Philox) streams, one for dwell times
and one for counts, and a chunk always draws full-width batches even when
partially used.  Ensembles are therefore bit-identical regardless of thread
count, chunk execution order, or total trial count.

CSV interchange: ensembles serialize to ``trial,initial,n_1,...,n_M`` rows
(initial is ``B`` or ``D``); the same schema is the ingestion format for
experimental data.  Change times can be written to a sidecar file for
debugging; they are never required to classify.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .photon_model import IonState, RateParams

#: Fixed chunk width of the vectorized simulation; part of the determinism
#: contract (changing it changes the random layout), so it is not tunable.
CHUNK = 4096

_STREAM_CHANGES = 1
_STREAM_COUNTS = 2
_STREAM_EXTRA = 3


class DataFormatError(ValueError):
    """Malformed ensemble/decision CSV. Carries the offending line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def n_bins(t_b: float, t_s: float) -> int:
    """Number of whole sub-bins in a window; rejects non-integer ratios."""
    if t_b <= 0 or t_s <= 0:
        raise ValueError("t_b and t_s must be > 0")
    m = round(t_b / t_s)
    if m < 1 or abs(m * t_s - t_b) > 1e-6 * t_s:
        raise ValueError(f"t_b={t_b} is not an integer multiple of t_s={t_s}")
    return m


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One simulated ion readout."""

    initial: IonState
    change_times: np.ndarray
    counts: np.ndarray
    t_b: float
    t_s: float

    def __post_init__(self):
        m = n_bins(self.t_b, self.t_s)
        if len(self.counts) != m:
            raise ValueError(f"expected {m} counts, got {len(self.counts)}")
        ct = np.asarray(self.change_times, dtype=float)
        if ct.size and (np.any(np.diff(ct) <= 0) or ct[0] <= 0 or ct[-1] > self.t_b):
            raise ValueError("change times must be strictly increasing within (0, t_b]")

    def state_at(self, t: float) -> IonState:
        """State at time t: the initial state flipped once per change <= t."""
        flips = int(np.count_nonzero(np.asarray(self.change_times) <= t))
        return self.initial if flips % 2 == 0 else self.initial.flipped

    @property
    def final_state(self) -> IonState:
        return self.state_at(self.t_b)


@dataclass(frozen=True)
class SimConfig:
    """Ensemble simulation settings.

    ``t_s`` may be omitted (None) to take the sub-bin duration from
    ``params``; when given it must match, to rule out silent unit drift.
    """

    n_trials: int
    t_b: float
    seed: int
    params: RateParams
    t_s: float | None = None

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError(f"n_trials must be >= 1, got {self.n_trials}")
        if self.t_s is None:
            object.__setattr__(self, "t_s", self.params.t_s)
        elif abs(self.t_s - self.params.t_s) > 1e-12:
            raise ValueError(
                f"t_s={self.t_s} disagrees with params.t_s={self.params.t_s}"
            )
        n_bins(self.t_b, self.t_s)
        if not isinstance(self.seed, (int, np.integer)):
            raise ValueError("seed must be an integer")

    @property
    def n_bins(self) -> int:
        return n_bins(self.t_b, self.t_s)


def _chunk_rng(seed: int, stream: int, context: tuple, chunk_index: int) -> np.random.Generator:
    """Counter-based generator for one (stream, context, chunk) cell."""
    entropy = (int(seed) % 2**64, stream, *(int(c) for c in context), chunk_index)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def sample_change_times(initial: IonState, t_b: float, params: RateParams,
                        rng: np.random.Generator) -> np.ndarray:
    """Alternating exponential dwell times, accumulated until the running sum
    leaves the window; returns the change times that fell inside (0, t_b]."""
    if t_b <= 0:
        raise ValueError("t_b must be > 0")
    taus = (params.tau_B, params.tau_D)
    state = int(initial)
    t = 0.0
    times = []
    while True:
        t += rng.exponential(taus[state])
        if t > t_b:
            return np.array(times)
        times.append(t)
        state = 1 - state


def bright_dwell_per_bin(initial, change_times: np.ndarray, t_b: float,
                         t_s: float) -> np.ndarray:
    """Exact bright dwell time inside each sub-bin.

    ``initial`` may be an IonState (with change_times of shape (J,) or (N, J))
    or an int array of per-trial states.  NaN entries pad ragged rows. A
    change exactly on a bin boundary flips the state for the later bin only.
    """
    ct = np.atleast_2d(np.asarray(change_times, dtype=float))
    n, j = ct.shape
    initial_arr = np.broadcast_to(
        np.asarray(initial, dtype=np.int8), (n,)
    )
    m = n_bins(t_b, t_s)
    edges = np.arange(m + 1) * t_s
    # Segment boundaries: 0, c_1..c_J (NaN padding mapped to t_b), t_b. The
    # state on segment i is the initial state flipped i times.
    bounds = np.empty((n, j + 2))
    bounds[:, 0] = 0.0
    bounds[:, 1:-1] = np.where(np.isnan(ct), t_b, ct)
    bounds[:, -1] = t_b
    cumulative = np.zeros((n, m + 1))
    for i in range(j + 1):
        is_bright = ((i & 1) ^ initial_arr) == 0
        if not np.any(is_bright):
            continue
        start = bounds[:, i, None]
        end = bounds[:, i + 1, None]
        overlap = np.clip(edges[None, :], start, end) - start
        cumulative += np.where(is_bright[:, None], overlap, 0.0)
    dwell = np.diff(cumulative, axis=1)
    return dwell if np.asarray(change_times).ndim > 1 else dwell[0]


def sample_counts(traj: Trajectory, params: RateParams,
                  rng: np.random.Generator) -> np.ndarray:
    """Per-sub-bin Poisson counts for an already-sampled trajectory.

    Each sub-bin's mean is R_D*t_s + R_B*(bright dwell within the bin); a bin
    fully bright gives (R_B+R_D)*t_s, fully dark gives R_D*t_s, and a bin with
    a single change at time t_j reproduces the linear interpolation between
    the two.  Bins with several changes use the exact accumulated dwell.
    """
    dwell = bright_dwell_per_bin(traj.initial, np.asarray(traj.change_times),
                                 traj.t_b, traj.t_s)
    lam = params.R_D * traj.t_s + params.R_B * dwell
    return rng.poisson(lam)


def _sample_changes_chunk(initial_arr: np.ndarray, t_b: float, params: RateParams,
                          rng: np.random.Generator):
    """Vectorized dwell sampling for one chunk. Always draws full-width
    batches so a trial's values depend only on its slot, not on neighbours."""
    width = initial_arr.shape[0]
    taus = np.array([params.tau_B, params.tau_D])
    state = initial_arr.astype(np.int8).copy()
    t = np.zeros(width)
    alive = np.ones(width, dtype=bool)
    columns = []
    while np.any(alive):
        t = t + rng.exponential(taus[state])
        alive &= t <= t_b
        columns.append(np.where(alive, t, np.nan))
        state = np.where(alive, 1 - state, state)
    if columns:
        times = np.stack(columns, axis=1)
        n_changes = np.sum(~np.isnan(times), axis=1).astype(np.int32)
    else:
        times = np.empty((width, 0))
        n_changes = np.zeros(width, dtype=np.int32)
    return times, n_changes


class Ensemble:
    """A simulated (or ingested) set of trajectories with shared (t_b, t_s).

    Stores counts as an (N, M) array and change times as an NaN-padded
    (N, J_max) array; indexing returns individual :class:`Trajectory` views.
    ``initial`` is a single IonState for ordinary ensembles or a per-trial
    int array for composed experiments (e.g. the second window of a pulse
    pair).  Ingested ensembles have no change times (``None``): ground-truth
    methods raise on them.
    """

    def __init__(self, initial, counts, change_times, t_b, t_s, params=None, seed=None):
        self.initial = initial
        self.counts = np.asarray(counts)
        self.change_times = change_times if change_times is None else np.asarray(change_times)
        self.t_b = float(t_b)
        self.t_s = float(t_s)
        self.params = params
        self.seed = seed
        if self.counts.ndim != 2 or self.counts.shape[1] != n_bins(t_b, t_s):
            raise ValueError("counts must be (n_trials, n_bins)")

    def __len__(self) -> int:
        return self.counts.shape[0]

    @property
    def n_bins(self) -> int:
        return self.counts.shape[1]

    def initial_array(self) -> np.ndarray:
        if isinstance(self.initial, IonState):
            return np.full(len(self), int(self.initial), dtype=np.int8)
        return np.asarray(self.initial, dtype=np.int8)

    def _require_truth(self):
        if self.change_times is None:
            raise ValueError("ensemble has no ground-truth change times")

    def change_counts_at(self, t: float | None = None) -> np.ndarray:
        """Number of state changes with change time <= t (default: all)."""
        self._require_truth()
        if t is None:
            t = self.t_b
        with np.errstate(invalid="ignore"):
            inside = self.change_times <= t  # NaN padding compares False
        return np.count_nonzero(inside, axis=1).astype(np.int32)

    def states_at(self, t: float) -> np.ndarray:
        """True hidden state (0/1) of each trial at time t."""
        return (self.initial_array() ^ (self.change_counts_at(t) & 1)).astype(np.int8)

    def final_states(self) -> np.ndarray:
        return self.states_at(self.t_b)

    def states_at_bin_edges(self) -> np.ndarray:
        """(N, M) hidden states at the end of each sub-bin."""
        self._require_truth()
        n, m = self.counts.shape
        flips = np.zeros((n, m + 1), dtype=np.int32)
        ct = self.change_times
        if ct.size:
            rows, cols = np.nonzero(~np.isnan(ct))
            # A change at exactly k*t_s flips the state observed at edge k.
            buckets = np.ceil(ct[rows, cols] / self.t_s - 1e-12).astype(int)
            np.add.at(flips, (rows, np.clip(buckets, 0, m)), 1)
        parity = np.cumsum(flips, axis=1)[:, 1:] & 1
        return (self.initial_array()[:, None] ^ parity).astype(np.int8)

    def __getitem__(self, i: int) -> Trajectory:
        self._require_truth()
        row = self.change_times[i]
        init = self.initial if isinstance(self.initial, IonState) else IonState(int(self.initial[i]))
        return Trajectory(
            initial=init,
            change_times=row[~np.isnan(row)],
            counts=self.counts[i],
            t_b=self.t_b,
            t_s=self.t_s,
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def _simulate_chunks(config: SimConfig, initial_arr_for, context: tuple,
                     threads: int = 1):
    """Simulate all chunks; returns (counts, change_times, n_changes)."""
    n, m = config.n_trials, config.n_bins
    n_chunks = (n + CHUNK - 1) // CHUNK
    results = [None] * n_chunks

    def run(ci: int):
        start = ci * CHUNK
        take = min(CHUNK, n - start)
        init_chunk = initial_arr_for(start, take)
        rng_changes = _chunk_rng(config.seed, _STREAM_CHANGES, context, ci)
        rng_counts = _chunk_rng(config.seed, _STREAM_COUNTS, context, ci)
        times, n_changes = _sample_changes_chunk(init_chunk, config.t_b,
                                                 config.params, rng_changes)
        dwell = bright_dwell_per_bin(init_chunk, times, config.t_b, config.t_s)
        lam = config.params.R_D * config.t_s + config.params.R_B * dwell
        cnt = rng_counts.poisson(lam)
        results[ci] = (cnt[:take], times[:take], n_changes[:take])

    if threads > 1 and n_chunks > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n_chunks)))
    else:
        for ci in range(n_chunks):
            run(ci)

    counts = np.concatenate([r[0] for r in results], axis=0)
    n_changes = np.concatenate([r[2] for r in results])
    j_max = max(r[1].shape[1] for r in results)
    times = np.full((n, j_max), np.nan)
    for ci, r in enumerate(results):
        times[ci * CHUNK:ci * CHUNK + r[1].shape[0], :r[1].shape[1]] = r[1]
    return counts, times, n_changes


def simulate_ensemble(config: SimConfig, initial: IonState, *,
                      threads: int = 1, context: tuple = ()) -> Ensemble:
    """Simulate ``config.n_trials`` independent trajectories.

    Bit-reproducible as a function of (config.seed, context, trial index);
    ``threads`` only parallelizes chunk processing and never changes results.
    ``context`` namespaces the random streams so that several ensembles of
    the same initial state (e.g. repeated experiments, or the two windows of
    a pulse pair) can be drawn independently from one seed.
    """
    full_context = (*context, int(initial))
    width_init = np.full(CHUNK, int(initial), dtype=np.int8)
    counts, times, n_changes = _simulate_chunks(
        config, lambda start, take: width_init, full_context, threads
    )
    return Ensemble(initial, counts, times, config.t_b, config.t_s,
                    params=config.params, seed=config.seed)


def simulate_ensemble_from_states(config: SimConfig, initial_states: np.ndarray, *,
                                  threads: int = 1, context: tuple = (9,)) -> Ensemble:
    """Like :func:`simulate_ensemble` with a per-trial initial state vector
    (used for the second detection window after a pulse)."""
    initial_states = np.asarray(initial_states, dtype=np.int8)
    if initial_states.shape != (config.n_trials,):
        raise ValueError("initial_states must have shape (n_trials,)")

    def initial_for(start, take):
        chunk = np.zeros(CHUNK, dtype=np.int8)
        chunk[:take] = initial_states[start:start + take]
        return chunk

    counts, times, n_changes = _simulate_chunks(config, initial_for, context, threads)
    return Ensemble(initial_states, counts, times, config.t_b, config.t_s,
                    params=config.params, seed=config.seed)


def deterministic_uniforms(seed: int, context: tuple, n: int) -> np.ndarray:
    """Chunk-deterministic uniform(0,1) draws keyed by (seed, context). Used
    for auxiliary per-trial coin flips (e.g. pulse errors) so that composed
    experiments stay reproducible under the same contract as ensembles."""
    out = np.empty(n)
    for ci in range((n + CHUNK - 1) // CHUNK):
        rng = _chunk_rng(seed, _STREAM_EXTRA, context, ci)
        block = rng.random(CHUNK)
        take = min(CHUNK, n - ci * CHUNK)
        out[ci * CHUNK:ci * CHUNK + take] = block[:take]
    return out


# ---------------------------------------------------------------------------
# CSV interchange


def write_ensemble_csv(path, ensembles, *, comments=()) -> None:
    """Write one or more ensembles (same bin count) to a counts CSV."""
    ensembles = list(ensembles)
    m = ensembles[0].n_bins
    if any(e.n_bins != m for e in ensembles):
        raise ValueError("all ensembles in one file must share the bin count")
    with open(path, "w", newline="") as fh:
        for comment in comments:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["trial", "initial"] + [f"n_{k}" for k in range(1, m + 1)])
        for ens in ensembles:
            labels = [IonState(int(s)).label for s in ens.initial_array()]
            for i in range(len(ens)):
                writer.writerow([i, labels[i]] + list(map(int, ens.counts[i])))


def write_change_times_csv(path, ensembles) -> None:
    """Sidecar dump of ground-truth change times (ragged rows)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "initial", "change_times_ms"])
        for ens in ensembles:
            labels = [IonState(int(s)).label for s in ens.initial_array()]
            for i in range(len(ens)):
                row = ens.change_times[i]
                times = [f"{t:.9g}" for t in row[~np.isnan(row)]]
                writer.writerow([i, labels[i]] + times)


def read_counts_csv(path):
    """Read a counts CSV into (trial_ids, initial, counts).

    Accepts the schema written by :func:`write_ensemble_csv`; comment lines
    starting with ``#`` are skipped.  Raises :class:`DataFormatError` with a
    line number on malformed input.
    """
    trials, initials, rows = [], [], []
    with open(path, newline="") as fh:
        header = None
        width = None
        for line_no, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            cells = next(csv.reader([line]))
            if header is None:
                header = cells
                if header[:2] != ["trial", "initial"] or len(header) < 3:
                    raise DataFormatError(path, line_no,
                                          "header must be trial,initial,n_1,...")
                expected = [f"n_{k}" for k in range(1, len(header) - 1)]
                if header[2:] != expected:
                    raise DataFormatError(path, line_no,
                                          "count columns must be n_1..n_M in order")
                width = len(header)
                continue
            if len(cells) != width:
                raise DataFormatError(path, line_no,
                                      f"expected {width} fields, got {len(cells)}")
            try:
                trials.append(int(cells[0]))
                initials.append(int(IonState.from_label(cells[1])))
                counts = [int(c) for c in cells[2:]]
            except ValueError as exc:
                raise DataFormatError(path, line_no, str(exc)) from None
            if any(c < 0 for c in counts):
                raise DataFormatError(path, line_no, "negative photon count")
            rows.append(counts)
    if header is None:
        raise DataFormatError(path, 1, "empty file")
    if not rows:
        raise DataFormatError(path, 2, "no data rows")
    return (np.array(trials), np.array(initials, dtype=np.int8),
            np.array(rows, dtype=np.int64))


def ensembles_from_counts(initials: np.ndarray, counts: np.ndarray,
                          t_b: float, t_s: float):
    """Split ingested rows into per-initial-state ensembles (no ground truth).
    Returns a dict keyed by IonState with only the states present."""
    out = {}
    for state in (IonState.BRIGHT, IonState.DARK):
        mask = initials == int(state)
        if np.any(mask):
            out[state] = Ensemble(state, counts[mask], None, t_b, t_s)
    return out
