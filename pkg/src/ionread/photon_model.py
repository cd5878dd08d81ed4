"""Per-sub-bin probability model for two-state fluorescence readout.

An ion is either *bright* (scatters photons at rate ``R_B + R_D``) or *dark*
(background rate ``R_D`` only), and flips incoherently between the two states
with exponential lifetimes ``tau_B`` and ``tau_D``.  A measurement window is
divided into sub-bins of duration ``t_s``; one photon count is recorded per
sub-bin.  This module provides the building blocks of the per-sub-bin model:

- ``stay_prob``: probability of not leaving a state within a time ``t <= t_s``,
- ``count_pmf``: Poisson count distributions of the two pure states,
- ``mixed_pmf``: count distribution of a sub-bin containing one state change,
- ``build_observation_table``: the 2x2 observation matrices ``O(n)`` combining
  dwell probabilities with emission likelihoods, tabulated for ``n <= n_max``.

The table is the input of the generalized time-resolved classifier: the
ordered product of ``O(n_k)`` over the sub-bins of a measurement yields the
likelihood of the count sequence for either initial state.

Rates are photons per millisecond; times are milliseconds throughout.
"""

from __future__ import annotations

import enum
import json
import threading
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln, xlogy
from scipy.stats import poisson


class IonState(enum.IntEnum):
    """The two readout states. Bright is index 0, dark is index 1, matching
    the basis vectors v_B = (1,0)^T and v_D = (0,1)^T used for the matrix
    algebra in :mod:`ionread.classifiers`."""

    BRIGHT = 0
    DARK = 1

    @property
    def flipped(self) -> "IonState":
        return IonState(1 - self.value)

    @property
    def label(self) -> str:
        return "B" if self is IonState.BRIGHT else "D"

    @classmethod
    def from_label(cls, label: str) -> "IonState":
        try:
            return {"B": cls.BRIGHT, "D": cls.DARK}[label.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown state label {label!r}, expected 'B' or 'D'") from None


class DegenerateModelError(ValueError):
    """Raised when R_B = 0: state changes are unobservable and the mixture
    density's change of variables is singular."""


class TableTooSmallError(ValueError):
    """Raised when an explicit n_max leaves more truncated probability mass
    than the requested tolerance. Carries an estimate of the required size."""

    def __init__(self, message: str, required_n_max: int):
        super().__init__(message)
        self.required_n_max = required_n_max


@dataclass(frozen=True)
class RateParams:
    """Physical parameters of the readout model.

    Attributes
    ----------
    R_B : float
        Fluorescence rate of the bright state (photons/ms), excluding
        background.
    R_D : float
        Dark/background count rate (photons/ms). Both states see it.
    tau_B : float
        Mean lifetime of the bright state before an incoherent flip to
        dark (ms).
    tau_D : float
        Mean lifetime of the dark state (ms).
    t_s : float
        Sub-bin duration (ms).
    """

    R_B: float
    R_D: float
    tau_B: float
    tau_D: float
    t_s: float

    def __post_init__(self):
        # R_B = 0 is allowed to exist (a dark-only model is well defined) but
        # is rejected by mixed_pmf and table construction, where it makes
        # discrimination information-free.
        if self.R_B < 0:
            raise ValueError(f"R_B must be >= 0, got {self.R_B}")
        if self.R_D < 0:
            raise ValueError(f"R_D must be >= 0, got {self.R_D}")
        for name in ("tau_B", "tau_D", "t_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")

    @property
    def bright_mean(self) -> float:
        """Expected counts per sub-bin for an ion bright throughout."""
        return (self.R_B + self.R_D) * self.t_s

    @property
    def dark_mean(self) -> float:
        """Expected counts per sub-bin for an ion dark throughout."""
        return self.R_D * self.t_s

    @property
    def coarse_subbin(self) -> bool:
        """True when t_s > tau_B/10, i.e. the single-change-per-sub-bin
        approximation of the observation model starts to degrade."""
        return self.t_s > self.tau_B / 10.0

    def scaled(self, r: float) -> "RateParams":
        """Rates scaled by a collection-efficiency factor r; lifetimes are a
        property of the ion and stay fixed."""
        if r <= 0:
            raise ValueError(f"efficiency factor must be > 0, got {r}")
        return replace(self, R_B=r * self.R_B, R_D=r * self.R_D)

    def to_json_dict(self) -> dict:
        return {
            "R_B_per_ms": self.R_B,
            "R_D_per_ms": self.R_D,
            "tau_B_ms": self.tau_B,
            "tau_D_ms": self.tau_D,
            "t_s_ms": self.t_s,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "RateParams":
        try:
            return cls(
                R_B=float(doc["R_B_per_ms"]),
                R_D=float(doc["R_D_per_ms"]),
                tau_B=float(doc["tau_B_ms"]),
                tau_D=float(doc["tau_D_ms"]),
                t_s=float(doc["t_s_ms"]),
            )
        except KeyError as exc:
            raise ValueError(f"params document missing key {exc.args[0]!r}") from None


#: Simulation parameter set used for all headline error-rate targets.
DEFAULT_PARAMS = RateParams(R_B=16.0, R_D=0.3, tau_B=4.9, tau_D=56.0, t_s=0.1)


def stay_prob(state: IonState, t: float, params: RateParams) -> float:
    """Probability that an ion in ``state`` has not flipped after time ``t``.

    W_BB(t) = exp(-t/tau_B) for bright, W_DD(t) = exp(-t/tau_D) for dark.
    The complements give the flip probabilities W_BD and W_DB. Only spans
    up to one sub-bin are meaningful here; longer-time occupancies (which
    include flips back) live in :func:`ionread.estimation.population_dynamics`.
    """
    if t < 0 or t > params.t_s:
        raise ValueError(f"t must be in [0, t_s={params.t_s}], got {t}")
    tau = params.tau_B if state is IonState.BRIGHT else params.tau_D
    return float(np.exp(-t / tau))


def count_pmf(state: IonState, n, params: RateParams):
    """Poisson photon-count pmf of a pure state over one sub-bin.

    Mean (R_B + R_D)*t_s for bright, R_D*t_s for dark. ``n`` may be a scalar
    or an array of counts.
    """
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("photon count must be >= 0")
    mean = params.bright_mean if state is IonState.BRIGHT else params.dark_mean
    out = poisson.pmf(n, mean)
    return float(out) if out.ndim == 0 else out


def _poisson_weight(n: int, lam) -> np.ndarray:
    # e^{-lam} lam^n / n!, safe at lam = 0 (xlogy(0, 0) = 0).
    return np.exp(-lam + xlogy(n, lam) - gammaln(n + 1))


def mixed_pmf(direction: str, n: int, params: RateParams) -> float:
    """Count pmf of a sub-bin during which the ion changes state once.

    The mean count of a bin with a change at an interior time is a linear
    function of the change time, sweeping lam over
    ``[R_D*t_s, (R_D+R_B)*t_s]``.  Weighting the Poisson pmf with the density
    of the change time gives

        X(n) = integral g(lam) e^{-lam} lam^n / n! dlam

    with ``g_BD(lam) = exp(-(lam - R_D*t_s)/(R_B*tau_B))/(R_B*tau_B)`` for a
    bright->dark change and the mirrored ``g_DB`` for dark->bright.  X is not
    normalized on its own: summed over n it carries the total change
    probability, ``sum_n X_BD(n) = 1 - W_BB(t_s)`` (and likewise for DB).

    The integral is evaluated by adaptive quadrature with absolute tolerance
    1e-10 per n (the integrand is smooth over the short interval).

    Parameters
    ----------
    direction : {"BD", "DB"}
        "BD" for a bright ion turning dark, "DB" for the reverse.
    """
    if direction not in ("BD", "DB"):
        raise ValueError(f"direction must be 'BD' or 'DB', got {direction!r}")
    if n < 0:
        raise ValueError("photon count must be >= 0")
    if params.R_B == 0:
        raise DegenerateModelError(
            "R_B = 0: bright and dark are indistinguishable and the mixture "
            "density over the count mean is singular"
        )
    lo = params.R_D * params.t_s
    hi = (params.R_D + params.R_B) * params.t_s

    if direction == "BD":
        scale = params.R_B * params.tau_B

        def integrand(lam):
            return np.exp(-(lam - lo) / scale) / scale * _poisson_weight(n, lam)

    else:
        scale = params.R_B * params.tau_D

        def integrand(lam):
            return np.exp(-(hi - lam) / scale) / scale * _poisson_weight(n, lam)

    value, _ = quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
    return float(value)


class ObservationTable:
    """Tabulated 2x2 observation matrices O(n) for n = 0..n_max.

    Layout per count n (rows = state after the sub-bin, columns = state
    before it):

        O(n) = [[W_BB * P_B(n),  X_DB(n)      ],
                [X_BD(n),        W_DD * P_D(n)]]

    with W_BB = W_BB(t_s) and W_DD = W_DD(t_s) fixed at the sub-bin duration.
    Summed over all n, each column is stochastic: column 0 totals
    W_BB + W_BD = 1 and column 1 totals W_DD + W_DB = 1, so truncating at
    n_max leaves per-column mass ``truncation_mass`` unaccounted for.

    Instances are immutable after construction and safe for concurrent
    reads.  ``clamped_lookups`` is the one exception: a diagnostic counter of
    how many classified counts exceeded n_max and were clamped (incremented
    under a lock; it never influences results).
    """

    def __init__(self, params: RateParams, n_max: int, tol: float,
                 entries: np.ndarray, truncation_mass: np.ndarray):
        self.params = params
        self.n_max = int(n_max)
        self.tol = float(tol)
        entries = np.asarray(entries, dtype=float)
        if entries.shape != (self.n_max + 1, 2, 2):
            raise ValueError(f"entries must have shape ({self.n_max + 1}, 2, 2)")
        self.entries = entries
        self.entries.setflags(write=False)
        with np.errstate(divide="ignore"):
            self.log_entries = np.log(entries)
        self.log_entries.setflags(write=False)
        self.truncation_mass = np.asarray(truncation_mass, dtype=float)
        self.clamped_lookups = 0
        self._clamp_lock = threading.Lock()

    def lookup(self, n: int) -> np.ndarray:
        """O(n), clamping counts beyond n_max to the last entry."""
        if n < 0:
            raise ValueError("photon count must be >= 0")
        if n > self.n_max:
            with self._clamp_lock:
                self.clamped_lookups += 1
            n = self.n_max
        return self.entries[n]

    def clamp_counts(self, counts: np.ndarray) -> np.ndarray:
        """Clamp an array of counts to n_max, tallying how many were cut."""
        counts = np.asarray(counts)
        over = int(np.count_nonzero(counts > self.n_max))
        if over:
            with self._clamp_lock:
                self.clamped_lookups += over
            return np.minimum(counts, self.n_max)
        return counts

    def column_sums(self) -> np.ndarray:
        """Per-column total tabulated mass (approaches 1 as n_max grows)."""
        return self.entries.sum(axis=(0, 1))

    def to_json_dict(self) -> dict:
        return {
            "format": "observation_table",
            "version": 1,
            "params": self.params.to_json_dict(),
            "n_max": self.n_max,
            "tol": self.tol,
            "truncation_mass": self.truncation_mass.tolist(),
            "entries": self.entries.tolist(),
        }

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ObservationTable":
        if doc.get("format") != "observation_table":
            raise ValueError("not an observation-table document")
        if doc.get("version") != 1:
            raise ValueError(f"unsupported observation-table version {doc.get('version')!r}")
        return cls(
            params=RateParams.from_json_dict(doc["params"]),
            n_max=int(doc["n_max"]),
            tol=float(doc["tol"]),
            entries=np.asarray(doc["entries"], dtype=float),
            truncation_mass=np.asarray(doc["truncation_mass"], dtype=float),
        )

    @classmethod
    def load(cls, path) -> "ObservationTable":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


def _observation_entries(params: RateParams, n_max: int) -> np.ndarray:
    ns = np.arange(n_max + 1)
    w_bb = stay_prob(IonState.BRIGHT, params.t_s, params)
    w_dd = stay_prob(IonState.DARK, params.t_s, params)
    entries = np.empty((n_max + 1, 2, 2))
    entries[:, 0, 0] = w_bb * count_pmf(IonState.BRIGHT, ns, params)
    entries[:, 1, 1] = w_dd * count_pmf(IonState.DARK, ns, params)
    entries[:, 1, 0] = [mixed_pmf("BD", n, params) for n in ns]
    entries[:, 0, 1] = [mixed_pmf("DB", n, params) for n in ns]
    return entries


def _truncation_mass(params: RateParams, entries: np.ndarray) -> np.ndarray:
    n_max = entries.shape[0] - 1
    w_bb = stay_prob(IonState.BRIGHT, params.t_s, params)
    w_dd = stay_prob(IonState.DARK, params.t_s, params)
    # Tail of the pure-Poisson part is known analytically; the mixture tail
    # is its total mass (1 - stay probability) minus what was tabulated.
    col0 = w_bb * poisson.sf(n_max, params.bright_mean) + max(
        0.0, (1.0 - w_bb) - entries[:, 1, 0].sum()
    )
    col1 = w_dd * poisson.sf(n_max, params.dark_mean) + max(
        0.0, (1.0 - w_dd) - entries[:, 0, 1].sum()
    )
    return np.array([col0, col1])


def build_observation_table(params: RateParams, n_max: int | None = None,
                            tol: float = 1e-9) -> ObservationTable:
    """Tabulate O(n) for n = 0..n_max.

    With ``n_max=None`` the table grows until the truncated probability mass
    per column falls below ``tol`` (12-16 entries at the default rates).  An
    explicit ``n_max`` that leaves more than ``tol`` truncated raises
    :class:`TableTooSmallError` carrying the size that would have sufficed.
    Counts above n_max encountered later are clamped, not rejected.
    """
    if params.R_B == 0:
        raise DegenerateModelError("R_B = 0: no usable signal, refusing to build table")
    if params.coarse_subbin:
        warnings.warn(
            f"t_s={params.t_s} exceeds tau_B/10={params.tau_B / 10:.4g}; the "
            "single-change-per-sub-bin observation model degrades",
            stacklevel=2,
        )
    if n_max is not None and n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")

    required = _required_n_max(params, tol)
    if n_max is None:
        n_max = required
    entries = _observation_entries(params, n_max)
    truncation = _truncation_mass(params, entries)
    if truncation.max() > tol:
        raise TableTooSmallError(
            f"n_max={n_max} leaves truncated mass {truncation.max():.3g} > tol={tol:.3g}; "
            f"n_max={required} would suffice",
            required_n_max=required,
        )
    return ObservationTable(params, n_max, tol, entries, truncation)


def _required_n_max(params: RateParams, tol: float) -> int:
    """Smallest n_max whose per-column truncated mass is below tol."""
    w_bb = stay_prob(IonState.BRIGHT, params.t_s, params)
    w_dd = stay_prob(IonState.DARK, params.t_s, params)
    # The mixture part's mean never exceeds the bright mean, so the Poisson
    # tail bound plus an explicit mixture partial sum converges quickly.
    x_bd_total, x_db_total = 0.0, 0.0
    n = 0
    while True:
        x_bd_total += mixed_pmf("BD", n, params)
        x_db_total += mixed_pmf("DB", n, params)
        col0 = w_bb * poisson.sf(n, params.bright_mean) + max(0.0, (1.0 - w_bb) - x_bd_total)
        col1 = w_dd * poisson.sf(n, params.dark_mean) + max(0.0, (1.0 - w_dd) - x_db_total)
        if max(col0, col1) < tol and n >= 1:
            return n
        n += 1
        if n > 10000:
            raise RuntimeError("observation table failed to converge by n=10000")
