"""Per-bin photon statistics: pure-state counts, change-bin mixtures and the
observation matrices whose ordered product carries all the likelihood
information used by the time-resolved methods."""

import numpy as np

from ionread import (
    DEFAULT_PARAMS,
    IonState,
    build_observation_table,
    count_pmf,
    mixed_pmf,
    stay_prob,
)

p = DEFAULT_PARAMS
print(f"parameters: tau_B={p.tau_B} ms, tau_D={p.tau_D} ms, "
      f"R_B={p.R_B}/ms, R_D={p.R_D}/ms, t_s={p.t_s} ms")
print(f"mean counts per sub-bin: bright {p.bright_mean:.3f}, "
      f"dark {p.dark_mean:.3f}")
print(f"stay probabilities over one sub-bin: "
      f"W_BB={stay_prob(IonState.BRIGHT, p.t_s, p):.5f}, "
      f"W_DD={stay_prob(IonState.DARK, p.t_s, p):.5f}")

print("\ncount distributions for one sub-bin (n: bright / dark / changing):")
for n in range(5):
    print(f"  n={n}:  {count_pmf(IonState.BRIGHT, n, p):8.5f}  "
          f"{count_pmf(IonState.DARK, n, p):8.5f}  "
          f"BD {mixed_pmf('BD', n, p):.2e}  DB {mixed_pmf('DB', n, p):.2e}")

# The mixture masses are not normalized on their own: summed over n they
# recover the per-bin flip probabilities.
mass_bd = sum(mixed_pmf("BD", n, p) for n in range(40))
mass_db = sum(mixed_pmf("DB", n, p) for n in range(40))
print(f"\nmixture masses: sum_n X_BD = {mass_bd:.6f} "
      f"(flip prob {1 - stay_prob(IonState.BRIGHT, p.t_s, p):.6f}), "
      f"sum_n X_DB = {mass_db:.6f} "
      f"(flip prob {1 - stay_prob(IonState.DARK, p.t_s, p):.6f})")

table = build_observation_table(p)
print(f"\nobservation table: counts 0..{table.n_max}, "
      f"column mass deficit {np.abs(1 - table.entries.sum(axis=(0, 1))).max():.2e}")
print("O(0) =")
print(table.entries[0])
print("O(2) =")
print(table.entries[2])
