"""Error-rate landscape over measurement time, and collection-efficiency scaling.

Sweeps the measurement time for the optimized-threshold and generalized
time-resolved methods, then repeats the exercise at higher collection
efficiencies to show how the two methods converge once photons are cheap.
"""

import numpy as np

from ionread import DEFAULT_PARAMS, SweepSpec, efficiency_sweep

GRID = tuple(round(0.2 * k, 10) for k in range(1, 16))  # 0.2 .. 3.0 ms

spec = SweepSpec(
    t_b_values=GRID,
    n_trials=20_000,
    seed=11,
    params=DEFAULT_PARAMS,
    efficiency_factors=(1.0, 2.0, 9.9),
)

print("sweeping %d measurement times x %d efficiency factors, %d trials/state"
      % (len(GRID), len(spec.efficiency_factors), spec.n_trials))
rows, points = efficiency_sweep(spec, threads=4)

print("\nerror landscape at r = 1 (percent):")
print("  t_b/ms   threshold (n_c)   generalized")
for t_b in GRID:
    at = {row.classifier: row for row in rows if row.r == 1.0 and row.t_b == t_b}
    thr = at["threshold"]
    gen = at["generalized_time_resolved"]
    print("  %5.1f    %6.3f   (%d)     %6.3f"
          % (t_b, 100 * thr.epsilon, thr.n_c, 100 * gen.epsilon))

# The threshold curve is U-shaped: too short and the states barely separate,
# too long and dark decay floods the bright histogram.  The generalized
# method keeps improving and then saturates, because state changes are part
# of its model rather than a nuisance.
best_thr = min((r for r in rows if r.r == 1.0 and r.classifier == "threshold"),
               key=lambda r: r.epsilon)
print("\nthreshold minimum: %.3f%% at t_b = %.1f ms (n_c = %d)"
      % (100 * best_thr.epsilon, best_thr.t_b, best_thr.n_c))

print("\nbest-over-t_b error per efficiency factor (percent):")
print("  r      threshold   generalized   gap")
for pt in points:
    print("  %4.1f   %7.3f     %7.3f    %6.3f"
          % (pt.r, 100 * pt.epsilon_threshold,
             100 * pt.epsilon_time_resolved, 100 * pt.delta))

print("\nAt r = 9.9 the bright and dark count distributions are so well")
print("separated that modeling state changes buys almost nothing: the gap")
print("between the methods collapses to ~%.2f points."
      % (100 * abs(points[-1].delta)))

# Sanity: higher efficiency never hurts either method.
eps_thr = np.array([pt.epsilon_threshold for pt in points])
eps_gen = np.array([pt.epsilon_time_resolved for pt in points])
assert np.all(np.diff(eps_thr) < 0) and np.all(np.diff(eps_gen) < 0)
