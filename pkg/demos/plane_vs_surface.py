"""Vacant crossing probabilities on the flat plane and on the hex surface H.

Both surfaces see the same line sample, so the H minus plane difference is a
paired estimate. Obstacle circuits are computed alongside and checked against
the crossings.
"""
import sys

from cylperc.harness import RunConfig, run_experiment

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 40
recs = run_experiment(RunConfig(u=0.05, window_radius=50.0, reps=reps, seed=3), "contrast",
                      write=False)
for r in recs:
    print(f"r={r.params['radius']:5.0f}  {r.params['surface']:8s} {r.estimate:+.3f} +- {r.stderr:.3f}")
print("duality violations:", recs[0].params["duality_violations"])
