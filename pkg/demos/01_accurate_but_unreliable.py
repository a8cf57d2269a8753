"""A classifier can be accurate on average and still unreliable.

We train a nominal SVM on the Circles dataset with the exact kernel, then
evaluate it with a kernel estimated from N shots per entry. For moderate N
the mean accuracy is already high, yet almost every point flips its label in
at least one of 200 repetitions.
"""
from shofar.harness import RunConfig, run_reliability_sweep

cfg = RunConfig(dataset="circles", variants=["nominal"], shots=[2**k for k in range(4, 15)], n_trials=200)
reports = run_reliability_sweep(cfg)

print(f"{'N':>6}  {'acc mean':>8}  {'acc min':>8}  {'reliability':>11}")
for r in reports:
    print(f"{r.N:>6}  {r.accuracy_mean:8.3f}  {r.accuracy_min:8.3f}  {r.dataset_reliability:11.3f}")

bad = [r.N for r in reports if r.accuracy_mean > 0.8 and r.dataset_reliability == 0.0]
print(f"\nshot counts with mean accuracy > 0.8 but zero dataset reliability: {bad}")
