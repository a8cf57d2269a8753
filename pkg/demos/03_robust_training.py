"""Training for the shot count you will use.

ShofaR penalizes each hinge row by a multiple of |beta| and adds a ridge,
both scaled by 1/sqrt(N). The resulting classifier is reproducible at far
fewer shots than the nominal one. The L1 variant trades some of that
for fewer support vectors, and so fewer circuits to run.
"""
from shofar.harness import RunConfig, run_reliability_sweep, smallest_reliable_N

variants = ["nominal", "shofar", "shofar-est", "l1-shofar"]
cfg = RunConfig(dataset="circles", variants=variants, shots=[2**k for k in range(4, 15)], n_trials=200)
reports = run_reliability_sweep(cfg)

# a classifier with beta = 0 is trivially reliable, so also ask for accuracy
useful = [r for r in reports if r.m_sv > 0]
print(f"{'variant':<12}{'first N at reliability 1':>26}{'accuracy':>10}{'m_sv':>6}{'total shots':>13}")
for v in variants:
    N = smallest_reliable_N(useful, v)
    r = next(r for r in useful if r.variant == v and r.N == N)
    print(f"{v:<12}{N:>26}{r.accuracy_mean:>10.3f}{r.m_sv:>6}{r.total_shots:>13}")

print("\nl1-shofar at small N collapses to beta = 0 (a constant classifier):")
for r in reports:
    if r.variant == "l1-shofar" and r.N <= 128:
        print(f"  N={r.N:<5} m_sv={r.m_sv:<3} accuracy={r.accuracy_mean:.3f}")
