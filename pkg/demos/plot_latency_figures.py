"""
Completion time against the grouped baseline
============================================

Worker times are ``c * (gamma + Exp(mu))``.  The private secure code waits
for any ``K`` workers; the baseline, which encodes ``A`` and the library in
separate variables, splits workers into ``n`` groups and waits for the
slowest group.
"""

from pspc.latency import (
    LatencyParams,
    SchemeSpec,
    exact_mean,
    fig2_sweep,
    fig3_sweep,
    mc_simulate,
    relative_reduction,
)

# %%
# Sweep the threshold at N=12, M=4, n=2, mu=gamma=0.1.
rows = fig2_sweep(trials=100_000, seed=0)
print(f"{'K':>3} {'conv':>8} {'private':>8} {'grouped':>8}")
for K in (4, 6, 8, 10):
    got = {r.scheme: r.mc_mean for r in rows if r.K == K}
    print(f"{K:>3} {got['conventional']:8.3f} {got['private_secure']:8.3f} {got['grouped_baseline']:8.3f}")
print("reduction vs grouped:", {k: f"{v:.1%}" for k, v in relative_reduction(rows).items()})

# %%
# Sweep the straggling rate at K=4, gamma=1: as mu grows the exponential
# tail shrinks and the two schemes converge.
rows = fig3_sweep(trials=100_000, seed=0)
for mu, gap in relative_reduction(rows, "mu").items():
    print(f"mu={mu:7.3f}  reduction={gap:6.1%}")

# %%
# The closed forms use log(N/(N-K)); the exact mean uses harmonic numbers.
# At N=12 the two differ by several percent.
lp = LatencyParams(0.1, 0.1, 12, 200_000, 1)
spec = SchemeSpec("private_secure", 12, 2, 3)
print("simulated", mc_simulate(spec, lp).mean, "exact", exact_mean(spec, lp))
