"""
What a worker can and cannot learn
==================================

Each check here runs on a field small enough to enumerate.
"""

from pspc.audit import AuditConfig, check_masking_bijection, check_query_symmetry, run_audit
from pspc.gfmat import PrimeField

# %%
# With a nonzero point, every mask value gives a different share, so the
# share is uniform no matter what A is.
print(check_masking_bijection(PrimeField(7), 3, shape=(1, 2)).detail)

# %%
# At x = 0 the mask vanishes and the share is A_0 itself.
print(check_masking_bijection(PrimeField(7), 0).detail)

# %%
# One worker's view over 10,000 jobs for each desired index: the layout is
# identical and the point in each slot has the same distribution.
res = check_query_symmetry(q=17, samples=10_000, seed=0)
print(res.passed, res.detail)

# %%
# The full audit, as written by ``pspc audit``.
report = run_audit(AuditConfig(seed=0))
for check in report.checks:
    if check.name != "masking_bijection":
        print(f"{check.name:20s} {'pass' if check.passed else 'FAIL'}  {check.detail}")
print("all passed:", report.passed)
