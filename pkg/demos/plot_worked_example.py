"""
Twelve workers, two library matrices
====================================

The master holds ``A`` and wants ``A @ B_1`` from a library ``{B_1, B_2}``
stored on 12 workers, without telling anyone which matrix it wants and
without revealing anything about ``A``.
"""

import numpy as np

from pspc import CodeParams, FieldMatrix, PrimeField, master_setup, matmul, run_job
from pspc.gfmat import partition_cols, partition_rows
from pspc.polycode import interpolate

field = PrimeField()  # 2**61 - 1
params = CodeParams(field, m=2, n=3, M=2, N=12, D=1, r=4, s=3, t=4)
print("recovery threshold K =", params.K)

rng = np.random.default_rng(0)
A = FieldMatrix.random(field, params.r, params.s, rng)
library = [FieldMatrix.random(field, params.s, params.t, rng) for _ in range(params.M)]

# %%
# The master draws 12 worker points plus one shared point for B_2, and a
# fresh mask R.  Every worker gets the same query layout: only the slot
# holding its own point differs between "wants B_1" and "wants B_2".
setup = master_setup(params, A, np.random.default_rng(1))
x13 = setup.points.undesired_points[2]
for i in range(3):
    print(f"worker {i}: evaluate B_1 at {setup.queries[i].eval_points[0]}, B_2 at {x13}")

# %%
# Run the job with shifted-exponential delays.  Decoding starts as soon as
# nine results are in; the three slowest workers are ignored.
transcript = run_job(params, A, library, seed=1)
print("arrival order:", transcript.arrival_order)
print("used:", transcript.used_workers)
print("decoded == A @ B_1:", transcript.decoded == matmul(A, library[0]))

# %%
# Interpolating the nine results gives the nine coefficients of the
# product polynomial.  The product blocks sit at x^3, x^4, x^6 and x^7; the
# other five carry masked noise and are thrown away.
by_worker = {rec.worker: rec for rec in transcript.records}
xs = [transcript.points.worker_points[w] for w in transcript.used_workers]
coeffs = interpolate(xs, [by_worker[w].result for w in transcript.used_workers], params.K)
A0, A1 = partition_rows(A, 2)
B11, B12 = partition_cols(library[0], 2)
for l, block in zip((3, 4, 6, 7), (A0 @ B11, A1 @ B11, A0 @ B12, A1 @ B12)):
    print(f"Z_{l} is a product block:", coeffs[l] == block)
