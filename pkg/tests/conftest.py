import numpy as np
import pytest

from pspc.gfmat import DEFAULT_PRIME, FieldMatrix, PrimeField
from pspc.polycode import CodeParams


def int_matmul_mod(a, b, q):
    """Schoolbook product on Python ints, reduced at the end."""
    a, b = [[int(v) for v in row] for row in a], [[int(v) for v in row] for row in b]
    return [[sum(a[i][k] * b[k][j] for k in range(len(b))) % q for j in range(len(b[0]))]
            for i in range(len(a))]


def random_job(params: CodeParams, seed: int):
    rng = np.random.default_rng(seed)
    A = FieldMatrix.random(params.field, params.r, params.s, rng)
    library = [FieldMatrix.random(params.field, params.s, params.t, rng) for _ in range(params.M)]
    return A, library


@pytest.fixture
def big_field():
    return PrimeField(DEFAULT_PRIME)


@pytest.fixture
def example_params(big_field):
    """The 12-worker, two-matrix example: m=2, n=3, K=9."""
    return CodeParams(big_field, m=2, n=3, M=2, N=12, D=1, r=4, s=3, t=4)
