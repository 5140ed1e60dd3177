"""Private secure polynomial codes for straggler-tolerant A @ B_D.

A master multiplies its matrix ``A`` with one matrix ``B_D`` of a library
held by ``N`` workers.  Any ``K = n(m+1)`` workers suffice, no worker learns
``D``, and every share of ``A`` a worker sees is uniformly random.
"""
from .gfmat import (
    DEFAULT_PRIME,
    FieldError,
    FieldMatrix,
    PrimeField,
    field_add,
    field_inv,
    field_mul,
    matmul,
    partition_cols,
    partition_rows,
)
from .polycode import (
    CodeError,
    CodeParams,
    DuplicatePointError,
    MaskedShare,
    PointAssignment,
    ProductCoefficients,
    SubResult,
    UnderdeterminedError,
    decode,
    encode_a_share,
    encode_library_share,
    extract_result,
    interpolate,
    sample_points,
    worker_compute,
)
from .protocol import (
    JobFailure,
    JobTranscript,
    Query,
    QueryRejected,
    WorkerState,
    collect_and_decode,
    master_setup,
    replay,
    run_job,
    worker_handle,
)

__version__ = "0.1.0"
