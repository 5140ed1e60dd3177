"""Private secure polynomial codes for A @ B_D.

The master encodes its own matrix as

    A~(x) = A_0 + A_1 x + ... + A_{m-1} x^{m-1} + R x^m

with a uniformly random mask ``R``, and every library matrix is encoded as

    B~_k(x) = sum_{l=1}^{n-1} B_{k,l} x^{l(m+1)}.

Worker ``i`` multiplies ``A~(x_i)`` with ``B~_D(x_i) + sum_{k != D} B~_k(x_{j_k})``.
As a function of ``x_i`` that product is a polynomial of degree
``n(m+1) - 1``, so any ``K = n(m+1)`` results determine it.  The product
block ``A_u B_{D,p}`` sits at the coefficient of ``x^{p(m+1)+u}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Mapping, Sequence

import numpy as np

from .gfmat import (
    FieldError,
    FieldMatrix,
    PrimeField,
    assemble_blocks,
    inverse,
    matmul,
    padded_size,
    partition_cols,
    partition_rows,
)


class CodeError(ValueError):
    pass


class UnderdeterminedError(CodeError):
    """Fewer sub-results than the recovery threshold."""


class DuplicatePointError(CodeError):
    pass


@dataclass(frozen=True)
class CodeParams:
    """Parameters of one coded job.

    ``D`` is 1-based (library indices run 1..M); worker indices are 0-based.
    """

    field: PrimeField
    m: int
    n: int
    M: int
    N: int
    D: int
    r: int
    s: int
    t: int

    def __post_init__(self):
        if self.m < 1:
            raise CodeError(f"m must be >= 1, got {self.m}")
        if self.n < 2:
            raise CodeError(f"n must be >= 2, got {self.n}")
        if self.M < 1:
            raise CodeError(f"M must be >= 1, got {self.M}")
        if not 1 <= self.D <= self.M:
            raise CodeError(f"D must lie in 1..{self.M}, got {self.D}")
        if min(self.r, self.s, self.t) < 1:
            raise CodeError("matrix dimensions must be positive")
        if self.K > self.N:
            raise CodeError(
                f"recovery threshold K = n(m+1) = {self.K} exceeds N = {self.N}")
        if self.field.q <= self.N + self.M - 1:
            raise CodeError(
                f"field too small: need q > N + M - 1 = {self.N + self.M - 1}")

    @property
    def K(self) -> int:
        return self.n * (self.m + 1)

    @property
    def block_rows(self) -> int:
        return padded_size(self.r, self.m) // self.m

    @property
    def block_cols(self) -> int:
        return padded_size(self.t, self.n - 1) // (self.n - 1)

    @property
    def degree(self) -> int:
        return self.K - 1

    def product_index(self, u: int, p: int) -> int:
        """Coefficient index carrying ``A_u @ B_{D,p}`` (``p`` is 1-based)."""
        return p * (self.m + 1) + u

    def desired_indices(self) -> list[int]:
        return [self.product_index(u, p)
                for p in range(1, self.n) for u in range(self.m)]


@dataclass(frozen=True)
class PointAssignment:
    """Evaluation points of one job.

    ``undesired_points`` maps each library index ``k != D`` to ``x_{j_k}``,
    the single point shared by all workers for that matrix.
    """

    worker_points: tuple[int, ...]
    undesired_points: Mapping[int, int] = dc_field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "worker_points", tuple(int(x) for x in self.worker_points))
        object.__setattr__(self, "undesired_points",
                           {int(k): int(v) for k, v in sorted(self.undesired_points.items())})
        pts = self.all_points()
        if len(set(pts)) != len(pts):
            raise DuplicatePointError("evaluation points must be pairwise distinct")
        if any(x == 0 for x in pts):
            raise CodeError("evaluation points must be nonzero")

    def all_points(self) -> list[int]:
        return list(self.worker_points) + list(self.undesired_points.values())

    def eval_points(self, worker: int, D: int, M: int) -> tuple[int, ...]:
        """Point for each library index 1..M as seen by ``worker``."""
        return tuple(self.worker_points[worker] if k == D else self.undesired_points[k]
                     for k in range(1, M + 1))


@dataclass(frozen=True)
class MaskedShare:
    worker: int
    value: FieldMatrix


@dataclass(frozen=True)
class SubResult:
    worker: int
    value: FieldMatrix


@dataclass(frozen=True)
class ProductCoefficients:
    blocks: tuple[FieldMatrix, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    def __len__(self):
        return len(self.blocks)

    def __getitem__(self, idx):
        return self.blocks[idx]


def draw_distinct_nonzero(field: PrimeField, count: int,
                          rng: np.random.Generator) -> list[int]:
    """Uniform distinct points from GF(q) minus zero, by rejection."""
    if count > field.q - 1:
        raise CodeError(f"cannot draw {count} distinct nonzero points from {field}")
    seen: set[int] = set()
    out: list[int] = []
    while len(out) < count:
        x = int(rng.integers(1, field.q))
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def sample_points(params: CodeParams, rng: np.random.Generator) -> PointAssignment:
    # The draw never looks at D: N + M - 1 points are drawn first and D only
    # decides which library index skips the shared pool.
    if params.field.q <= params.N + params.M - 1:
        raise CodeError("field too small for distinct nonzero points")
    pts = draw_distinct_nonzero(params.field, params.N + params.M - 1, rng)
    worker_pts, pool = pts[:params.N], iter(pts[params.N:])
    undesired = {k: next(pool) for k in range(1, params.M + 1) if k != params.D}
    return PointAssignment(tuple(worker_pts), undesired)


def _horner(coeffs: Sequence[FieldMatrix], x: int) -> FieldMatrix:
    acc = coeffs[-1]
    for c in reversed(coeffs[:-1]):
        acc = acc.scale(x) + c
    return acc


def encode_a_share(A: FieldMatrix | Sequence[FieldMatrix], R: FieldMatrix, x: int,
                   m: int, worker: int = 0) -> MaskedShare:
    """Evaluate the masked polynomial of ``A`` at ``x``.

    ``A`` may be the full matrix or its ``m`` row blocks.
    """
    x = int(x) % R.field.q
    if x == 0:
        raise CodeError("evaluation at x = 0 returns A_0 unmasked")
    blocks = partition_rows(A, m) if isinstance(A, FieldMatrix) else list(A)
    if len(blocks) != m:
        raise CodeError(f"expected {m} row blocks of A, got {len(blocks)}")
    if R.shape != blocks[0].shape:
        raise CodeError(f"mask shape {R.shape} does not match A block {blocks[0].shape}")
    return MaskedShare(worker, _horner(blocks + [R], x))


def library_poly_eval(B_k: FieldMatrix | Sequence[FieldMatrix], m: int, n: int,
                      x: int) -> FieldMatrix:
    """``B~_k(x)``: block ``l`` of ``n - 1`` carries exponent ``l(m+1)``."""
    blocks = partition_cols(B_k, n - 1) if isinstance(B_k, FieldMatrix) else list(B_k)
    field = blocks[0].field
    step = pow(int(x), m + 1, field.q)
    # Horner in y = x^(m+1), then one extra factor of y (no constant term)
    acc = blocks[-1]
    for blk in reversed(blocks[:-1]):
        acc = acc.scale(step) + blk
    return acc.scale(step)


def _check_library(B: Sequence[FieldMatrix], params: CodeParams):
    if len(B) != params.M:
        raise CodeError(f"library has {len(B)} matrices, expected M = {params.M}")
    for k, mat in enumerate(B, start=1):
        if mat.shape != (params.s, params.t):
            raise CodeError(f"B_{k} has shape {mat.shape}, expected {(params.s, params.t)}")
        if mat.field != params.field:
            raise FieldError(f"B_{k} lives in {mat.field}, expected {params.field}")


def encode_library_share(B: Sequence[FieldMatrix], params: CodeParams,
                         points: PointAssignment, i: int) -> FieldMatrix:
    """Worker ``i``'s summed library evaluation."""
    _check_library(B, params)
    evals = points.eval_points(i, params.D, params.M)
    return sum_library_evals(B, params.m, params.n, evals)


def sum_library_evals(B: Sequence[FieldMatrix], m: int, n: int,
                      evals: Sequence[int]) -> FieldMatrix:
    """Sum of ``B~_k(evals[k-1])`` over the whole library."""
    if len(evals) != len(B):
        raise CodeError(f"{len(evals)} points for a library of {len(B)}")
    acc = None
    for mat, x in zip(B, evals):
        term = library_poly_eval(mat, m, n, x)
        acc = term if acc is None else acc + term
    return acc


def worker_compute(share: MaskedShare, lib_share: FieldMatrix) -> SubResult:
    if share.value.cols != lib_share.rows:
        raise CodeError(
            f"share {share.value.shape} and library share {lib_share.shape} do not chain")
    return SubResult(share.worker, matmul(share.value, lib_share))


def vandermonde(field: PrimeField, points: Sequence[int]) -> FieldMatrix:
    q = field.q
    rows = [[pow(int(x), j, q) for j in range(len(points))] for x in points]
    return FieldMatrix(field, rows)


def _check_samples(points: Sequence[int], K: int):
    if len(points) < K:
        raise UnderdeterminedError(
            f"need {K} results to interpolate a degree-{K - 1} polynomial, got {len(points)}")
    if len(points) > K:
        raise CodeError(f"expected exactly {K} results, got {len(points)}")
    if len(set(points)) != len(points):
        raise DuplicatePointError("interpolation points must be distinct")


def interpolate(points: Sequence[int], values: Sequence[FieldMatrix], K: int,
                method: str = "vandermonde") -> ProductCoefficients:
    """Recover the ``K`` matrix coefficients through ``K`` evaluations.

    Every entry shares one Vandermonde system, so the inverse is computed
    once and applied to all entries at the same time.  ``method="lagrange"``
    expands the Lagrange basis instead and serves as a cross-check.
    """
    points = [int(x) for x in points]
    if len(values) != len(points):
        raise CodeError("points and values differ in length")
    _check_samples(points, K)
    field = values[0].field
    shape = values[0].shape
    if any(v.shape != shape for v in values):
        raise CodeError("sub-results disagree in shape")
    stacked = FieldMatrix(field, np.stack([v.array.reshape(-1) for v in values]))
    if method == "vandermonde":
        basis = inverse(vandermonde(field, points))
    elif method == "lagrange":
        basis = _lagrange_basis(field, points)
    else:
        raise ValueError(f"unknown interpolation method {method!r}")
    coeffs = matmul(basis, stacked)
    return ProductCoefficients(
        FieldMatrix(field, coeffs.array[l].reshape(shape)) for l in range(K))


def _lagrange_basis(field: PrimeField, points: Sequence[int]) -> FieldMatrix:
    # column i holds the monomial coefficients of the i-th Lagrange basis poly
    q = field.q
    K = len(points)
    cols = []
    for i, xi in enumerate(points):
        poly = [1]
        denom = 1
        for j, xj in enumerate(points):
            if j == i:
                continue
            # poly *= (x - xj)
            nxt = [0] * (len(poly) + 1)
            for d, c in enumerate(poly):
                nxt[d] = (nxt[d] - c * xj) % q
                nxt[d + 1] = (nxt[d + 1] + c) % q
            poly = nxt
            denom = denom * (xi - xj) % q
        scale = pow(denom, q - 2, q)
        cols.append([c * scale % q for c in poly])
    return FieldMatrix(field, [[cols[i][l] for i in range(K)] for l in range(K)])


def extract_result(coeffs: ProductCoefficients, params: CodeParams) -> FieldMatrix:
    """Assemble ``A @ B_D`` from the product-carrying coefficients.

    Coefficients ``0..m`` only hold masked cross terms and are dropped.
    """
    if len(coeffs) != params.K:
        raise CodeError(f"expected {params.K} coefficients, got {len(coeffs)}")
    grid = [[coeffs[params.product_index(u, p)] for p in range(1, params.n)]
            for u in range(params.m)]
    return assemble_blocks(grid, params.r, params.t)


def decode(points: Sequence[int], results: Sequence[SubResult],
           params: CodeParams) -> FieldMatrix:
    coeffs = interpolate(points, [res.value for res in results], params.K)
    return extract_result(coeffs, params)
