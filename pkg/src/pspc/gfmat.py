"""Prime-field arithmetic and dense matrices over GF(q).

Entries are stored as ``int64`` residues in ``[0, q)``.  Sums of two
residues always fit because ``q < 2**62``; products are routed through
whichever path keeps the arithmetic exact: plain ``int64`` when the dot
product cannot overflow, inner-dimension chunking when a single product
fits, and Python integers otherwise (the default 61-bit prime).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from sympy import isprime

# Mersenne prime 2**61 - 1: one residue product fits in 122 bits.
DEFAULT_PRIME = 2**61 - 1

_INT64_MAX = 2**63 - 1


class FieldError(ValueError):
    pass


@dataclass(frozen=True)
class PrimeField:
    q: int = DEFAULT_PRIME

    def __post_init__(self):
        q = int(self.q)
        object.__setattr__(self, "q", q)
        if q < 3:
            raise FieldError(f"modulus must be at least 3, got {q}")
        if q >= 2**62:
            raise FieldError("modulus must be below 2**62 for int64 storage")
        if not isprime(q):
            raise FieldError(f"modulus {q} is not prime")

    def __repr__(self):
        return f"GF({self.q})"

    def _check(self, *elems):
        for a in elems:
            if not 0 <= a < self.q:
                raise FieldError(f"{a} is not a residue mod {self.q}")

    def add(self, a: int, b: int) -> int:
        self._check(a, b)
        return (a + b) % self.q

    def sub(self, a: int, b: int) -> int:
        self._check(a, b)
        return (a - b) % self.q

    def neg(self, a: int) -> int:
        self._check(a)
        return -a % self.q

    def mul(self, a: int, b: int) -> int:
        self._check(a, b)
        return int(a) * int(b) % self.q

    def pow(self, a: int, e: int) -> int:
        self._check(a)
        if e < 0:
            return pow(self.inv(a), -e, self.q)
        return pow(int(a), e, self.q)

    def inv(self, a: int) -> int:
        self._check(a)
        if a == 0:
            raise ZeroDivisionError("zero has no inverse in a field")
        return pow(int(a), self.q - 2, self.q)

    @cached_property
    def _overflow_free_inner(self) -> int:
        # longest dot product that cannot overflow int64
        return _INT64_MAX // ((self.q - 1) ** 2)

    def random(self, shape, rng: np.random.Generator) -> np.ndarray:
        return rng.integers(0, self.q, size=shape, dtype=np.int64)


def field_add(field: PrimeField, a: int, b: int) -> int:
    return field.add(a, b)


def field_mul(field: PrimeField, a: int, b: int) -> int:
    return field.mul(a, b)


def field_inv(field: PrimeField, a: int) -> int:
    return field.inv(a)


def _matmul_mod(a: np.ndarray, b: np.ndarray, field: PrimeField) -> np.ndarray:
    q = field.q
    inner = a.shape[1]
    chunk = field._overflow_free_inner
    if chunk >= max(inner, 1):
        return (a @ b) % q
    if chunk >= 1:
        out = np.zeros((a.shape[0], b.shape[1]), dtype=np.int64)
        for lo in range(0, inner, chunk):
            out = (out + (a[:, lo:lo + chunk] @ b[lo:lo + chunk]) % q) % q
        return out
    prod = (a.astype(object) @ b.astype(object)) % q
    return prod.astype(np.int64)


def _scale_mod(a: np.ndarray, c: int, field: PrimeField) -> np.ndarray:
    q = field.q
    if c == 0 or a.size == 0:
        return np.zeros_like(a)
    if (q - 1) * c <= _INT64_MAX:
        return (a * c) % q
    return ((a.astype(object) * c) % q).astype(np.int64)


class FieldMatrix:
    """Immutable dense matrix over a prime field, row-major."""

    __slots__ = ("field", "_data")

    def __init__(self, field: PrimeField, data):
        arr = np.array(data, dtype=object if _is_object_like(data) else None)
        if arr.ndim == 1 and arr.size == 0:
            arr = arr.reshape(0, 0)
        if arr.ndim != 2:
            raise FieldError(f"expected a 2-d array, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() >= field.q):
            raise FieldError(f"entries must lie in [0, {field.q})")
        arr = arr.astype(np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "field", field)
        object.__setattr__(self, "_data", arr)

    def __setattr__(self, name, value):
        raise AttributeError("FieldMatrix is immutable")

    @classmethod
    def reduce(cls, field: PrimeField, data) -> FieldMatrix:
        """Build from arbitrary integers, reducing each entry mod q."""
        arr = np.array(data, dtype=object)
        if arr.ndim == 1 and arr.size == 0:
            arr = arr.reshape(0, 0)
        return cls(field, arr % field.q)

    @classmethod
    def zeros(cls, field: PrimeField, rows: int, cols: int) -> FieldMatrix:
        return cls(field, np.zeros((rows, cols), dtype=np.int64))

    @classmethod
    def identity(cls, field: PrimeField, size: int) -> FieldMatrix:
        return cls(field, np.eye(size, dtype=np.int64))

    @classmethod
    def random(cls, field: PrimeField, rows: int, cols: int,
               rng: np.random.Generator) -> FieldMatrix:
        return cls(field, field.random((rows, cols), rng))

    @property
    def rows(self) -> int:
        return self._data.shape[0]

    @property
    def cols(self) -> int:
        return self._data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    @property
    def array(self) -> np.ndarray:
        """Read-only view of the residues."""
        return self._data

    def tolist(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self._data]

    def to_bytes(self) -> bytes:
        header = np.array([self.rows, self.cols], dtype=">u8").tobytes()
        return header + self._data.astype(">u8").tobytes()

    def _same_field(self, other: FieldMatrix):
        if not isinstance(other, FieldMatrix):
            raise TypeError(f"expected FieldMatrix, got {type(other).__name__}")
        if other.field != self.field:
            raise FieldError(f"field mismatch: {self.field} vs {other.field}")

    def __add__(self, other: FieldMatrix) -> FieldMatrix:
        self._same_field(other)
        if self.shape != other.shape:
            raise FieldError(f"shape mismatch: {self.shape} + {other.shape}")
        return FieldMatrix(self.field, (self._data + other._data) % self.field.q)

    def __sub__(self, other: FieldMatrix) -> FieldMatrix:
        self._same_field(other)
        if self.shape != other.shape:
            raise FieldError(f"shape mismatch: {self.shape} - {other.shape}")
        return FieldMatrix(self.field, (self._data - other._data) % self.field.q)

    def __neg__(self) -> FieldMatrix:
        return FieldMatrix(self.field, (-self._data) % self.field.q)

    def scale(self, c: int) -> FieldMatrix:
        return FieldMatrix(self.field, _scale_mod(self._data, int(c) % self.field.q, self.field))

    def __matmul__(self, other: FieldMatrix) -> FieldMatrix:
        return matmul(self, other)

    def __eq__(self, other):
        if not isinstance(other, FieldMatrix):
            return NotImplemented
        return (self.field == other.field and self.shape == other.shape
                and bool(np.array_equal(self._data, other._data)))

    def __hash__(self):
        return hash((self.field.q, self.shape, self._data.tobytes()))

    def __repr__(self):
        return f"FieldMatrix({self.field}, {self.tolist()})"


def _is_object_like(data) -> bool:
    # big Python ints would overflow numpy's default int64 coercion
    if isinstance(data, np.ndarray):
        return data.dtype == object
    return True


def matmul(a: FieldMatrix, b: FieldMatrix) -> FieldMatrix:
    a._same_field(b)
    if a.cols != b.rows:
        raise FieldError(f"cannot multiply {a.shape} by {b.shape}")
    return FieldMatrix(a.field, _matmul_mod(a.array, b.array, a.field))


def padded_size(size: int, parts: int) -> int:
    """Smallest multiple of ``parts`` that is >= ``size``."""
    return -(-size // parts) * parts


def partition_rows(a: FieldMatrix, m: int) -> list[FieldMatrix]:
    """Split into ``m`` equal row blocks, zero-padding the bottom if needed."""
    if m < 1:
        raise FieldError(f"partition count must be positive, got {m}")
    total = padded_size(a.rows, m)
    data = np.zeros((total, a.cols), dtype=np.int64)
    data[:a.rows] = a.array
    step = total // m
    return [FieldMatrix(a.field, data[i * step:(i + 1) * step]) for i in range(m)]


def partition_cols(b: FieldMatrix, parts: int) -> list[FieldMatrix]:
    """Split into ``parts`` equal column blocks, zero-padding on the right."""
    if parts < 1:
        raise FieldError(f"partition count must be positive, got {parts}")
    total = padded_size(b.cols, parts)
    data = np.zeros((b.rows, total), dtype=np.int64)
    data[:, :b.cols] = b.array
    step = total // parts
    return [FieldMatrix(b.field, data[:, i * step:(i + 1) * step]) for i in range(parts)]


def stack_rows(blocks: Sequence[FieldMatrix], rows: int | None = None) -> FieldMatrix:
    """Inverse of :func:`partition_rows`; ``rows`` trims the padding."""
    field = blocks[0].field
    data = np.vstack([blk.array for blk in blocks])
    if rows is not None:
        data = data[:rows]
    return FieldMatrix(field, data)


def stack_cols(blocks: Sequence[FieldMatrix], cols: int | None = None) -> FieldMatrix:
    field = blocks[0].field
    data = np.hstack([blk.array for blk in blocks])
    if cols is not None:
        data = data[:, :cols]
    return FieldMatrix(field, data)


def assemble_blocks(grid: Sequence[Sequence[FieldMatrix]], rows: int | None = None,
                    cols: int | None = None) -> FieldMatrix:
    """Assemble a 2-d block grid, then trim to ``rows`` x ``cols``."""
    field = grid[0][0].field
    data = np.block([[blk.array for blk in row] for row in grid])
    data = data[:rows, :cols]
    return FieldMatrix(field, data)


def matrix_sum(mats: Iterable[FieldMatrix]) -> FieldMatrix:
    mats = list(mats)
    out = mats[0]
    for mat in mats[1:]:
        out = out + mat
    return out


def inverse(a: FieldMatrix) -> FieldMatrix:
    """Invert a square matrix by Gauss-Jordan elimination over GF(q).

    Raises ``FieldError`` when the matrix is singular.
    """
    if a.rows != a.cols:
        raise FieldError(f"cannot invert non-square matrix {a.shape}")
    q = a.field.q
    size = a.rows
    aug = np.hstack([a.array.astype(object), np.eye(size, dtype=np.int64).astype(object)])
    for col in range(size):
        pivots = np.nonzero(aug[col:, col])[0]
        if pivots.size == 0:
            raise FieldError("matrix is singular over the field")
        piv = col + int(pivots[0])
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] = (aug[col] * pow(int(aug[col, col]), q - 2, q)) % q
        factors = aug[:, col].copy()
        factors[col] = 0
        aug = (aug - np.outer(factors, aug[col])) % q
    return FieldMatrix(a.field, aug[:, size:])
