"""Master and worker roles over an in-process, delay-injecting transport.

Each worker receives its masked share of ``A`` together with a four-part
query: how to partition every library matrix, where to evaluate each one,
how to combine the evaluations, and what to compute with the share.  The
query is serialized to a fixed binary layout so audits can compare the
exact bytes a worker observes.
"""
from __future__ import annotations

import hashlib
import heapq
import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .gfmat import FieldMatrix, PrimeField, partition_rows
from .polycode import (
    CodeError,
    CodeParams,
    MaskedShare,
    PointAssignment,
    SubResult,
    decode,
    encode_a_share,
    sample_points,
    sum_library_evals,
    worker_compute,
)

TRANSCRIPT_SCHEMA = "pspc-transcript/1"

_MAGIC = b"PSQ1"
OP_SYMMETRIC_SUM = 1
OP_LEFT_MULTIPLY = 1

SECTION_TAGS = {"partition": b"P", "evaluate": b"E", "sum": b"S", "compute": b"C"}


class QueryRejected(CodeError):
    """A worker refused a malformed query; the master sees a straggler."""


class JobFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Query:
    """Instruction sent to one worker.

    ``eval_points[k - 1]`` is where library matrix ``k`` is evaluated.  The
    desired index appears nowhere else: which slot holds the worker's own
    point is the only trace of it.
    """

    q: int
    parts: int
    stride: int
    eval_points: tuple[int, ...]
    sum_op: int = OP_SYMMETRIC_SUM
    compute_op: int = OP_LEFT_MULTIPLY

    def __post_init__(self):
        object.__setattr__(self, "eval_points", tuple(int(x) for x in self.eval_points))

    @property
    def M(self) -> int:
        return len(self.eval_points)

    def section_bytes(self) -> dict[str, bytes]:
        return {
            "partition": struct.pack(">II", self.parts, self.stride),
            "evaluate": struct.pack(f">I{self.M}Q", self.M, *self.eval_points),
            "sum": struct.pack(">BI", self.sum_op, self.M),
            "compute": struct.pack(">B", self.compute_op),
        }

    def to_bytes(self) -> bytes:
        out = [_MAGIC, struct.pack(">Q", self.q)]
        for name, payload in self.section_bytes().items():
            out.append(SECTION_TAGS[name] + struct.pack(">I", len(payload)) + payload)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, raw: bytes) -> Query:
        if raw[:4] != _MAGIC:
            raise QueryRejected("bad query magic")
        try:
            (q,) = struct.unpack_from(">Q", raw, 4)
            pos = 12
            sections = {}
            for name, tag in SECTION_TAGS.items():
                if raw[pos:pos + 1] != tag:
                    raise QueryRejected(f"expected section {name!r} at byte {pos}")
                (length,) = struct.unpack_from(">I", raw, pos + 1)
                sections[name] = raw[pos + 5:pos + 5 + length]
                pos += 5 + length
            parts, stride = struct.unpack(">II", sections["partition"])
            (M,) = struct.unpack_from(">I", sections["evaluate"])
            points = struct.unpack(f">{M}Q", sections["evaluate"][4:])
            sum_op, _ = struct.unpack(">BI", sections["sum"])
            (compute_op,) = struct.unpack(">B", sections["compute"])
        except struct.error as exc:
            raise QueryRejected(f"truncated query: {exc}") from None
        if pos != len(raw):
            raise QueryRejected("trailing bytes after query")
        return cls(q, parts, stride, points, sum_op, compute_op)


def make_query(params: CodeParams, points: PointAssignment, worker: int) -> Query:
    return Query(params.field.q, params.n - 1, params.m + 1,
                 points.eval_points(worker, params.D, params.M))


@dataclass
class WorkerState:
    """Everything a worker ever sees: its library, one query, one share."""

    worker: int
    library: tuple[FieldMatrix, ...]
    query: Query | None = None
    share: MaskedShare | None = None
    completion_time: float | None = None


def validate_query(query: Query, library: Sequence[FieldMatrix]):
    q = library[0].field.q
    if query.q != q:
        raise QueryRejected(f"query field {query.q} differs from library field {q}")
    if query.M != len(library):
        raise QueryRejected(f"query has {query.M} points for a library of {len(library)}")
    if len(set(query.eval_points)) != query.M:
        raise QueryRejected("evaluation points are not distinct")
    if any(not 0 < x < q for x in query.eval_points):
        raise QueryRejected("evaluation points must be nonzero residues")
    if query.parts < 1 or query.stride < 2:
        raise QueryRejected(f"bad partition spec parts={query.parts} stride={query.stride}")
    if query.sum_op != OP_SYMMETRIC_SUM or query.compute_op != OP_LEFT_MULTIPLY:
        raise QueryRejected("unknown sum/compute operation")


def worker_handle(state: WorkerState) -> SubResult:
    """Run partition, evaluate, sum and compute for one worker."""
    query, share = state.query, state.share
    if query is None or share is None:
        raise QueryRejected("worker has not received both query and share")
    validate_query(query, state.library)
    lib_share = sum_library_evals(state.library, query.stride - 1, query.parts + 1,
                                  query.eval_points)
    if share.value.cols != lib_share.rows:
        raise QueryRejected("share does not chain with the library")
    return worker_compute(share, lib_share)


@dataclass(frozen=True)
class MasterSetup:
    points: PointAssignment
    mask: FieldMatrix
    shares: tuple[MaskedShare, ...]
    queries: tuple[Query, ...]


def master_setup(params: CodeParams, A: FieldMatrix, rng: np.random.Generator) -> MasterSetup:
    if A.shape != (params.r, params.s):
        raise CodeError(f"A has shape {A.shape}, expected {(params.r, params.s)}")
    points = sample_points(params, rng)
    R = FieldMatrix.random(params.field, params.block_rows, params.s, rng)
    blocks = partition_rows(A, params.m)
    shares = tuple(encode_a_share(blocks, R, x, params.m, worker=i)
                   for i, x in enumerate(points.worker_points))
    queries = tuple(make_query(params, points, i) for i in range(params.N))
    return MasterSetup(points, R, shares, queries)


class InProcessTransport:
    """Message queue that releases messages in simulated-arrival order.

    Ties are broken by sender index so delivery order is reproducible.
    """

    def __init__(self):
        self._heap: list = []

    def send(self, sender: int, payload, delay: float):
        heapq.heappush(self._heap, (float(delay), sender, payload))

    def __iter__(self) -> Iterator[tuple[float, int, object]]:
        while self._heap:
            yield heapq.heappop(self._heap)


class Decoded(NamedTuple):
    product: FieldMatrix
    used_workers: tuple[int, ...]
    decode_time: float


def collect_and_decode(stream: Iterable[tuple[float, SubResult]], params: CodeParams,
                       points: PointAssignment) -> Decoded:
    """Decode from the first ``K`` arrivals and ignore the rest."""
    got: list[SubResult] = []
    arrival = 0.0
    for arrival, res in stream:
        got.append(res)
        if len(got) == params.K:
            break
    if len(got) < params.K:
        raise JobFailure(f"only {len(got)} of the required K = {params.K} results arrived")
    xs = [points.worker_points[res.worker] for res in got]
    return Decoded(decode(xs, got, params), tuple(res.worker for res in got), float(arrival))


def shifted_exponential_delays(params: CodeParams, rng: np.random.Generator,
                               mu: float = 0.1, gamma: float = 0.1) -> np.ndarray:
    c = 1.0 / ((params.m + 1) * (params.n - 1))
    return c * (gamma + rng.standard_exponential(params.N) / mu)


def library_fingerprint(library: Sequence[FieldMatrix]) -> str:
    h = hashlib.sha256()
    for mat in library:
        h.update(mat.to_bytes())
    return h.hexdigest()


@dataclass
class WorkerRecord:
    worker: int
    query: bytes
    share: FieldMatrix
    result: FieldMatrix | None
    completion_time: float
    status: str = "ok"


@dataclass
class JobTranscript:
    params: CodeParams
    seed: int | None
    points: PointAssignment
    records: list[WorkerRecord]
    arrival_order: tuple[int, ...]
    used_workers: tuple[int, ...] = ()
    decoded: FieldMatrix | None = None
    decode_time: float | None = None
    library_fingerprint: str = ""
    failure: str | None = None
    extra: dict = dc_field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.params.K

    def to_dict(self) -> dict:
        p = self.params
        return {
            "schema": TRANSCRIPT_SCHEMA,
            "params": {"q": p.field.q, "m": p.m, "n": p.n, "M": p.M, "N": p.N, "D": p.D,
                       "r": p.r, "s": p.s, "t": p.t, "K": p.K},
            "seed": self.seed,
            "points": {"worker": list(self.points.worker_points),
                       "undesired": {str(k): v for k, v in self.points.undesired_points.items()}},
            "library_fingerprint": self.library_fingerprint,
            "workers": [{
                "worker": rec.worker,
                "query": rec.query.hex(),
                "share": rec.share.tolist(),
                "result": None if rec.result is None else rec.result.tolist(),
                "completion_time": rec.completion_time,
                "status": rec.status,
            } for rec in self.records],
            "arrival_order": list(self.arrival_order),
            "used_workers": list(self.used_workers),
            "decode_time": self.decode_time,
            "decoded": None if self.decoded is None else self.decoded.tolist(),
            "failure": self.failure,
            **self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, doc: dict) -> JobTranscript:
        if doc.get("schema") != TRANSCRIPT_SCHEMA:
            raise ValueError(f"unsupported transcript schema {doc.get('schema')!r}")
        pd = doc["params"]
        field = PrimeField(pd["q"])
        params = CodeParams(field, pd["m"], pd["n"], pd["M"], pd["N"], pd["D"],
                            pd["r"], pd["s"], pd["t"])
        points = PointAssignment(doc["points"]["worker"],
                                 {int(k): v for k, v in doc["points"]["undesired"].items()})
        records = [WorkerRecord(
            rec["worker"], bytes.fromhex(rec["query"]), FieldMatrix(field, rec["share"]),
            None if rec["result"] is None else FieldMatrix(field, rec["result"]),
            rec["completion_time"], rec["status"]) for rec in doc["workers"]]
        known = {"schema", "params", "seed", "points", "library_fingerprint", "workers",
                 "arrival_order", "used_workers", "decode_time", "decoded", "failure"}
        return cls(params, doc["seed"], points, records, tuple(doc["arrival_order"]),
                   tuple(doc["used_workers"]),
                   None if doc["decoded"] is None else FieldMatrix(field, doc["decoded"]),
                   doc["decode_time"], doc["library_fingerprint"], doc.get("failure"),
                   {k: v for k, v in doc.items() if k not in known})

    @classmethod
    def from_json(cls, text: str) -> JobTranscript:
        return cls.from_dict(json.loads(text))


def replay(transcript: JobTranscript) -> FieldMatrix:
    """Re-decode from the recorded sub-results in recorded arrival order."""
    by_worker = {rec.worker: rec for rec in transcript.records}
    stream = ((by_worker[w].completion_time, SubResult(w, by_worker[w].result))
              for w in transcript.arrival_order if by_worker[w].result is not None)
    return collect_and_decode(stream, transcript.params, transcript.points).product


def run_job(params: CodeParams, A: FieldMatrix, library: Sequence[FieldMatrix],
            seed: int, *, delays: Sequence[float] | None = None, mu: float = 0.1,
            gamma: float = 0.1, threads: int = 1,
            tamper: Callable[[int, Query], Query] | None = None) -> JobTranscript:
    """Simulate one job end to end.

    All randomness (points, mask, delays) is drawn by the master up front,
    so the transcript does not depend on ``threads``.  ``tamper`` may rewrite
    the query sent to a worker for fault injection; a worker that rejects
    its query never answers.  If fewer than ``K`` workers answer, the
    transcript comes back with ``decoded=None`` and ``failure`` set.
    """
    library = tuple(library)
    setup_ss, delay_ss = np.random.SeedSequence(seed).spawn(2)
    setup = master_setup(params, A, np.random.default_rng(setup_ss))
    if delays is None:
        delays = shifted_exponential_delays(params, np.random.default_rng(delay_ss), mu, gamma)
    delays = [float(d) for d in delays]
    if len(delays) != params.N:
        raise ValueError(f"need {params.N} delays, got {len(delays)}")

    queries = list(setup.queries)
    if tamper is not None:
        queries = [tamper(i, qry) for i, qry in enumerate(queries)]
    # the worker only ever sees serialized bytes
    wire = [qry.to_bytes() for qry in queries]

    def handle(i: int) -> SubResult | None:
        try:
            state = WorkerState(i, library, Query.from_bytes(wire[i]), setup.shares[i], delays[i])
            return worker_handle(state)
        except QueryRejected:
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(handle, range(params.N)))
    else:
        results = [handle(i) for i in range(params.N)]

    transport = InProcessTransport()
    for i, res in enumerate(results):
        if res is not None:
            transport.send(i, res, delays[i])
    arrivals = list(transport)
    records = [WorkerRecord(i, wire[i], setup.shares[i].value,
                            None if results[i] is None else results[i].value, delays[i],
                            "ok" if results[i] is not None else "rejected")
               for i in range(params.N)]
    transcript = JobTranscript(params, seed, setup.points, records,
                               tuple(sender for _, sender, _ in arrivals),
                               library_fingerprint=library_fingerprint(library))
    try:
        decoded = collect_and_decode(((t, res) for t, _, res in arrivals), params, setup.points)
    except JobFailure as exc:
        transcript.failure = str(exc)
        return transcript
    transcript.decoded = decoded.product
    transcript.used_workers = decoded.used_workers
    transcript.decode_time = decoded.decode_time
    return transcript
