import dataclasses
import itertools
import json

import numpy as np
import pytest

from pspc.gfmat import FieldMatrix, PrimeField, matmul
from pspc.polycode import CodeError, CodeParams, MaskedShare, library_poly_eval
from pspc.protocol import (
    InProcessTransport,
    JobFailure,
    JobTranscript,
    Query,
    QueryRejected,
    WorkerState,
    collect_and_decode,
    make_query,
    master_setup,
    replay,
    run_job,
    worker_handle,
)

from conftest import random_job


def test_setup_queries_follow_the_example(example_params):
    A, library = random_job(example_params, 0)
    setup = master_setup(example_params, A, np.random.default_rng(0))
    x13 = setup.points.undesired_points[2]
    for i, query in enumerate(setup.queries):
        assert query.eval_points == (setup.points.worker_points[i], x13)
        assert query.parts == 2 and query.stride == 3
    assert len(setup.shares) == 12


def test_single_matrix_library_queries():
    params = CodeParams(PrimeField(97), 1, 2, 1, 6, 1, 2, 2, 2)
    A, _ = random_job(params, 0)
    setup = master_setup(params, A, np.random.default_rng(1))
    pts = [q.eval_points for q in setup.queries]
    assert all(len(p) == 1 for p in pts)
    assert len({p[0] for p in pts}) == 6


def test_setup_is_deterministic(example_params):
    A, _ = random_job(example_params, 0)
    one = master_setup(example_params, A, np.random.default_rng(9))
    two = master_setup(example_params, A, np.random.default_rng(9))
    assert [q.to_bytes() for q in one.queries] == [q.to_bytes() for q in two.queries]
    assert one.mask == two.mask
    assert [s.value.to_bytes() for s in one.shares] == [s.value.to_bytes() for s in two.shares]


def test_setup_rejects_wrong_shape(example_params):
    with pytest.raises(CodeError):
        master_setup(example_params, FieldMatrix.zeros(example_params.field, 3, 3),
                     np.random.default_rng(0))


def test_query_round_trip():
    q = Query(97, 2, 3, (5, 17, 40))
    raw = q.to_bytes()
    assert Query.from_bytes(raw) == q
    assert len(raw) == len(Query(97, 2, 3, (1, 2, 3)).to_bytes())


@pytest.mark.parametrize("raw", [b"", b"XXXX" + bytes(20), Query(97, 2, 3, (5,)).to_bytes()[:-1],
                                 Query(97, 2, 3, (5,)).to_bytes() + b"\0"])
def test_malformed_bytes_rejected(raw):
    with pytest.raises(QueryRejected):
        Query.from_bytes(raw)


def test_worker_computes_the_example_product(example_params):
    params = example_params
    A, library = random_job(params, 3)
    setup = master_setup(params, A, np.random.default_rng(3))
    x13 = setup.points.undesired_points[2]
    for i in (0, 7):
        state = WorkerState(i, tuple(library), setup.queries[i], setup.shares[i])
        xi = setup.points.worker_points[i]
        lib = library_poly_eval(library[0], 2, 3, xi) + library_poly_eval(library[1], 2, 3, x13)
        assert worker_handle(state).value == setup.shares[i].value @ lib


def test_worker_symmetric_under_slot_permutation():
    f = PrimeField(97)
    rng = np.random.default_rng(0)
    library = tuple(FieldMatrix.random(f, 2, 4, rng) for _ in range(3))
    share = MaskedShare(0, FieldMatrix.random(f, 1, 2, rng))
    pts = (11, 23, 42)
    results = set()
    for perm in itertools.permutations(range(3)):
        evals = tuple(pts[p] for p in perm)
        got = worker_handle(WorkerState(0, library, Query(97, 2, 3, evals), share)).value
        want = share.value @ (library_poly_eval(library[0], 2, 3, evals[0])
                              + library_poly_eval(library[1], 2, 3, evals[1])
                              + library_poly_eval(library[2], 2, 3, evals[2]))
        assert got == want
        results.add(got.to_bytes())
    assert len(results) > 1


@pytest.mark.parametrize("evals", [(5,), (5, 5), (0, 5), (97, 5)])
def test_worker_rejects_bad_points(evals):
    f = PrimeField(97)
    library = (FieldMatrix.zeros(f, 1, 2),) * 2
    state = WorkerState(0, library, Query(97, 1, 2, evals), MaskedShare(0, FieldMatrix.zeros(f, 1, 1)))
    with pytest.raises(QueryRejected):
        worker_handle(state)


def test_worker_rejects_missing_inputs():
    with pytest.raises(QueryRejected):
        worker_handle(WorkerState(0, (FieldMatrix.zeros(PrimeField(7), 1, 1),)))


def test_transport_orders_by_arrival():
    t = InProcessTransport()
    for sender, delay in [(0, 3.0), (1, 1.0), (2, 2.0), (3, 1.0)]:
        t.send(sender, f"msg{sender}", delay)
    assert [s for _, s, _ in t] == [1, 3, 2, 0]


def test_decode_triggers_at_kth_arrival(example_params):
    A, library = random_job(example_params, 1)
    delays = [float(d) for d in range(12, 0, -1)]
    tr = run_job(example_params, A, library, seed=1, delays=delays)
    assert tr.used_workers == tuple(range(11, 2, -1))
    assert tr.decode_time == 9.0
    assert tr.decoded == matmul(A, library[0])


def test_late_results_are_ignored(example_params):
    A, library = random_job(example_params, 2)
    tr = run_job(example_params, A, library, seed=2)
    late = [w for w in tr.arrival_order if w not in tr.used_workers]
    assert len(late) == 3
    # corrupt the stragglers' records: replay must not notice
    for rec in tr.records:
        if rec.worker in late:
            rec.result = FieldMatrix.zeros(example_params.field, *rec.result.shape)
    assert replay(tr) == tr.decoded


def test_reordered_arrivals_decode_identically(example_params):
    A, library = random_job(example_params, 4)
    want = matmul(A, library[0])
    rng = np.random.default_rng(4)
    for _ in range(10):
        tr = run_job(example_params, A, library, seed=4, delays=rng.permutation(12).tolist())
        assert tr.decoded == want


def test_rejected_query_is_a_straggler(example_params):
    A, library = random_job(example_params, 5)

    def drop_a_point(i, query):
        if i in (0, 1):
            return dataclasses.replace(query, eval_points=query.eval_points[:-1])
        return query

    tr = run_job(example_params, A, library, seed=5, tamper=drop_a_point)
    assert [rec.status for rec in tr.records[:3]] == ["rejected", "rejected", "ok"]
    assert not {0, 1} & set(tr.arrival_order)
    assert tr.decoded == matmul(A, library[0])


def test_too_many_rejections_fail_the_job(example_params):
    A, library = random_job(example_params, 6)

    def break_four(i, query):
        return dataclasses.replace(query, eval_points=(1, 1)) if i < 4 else query

    tr = run_job(example_params, A, library, seed=6, tamper=break_four)
    assert tr.decoded is None
    assert "8 of the required K = 9" in tr.failure
    with pytest.raises(JobFailure):
        replay(tr)


def test_collect_needs_k_results(example_params):
    with pytest.raises(JobFailure):
        collect_and_decode(iter(()), example_params, None)


def test_transcript_json_round_trip(example_params):
    A, library = random_job(example_params, 7)
    tr = run_job(example_params, A, library, seed=7)
    doc = json.loads(tr.to_json())
    assert doc["schema"] == "pspc-transcript/1"
    assert doc["params"]["K"] == 9
    assert len(doc["workers"]) == 12
    back = JobTranscript.from_json(tr.to_json())
    assert back.to_json() == tr.to_json()
    assert replay(back) == tr.decoded == matmul(A, library[0])


def test_transcript_independent_of_threads(example_params):
    A, library = random_job(example_params, 8)
    one = run_job(example_params, A, library, seed=8, threads=1).to_json()
    four = run_job(example_params, A, library, seed=8, threads=4).to_json()
    again = run_job(example_params, A, library, seed=8, threads=1).to_json()
    assert one == four == again


def test_transcript_hides_desired_index_in_queries(example_params):
    A, library = random_job(example_params, 9)
    tr1 = run_job(example_params, A, library, seed=9)
    tr2 = run_job(dataclasses.replace(example_params, D=2), A, library, seed=9)
    for r1, r2 in zip(tr1.records, tr2.records):
        a, b = Query.from_bytes(r1.query), Query.from_bytes(r2.query)
        assert len(r1.query) == len(r2.query)
        # same draws, only the slot of the worker's own point moves
        assert a.eval_points == tuple(reversed(b.eval_points))
