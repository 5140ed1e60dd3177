"""Executable privacy and security checks.

Instead of estimating mutual information, each check targets a statement
that is exact at tiny field sizes:

* the mask map ``R -> A~(x)`` is a bijection for ``x != 0``, so a share is
  uniform whatever ``A`` is;
* the query a worker receives has a D-independent layout, and the point in
  each library slot has the same distribution for every ``D``;
* a worker's result is a deterministic function of what it received;
* the worker code has no D-dependent branch.

Statistical checks use fixed seeds and critical values fixed in advance.
A failing statistical check is rerun once with a fresh seed before it is
reported as a failure.
"""
from __future__ import annotations

import itertools
import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy import stats

from .gfmat import FieldMatrix, PrimeField, partition_rows
from .polycode import CodeParams, MaskedShare, SubResult, encode_a_share, sample_points
from .protocol import (
    JobTranscript,
    Query,
    QueryRejected,
    WorkerState,
    library_fingerprint,
    make_query,
    run_job,
    worker_handle,
)

AUDIT_SCHEMA = "pspc-audit/1"
ALPHA = 0.01


@dataclass
class CheckResult:
    name: str
    passed: bool
    config: dict
    statistic: float | None = None
    threshold: float | None = None
    detail: str = ""
    warnings: list[str] = dc_field(default_factory=list)


@dataclass(frozen=True)
class ViewSample:
    """What one worker saw in one job, plus the library fingerprint."""

    D: int
    worker: int
    query: bytes
    share: MaskedShare
    sub_result: SubResult
    library_fingerprint: str


def critical_value(dof: int, alpha: float = ALPHA) -> float:
    return float(stats.chi2.ppf(1 - alpha, dof))


def required_samples(dof: int, effect: float = 0.1, alpha: float = ALPHA,
                     power: float = 0.8) -> int:
    """Samples needed to detect a Cohen's ``w = effect`` deviation.

    Solves ``P[ncx2(dof, n w^2) > crit] = power`` for ``n``.
    """
    crit = critical_value(dof, alpha)
    lo, hi = 0.0, 1.0
    while stats.ncx2.sf(crit, dof, hi) < power:
        hi *= 2
    for _ in range(60):
        mid = (lo + hi) / 2
        if stats.ncx2.sf(crit, dof, mid) < power:
            lo = mid
        else:
            hi = mid
    return int(np.ceil(hi / effect**2))


def _raw_share(blocks: Sequence[FieldMatrix], R: FieldMatrix, x: int) -> FieldMatrix:
    # the unguarded evaluation, only used to show what x = 0 would leak
    acc = R
    for blk in reversed(blocks):
        acc = acc.scale(x) + blk
    return acc


def _all_matrices(field: PrimeField, shape: tuple[int, int]):
    for entries in itertools.product(range(field.q), repeat=shape[0] * shape[1]):
        yield FieldMatrix(field, np.array(entries, dtype=np.int64).reshape(shape))


def _share_image(field: PrimeField, blocks, x: int, shape) -> Counter:
    counts: Counter = Counter()
    for R in _all_matrices(field, shape):
        if x % field.q == 0:
            share = _raw_share(blocks, R, 0)
        else:
            share = encode_a_share(blocks, R, x, len(blocks)).value
        counts[share.array.tobytes()] += 1
    return counts


def _random_blocks(field, m, shape, rng):
    return [FieldMatrix.random(field, *shape, rng) for _ in range(m)]


def check_masking_bijection(field: PrimeField, x: int, m: int = 2,
                            shape: tuple[int, int] = (1, 1), seed: int = 0) -> CheckResult:
    """Enumerate every mask for two different ``A`` and check each image is the whole space."""
    space = field.q ** (shape[0] * shape[1])
    config = {"q": field.q, "x": x, "m": m, "mask_shape": list(shape)}
    if space > 200_000:
        raise ValueError(f"mask space of size {space} is too large to enumerate")
    rng = np.random.default_rng(seed)
    first = _random_blocks(field, m, shape, rng)
    second = _random_blocks(field, m, shape, rng)
    while all(a == b for a, b in zip(first, second)):
        second = _random_blocks(field, m, shape, rng)
    images = [_share_image(field, blocks, x, shape) for blocks in (first, second)]
    worst = min(len(img) for img in images)
    passed = all(len(img) == space and set(img.values()) == {1} for img in images)
    if x % field.q == 0:
        detail = "A_0 exposed: x = 0 maps every mask to A_0"
    elif passed:
        detail = f"mask map is a permutation of all {space} shares for both inputs"
    else:
        detail = f"image has only {worst} of {space} shares"
    return CheckResult("masking_bijection", passed, config, float(worst), float(space), detail)


def _cell_index(share: np.ndarray, q: int) -> int:
    idx = 0
    for v in share.reshape(-1):
        idx = idx * q + int(v)
    return idx


def check_share_uniformity(field: PrimeField, A: FieldMatrix, A2: FieldMatrix, x: int,
                           m: int, samples: int | None = None, seed: int = 0) -> CheckResult:
    """Compare the share distribution under a uniform mask for two inputs.

    With ``samples=None`` every mask is enumerated and both histograms must
    be exactly uniform.  Otherwise masks are sampled and a chi-square test
    (homogeneity between inputs, fit to uniform for each) must stay below
    the 1% critical value.
    """
    blocks = [partition_rows(A, m), partition_rows(A2, m)]
    shape = blocks[0][0].shape
    cells = field.q ** (shape[0] * shape[1])
    config = {"q": field.q, "x": x, "m": m, "share_shape": list(shape),
              "mode": "exhaustive" if samples is None else "sampled", "samples": samples}
    if samples is None:
        images = [_share_image(field, b, x, shape) for b in blocks]
        identical = images[0] == images[1]
        uniform = all(len(img) == cells and set(img.values()) == {1} for img in images)
        return CheckResult("share_uniformity", identical and uniform, config,
                           float(sum(abs(images[0][k] - images[1][k])
                                     for k in set(images[0]) | set(images[1]))),
                           0.0, "enumerated distributions are identical and uniform"
                           if identical and uniform else "distributions differ")
    if cells > 10_000:
        raise ValueError(f"{cells} histogram cells are too many for a chi-square test")

    def attempt(sub_seed) -> tuple[float, float]:
        rng = np.random.default_rng(sub_seed)
        hist = np.zeros((2, cells), dtype=np.int64)
        for row, blk in enumerate(blocks):
            for _ in range(samples):
                R = FieldMatrix.random(field, *shape, rng)
                hist[row, _cell_index(encode_a_share(blk, R, x, m).value.array, field.q)] += 1
        seen = hist[:, hist.sum(axis=0) > 0]
        homog = stats.chi2_contingency(seen, correction=False)[0] if seen.shape[1] > 1 else 0.0
        fit = max(stats.chisquare(h)[0] for h in hist)
        return float(homog), float(fit)

    crit = critical_value(cells - 1)
    (homog, fit), attempts = _with_retry(attempt, seed, lambda s: max(s) <= crit)
    passed = max(homog, fit) <= crit
    out = CheckResult("share_uniformity", passed, config, max(homog, fit), crit,
                      f"homogeneity={homog:.3f} uniform_fit={fit:.3f} attempts={attempts}")
    _power_warning(out, cells - 1, samples)
    return out


def _with_retry(attempt, seed: int, ok):
    first = attempt(np.random.SeedSequence([seed, 0]))
    if ok(first):
        return first, 1
    return attempt(np.random.SeedSequence([seed, 1])), 2


def _power_warning(result: CheckResult, dof: int, samples: int):
    need = required_samples(dof)
    result.config["required_samples"] = need
    if samples < need:
        result.warnings.append(
            f"statistical power insufficient: {samples} samples < {need} needed to detect "
            f"a small effect (w=0.1) at alpha={ALPHA} with 80% power")


def _first_difference(a: bytes, b: bytes) -> int:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    return min(len(a), len(b))


def _query_samples(params: CodeParams, samples: int, worker: int, seed) -> list[bytes]:
    rng = np.random.default_rng(seed)
    return [make_query(params, sample_points(params, rng), worker).to_bytes()
            for _ in range(samples)]


def check_query_symmetry(q: int = 17, N: int = 4, M: int = 2, m: int = 1, n: int = 2,
                         samples: int = 10_000, seed: int = 0, worker: int = 0,
                         threads: int = 1) -> CheckResult:
    """Generate many jobs for every ``D`` and compare what one worker sees."""
    field = PrimeField(q)
    config = {"q": q, "N": N, "M": M, "m": m, "n": n, "samples": samples, "worker": worker}
    if M < 2:
        return CheckResult("query_symmetry", True, config, detail="vacuous: only one index")
    all_params = [CodeParams(field, m, n, M, N, D, 1, 1, 1) for D in range(1, M + 1)]

    def generate(sub_seed):
        streams = sub_seed.spawn(M)
        jobs = list(zip(all_params, streams))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(lambda j: _query_samples(j[0], samples, worker, j[1]), jobs))
        return [_query_samples(p, samples, worker, s) for p, s in jobs]

    # structural part: layout and point-free sections must match byte for byte
    wires = generate(np.random.SeedSequence([seed, 0]))
    ref = wires[0][0]
    ref_sections = Query.from_bytes(ref).section_bytes()
    for D, batch in enumerate(wires, start=1):
        for raw in batch:
            if len(raw) != len(ref):
                return CheckResult("query_symmetry", False, config,
                                   detail=f"D={D}: query length {len(raw)} != {len(ref)}")
            secs = Query.from_bytes(raw).section_bytes()
            for name in ("partition", "sum", "compute"):
                if secs[name] != ref_sections[name]:
                    off = _first_difference(secs[name], ref_sections[name])
                    return CheckResult("query_symmetry", False, config,
                                       detail=f"D={D}: {name} section differs at byte {off}")
            if [len(v) for v in secs.values()] != [len(v) for v in ref_sections.values()]:
                return CheckResult("query_symmetry", False, config,
                                   detail=f"D={D}: section lengths differ")

    cells = q - 1

    def statistics(batches) -> list[float]:
        # hist[D, k, x - 1]: how often slot k carried point x
        hist = np.zeros((M, M, cells), dtype=np.int64)
        for d, batch in enumerate(batches):
            for raw in batch:
                for k, x in enumerate(Query.from_bytes(raw).eval_points):
                    hist[d, k, x - 1] += 1
        out = []
        for k in range(M):
            out.append(float(stats.chi2_contingency(hist[:, k, :], correction=False)[0]))
            out.extend(float(stats.chisquare(hist[d, k])[0]) for d in range(M))
        return out

    homog_crit = critical_value((M - 1) * (cells - 1))
    fit_crit = critical_value(cells - 1)
    thresholds = [c for _ in range(M) for c in [homog_crit] + [fit_crit] * M]

    def ok(stat_list):
        return all(s <= t for s, t in zip(stat_list, thresholds))

    first = statistics(wires)
    attempts = 1
    if not ok(first):
        first = statistics(generate(np.random.SeedSequence([seed, 1])))
        attempts = 2
    ratios = [s / t for s, t in zip(first, thresholds)]
    worst = int(np.argmax(ratios))
    result = CheckResult(
        "query_symmetry", ok(first), config, first[worst], thresholds[worst],
        f"layout and partition/sum/compute bytes identical across D; "
        f"worst point-marginal statistic {first[worst]:.3f} vs {thresholds[worst]:.3f}; "
        f"attempts={attempts}")
    _power_warning(result, cells - 1, samples)
    return result


def check_result_determinism(views: Sequence[ViewSample],
                             library: Sequence[FieldMatrix]) -> CheckResult:
    """Recompute every sub-result from (query, share, library)."""
    config = {"views": len(views)}
    fp = library_fingerprint(library)
    for view in views:
        if view.library_fingerprint != fp:
            return CheckResult("result_determinism", False, config,
                               detail=f"worker {view.worker}: library fingerprint mismatch")
        try:
            state = WorkerState(view.worker, tuple(library), Query.from_bytes(view.query),
                                view.share)
            again = worker_handle(state)
        except QueryRejected as exc:
            return CheckResult("result_determinism", False, config,
                               detail=f"worker {view.worker}: query rejected ({exc})")
        if again.value != view.sub_result.value:
            return CheckResult("result_determinism", False, config,
                               detail=f"worker {view.worker}: result is not reproducible")
    detail = "vacuous: no views" if not views else "every sub-result recomputed exactly"
    return CheckResult("result_determinism", True, config, float(len(views)), None, detail)


def views_from_transcript(transcript: JobTranscript) -> list[ViewSample]:
    return [ViewSample(transcript.params.D, rec.worker, rec.query,
                       MaskedShare(rec.worker, rec.share), SubResult(rec.worker, rec.result),
                       transcript.library_fingerprint)
            for rec in transcript.records if rec.result is not None]


def _oracle_library_eval(B: FieldMatrix, m: int, n: int, x: int) -> np.ndarray:
    # direct power sum with Python integers, no Horner
    q = B.field.q
    width = -(-B.cols // (n - 1))
    padded = np.zeros((B.rows, width * (n - 1)), dtype=object)
    padded[:, :B.cols] = B.array.astype(object)
    out = np.zeros((B.rows, width), dtype=object)
    for l in range(1, n):
        out = out + padded[:, (l - 1) * width:l * width] * pow(x, l * (m + 1), q)
    return out % q


def check_worker_branch_free(q: int = 97, M: int = 3, m: int = 2, n: int = 3,
                             s: int = 2, t: int = 4, trials: int = 20,
                             seed: int = 0) -> CheckResult:
    """Permute the points across library slots and compare with an oracle.

    For every permutation the worker must return exactly
    ``share @ sum_k B~_k(points[perm[k]])``: moving the worker's own point
    to a different slot, which is all a change of ``D`` does, changes
    nothing else about the computation.
    """
    field = PrimeField(q)
    config = {"q": q, "M": M, "m": m, "n": n, "trials": trials}
    rng = np.random.default_rng(seed)
    checked = 0
    perms = list(itertools.permutations(range(M)))
    for _ in range(trials):
        library = tuple(FieldMatrix.random(field, s, t, rng) for _ in range(M))
        share = MaskedShare(0, FieldMatrix.random(field, 2, s, rng))
        pts = [int(v) for v in rng.choice(np.arange(1, q), size=M, replace=False)]
        for perm in perms:
            evals = tuple(pts[perm[k]] for k in range(M))
            query = Query(q, n - 1, m + 1, evals)
            got = worker_handle(WorkerState(0, library, Query.from_bytes(query.to_bytes()), share))
            lib = sum(_oracle_library_eval(B, m, n, x) for B, x in zip(library, evals)) % q
            want = (share.value.array.astype(object) @ lib) % q
            if not np.array_equal(got.value.array, want.astype(np.int64)):
                return CheckResult("worker_branch_free", False, config,
                                   detail=f"permutation {perm} breaks the symmetric sum")
            checked += 1
    return CheckResult("worker_branch_free", True, config, float(checked), None,
                       f"{checked} permuted queries match the symmetric-sum oracle")


@dataclass
class AuditConfig:
    seed: int = 0
    samples: int = 10_000
    allow_zero_point: bool = False
    threads: int = 1


@dataclass
class AuditReport:
    seed: int
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def warnings(self) -> list[str]:
        return [f"{c.name}: {w}" for c in self.checks for w in c.warnings]

    def failed(self) -> list[str]:
        return sorted({c.name for c in self.checks if not c.passed})

    def to_dict(self) -> dict:
        return {"schema": AUDIT_SCHEMA, "seed": self.seed, "passed": self.passed,
                "checks": [asdict(c) for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def run_audit(cfg: AuditConfig | None = None) -> AuditReport:
    """Run every check on the fixed tiny-field fixtures."""
    cfg = cfg or AuditConfig()
    checks: list[CheckResult] = []

    for q, shape in ((5, (1, 1)), (7, (1, 1)), (7, (1, 2))):
        field = PrimeField(q)
        xs = list(range(1, q)) + ([0] if cfg.allow_zero_point else [])
        for x in xs:
            checks.append(check_masking_bijection(field, x, 2, shape, seed=cfg.seed))

    rng = np.random.default_rng(cfg.seed)
    for q, cols in ((5, 1), (7, 2)):
        field = PrimeField(q)
        A = FieldMatrix.random(field, 2, cols, rng)
        A2 = FieldMatrix.random(field, 2, cols, rng)
        while A2 == A:
            A2 = FieldMatrix.random(field, 2, cols, rng)
        checks.append(check_share_uniformity(field, A, A2, 3, 2))
    f61 = PrimeField(61)
    A = FieldMatrix(f61, [[1], [2]])
    A2 = FieldMatrix(f61, [[40], [59]])
    checks.append(check_share_uniformity(f61, A, A2, 5, 2, samples=max(cfg.samples, 1),
                                         seed=cfg.seed))

    checks.append(check_query_symmetry(samples=cfg.samples, seed=cfg.seed, threads=cfg.threads))

    field = PrimeField(97)
    params = CodeParams(field, 2, 3, 2, 12, 1, 4, 3, 4)
    jrng = np.random.default_rng([cfg.seed, 7])
    A = FieldMatrix.random(field, params.r, params.s, jrng)
    library = [FieldMatrix.random(field, params.s, params.t, jrng) for _ in range(params.M)]
    transcript = run_job(params, A, library, cfg.seed, threads=cfg.threads)
    checks.append(check_result_determinism(views_from_transcript(transcript), library))

    checks.append(check_worker_branch_free(seed=cfg.seed))
    return AuditReport(cfg.seed, checks)
