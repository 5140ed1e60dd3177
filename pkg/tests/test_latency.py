import csv
import io
import math

import numpy as np
import pytest
from scipy import integrate

from pspc.latency import (
    CSV_COLUMNS,
    CSV_SCHEMA,
    LatencyParams,
    SchemeSpec,
    analytic_conventional,
    analytic_private_secure,
    exact_mean,
    expected_order_statistic,
    fig2_sweep,
    fig3_sweep,
    grouped_baseline_simulate,
    harmonic,
    mc_samples,
    mc_simulate,
    relative_reduction,
    rows_to_csv,
    sweep_point,
)


def order_statistic_by_quadrature(N, K, mu):
    coef = math.comb(N, K) * K

    def density(x):
        F = 1 - math.exp(-mu * x)
        return coef * F ** (K - 1) * (1 - F) ** (N - K) * mu * math.exp(-mu * x)

    return integrate.quad(lambda x: x * density(x), 0, math.inf, limit=200)[0]


@pytest.mark.parametrize("N,K,mu", [(12, 9, 0.1), (12, 4, 1.0), (7, 7, 2.5), (20, 1, 0.3)])
def test_order_statistic_matches_quadrature(N, K, mu):
    assert expected_order_statistic(N, K, mu) == pytest.approx(
        order_statistic_by_quadrature(N, K, mu), rel=1e-8)


def test_harmonic_small():
    assert harmonic(0) == 0 and harmonic(3) == pytest.approx(11 / 6)


def test_conventional_formula_value():
    lp = LatencyParams(mu=0.1, gamma=0.1, N=12)
    assert analytic_conventional(lp, 9) == pytest.approx((0.1 + 10 * math.log(4)) / 9, rel=1e-12)
    assert analytic_conventional(lp, 9) == pytest.approx(1.5514, abs=1e-3)


def test_conventional_vanishing_straggling():
    lp = LatencyParams(mu=1e12, gamma=0.5, N=12)
    assert analytic_conventional(lp, 5) == pytest.approx(0.5 / 5, rel=1e-9)


def test_conventional_diverges_at_n():
    with pytest.raises(ValueError):
        analytic_conventional(LatencyParams(1, 0, 12), 12)


def test_private_secure_formula_values():
    lp = LatencyParams(mu=0.1, gamma=0.1, N=12)
    assert analytic_private_secure(lp, 2, 3) == pytest.approx(2.3272, abs=1e-3)
    lp2 = LatencyParams(mu=10, gamma=1, N=12)
    assert analytic_private_secure(lp2, 1, 2) == pytest.approx(0.5203, abs=1e-4)


def test_private_secure_rejects_threshold_at_n():
    with pytest.raises(ValueError):
        analytic_private_secure(LatencyParams(1, 0, 12), 2, 4)


@pytest.mark.parametrize("m,n", [(1, 2), (2, 3), (1, 5), (3, 2)])
def test_private_secure_scales_conventional(m, n):
    lp = LatencyParams(mu=0.7, gamma=0.3, N=30)
    ratio = analytic_private_secure(lp, m, n) / analytic_conventional(lp, n * (m + 1))
    assert ratio == pytest.approx(n / (n - 1), rel=1e-14)


def test_conventional_ordering_matches_simulation():
    lp = LatencyParams(0.1, 0.1, 12, trials=20_000, seed=3)
    a6, a9 = analytic_conventional(lp, 6), analytic_conventional(lp, 9)
    s6 = mc_simulate(SchemeSpec("conventional", 12, K_override=6), lp).mean
    s9 = mc_simulate(SchemeSpec("conventional", 12, K_override=9), lp).mean
    assert (a6 < a9) == (s6 < s9)


def test_private_secure_simulation_near_exact_mean():
    lp = LatencyParams(0.1, 0.1, 12, trials=200_000, seed=1)
    spec = SchemeSpec("private_secure", 12, 2, 3, 2)
    res = mc_simulate(spec, lp)
    assert res.mean == pytest.approx(exact_mean(spec, lp), rel=0.02)
    assert res.ci_low < exact_mean(spec, lp) < res.ci_high


def test_degenerate_distribution():
    lp = LatencyParams(1e9, 0.0, 12, trials=1000)
    assert mc_simulate(SchemeSpec("private_secure", 12, 1, 2), lp).mean < 1e-8


def test_single_group_is_private_secure():
    lp = LatencyParams(0.3, 0.2, 12, trials=5000, seed=8)
    ps = mc_samples(SchemeSpec("private_secure", 12, 2, 2), lp)
    one = mc_samples(SchemeSpec("grouped_baseline", 12, 2, 2, groups=1), lp)
    np.testing.assert_array_equal(ps, one)


@pytest.mark.parametrize("m,n,mu,gamma", [(1, 2, 0.1, 0.1), (2, 2, 1.0, 1.0), (1, 3, 0.5, 0.0),
                                         (4, 2, 0.1, 0.1)])
def test_grouped_dominates(m, n, mu, gamma):
    lp = LatencyParams(mu, gamma, 12, trials=20_000, seed=2)
    ps = mc_samples(SchemeSpec("private_secure", 12, m, n), lp)
    gb = mc_samples(SchemeSpec("grouped_baseline", 12, m, n), lp)
    # pathwise: the slowest group's quota is never earlier than the global K-th
    assert np.all(gb >= ps)
    assert gb.mean() > ps.mean()


def test_grouped_requires_divisibility():
    with pytest.raises(ValueError):
        grouped_baseline_simulate(LatencyParams(1, 1, 10), 1, 3, 4, 10)


def test_shift_is_a_floor():
    lp = LatencyParams(0.5, 2.0, 12, trials=10_000, seed=4)
    for spec in (SchemeSpec("private_secure", 12, 1, 2), SchemeSpec("grouped_baseline", 12, 2, 2),
                 SchemeSpec("conventional", 12, K_override=7)):
        assert mc_samples(spec, lp).min() >= spec.workload * lp.gamma


def test_thread_count_does_not_change_samples():
    lp = LatencyParams(0.1, 0.1, 12, trials=50_001, seed=11)
    spec = SchemeSpec("grouped_baseline", 12, 1, 2)
    np.testing.assert_array_equal(mc_samples(spec, lp, threads=1), mc_samples(spec, lp, threads=4))


@pytest.mark.parametrize("kw", [dict(mu=0), dict(gamma=-1), dict(trials=0)])
def test_latency_params_validation(kw):
    base = dict(mu=1.0, gamma=0.0, N=12)
    base.update(kw)
    with pytest.raises(ValueError):
        LatencyParams(**base)


def test_scheme_spec_validation():
    with pytest.raises(ValueError):
        SchemeSpec("private_secure", 5, 2, 2)
    with pytest.raises(ValueError):
        SchemeSpec("nope", 12)
    with pytest.raises(ValueError):
        SchemeSpec("private_secure", 12, K_override=3)


def _parse(text):
    lines = text.splitlines()
    assert lines[0] == f"# schema={CSV_SCHEMA}"
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_fig2_csv_layout():
    rows = fig2_sweep(trials=2000, seed=0)
    table = _parse(rows_to_csv(rows))
    assert list(table[0]) == CSV_COLUMNS
    for scheme in ("conventional", "private_secure", "grouped_baseline"):
        assert [int(r["K"]) for r in table if r["scheme"] == scheme] == [4, 6, 8, 10]
    assert all(r["note"] == "reconstructed baseline" for r in table
               if r["scheme"] == "grouped_baseline")


def test_fig3_csv_is_log_spaced():
    table = _parse(rows_to_csv(fig3_sweep(trials=1000)))
    mus = sorted({float(r["mu"]) for r in table})
    assert len(mus) == 9
    assert mus[0] == pytest.approx(0.1) and mus[-1] == pytest.approx(10)
    assert np.allclose(np.diff(np.log10(mus)), 0.25)


def test_single_point_matches_direct_calls():
    rows = sweep_point(12, 4, 2, 3, 0.1, 0.1, trials=1000, seed=0)
    lp = LatencyParams(0.1, 0.1, 12)
    by = {r.scheme: r for r in rows}
    assert by["conventional"].analytic_time == analytic_conventional(lp, 9)
    assert by["private_secure"].analytic_time == analytic_private_secure(lp, 2, 3)


def test_divergent_point_becomes_warning_row():
    rows = sweep_point(12, 4, 5, 2, 0.1, 0.1, trials=100, seed=0)
    assert all(r.note.startswith("skipped") and r.mc_mean is None for r in rows)


def test_relative_reduction_positive():
    red = relative_reduction(fig2_sweep(trials=5000, seed=1))
    assert set(red) == {4, 6, 8, 10}
    assert all(v > 0 for v in red.values())
