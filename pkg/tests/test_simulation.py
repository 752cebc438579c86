import math

import numpy as np
import pytest
from scipy import integrate, stats

from semipc.core import DataError
from semipc.design import DesignOperator
from semipc.simulation import (
    SimConfig,
    compare_estimators,
    draw_noise,
    generate_dataset,
    qq_export,
    qq_pairs,
    run_monte_carlo,
    sparse_schedule,
)


def test_mix_norm_moments():
    x = draw_noise("mix_norm", 400_000, np.random.default_rng(1))
    assert abs(x.mean()) < 0.01 and abs(x.var() - 1) < 0.01


def test_mix_norm_analytic_moments():
    w, mu, var = (0.75, 0.25), (-0.3, 0.9), (0.91, 0.19)
    mean = sum(a * m for a, m in zip(w, mu))
    second = sum(a * (v + m * m) for a, m, v in zip(w, mu, var))
    assert mean == pytest.approx(0.0, abs=1e-15) and second == pytest.approx(1.0, abs=1e-15)


def test_logistic_unit_variance():
    x = draw_noise("logistic_unit_var", 1_000_000, np.random.default_rng(2))
    assert abs(x.var() - 1) < 0.01


def test_unknown_noise():
    with pytest.raises(ValueError):
        SimConfig(n=5, noise="cauchy")


def test_design_truth():
    cfg = SimConfig(n=50, T=3)
    assert cfg.tracked == (1, 12, 25, 37, 50)
    assert SimConfig(n=100, T=1).tracked == (1, 25, 50, 75, 100)
    assert cfg.theta_star[24] == pytest.approx(0.2 * 25 * math.log(50) / 50)
    assert cfg.parameter_names()[-2:] == ["eta1", "eta2"]


def test_same_seed_same_dataset():
    cfg = SimConfig(n=7, T=2, seed=42)
    a, b = generate_dataset(cfg, 3), generate_dataset(cfg, 3)
    for f in ("head", "tail", "outcome", "x0", "z"):
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = generate_dataset(cfg, 4)
    assert not np.array_equal(a.x0, c.x0)


def test_covariate_design_moments():
    cfg = SimConfig(n=200, T=2, seed=5)
    ds = generate_dataset(cfg, 0)
    np.testing.assert_allclose(np.cov(ds.z.T), cfg.z_cov, atol=0.02)
    resid = ds.x0 - ds.z @ np.array(cfg.b)
    assert abs(resid.std() - 1) < 0.01


def test_sparse_expected_total():
    n, T = 100, 3
    lo, hi = 1 / math.sqrt(n), math.log(n) / math.sqrt(n)
    mean_p = integrate.quad(lambda p: min(p, 1.0), lo, hi)[0] / (hi - lo)
    expected = DesignOperator.complete(n).n_pairs * T * mean_p
    counts = sparse_schedule(n, T, 17)
    assert abs(counts.sum() - expected) <= 0.05 * expected


def test_sparse_needs_occasions():
    with pytest.raises(DataError):
        sparse_schedule(10, 0, 1)


def test_sparse_forced_full_probability_gives_complete_design():
    counts = sparse_schedule(6, 2, 3, prob_range=(1.0, 1.0))
    assert np.all(counts == 2)
    op = DesignOperator.from_pairs(6, DesignOperator.complete(6).pairs[counts > 0])
    assert op.mode == "closed_form"


def test_sparse_dataset_is_connected_and_general():
    ds = generate_dataset(SimConfig(n=40, T=3, seed=2, sparse=True), 0)
    op = DesignOperator.from_dataset(ds)
    assert op.mode == "general" and op.is_connected()


SMALL = dict(n=6, T=2, reps=12, seed=3, bandwidth=0.8)


def test_monte_carlo_deterministic():
    a = run_monte_carlo(SimConfig(**SMALL)).metrics()
    b = run_monte_carlo(SimConfig(**SMALL)).metrics()
    assert a == b


def test_parallel_matches_serial():
    a = run_monte_carlo(SimConfig(**SMALL))
    b = run_monte_carlo(SimConfig(**SMALL), workers=2)
    assert np.array_equal(a.estimates, b.estimates)


def test_coverage_recomputable_from_audit_trail():
    res = run_monte_carlo(SimConfig(**SMALL))
    m = res.metrics()
    for c, name in enumerate(res.names):
        hits = np.abs(res.estimates[:, c] - res.truth[c]) <= 1.959963984540054 * res.std_errors[:, c]
        assert m.row(name).cp == pytest.approx(hits.mean())
        assert 0 <= m.row(name).cp <= 1


def test_single_replication_has_no_sd():
    res = run_monte_carlo(SimConfig(**{**SMALL, "reps": 1}))
    row = res.metrics().rows[0]
    assert math.isnan(row.sd)
    assert row.bias == pytest.approx(res.estimates[0, 0] - res.truth[0])


def test_zero_replication_comparison_is_empty():
    table = compare_estimators(SimConfig(**{**SMALL, "reps": 0}))
    assert table.semi_reps == 0 and table.mle_reps == 0
    assert np.all(np.isnan(table.semi_bias))


def test_comparison_small_run():
    table = compare_estimators(SimConfig(**{**SMALL, "reps": 3, "T": 4}))
    assert table.semi_reps + table.semi_excluded == 3
    assert table.mle_reps + table.mle_excluded == 3
    assert len(table.names) == len(table.truth)


def test_qq_gaussian_sample():
    v = np.random.default_rng(4).standard_normal(10_000)
    qq = qq_pairs(v)
    assert qq.sample.size == 10_000
    probs = (np.arange(1, 10_001) - 0.5) / 10_000
    assert np.max(np.abs(stats.norm.cdf(qq.sample) - probs)) < 0.05
    central = slice(500, 9_500)
    assert np.max(np.abs(qq.sample[central] - qq.theoretical[central])) < 0.05


def test_qq_degenerate_and_refusal():
    assert qq_pairs(np.ones(20)).degenerate
    with pytest.raises(ValueError):
        qq_pairs(np.arange(9.0))


def test_qq_export_row_count():
    res = run_monte_carlo(SimConfig(**SMALL))
    qq = qq_export(res, "eta1")
    assert qq.sample.size == res.estimates.shape[0] == 12
    with pytest.raises(KeyError):
        qq_export(res, "eta9")
