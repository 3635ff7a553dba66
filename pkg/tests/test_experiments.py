import math

import numpy as np
import pytest

from hdts.errors import ValidationError
from hdts.experiments import (ExperimentConfig, counterexample_demo,
                              coverage_experiment, ecdf_dump_rows, ga_distance,
                              ks_permutation_pvalue, mc_long_run_sigma,
                              mdep_rate_check, mdep_oracle_norm, rate_experiment,
                              two_sample_ks)
from hdts.longrun import true_sigma
from hdts.model import InnovationLaw, ProcessSpec
from hdts.rng import RngContract

RNG = RngContract(70)


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov machinery
# ---------------------------------------------------------------------------

def brute_force_ks(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    best = 0.0
    for u in np.concatenate([x, y]):
        d = abs(np.mean(x <= u) - np.mean(y <= u))
        best = max(best, d)
    return best


def test_ks_matches_brute_force_scan():
    gen = RNG.derive("ks").generator()
    for trial in range(8):
        n1 = int(gen.integers(5, 200))
        n2 = int(gen.integers(5, 200))
        x = gen.standard_normal(n1)
        y = gen.standard_normal(n2) + gen.uniform(-1.0, 1.0)
        if trial % 3 == 0:
            # inject ties across the two samples
            y[: min(n1, n2) // 2] = x[: min(n1, n2) // 2]
        assert two_sample_ks(x, y) == pytest.approx(brute_force_ks(x, y), abs=1e-12)


def test_ks_permutation_pvalue_behaviour():
    gen = RNG.derive("ksp").generator()
    same = ks_permutation_pvalue(gen.standard_normal(300),
                                 gen.standard_normal(300), 199,
                                 RNG.derive("perm-same"))
    assert same > 0.01
    shifted = ks_permutation_pvalue(gen.standard_normal(300),
                                    gen.standard_normal(300) + 2.0, 199,
                                    RNG.derive("perm-diff"))
    assert shifted <= 0.01


# ---------------------------------------------------------------------------
# Gaussian-approximation distance
# ---------------------------------------------------------------------------

def test_ga_distance_same_law_is_null():
    spec = ProcessSpec("iid", p=10)
    res = ga_distance(spec, 50, 5000, RNG.derive("ga-null"), n_perm=0)
    assert res.ks <= 0.04
    # both sides share one distribution, so the permutation test accepts
    res_p = ga_distance(spec, 50, 500, RNG.derive("ga-null-p"), n_perm=199)
    assert res_p.pvalue > 0.01


def test_ga_distance_degenerate_heavy_tail():
    law = InnovationLaw.symmetric_pareto(4.0, body="shell")
    spec = ProcessSpec("iid", p=1, innovation=law)
    res = ga_distance(spec, 1, 2000, RNG.derive("ga-deg"), n_perm=0)
    assert res.ks > 0.2


def test_ga_distance_guards():
    tar = ProcessSpec("threshold-ar", p=2)
    with pytest.raises(ValidationError, match="mc_long_run_sigma"):
        ga_distance(tar, 100, 200, RNG)


def test_mc_long_run_sigma_approximates_truth():
    spec = ProcessSpec("linear", p=3, alpha=2.0, K=50, h=1, rho=0.4)
    approx = mc_long_run_sigma(spec, length=200_000, rng=RNG.derive("oracle"))
    truth = true_sigma(spec)
    assert np.max(np.abs(approx - truth)) < 0.12 * np.max(np.abs(truth))


def test_ga_distance_threads_do_not_change_results():
    spec = ProcessSpec("linear", p=5, alpha=1.0, K=20, h=0)
    a = ga_distance(spec, 100, 200, RngContract(77), n_perm=0, threads=1)
    b = ga_distance(spec, 100, 200, RngContract(77), n_perm=0, threads=8)
    assert np.array_equal(a.sample_stats, b.sample_stats)
    assert a.ks == b.ks


# ---------------------------------------------------------------------------
# coverage experiment
# ---------------------------------------------------------------------------

def test_coverage_requires_enough_replications():
    with pytest.raises(ValidationError, match="R >= 200"):
        ExperimentConfig(spec=ProcessSpec("iid", p=3), kind="coverage", R=50)


def test_coverage_median_level_cell():
    cfg = ExperimentConfig(spec=ProcessSpec("iid", p=10), kind="coverage",
                           R=2000, B=2000, base_seed=102, n_list=[500],
                           M_list=[1], theta_list=[0.5], threads=2)
    rep = coverage_experiment(cfg)
    assert abs(rep.rows[0]["coverage"] - 0.5) <= 0.03
    assert rep.rows[0]["coverage_se"] < 0.012


def test_coverage_undercovers_with_misspecified_tiny_M():
    # strong dependence with M = 1 ignores almost all the long-run variance
    spec = ProcessSpec("linear", p=10, alpha=0.2, K=400, h=0)
    cfg = ExperimentConfig(spec=spec, kind="coverage", R=400, B=2000,
                           base_seed=103, n_list=[500], M_list=[1],
                           theta_list=[0.95], threads=2)
    rep = coverage_experiment(cfg)
    row = rep.rows[0]
    assert row["coverage"] < 0.95 - 3.0 * max(row["coverage_se"], 1e-3)


def test_experiment_report_csv_is_stable():
    cfg = ExperimentConfig(spec=ProcessSpec("iid", p=4), kind="coverage",
                           R=200, B=1000, base_seed=9, n_list=[100],
                           M_list=[1], theta_list=[0.9])
    a = coverage_experiment(cfg).to_csv_text()
    b = coverage_experiment(cfg).to_csv_text()
    assert a == b
    assert a.splitlines()[0].startswith("n,p,M,theta")


# ---------------------------------------------------------------------------
# estimator rate experiment
# ---------------------------------------------------------------------------

def test_rate_experiment_iid_pure_clt_slope():
    spec = ProcessSpec("iid", p=4)
    res = rate_experiment(spec, [512, 1024, 2048, 4096, 8192], 60,
                          RNG.derive("rate-iid"), q=8.0,
                          M_rule=lambda n: 1, threads=2)
    assert res.empirical_slope == pytest.approx(-0.5, abs=0.15)


def test_rate_experiment_grid_guard():
    with pytest.raises(ValidationError, match="3 points"):
        rate_experiment(ProcessSpec("iid", p=2), [100, 200], 10, RNG)


# ---------------------------------------------------------------------------
# m-dependence decay
# ---------------------------------------------------------------------------

def test_mdep_oracle_matches_na_direct_sum():
    # independent brute-force evaluation of the coefficient identity
    spec = ProcessSpec("linear", p=1, alpha=1.0, K=12)
    n, m = 40, 4
    c = spec.lag_weights()
    D = {}
    for t in range(-12, n):
        D[t] = sum(c[k] for k in range(m + 1, 13) if 0 <= t + k <= n - 1)
    want = math.sqrt(sum(v * v for v in D.values()))
    got = mdep_oracle_norm(spec, n, m, 2.0)[0]
    assert got == pytest.approx(want, rel=1e-12)


def test_mdep_exact_zero_beyond_K_and_for_iid():
    spec = ProcessSpec("linear", p=1, alpha=1.0, K=6)
    assert mdep_oracle_norm(spec, 100, 6, 2.0)[0] == 0.0
    res = mdep_rate_check(ProcessSpec("iid", p=2), 2.0, 1.0, [1, 2, 4], 120,
                          RNG.derive("mdep-iid"), n=64)
    assert np.all(res.mc_norm == 0.0) and np.all(res.oracle_norm == 0.0)
    assert math.isnan(res.slope)


def test_mdep_rate_check_small_run():
    spec = ProcessSpec("linear", p=1, alpha=1.0, K=500)
    res = mdep_rate_check(spec, 2.0, 1.0, [8, 16, 32, 64], 150,
                          RNG.derive("mdep"), n=1024, threads=2)
    assert np.all(np.abs(res.mc_norm - res.oracle_norm) < 3.0 * res.mc_se)
    assert res.slope == pytest.approx(-1.0, abs=0.2)
    with pytest.raises(ValidationError, match="m-grid"):
        mdep_rate_check(spec, 2.0, 1.0, [4, 8], 100, RNG)


def test_mdep_module_example_alpha_one():
    # arithmetic grid m = 2, 4, ..., 64 at n = 4096, R = 500
    spec = ProcessSpec("linear", p=1, alpha=1.0, K=2000)
    res = mdep_rate_check(spec, 2.0, 1.0, list(range(2, 65, 2)), 500,
                          RNG.derive("mdep-a1"), n=4096, threads=2)
    assert res.slope == pytest.approx(-1.0, abs=0.15)


# ---------------------------------------------------------------------------
# heavy-tail failure demo
# ---------------------------------------------------------------------------

def test_counterexample_compliant_cell():
    res = counterexample_demo(8.0, 4096, [16], 800, RNG.derive("ctrex-ok"))
    assert res.rows[0]["ks"] <= 0.1


def test_counterexample_degenerate_cell():
    # n = p = 1: the statistic is |X| itself, so the KS distance is the raw
    # law against the half-normal, which is large for heavy tails
    res = counterexample_demo(4.0, 1, [1], 1500, RNG.derive("ctrex-deg"))
    assert res.rows[0]["ks"] > 0.2


def test_counterexample_guards_and_diagnostics():
    with pytest.raises(ValidationError, match="tail index"):
        counterexample_demo(2.0, 64, [16], 200, RNG)
    res = counterexample_demo(4.0, 64, [32], 200, RNG.derive("ctrex-d"))
    row = res.rows[0]
    assert row["body"] == "shell"
    assert row["p_tail_gauss"] == pytest.approx(
        32 * 2.0 * (1.0 - 0.5 * (1 + math.erf(math.sqrt(2 * math.log(32)) / math.sqrt(2)))),
        rel=1e-10)
    assert set(ecdf_dump_rows(*res.samples[32])[0]) == {"u", "ecdf_sample",
                                                        "ecdf_gauss"}
