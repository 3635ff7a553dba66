"""Monte Carlo harness: Gaussian-approximation quality, CI coverage,
estimator rates, m-dependence decay, and the heavy-tail failure regime.

Every experiment derives per-replication streams from its base seed, so
reports are bit-reproducible for a fixed configuration regardless of the
number of worker threads.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .errors import ValidationError
from .gboot import psd_sqrt, simultaneous_ci
from .longrun import (default_block_length, plan_blocks, sigma_tilde,
                      theoretical_rate, true_sigma)
from .depmeasure import closed_form_profile
from .model import InnovationLaw, ProcessSpec, m_dependent_approx, simulate
from .rng import RngContract
from .util import fit_loglog_slope, run_indexed

TOOL_VERSION = "0.1.0"


# ---------------------------------------------------------------------------
# Two-sample Kolmogorov-Smirnov distance
# ---------------------------------------------------------------------------

def two_sample_ks(x, y) -> float:
    """sup_u |F_x(u) - F_y(u)| over the pooled sample points."""
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    if x.size == 0 or y.size == 0:
        raise ValidationError("KS distance needs non-empty samples")
    pooled = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, pooled, side="right") / x.size
    cdf_y = np.searchsorted(y, pooled, side="right") / y.size
    return float(np.max(np.abs(cdf_x - cdf_y)))


def ks_permutation_pvalue(x, y, n_perm: int, rng: RngContract) -> float:
    """Permutation p-value for the two-sample KS distance."""
    if n_perm < 1:
        raise ValidationError(f"need n_perm >= 1, got {n_perm}")
    obs = two_sample_ks(x, y)
    pooled = np.concatenate([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
    n1 = np.asarray(x).size
    gen = rng.derive("ks-perm").generator()
    exceed = 0
    for _ in range(n_perm):
        perm = gen.permutation(pooled)
        if two_sample_ks(perm[:n1], perm[n1:]) >= obs - 1e-15:
            exceed += 1
    return (exceed + 1) / (n_perm + 1)


# ---------------------------------------------------------------------------
# Gaussian-approximation distance
# ---------------------------------------------------------------------------

@dataclass
class GaDistanceResult:
    ks: float
    pvalue: float | None
    n: int
    p: int
    R: int
    sample_stats: np.ndarray     # sqrt(n) |D0^{-1} xbar|_inf per replication
    gauss_stats: np.ndarray      # |D0^{-1} Z|_inf draws


def mc_long_run_sigma(spec: ProcessSpec, length: int = 10 ** 6,
                      M: int | None = None,
                      rng: RngContract | None = None) -> np.ndarray:
    """Approximate long-run covariance from one long path (batched means).

    Fallback oracle for families without a closed form; the result is an
    estimate, not the exact matrix.
    """
    rng = rng if rng is not None else RngContract(0)
    panel = simulate(spec, length, rng.derive("long-path"))
    M = M if M is not None else default_block_length(length)
    return sigma_tilde(panel, plan_blocks(length, M)).sigma


def ga_distance(spec: ProcessSpec, n: int, R: int, rng: RngContract,
                sigma: np.ndarray | None = None, n_perm: int = 200,
                threads: int = 1) -> GaDistanceResult:
    """Two-sample KS distance between the normalized max statistic and its
    Gaussian analogue.

    One sample holds R replications of sqrt(n)|D0^{-1} xbar|_inf; the other
    holds R draws of |D0^{-1} Z|_inf with Z ~ N(0, Sigma).  Sigma comes
    from the closed form for iid/linear specs; other families must pass an
    (approximate) sigma, e.g. from mc_long_run_sigma.
    """
    if sigma is None:
        if spec.family not in ("iid", "linear"):
            raise ValidationError(
                f"no closed-form Sigma for family {spec.family!r}; pass "
                "sigma=mc_long_run_sigma(spec, ...) explicitly")
        sigma = true_sigma(spec)
    d0 = np.sqrt(np.diag(sigma))
    if np.min(d0) <= 0:
        raise ValidationError("Sigma has a degenerate diagonal")

    def one_rep(r: int) -> float:
        panel = simulate(spec, n, rng.derive("ga-panel", r))
        return float(np.max(np.abs(panel.data.mean(axis=0)) / d0) * math.sqrt(n))

    sample_stats = np.array(run_indexed(one_rep, R, threads))
    root = psd_sqrt(sigma).root
    eta = rng.derive("ga-gauss").generator().standard_normal((R, sigma.shape[0]))
    gauss_stats = np.max(np.abs(eta @ root.T) / d0, axis=1)
    ks = two_sample_ks(sample_stats, gauss_stats)
    pval = ks_permutation_pvalue(sample_stats, gauss_stats, n_perm, rng) \
        if n_perm > 0 else None
    return GaDistanceResult(ks=ks, pvalue=pval, n=n, p=spec.p, R=R,
                            sample_stats=sample_stats, gauss_stats=gauss_stats)


# ---------------------------------------------------------------------------
# Experiment configuration / report plumbing
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Grid-shaped Monte Carlo experiment description."""

    spec: ProcessSpec
    kind: str = "coverage"
    R: int = 200
    B: int = 2000
    base_seed: int = 0
    n_list: list[int] = field(default_factory=lambda: [500])
    p_list: list[int] | None = None
    M_list: list[int | None] = field(default_factory=lambda: [None])
    theta_list: list[float] = field(default_factory=lambda: [0.95])
    n_grid: list[int] = field(default_factory=list)
    m_grid: list[int] = field(default_factory=list)
    p_grid: list[int] = field(default_factory=list)
    q: float = 8.0
    n_perm: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.kind == "coverage" and self.R < 200:
            raise ValidationError(
                f"coverage runs need R >= 200 replications, got {self.R}")
        if not self.n_list or not self.M_list or not self.theta_list:
            raise ValidationError("experiment grid must be nonempty")

    def cells(self):
        p_list = self.p_list if self.p_list else [self.spec.p]
        for n in self.n_list:
            for p in p_list:
                for M in self.M_list:
                    for theta in self.theta_list:
                        yield n, p, M, theta


@dataclass
class ExperimentReport:
    kind: str
    rows: list[dict]
    base_seed: int
    runtimes: list[float]
    meta: dict = field(default_factory=dict)

    def columns(self) -> list[str]:
        return list(self.rows[0].keys()) if self.rows else []

    def to_csv_text(self) -> str:
        cols = self.columns()
        lines = [",".join(cols)]
        for row in self.rows:
            cells = []
            for c in cols:
                v = row[c]
                cells.append(f"{v:.17g}" if isinstance(v, float) else str(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"

    def manifest_dict(self) -> dict:
        return {"kind": self.kind, "tool_version": TOOL_VERSION,
                "base_seed": self.base_seed, "meta": self.meta,
                "cell_runtimes_sec": self.runtimes}


# ---------------------------------------------------------------------------
# Coverage
# ---------------------------------------------------------------------------

def coverage_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Empirical simultaneous coverage of the zero mean vector per grid cell."""
    rows = []
    runtimes = []
    base = RngContract(config.base_seed)
    for ci_idx, (n, p, M, theta) in enumerate(config.cells()):
        spec = replace(config.spec, p=p)
        t0 = time.perf_counter()

        def one_rep(r: int, _spec=spec, _n=n, _M=M, _theta=theta, _c=ci_idx):
            cell_rng = base.derive("coverage-cell", _c)
            panel = simulate(_spec, _n, cell_rng.derive("panel", r))
            report = simultaneous_ci(panel, _theta, _M, config.B,
                                     cell_rng.derive("boot", r))
            return report.covers(np.zeros(_spec.p)), float(np.median(report.half_widths()))

        out = run_indexed(one_rep, config.R, config.threads)
        covered = np.array([o[0] for o in out], dtype=float)
        widths = np.array([o[1] for o in out])
        cov = float(covered.mean())
        rows.append({
            "n": n, "p": p, "M": 0 if M is None else M, "theta": theta,
            "R": config.R, "B": config.B, "coverage": cov,
            "coverage_se": float(math.sqrt(cov * (1.0 - cov) / config.R)),
            "median_halfwidth": float(np.median(widths)),
        })
        runtimes.append(time.perf_counter() - t0)
    return ExperimentReport(kind="coverage", rows=rows,
                            base_seed=config.base_seed, runtimes=runtimes,
                            meta={"family": config.spec.family})


# ---------------------------------------------------------------------------
# Estimator rate
# ---------------------------------------------------------------------------

@dataclass
class RateResult:
    n_grid: list[int]
    median_err: np.ndarray
    r_n: np.ndarray
    empirical_slope: float
    theoretical_slope: float
    rows: list[dict]


def rate_experiment(spec: ProcessSpec, n_grid, R: int, rng: RngContract,
                    q: float = 8.0, M_rule=None, threads: int = 1) -> RateResult:
    """Median |sigma_tilde - Sigma|_inf over an n-grid vs the rate bound.

    Fits log-log slopes of both curves on the same grid; M defaults to
    floor(n^(1/3)) unless M_rule(n) is supplied.
    """
    n_grid = list(n_grid)
    if len(n_grid) < 3:
        raise ValidationError(f"need an n-grid with >= 3 points, got {len(n_grid)}")
    sigma = true_sigma(spec)
    profile = closed_form_profile(spec, q, spec.alpha)
    rule = M_rule if M_rule is not None else default_block_length
    med = np.empty(len(n_grid))
    rn = np.empty(len(n_grid))
    rows = []
    for gi, n in enumerate(n_grid):
        M = rule(n)
        plan = plan_blocks(n, M)

        def one_rep(r: int, _n=n, _plan=plan, _gi=gi):
            panel = simulate(spec, _n, rng.derive("rate-panel", _gi * 10 ** 6 + r))
            est = sigma_tilde(panel, _plan)
            return float(np.max(np.abs(est.sigma - sigma)))

        errs = np.array(run_indexed(one_rep, R, threads))
        med[gi] = float(np.median(errs))
        rn[gi] = theoretical_rate(profile, n, M).r_n
        rows.append({"n": n, "M": M, "median_err": med[gi], "r_n": rn[gi], "R": R})
    emp = fit_loglog_slope(n_grid, med)
    theo = fit_loglog_slope(n_grid, rn)
    return RateResult(n_grid=n_grid, median_err=med, r_n=rn,
                      empirical_slope=emp, theoretical_slope=theo, rows=rows)


# ---------------------------------------------------------------------------
# m-dependence decay
# ---------------------------------------------------------------------------

def mdep_oracle_norm(spec: ProcessSpec, n: int, m: int, q: float = 2.0) -> np.ndarray:
    """Exact ||S_n - S_{n,m}||_q per coordinate for the linear family.

    The difference is sum_t D_t * (B eps_t)_j with deterministic weights
    D_t; for q = 2 only the innovation variance enters, for other q the
    innovations must be Gaussian.
    """
    if spec.family == "iid":
        return np.zeros(spec.p)
    if spec.family != "linear":
        raise ValidationError("the closed-form oracle needs the linear family")
    law = spec.innovation
    if q != 2.0 and law.kind != "standard-gaussian":
        raise ValidationError("q != 2 oracle requires Gaussian innovations")
    c = spec.lag_weights()
    K = spec.K
    cs = np.concatenate([[0.0], np.cumsum(c)])   # cs[k+1] = sum_{j<=k} c_j

    def seg_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """sum_{k=a..b} c_k, empty when a > b."""
        a = np.clip(a, 0, K + 1)
        b = np.clip(b + 1, 0, K + 1)
        return np.where(b > a, cs[b] - cs[a], 0.0)

    t = np.arange(-K, n)
    lo = np.maximum(m + 1, -t)
    hi = np.minimum(K, n - 1 - t)
    D = seg_sum(lo, hi)
    ssq = float(np.sum(D ** 2))
    b_row = np.linalg.norm(spec.cross_mixer(), axis=1)
    scale = math.sqrt(law.variance * ssq) * b_row
    if q == 2.0:
        return scale
    from .model import gaussian_abs_moment_root
    return gaussian_abs_moment_root(q) * scale


@dataclass
class MdepResult:
    m_grid: list[int]
    mc_norm: np.ndarray          # max_j MC ||S_n - S_{n,m}||_q / sqrt(n)
    oracle_norm: np.ndarray
    mc_se: np.ndarray
    slope: float
    target_slope: float
    rows: list[dict]


def mdep_rate_check(spec: ProcessSpec, q: float, alpha: float, m_grid,
                    R: int, rng: RngContract, n: int = 4096,
                    threads: int = 1) -> MdepResult:
    """Monte Carlo decay of ||S_n - S_{n,m}||_q / sqrt(n) against m^-alpha.

    Restricted to iid/linear families, where the m-dependent approximation
    is the exact conditional expectation; for iid every difference is
    exactly zero and the fitted slope is NaN.
    """
    if spec.family not in ("iid", "linear"):
        raise ValidationError("mdep_rate_check needs the iid or linear family")
    m_grid = list(m_grid)
    if len(m_grid) < 3:
        raise ValidationError(f"need an m-grid with >= 3 points, got {len(m_grid)}")

    def one_rep(r: int) -> np.ndarray:
        panel = simulate(spec, n, rng.derive("mdep-panel", r))
        s_full = panel.data.sum(axis=0)
        out = np.empty((len(m_grid), spec.p))
        for mi, m in enumerate(m_grid):
            approx = m_dependent_approx(spec, panel.innovations, m)
            out[mi] = s_full - approx.data.sum(axis=0)
        return out

    diffs = np.stack(run_indexed(one_rep, R, threads))       # (R, |grid|, p)
    mom = np.mean(np.abs(diffs) ** q, axis=0)
    norms = mom ** (1.0 / q) / math.sqrt(n)
    # delta-method SE of the q-th root of the moment, per (m, j)
    mom_se = np.std(np.abs(diffs) ** q, axis=0, ddof=1) / math.sqrt(R)
    norm_se = np.zeros_like(mom)
    pos = mom > 0
    norm_se[pos] = mom[pos] ** (1.0 / q - 1.0) / q * mom_se[pos] / math.sqrt(n)

    j_star = np.argmax(norms, axis=1)
    mc = norms[np.arange(len(m_grid)), j_star]
    se = norm_se[np.arange(len(m_grid)), j_star]
    oracle = np.array([np.max(mdep_oracle_norm(spec, n, m, q)) for m in m_grid]) \
        / math.sqrt(n)
    slope = fit_loglog_slope(m_grid, mc) if np.all(mc > 0) else float("nan")
    rows = [{"m": m, "mc_norm": float(mc[i]), "oracle_norm": float(oracle[i]),
             "mc_se": float(se[i])} for i, m in enumerate(m_grid)]
    return MdepResult(m_grid=m_grid, mc_norm=mc, oracle_norm=oracle, mc_se=se,
                      slope=slope, target_slope=-alpha, rows=rows)


# ---------------------------------------------------------------------------
# Heavy-tail failure regime
# ---------------------------------------------------------------------------

@dataclass
class CounterexampleResult:
    rows: list[dict]
    samples: dict                # p -> (sample_stats, gauss_stats)


def counterexample_demo(tail_index: float, n: int, p_grid, R: int,
                        rng: RngContract, u0: float | None = None,
                        body: str = "shell",
                        threads: int = 1) -> CounterexampleResult:
    """KS trajectory of the max statistic under heavy-tailed iid panels.

    For each p, compares sqrt(n)|xbar|_inf samples against |Z|_inf draws
    (Z standard normal in R^p; the innovation law has unit variance by
    construction), and reports the diagnostics p*P(column sum >= sqrt(n) u)
    and p*P(|Z_1| >= u) at u = sqrt(2 log p).

    The default body="shell" puts the free below-threshold mass right under
    u0; with the uniform body the excess over the Gaussian tail is far too
    small to move the maximum at desk-scale (n, p).
    """
    if tail_index <= 2:
        raise ValidationError(f"tail index must exceed 2, got {tail_index}")
    kwargs = {"body": body} if u0 is None else {"u0": u0, "body": body}
    law = InnovationLaw.symmetric_pareto(tail_index, **kwargs)
    rows = []
    samples = {}
    for pi, p in enumerate(p_grid):
        spec = ProcessSpec("iid", p=p, innovation=law)
        u = math.sqrt(2.0 * math.log(p))

        def one_rep(r: int, _spec=spec, _pi=pi, _u=u):
            panel = simulate(_spec, n, rng.derive("ctrex-panel", _pi * 10 ** 6 + r))
            stats = math.sqrt(n) * panel.data.mean(axis=0)
            return float(np.max(np.abs(stats))), int(np.sum(stats >= _u))

        out = run_indexed(one_rep, R, threads)
        sample_stats = np.array([o[0] for o in out])
        tail_hits = sum(o[1] for o in out)
        eta = rng.derive("ctrex-gauss", pi).generator().standard_normal((R, p))
        gauss_stats = np.max(np.abs(eta), axis=1)
        ks = two_sample_ks(sample_stats, gauss_stats)
        rows.append({
            "p": p, "n": n, "R": R, "tail_index": tail_index, "body": body,
            "ks": ks,
            "p_tail_emp": p * tail_hits / (R * p),
            "p_tail_gauss": p * 2.0 * float(norm.sf(u)),
        })
        samples[p] = (sample_stats, gauss_stats)
    return CounterexampleResult(rows=rows, samples=samples)


def ecdf_dump_rows(sample, gauss) -> list[dict]:
    """Rows (u, ecdf_sample, ecdf_gauss) on the pooled sorted grid."""
    sample = np.sort(np.asarray(sample, dtype=float))
    gauss = np.sort(np.asarray(gauss, dtype=float))
    pooled = np.unique(np.concatenate([sample, gauss]))
    es = np.searchsorted(sample, pooled, side="right") / sample.size
    eg = np.searchsorted(gauss, pooled, side="right") / gauss.size
    return [{"u": float(u), "ecdf_sample": float(a), "ecdf_gauss": float(b)}
            for u, a, b in zip(pooled, es, eg)]
