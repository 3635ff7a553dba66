"""Gaussian multiplier bootstrap: PSD square roots, conditional quantiles
of the normalized Gaussian maximum, and simultaneous confidence intervals.

The bootstrap statistic is max_j |Z_j| / sqrt(sigma_jj) with Z drawn
conditionally as N(0, Sigma_tilde).  Draws are generated from the square
root of the correlation matrix of Sigma_tilde, which has the same
conditional law and makes the statistic exactly invariant under
coordinate-wise rescaling of the data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AssumptionError, NumericalError, ValidationError
from .longrun import LongRunEstimate, default_block_length, plan_blocks, sigma_tilde
from .model import Panel
from .rng import RngContract

_DRAW_CHUNK = 1024  # fixed chunk size so draws do not depend on scheduling


@dataclass(frozen=True)
class PsdSqrt:
    """Symmetric PSD square root with the clipped negative mass reported."""

    root: np.ndarray
    clipped_mass: float


def psd_sqrt(sigma: np.ndarray) -> PsdSqrt:
    """Symmetric eigendecomposition square root, clipping negative eigenvalues.

    Requires a symmetric matrix (within 1e-10 relative tolerance) with
    finite entries; returns S with S S^T equal to the clipped input.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {sigma.shape}")
    if not np.all(np.isfinite(sigma)):
        raise NumericalError("matrix contains non-finite entries")
    scale = 1.0 + np.max(np.abs(sigma))
    if np.max(np.abs(sigma - sigma.T)) > 1e-10 * scale:
        raise ValidationError("matrix is not symmetric within 1e-10 relative tolerance")
    sym = 0.5 * (sigma + sigma.T)
    try:
        lam, V = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    clipped = float(-np.sum(lam[lam < 0.0])) + 0.0
    lam_pos = np.maximum(lam, 0.0)
    root = (V * np.sqrt(lam_pos)) @ V.T
    return PsdSqrt(root=root, clipped_mass=clipped)


@dataclass
class BootstrapQuantile:
    """Conditional theta-quantile of the normalized Gaussian maximum."""

    theta: float
    chi: float
    B: int
    chi_se: float
    clipped_mass: float
    draws: np.ndarray            # unsorted, in stream order
    ecdf_u: np.ndarray           # 512-point quantile grid of the draws
    ecdf_p: np.ndarray

    def to_json_dict(self) -> dict:
        return {"theta": self.theta, "chi": self.chi, "B": self.B,
                "chi_se": self.chi_se, "clipped_mass": self.clipped_mass,
                "ecdf_u": self.ecdf_u.tolist(), "ecdf_p": self.ecdf_p.tolist()}


def _order_statistic(sorted_draws: np.ndarray, theta: float) -> float:
    k = math.ceil(theta * sorted_draws.shape[0])
    return float(sorted_draws[k - 1])


def _quantile_se(sorted_draws: np.ndarray, theta: float) -> float:
    """Distribution-free SE of the sample quantile from order-stat spacing."""
    B = sorted_draws.shape[0]
    half = B * math.sqrt(theta * (1.0 - theta) / B)
    k_lo = max(1, math.ceil(B * theta - half))
    k_hi = min(B, math.ceil(B * theta + half))
    return 0.5 * float(sorted_draws[k_hi - 1] - sorted_draws[k_lo - 1])


def bootstrap_quantile(est: LongRunEstimate, theta: float, B: int,
                       rng: RngContract) -> BootstrapQuantile:
    """Estimate the conditional theta-quantile of max_j |Z_j|/sqrt(sigma_jj).

    chi is the ceil(theta*B)-th order statistic of B multiplier draws.
    Fails when any diagonal entry is (numerically) degenerate, i.e. the
    minimum long-run variance requirement min_j sigma_jj >= c is violated.
    """
    if not 0.0 < theta < 1.0:
        raise ValidationError(f"coverage level theta must lie in (0,1), got {theta}")
    if B < 1000:
        raise ValidationError(f"need B >= 1000 bootstrap draws, got {B}")
    d2 = np.diag(est.sigma)
    if np.min(d2) < 1e-10:
        raise AssumptionError(
            "degenerate diagonal in the long-run estimate: the requirement "
            f"min_j sigma_jj >= c fails (min = {np.min(d2):.3e})")
    d = np.sqrt(d2)
    corr = est.sigma / np.outer(d, d)
    np.fill_diagonal(corr, 1.0)
    sq = psd_sqrt(corr)
    S_t = sq.root.T

    draws = np.empty(B)
    for start in range(0, B, _DRAW_CHUNK):
        stop = min(start + _DRAW_CHUNK, B)
        gen = rng.derive("gboot-draws", start // _DRAW_CHUNK).generator()
        eta = gen.standard_normal((stop - start, est.p))
        draws[start:stop] = np.max(np.abs(eta @ S_t), axis=1)

    sorted_draws = np.sort(draws)
    chi = _order_statistic(sorted_draws, theta)
    se = _quantile_se(sorted_draws, theta)
    probs = (np.arange(512) + 0.5) / 512.0
    grid = np.quantile(sorted_draws, probs)
    return BootstrapQuantile(theta=theta, chi=chi, B=B, chi_se=se,
                             clipped_mass=sq.clipped_mass, draws=draws,
                             ecdf_u=grid, ecdf_p=probs)


@dataclass
class CiReport:
    """Simultaneous confidence intervals mu_hat_j +/- chi * sqrt(sigma_jj / n)."""

    mu_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    sigma_diag: np.ndarray
    theta: float
    chi: float
    chi_se: float
    B: int
    M: int
    w: int
    n: int
    clipped_mass: float

    def covers(self, mu) -> bool:
        """Whether the vector mu lies inside every interval."""
        mu = np.asarray(mu, dtype=float)
        return bool(np.all((self.lo <= mu) & (mu <= self.hi)))

    def half_widths(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def sidecar_dict(self) -> dict:
        return {"theta": self.theta, "chi": self.chi, "chi_se": self.chi_se,
                "B": self.B, "M": self.M, "w": self.w, "n": self.n,
                "clipped_mass": self.clipped_mass}


def simultaneous_ci(panel: Panel, theta: float, M: int | None, B: int,
                    rng: RngContract) -> CiReport:
    """Simultaneous confidence intervals for the mean vector.

    Pipeline: mean-subtracted batched estimate -> multiplier bootstrap
    quantile -> intervals mu_hat_j +/- chi * sqrt(sigma_tilde_jj) / sqrt(n).
    The sqrt(n) divisor matches the CLT scaling of sqrt(n)(X_bar - mu).
    """
    M = M if M is not None else default_block_length(panel.n)
    plan = plan_blocks(panel.n, M)
    est = sigma_tilde(panel, plan)
    bq = bootstrap_quantile(est, theta, B, rng)
    mu_hat = panel.data.mean(axis=0)
    half = bq.chi * est.diag_scale / math.sqrt(panel.n)
    return CiReport(mu_hat=mu_hat, lo=mu_hat - half, hi=mu_hat + half,
                    sigma_diag=np.diag(est.sigma).copy(), theta=theta,
                    chi=bq.chi, chi_se=bq.chi_se, B=B, M=plan.M, w=plan.w,
                    n=panel.n, clipped_mass=bq.clipped_mass)
