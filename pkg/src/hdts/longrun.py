"""Batched-mean estimation of long-run covariance matrices and the
associated theoretical targets and convergence rates.

The sample is cut into w = floor(n/M) non-overlapping blocks of length M
(trailing observations are dropped and reported); the estimator averages
outer products of block sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryError, ValidationError
from .model import Panel, ProcessSpec


@dataclass(frozen=True)
class BlockPlan:
    """Partition of 1..n into w disjoint blocks of length M (1-based times)."""

    n: int
    M: int
    w: int

    @property
    def used(self) -> int:
        return self.w * self.M

    @property
    def unused(self) -> int:
        return self.n - self.used

    def block(self, b: int) -> range:
        """0-based row range of block b, b = 1..w."""
        if not 1 <= b <= self.w:
            raise ValidationError(f"block index {b} outside 1..{self.w}")
        return range((b - 1) * self.M, b * self.M)


def plan_blocks(n: int, M: int) -> BlockPlan:
    if M < 1 or M > n:
        raise ValidationError(f"block length M must satisfy 1 <= M <= n, got M={M}, n={n}")
    return BlockPlan(n=n, M=M, w=n // M)


def default_block_length(n: int) -> int:
    """Default M = floor(n^(1/3)); the epsilon guards cube-perfect n."""
    return max(1, int(math.floor(n ** (1.0 / 3.0) + 1e-9)))


@dataclass(frozen=True)
class LongRunEstimate:
    """Symmetric PSD estimate of the long-run covariance matrix.

    kind "hat" assumes the process mean is zero; "tilde" subtracts the
    sample mean of the used observations block-wise.
    """

    sigma: np.ndarray
    kind: str
    plan: BlockPlan

    @property
    def p(self) -> int:
        return self.sigma.shape[0]

    @property
    def diag_scale(self) -> np.ndarray:
        """sqrt of the diagonal (the normalization D used by the bootstrap)."""
        return np.sqrt(np.maximum(np.diag(self.sigma), 0.0))


def _block_sums(panel: Panel, plan: BlockPlan) -> np.ndarray:
    if plan.n != panel.n:
        raise ValidationError(
            f"plan covers n={plan.n} but panel has n={panel.n} observations")
    used = panel.data[:plan.used]
    return used.reshape(plan.w, plan.M, panel.p).sum(axis=1)


def sigma_hat(panel: Panel, plan: BlockPlan) -> LongRunEstimate:
    """Batched-mean estimate (1/(Mw)) sum_b Y_b Y_b^T (mean assumed zero).

    PSD by construction (average of outer products); the caller is
    responsible for the zero-mean assumption.
    """
    Y = _block_sums(panel, plan)
    S = Y.T @ Y / (plan.M * plan.w)
    S = 0.5 * (S + S.T)
    return LongRunEstimate(sigma=S, kind="hat", plan=plan)


def sigma_tilde(panel: Panel, plan: BlockPlan) -> LongRunEstimate:
    """Mean-subtracted batched-mean estimate, valid with unknown mean.

    Uses the sample mean over the first w*M observations; satisfies the
    exact identity sigma_hat - sigma_tilde = M * xbar xbar^T.
    """
    Y = _block_sums(panel, plan)
    xbar = panel.data[:plan.used].mean(axis=0)
    Yc = Y - plan.M * xbar
    S = Yc.T @ Yc / (plan.M * plan.w)
    S = 0.5 * (S + S.T)
    return LongRunEstimate(sigma=S, kind="tilde", plan=plan)


# ---------------------------------------------------------------------------
# Closed-form targets (iid / linear families)
# ---------------------------------------------------------------------------

def _closed_form_guard(spec: ProcessSpec):
    if spec.family not in ("iid", "linear"):
        raise ValidationError(
            f"no closed-form long-run covariance for family {spec.family!r}; "
            "use a long-simulation estimate (experiments.mc_long_run_sigma)")


def autocovariance(spec: ProcessSpec, k: int) -> np.ndarray:
    """Gamma(k) = E X_0 X_k^T in closed form for iid/linear specs."""
    _closed_form_guard(spec)
    var = spec.innovation.variance
    if spec.family == "iid":
        return var * np.eye(spec.p) if k == 0 else np.zeros((spec.p, spec.p))
    c = spec.lag_weights()
    k = abs(k)
    g = float(np.dot(c[:c.shape[0] - k], c[k:])) if k < c.shape[0] else 0.0
    B = spec.cross_mixer()
    return var * g * (B @ B.T)


def true_sigma(spec: ProcessSpec) -> np.ndarray:
    """Long-run covariance Sigma = sum_k Gamma(k) in closed form.

    Linear family: Sigma = var(eps) * (sum_k A_k)(sum_k A_k)^T.
    """
    _closed_form_guard(spec)
    var = spec.innovation.variance
    if spec.family == "iid":
        return var * np.eye(spec.p)
    c_sum = float(np.sum(spec.lag_weights()))
    B = spec.cross_mixer()
    return var * c_sum ** 2 * (B @ B.T)


def sigma_M_target(spec: ProcessSpec, M: int) -> np.ndarray:
    """Bartlett-weighted truncation sum_{|i|<M} (1-|i|/M) Gamma(i).

    Equals the exact expectation of sigma_hat when the mean is zero.
    """
    _closed_form_guard(spec)
    if M < 1:
        raise ValidationError(f"M must be >= 1, got {M}")
    out = autocovariance(spec, 0).copy()
    for i in range(1, M):
        w = 1.0 - i / M
        G = autocovariance(spec, i)
        out += w * (G + G.T)
    return out


# ---------------------------------------------------------------------------
# Theoretical rates
# ---------------------------------------------------------------------------

def v_of_M(alpha: float, M: float) -> float:
    """Bias factor: 1/M for alpha > 1, log(M)/M at alpha = 1, M^-alpha below."""
    if M < 1:
        raise ValidationError(f"M must be >= 1, got {M}")
    if alpha > 1.0:
        return 1.0 / M
    if alpha == 1.0:
        return math.log(M) / M
    if alpha > 0.0:
        return M ** (-alpha)
    raise BoundaryError(f"bias factor undefined for alpha = {alpha}")


def f_alpha_factor(q: float, alpha: float, w: int, M: int) -> float:
    """Block-count factor of the polynomial tail bound, by dependence regime."""
    hi, lo = 1.0 - 2.0 / q, 0.5 - 2.0 / q
    if alpha in (hi, lo):
        raise BoundaryError(f"alpha = {alpha} sits on an F-factor regime boundary")
    if alpha > hi:
        return float(w * M)
    if alpha > lo:
        return float(w * M ** (q / 2.0 - alpha * q / 2.0))
    return float(w ** (q / 4.0 - alpha * q / 2.0) * M ** (q / 2.0 - alpha * q / 2.0))


@dataclass
class RateInfo:
    r_n: float
    v_M: float
    F_alpha: float | None
    n: int
    M: int
    w: int
    variance_term: float
    bias_term: float
    regime: str

    def to_json_dict(self):
        return {k: getattr(self, k) for k in
                ("r_n", "v_M", "F_alpha", "n", "M", "w",
                 "variance_term", "bias_term", "regime")}


def theoretical_rate(profile, n: int, M: int | None = None,
                     nu: float | None = None) -> RateInfo:
    """Convergence-rate bound r_n for |sigma_tilde - Sigma|_inf.

    Polynomial-moment case by default; with nu given (and finite Phi norms
    on the profile) the sub-exponential bound is used instead, with
    gamma = 1/(1+2*nu).
    """
    q, alpha, p = profile.q, profile.alpha, profile.p
    M = M if M is not None else default_block_length(n)
    plan = plan_blocks(n, M)
    w = plan.w
    aux = profile.aux
    if aux.psi_2_0 is None or aux.psi_2_a is None:
        raise ValidationError("profile lacks Psi_{2,0} / Psi_{2,alpha}")
    vM = v_of_M(alpha, M)
    bias = aux.psi_2_0 * aux.psi_2_a * vM

    if nu is not None:
        if profile.Phi_0 is None:
            raise ValidationError("sub-exponential rate needs Phi_{psi_nu,0}")
        gamma = 1.0 / (1.0 + 2.0 * nu)
        var_term = math.sqrt(w) * M * profile.Phi_0 ** 2 * \
            math.log(p) ** (1.0 / gamma) / n
        return RateInfo(r_n=var_term + bias, v_M=vM, F_alpha=None, n=n, M=M,
                        w=w, variance_term=var_term, bias_term=bias,
                        regime="sub-exponential")

    if aux.psi_4_a is None:
        raise ValidationError("profile lacks Psi_{4,alpha}")
    F = f_alpha_factor(q, alpha, w, M)
    var_term = max(
        p ** (2.0 / q) * F ** (2.0 / q) * profile.Upsilon ** 2,
        math.sqrt(w) * M * aux.psi_4_a ** 2 * math.sqrt(math.log(p)),
        math.sqrt(w) * M * profile.Psi ** 2,
    ) / n
    return RateInfo(r_n=var_term + bias, v_M=vM, F_alpha=F, n=n, M=M, w=w,
                    variance_term=var_term, bias_term=bias, regime="polynomial")
