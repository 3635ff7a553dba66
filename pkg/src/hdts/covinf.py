"""Simultaneous inference for covariance entries via the centered product
process X_ij * X_ik - gamma_jk.

Pairs (j, k) with j <= k are laid out in upper-triangular order, giving
p(p+1)/2 columns; the duplicated lower triangle would add nothing to a
maximum statistic.  The product panel is centered at the sample covariance
(the population value being unknown in practice).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .depmeasure import AuxNorms, DependenceProfile, adjusted_norm, _tail_sums
from .errors import ValidationError
from .gboot import bootstrap_quantile
from .longrun import default_block_length, plan_blocks, sigma_tilde
from .model import Panel, ProcessSpec, simulate_coupled
from .rng import RngContract


def n_pairs(p: int) -> int:
    return p * (p + 1) // 2


def pair_indices(p: int) -> tuple[np.ndarray, np.ndarray]:
    """(j, k) arrays of the upper-triangular layout, flat index order."""
    return np.triu_indices(p)


def pair_to_flat(j: int, k: int, p: int) -> int:
    """Flat index of the pair (j, k), 0-based, j <= k."""
    if not 0 <= j <= k < p:
        raise ValidationError(f"pair ({j},{k}) outside the upper triangle of p={p}")
    return j * p - j * (j - 1) // 2 + (k - j)


def flat_to_pair(a: int, p: int) -> tuple[int, int]:
    js, ks = pair_indices(p)
    if not 0 <= a < js.shape[0]:
        raise ValidationError(f"flat index {a} outside 0..{js.shape[0] - 1}")
    return int(js[a]), int(ks[a])


@dataclass(frozen=True)
class CovPanel:
    """Centered product panel: data[i, a] = X_ij X_ik - gamma_hat_a."""

    data: np.ndarray
    gamma_hat: np.ndarray
    p: int

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def as_panel(self) -> Panel:
        return Panel.from_data(self.data, note="cov-products")


def build_cov_panel(panel: Panel) -> CovPanel:
    """Upper-triangular product panel centered at the sample covariances."""
    if panel.n < 2:
        raise ValidationError(f"need n >= 2 observations, got {panel.n}")
    js, ks = pair_indices(panel.p)
    prods = panel.data[:, js] * panel.data[:, ks]
    gamma_hat = prods.mean(axis=0)
    return CovPanel(data=prods - gamma_hat, gamma_hat=gamma_hat, p=panel.p)


# ---------------------------------------------------------------------------
# Dependence-norm bounds for the product process
# ---------------------------------------------------------------------------

@dataclass
class CovNormBound:
    """Upper bounds on the adjusted norms of the product process at (q/2, alpha)."""

    q_eff: float                 # q/2
    alpha: float
    p: int
    per_pair: np.ndarray         # bound on ||prod_{.a}||_{q/2, alpha} per pair
    uniform: float               # 4 Psi_{q,0} Psi_{q,alpha}
    overall: float               # aggregated l_{q/2} bound
    sup_inf: float               # bound on the L^inf adjusted norm
    aux: AuxNorms

    def to_profile(self) -> DependenceProfile:
        """Bound-valued profile for the product process, usable by the
        condition checker at (q/2, alpha)."""
        m = n_pairs(self.p)
        q2 = self.q_eff
        theta = min(self.overall, self.sup_inf * math.log(m))
        return DependenceProfile(
            q=q2, alpha=self.alpha, p=m, Psi=self.uniform, Upsilon=self.overall,
            sup_norm=self.sup_inf, Theta=theta, coord_norms=self.per_pair,
            aux=self.aux, source={"kind": "upper-bound"})


def cov_dep_norm_bound(profile: DependenceProfile) -> CovNormBound:
    """Bound the product-process adjusted norms by those of the base process.

    Requires a base profile at moment order q >= 4 with per-coordinate
    norms at (q, 0) and (q, alpha); products then live at order q/2 >= 2.
    """
    q, alpha, p = profile.q, profile.alpha, profile.p
    if q < 4:
        raise ValidationError(f"product bounds need q >= 4, got q={q}")
    if profile.Delta is None or profile.coord_norms is None:
        raise ValidationError("base profile lacks per-coordinate tail sums")
    norms_a = np.asarray(profile.coord_norms, dtype=float)
    norms_0 = np.array([adjusted_norm(profile.Delta[:, j], 0.0) for j in range(p)])

    js, ks = pair_indices(p)
    per_pair = 2.0 * norms_0[js] * norms_a[ks] + 2.0 * norms_0[ks] * norms_a[js]
    uniform = 4.0 * float(np.max(norms_0)) * float(np.max(norms_a))
    q2 = q / 2.0
    overall = 4.0 * float(np.sum(norms_0 ** q2) ** (2.0 / q)) * \
        float(np.sum(norms_a ** q2) ** (2.0 / q))

    if profile.Omega is not None:
        linf_0 = adjusted_norm(profile.Omega, 0.0)
        linf_a = adjusted_norm(profile.Omega, alpha)
        sup_inf = 4.0 * linf_0 * linf_a
    else:
        sup_inf = float(uniform * n_pairs(p))  # crude fallback via the overall sum

    # uniform bounds at the auxiliary orders the condition checker needs:
    # the product process at order r inherits 4 Psi_{2r,0} Psi_{2r,.} from
    # the base process (the same pairing inequality at moment order 2r)
    base = profile.aux
    aux = AuxNorms()
    if base.psi_4_0 is not None:
        aux.psi_2_0 = 4.0 * base.psi_4_0 ** 2
        if base.psi_4_a is not None:
            aux.psi_2_a = 4.0 * base.psi_4_0 * base.psi_4_a
    if base.psi_6_0 is not None:
        aux.psi_3_0 = 4.0 * base.psi_6_0 ** 2
    if base.psi_8_0 is not None:
        aux.psi_4_0 = 4.0 * base.psi_8_0 ** 2
    return CovNormBound(q_eff=q2, alpha=alpha, p=p, per_pair=per_pair,
                        uniform=uniform, overall=overall, sup_inf=sup_inf,
                        aux=aux)


def mc_cov_norms(spec: ProcessSpec, q: float, alpha: float, R: int,
                 rng: RngContract, lags: int = 30,
                 bootstrap: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Monte Carlo estimate of ||prod_{.a}||_{q/2, alpha} for every pair.

    Returns (norms, bootstrap standard errors), truncated at the simulated
    lag horizon (truncation only lowers the estimate, so comparisons
    against upper bounds stay valid).
    """
    if R < 100:
        raise ValidationError(f"need R >= 100 replications, got {R}")
    q2 = q / 2.0
    n = lags + 1
    js, ks = pair_indices(spec.p)
    m = js.shape[0]
    absdiff = np.empty((R, n, m))
    for r in range(R):
        x, xc = simulate_coupled(spec, n, rng.derive("mc-cov", r))
        prod = x.data[:, js] * x.data[:, ks]
        prod_c = xc.data[:, js] * xc.data[:, ks]
        absdiff[r] = np.abs(prod - prod_c)

    def norm_from_weights(w: np.ndarray) -> np.ndarray:
        mom = (w @ absdiff.reshape(R, -1) ** q2).reshape(-1, n, m)
        phi = np.clip(mom, 0.0, None) ** (1.0 / q2)
        out = np.empty((phi.shape[0], m))
        for b in range(phi.shape[0]):
            Delta = _tail_sums(phi[b])
            out[b] = [adjusted_norm(Delta[:, a], alpha) for a in range(m)]
        return out

    norms = norm_from_weights(np.full((1, R), 1.0 / R))[0]
    bgen = rng.derive("mc-cov-boot").generator()
    weights = bgen.multinomial(R, np.full(R, 1.0 / R), size=bootstrap) / R
    boot = norm_from_weights(weights)
    return norms, boot.std(axis=0, ddof=1)


# ---------------------------------------------------------------------------
# Simultaneous covariance test
# ---------------------------------------------------------------------------

@dataclass
class CovTestResult:
    """Max-deviation test of the covariances against a null matrix."""

    statistic: float             # sqrt(n) max_a |gamma_hat_a - gamma0_a| / tau_a
    threshold: float             # bootstrap quantile chi
    theta: float
    gamma_hat: np.ndarray
    gamma_null: np.ndarray
    tau: np.ndarray
    pair_stats: np.ndarray
    flagged: np.ndarray          # (count, 2) array of flagged (j, k) pairs
    n: int
    M: int
    w: int
    B: int

    @property
    def reject(self) -> bool:
        return self.statistic > self.threshold


def cov_simultaneous_test(panel: Panel, theta: float, M: int | None, B: int,
                          rng: RngContract, null_gamma: np.ndarray | None = None,
                          max_pairs: int = 5000) -> CovTestResult:
    """Simultaneous test of all covariance entries at level 1 - theta.

    Runs the mean-subtracted batched estimator and the multiplier bootstrap
    on the product panel; tau_a is taken from the diagonal of that
    estimate.  The default null has zero off-diagonals and leaves the
    variances untested (diagonal entries set to their sample values).
    """
    p = panel.p
    if n_pairs(p) > max_pairs:
        raise ValidationError(
            f"p(p+1)/2 = {n_pairs(p)} exceeds the guard of {max_pairs} columns; "
            "test a coordinate subset")
    cov_panel = build_cov_panel(panel)
    if null_gamma is None:
        null_flat = np.zeros(n_pairs(p))
        js, ks = pair_indices(p)
        null_flat[js == ks] = cov_panel.gamma_hat[js == ks]
    else:
        null_gamma = np.asarray(null_gamma, dtype=float)
        if null_gamma.shape == (p, p):
            js, ks = pair_indices(p)
            null_flat = null_gamma[js, ks]
        elif null_gamma.shape == (n_pairs(p),):
            null_flat = null_gamma
        else:
            raise ValidationError(
                f"null gamma must be ({p},{p}) or flat ({n_pairs(p)},), "
                f"got {null_gamma.shape}")

    M = M if M is not None else default_block_length(panel.n)
    plan = plan_blocks(cov_panel.n, M)
    est = sigma_tilde(cov_panel.as_panel(), plan)
    bq = bootstrap_quantile(est, theta, B, rng)
    tau = est.diag_scale
    pair_stats = math.sqrt(panel.n) * np.abs(cov_panel.gamma_hat - null_flat) / tau
    statistic = float(np.max(pair_stats))
    js, ks = pair_indices(p)
    mask = pair_stats > bq.chi
    flagged = np.column_stack([js[mask], ks[mask]])
    return CovTestResult(statistic=statistic, threshold=bq.chi, theta=theta,
                         gamma_hat=cov_panel.gamma_hat, gamma_null=null_flat,
                         tau=tau, pair_stats=pair_stats, flagged=flagged,
                         n=panel.n, M=plan.M, w=plan.w, B=B)
