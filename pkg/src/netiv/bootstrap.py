"""Kernel-weighted wild bootstrap for network-dependent residuals.

Multipliers ``R = Omega^{1/2} zeta`` with ``zeta ~ N(0, I)`` are
correlated across units through the kernel

    Omega_ij = |S(i, b) & S(j, b)| / M,   S(i, b) = {j in S: distance(i, j) <= b},

where ``M`` is the mean ball size over ``S``. With ``K`` the 0/1 matrix of
``distance <= b`` over ``S``, ``Omega = K K' / M``, so it is PSD by
construction and ``K / sqrt(M)`` is a valid (non-symmetric) square root
for large ``S``.

The replicate statistic ``|S|^-1/2 sum_i V_i R_i`` equals
``(Omega^{1/2} V) . zeta / sqrt(|S|)``; the kernel is applied to the
residuals once instead of to every multiplier draw.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .graph import distance_indicator
from .variance import ResidualVector

DENSE_CAP = 20_000
_BLOCK = 512


def psd_sqrt(omega, tol=1e-10, clamp=1e-12):
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues below ``clamp * max|lambda|`` are set to zero. Inputs more
    than ``tol`` away from symmetric are rejected.
    """
    omega = np.asarray(omega, dtype=np.float64)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise ValueError("expected a square matrix")
    if omega.size == 0:
        return omega.copy()
    asym = float(np.max(np.abs(omega - omega.T)))
    if asym > tol:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    lam, Q = np.linalg.eigh((omega + omega.T) / 2)
    top = float(np.max(np.abs(lam)))
    lam = np.where(lam > clamp * top, lam, 0.0)
    root = (Q * np.sqrt(lam)) @ Q.T
    return (root + root.T) / 2


@dataclass(frozen=True)
class BootstrapKernel:
    """Bootstrap kernel over ``S`` at bandwidth ``b``.

    ``omega`` and ``omega_sqrt`` are dense and only present when
    ``|S| <= dense_cap``. Otherwise ``factor`` (sparse ``K / sqrt(M)``) is
    used as the square root.
    """

    S: object
    b: int
    M: float
    indicator: object
    omega: np.ndarray | None
    omega_sqrt: np.ndarray | None
    factor: object | None

    def apply_root_transpose(self, V):
        """``root' V`` for the square root in use (one column per vector)."""
        V = np.asarray(V, dtype=np.float64)
        if self.omega_sqrt is not None:
            return self.omega_sqrt.T @ V
        return np.asarray(self.factor.T @ V)

    def conditional_variance(self, V):
        """Exact ``Var[statistic | data] = |S|^-1 V' Omega V``."""
        v = np.asarray(V.values if isinstance(V, ResidualVector) else V, dtype=np.float64)
        if self.omega is not None:
            return float(v @ self.omega @ v) / v.size
        kv = self.indicator @ v
        return float(kv @ kv) / self.M / v.size


def build_kernel(net, S, b, dense_cap=DENSE_CAP):
    """Build the bootstrap kernel for subpopulation ``S`` and bandwidth ``b``."""
    if b < 0:
        raise ValueError("bandwidth must be nonnegative")
    if S.size == 0:
        raise ValueError("subpopulation is empty")
    K = distance_indicator(net, S, int(b))
    M = K.sum() / S.size
    if S.size <= dense_cap:
        omega = (K @ K).toarray() / M
        return BootstrapKernel(S, int(b), float(M), K, omega, psd_sqrt(omega), None)
    return BootstrapKernel(S, int(b), float(M), K, None, None, (K / np.sqrt(M)).tocsr())


@dataclass(frozen=True)
class BootstrapResult:
    """Wild-bootstrap replicates and intervals for one estimand.

    ``ci`` is the basic (reflected percentile) interval
    ``[theta - q_hi / sqrt(|S|), theta - q_lo / sqrt(|S|)]``;
    ``ci_normal`` is ``theta +- z * se_boot``.
    """

    estimand: str
    point: float
    statistics: np.ndarray
    ci: tuple
    ci_normal: tuple
    se_boot: float
    alpha: float
    B: int
    seed: int


def _draw_block(seed, start, stop, m, U):
    Zeta = np.empty((stop - start, m))
    for k, r in enumerate(range(start, stop)):
        Zeta[k] = np.random.default_rng([seed, r]).standard_normal(m)
    return Zeta @ U


def replicate_statistics(kernel, V, B, seed, threads=1):
    """``B x k`` replicate statistics for ``k`` residual columns sharing draws.

    Replicate ``r`` uses its own stream seeded by ``(seed, r)``, so results
    do not depend on ``threads``.
    """
    V = np.asarray(V, dtype=np.float64)
    if V.ndim == 1:
        V = V[:, None]
    m = V.shape[0]
    U = kernel.apply_root_transpose(V) / np.sqrt(m)
    width = U.shape[0]
    starts = list(range(0, B, _BLOCK))
    jobs = [(s, min(s + _BLOCK, B)) for s in starts]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda j: _draw_block(seed, j[0], j[1], width, U), jobs))
    else:
        parts = [_draw_block(seed, a, c, width, U) for a, c in jobs]
    return np.concatenate(parts, axis=0)


def _summarize(vec, stat, m, alpha, B, seed):
    lo_q, hi_q = np.quantile(stat, [alpha / 2, 1 - alpha / 2])
    root_m = np.sqrt(m)
    theta = float(vec.point)
    se = float(np.std(stat, ddof=1) / root_m) if B > 1 else 0.0
    zcrit = float(stats.norm.ppf(1 - alpha / 2))
    ci = (theta - hi_q / root_m, theta - lo_q / root_m)
    return BootstrapResult(vec.estimand, theta, stat, (float(ci[0]), float(ci[1])),
                           (theta - zcrit * se, theta + zcrit * se), se, float(alpha), int(B),
                           int(seed))


def wild_bootstrap(V, kernel, B, alpha=0.05, seed=0, threads=1):
    """Wild-bootstrap interval for the estimand whose residuals are ``V``.

    Parameters
    ----------
    V : ResidualVector or sequence of ResidualVector
        A sequence is bootstrapped jointly with shared multiplier draws and
        a list of results is returned.
    kernel : BootstrapKernel
    B : int
        Number of replicates.
    alpha : float
        Interval level is ``1 - alpha``.
    seed : int
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    single = isinstance(V, ResidualVector)
    vecs = [V] if single else list(V)
    m = kernel.S.size
    for v in vecs:
        if v.values.size != m:
            raise ValueError(f"residual length {v.values.size} does not match |S| = {m}")
    cols = np.column_stack([v.values for v in vecs])
    stat = replicate_statistics(kernel, cols, int(B), int(seed), threads)
    out = [_summarize(v, stat[:, k], m, alpha, B, seed) for k, v in enumerate(vecs)]
    return out[0] if single else out
