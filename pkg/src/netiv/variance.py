"""Influence residuals and the network HAC variance estimator.

Each IPW contrast compares two arms ``a`` and ``b`` defined by indicator
vectors ``I_a``, ``I_b`` with cell probabilities ``p_a``, ``p_b`` and arm
means ``mu_a``, ``mu_b`` of a per-unit quantity ``X``. Its residual is

    V_i = I_a,i (X_i - mu_a) / p_a - I_b,i (X_i - mu_b) / p_b,

which expands to the usual ``W^Y - (mu_a/p_a) W^Z + (mu_b/p_b) W^{1-Z}``
form. Because ``mu_a = mean(I_a X) / p_a`` and ``p_a = mean(I_a)``, every
residual vector has sample mean exactly zero. Ratio residuals use the
delta method: ``V^num / den - (num / den**2) V^den``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominator, EmptyCell
from .estimators import _check_s, _check_sets, exposure_array, interference_sums
from .graph import distance_indicator


@dataclass(frozen=True)
class ResidualVector:
    """Residuals ``V_i`` for ``i`` in ``S`` (in ``S`` order) of one estimand."""

    estimand: str
    values: np.ndarray
    conditioning: dict
    point: float


@dataclass(frozen=True)
class HacResult:
    """Network HAC variance with truncation bandwidth ``b``.

    ``se = sqrt(max(variance, 0) / |S|)``. ``negative_flag`` marks a
    negative raw variance, which the uniform kernel can produce; the SE is
    then 0 and should not be trusted.
    """

    variance: float
    se: float
    bandwidth: int
    negative_flag: bool


def _arm_residual(X, Ia, Ib, pa, pb):
    X = np.asarray(X, dtype=np.float64)
    m = X.size
    mu_a = np.sum(X * Ia) / m / pa
    mu_b = np.sum(X * Ib) / m / pb
    values = Ia * (X - mu_a) / pa - Ib * (X - mu_b) / pb
    return values, mu_a - mu_b


def _arms(Za, Ta, arm_a, arm_b):
    ind = []
    for z, t in (arm_a, arm_b):
        hit = Za == z
        if t is not None:
            hit = hit & (Ta == t)
        if not hit.any():
            raise EmptyCell(z, t)
        ind.append(hit.astype(np.float64))
    return ind[0], ind[1], ind[0].mean(), ind[1].mean()


def _ratio_residual(name, num, den, cond, with_ratio):
    if not with_ratio:
        return None
    if den.point == 0.0:
        raise DegenerateDenominator(name, den.estimand)
    vals = num.values / den.point - num.point / den.point ** 2 * den.values
    return ResidualVector(name, vals, dict(cond), num.point / den.point)


def _pair(names, Xs, Ia, Ib, pa, pb, cond):
    out = []
    for name, X in zip(names, Xs):
        vals, point = _arm_residual(X, Ia, Ib, pa, pb)
        out.append(ResidualVector(name, vals, dict(cond), float(point)))
    return out


def residuals_ade(S, data, T, t, *, with_ratio=True):
    """Residuals of ADEY(t), ADED(t) and LADE(t).

    With ``with_ratio=False`` the LADE slot is None and a zero ADED is
    not an error.
    """
    idx = _check_s(S, data.n)
    Za, Ta = data.Z[idx], exposure_array(T)[idx]
    Ia, Ib, pa, pb = _arms(Za, Ta, (1, t), (0, t))
    cond = {"t": t}
    vy, vd = _pair(("ADEY", "ADED"), (data.Y[idx], data.D[idx]), Ia, Ib, pa, pb, cond)
    return vy, vd, _ratio_residual("LADE", vy, vd, cond, with_ratio)


def _marginal_arms(Za):
    return _arms(Za, None, (1, None), (0, None))


def residuals_aie(S, data, E, *, with_ratio=True):
    """Residuals of AIEY, AIED, the marginal ADED and LAIE."""
    idx = _check_s(S, data.n)
    _check_sets(S, E)
    Ia, Ib, pa, pb = _marginal_arms(data.Z[idx])
    cond = {"K": E.K}
    vy, vd = _pair(("AIEY", "AIED"), (interference_sums(E, data.Y), interference_sums(E, data.D)),
                   Ia, Ib, pa, pb, cond)
    (va,) = _pair(("ADED",), (data.D[idx],), Ia, Ib, pa, pb, {})
    return vy, vd, va, _ratio_residual("LAIE", vy, va, cond, with_ratio)


def residuals_aoe(S, data, E, *, with_ratio=True):
    """Residuals of AOEY, AOED and LAOE (over ``E_i`` plus ``i``)."""
    idx = _check_s(S, data.n)
    _check_sets(S, E)
    Ia, Ib, pa, pb = _marginal_arms(data.Z[idx])
    cond = {"K": E.K}
    vy, vd = _pair(("AOEY", "AOED"),
                   (interference_sums(E, data.Y, True), interference_sums(E, data.D, True)),
                   Ia, Ib, pa, pb, cond)
    (va,) = _pair(("ADED",), (data.D[idx],), Ia, Ib, pa, pb, {})
    return vy, vd, _ratio_residual("LAOE", vy, va, cond, with_ratio)


def residuals_ase(S, data, T, z, t, t_prime, *, with_ratio=True):
    """Residuals of ASEY, ASED and LASE for the contrast ``(z, t)`` vs ``(z, t_prime)``."""
    if t == t_prime:
        raise ValueError("spillover contrast needs t != t_prime")
    idx = _check_s(S, data.n)
    Za, Ta = data.Z[idx], exposure_array(T)[idx]
    Ia, Ib, pa, pb = _arms(Za, Ta, (z, t), (z, t_prime))
    cond = {"z": z, "t": t, "t_prime": t_prime}
    vy, vd = _pair(("ASEY", "ASED"), (data.Y[idx], data.D[idx]), Ia, Ib, pa, pb, cond)
    return vy, vd, _ratio_residual("LASE", vy, vd, cond, with_ratio)


def hac_variance(net, S, V, b, pairs=None):
    """Network HAC variance ``|S|^-1 sum_ij V_i V_j 1{distance(i, j) <= b}``.

    Parameters
    ----------
    net : Network
    S : Subpopulation
    V : ResidualVector or array_like
        Residuals in ``S`` order.
    b : int
        Bandwidth (>= 0).
    pairs : sparse matrix, optional
        Precomputed ``distance_indicator(net, S, b)``, reused across
        residual vectors and replicates.
    """
    if int(b) != b or b < 0:
        raise ValueError("bandwidth must be a nonnegative integer")
    vals = np.asarray(V.values if isinstance(V, ResidualVector) else V, dtype=np.float64)
    if vals.size != S.size:
        raise ValueError(f"residual length {vals.size} does not match |S| = {S.size}")
    if pairs is None:
        pairs = distance_indicator(net, S, int(b))
    var = float(vals @ (pairs @ vals)) / S.size
    neg = var < 0
    se = float(np.sqrt(max(var, 0.0) / S.size))
    return HacResult(var, se, int(b), bool(neg))
