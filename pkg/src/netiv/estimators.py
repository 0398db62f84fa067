"""IPW point estimators and Wald ratios of instrument effects.

All estimands average over a subpopulation ``S``. Cell probabilities are
estimated by sample frequencies over ``S``. Passing ``probs`` switches to
oracle mode, where known design probabilities replace the estimates. That
mode exists for checking the estimators against exact enumeration.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegenerateDenominator, EmptyCell
from .exposure import ExposureValues

WEAK_RELEVANCE = 0.05
MIN_CELL = 10


@dataclass(frozen=True)
class StudyData:
    """Per-node outcome ``Y``, binary treatment ``D`` and binary instrument ``Z``."""

    Y: np.ndarray
    D: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=np.float64)
        D = np.asarray(self.D)
        Z = np.asarray(self.Z)
        if not (Y.ndim == D.ndim == Z.ndim == 1) or not (Y.size == D.size == Z.size):
            raise ValueError("Y, D and Z must be vectors of equal length")
        for name, x in (("D", D), ("Z", Z)):
            if not ((x == 0) | (x == 1)).all():
                raise ValueError(f"{name} must be binary")
        if not np.isfinite(Y).all():
            raise ValueError("Y must be finite")
        for name, x in (("Y", Y), ("D", D.astype(np.int64)), ("Z", Z.astype(np.int64))):
            x = x.copy()
            x.setflags(write=False)
            object.__setattr__(self, name, x)

    @property
    def n(self):
        return int(self.Y.size)


@dataclass(frozen=True)
class KnownProbabilities:
    """Design probabilities for oracle mode.

    ``joint[(z, t)] = Pr(Z_i = z, T_i = t)`` and ``marginal[z] = Pr(Z_i = z)``.
    Each value is a scalar common to all units of ``S`` or an array of
    per-unit probabilities in ``S`` order.
    """

    joint: dict = field(default_factory=dict)
    marginal: dict = field(default_factory=dict)


@dataclass
class EstimateReport:
    """Point estimate of one estimand plus the pieces it was built from.

    ``point`` is None when the estimand is undefined (a flagged zero
    denominator). Ratio reports hold ``numerator`` and ``denominator`` in
    ``components``. ``inference`` is filled by callers that attach
    standard errors or intervals.
    """

    estimand: str
    conditioning: dict
    point: float | None
    components: dict = field(default_factory=dict)
    cell_counts: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    inference: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


class AdeResult(NamedTuple):
    adey: EstimateReport
    aded: EstimateReport
    lade: EstimateReport


class AieResult(NamedTuple):
    aiey: EstimateReport
    aied: EstimateReport
    aded: EstimateReport
    laie: EstimateReport


class AoeResult(NamedTuple):
    aoey: EstimateReport
    aoed: EstimateReport
    laoe: EstimateReport


class AseResult(NamedTuple):
    asey: EstimateReport
    ased: EstimateReport
    lase: EstimateReport


def exposure_array(T):
    """Raw per-node exposure values from ``ExposureValues`` or an array."""
    if isinstance(T, ExposureValues):
        return T.values
    return np.asarray(T, dtype=np.int64)


def _check_s(S, n):
    if S.size == 0:
        raise ValueError("subpopulation is empty")
    S.validate(n)
    return S.indices


def _label(z, t=None):
    return f"Z={z}" if t is None else f"Z={z},T={t}"


def cell_probability(S, Z, T=None, z=1, t=None):
    """Share of ``S`` with ``Z_i = z`` (and ``T_i = t`` when ``t`` is given)."""
    idx = _check_s(S, len(Z))
    hit = np.asarray(Z)[idx] == z
    if t is not None:
        hit &= exposure_array(T)[idx] == t
    return float(hit.mean())


def _prob(S, Z, T, z, t, probs):
    if probs is None:
        p = cell_probability(S, Z, T, z, t)
    else:
        p = probs.marginal[z] if t is None else probs.joint[(z, t)]
        if np.ndim(p):
            p = np.asarray(p, dtype=np.float64)
            if p.shape != (S.size,):
                raise ValueError("per-unit probabilities must be aligned with S")
            if not p.any():
                raise EmptyCell(z, t)
            return p
        p = float(p)
    if p == 0.0:
        raise EmptyCell(z, t)
    return p


def _ipw(X, w, p):
    # scalar p keeps the plain formula; per-unit p weights each unit (0 where p_i = 0)
    if np.ndim(p) == 0:
        return float(np.sum(X * w) / w.size / p)
    inv = np.divide(w, p, out=np.zeros(w.size), where=p > 0)
    return float(np.sum(X * inv) / w.size)


def ipw_mean_conditional(S, V, Z, T, z, t, probs=None):
    """``|S|^-1 sum_i V_i 1{Z_i=z, T_i=t} / p(z, t)``."""
    idx = _check_s(S, len(Z))
    p = _prob(S, Z, T, z, t, probs)
    w = (np.asarray(Z)[idx] == z) & (exposure_array(T)[idx] == t)
    return _ipw(np.asarray(V, dtype=np.float64)[idx], w, p)


def ipw_mean_marginal(S, V, Z, z, probs=None):
    """``|S|^-1 sum_i V_i 1{Z_i=z} / p(z)``."""
    idx = _check_s(S, len(Z))
    p = _prob(S, Z, None, z, None, probs)
    w = np.asarray(Z)[idx] == z
    return _ipw(np.asarray(V, dtype=np.float64)[idx], w, p)


def interference_sums(E, V, include_self=False):
    """Per-unit sums of ``V`` over ``E_i`` (or ``E_i`` plus ``i``), aligned with ``E.S``."""
    V = np.asarray(V, dtype=np.float64)
    out = E.matrix @ V
    if include_self:
        out = out + V[E.S.indices]
    return np.asarray(out, dtype=np.float64)


def ipw_mean_interference(S, V, Z, E, z, include_self=False, probs=None):
    """``|S|^-1 sum_i (sum_{j in E_i} V_j) 1{Z_i=z} / p(z)``."""
    idx = _check_s(S, len(Z))
    _check_sets(S, E)
    p = _prob(S, Z, None, z, None, probs)
    w = np.asarray(Z)[idx] == z
    return _ipw(interference_sums(E, V, include_self), w, p)


def _check_sets(S, E):
    if E.S.size != S.size or not np.array_equal(E.S.indices, S.indices):
        raise ValueError("interference sets were built for a different subpopulation")


def _joint_counts(S, Z, T):
    idx = S.indices
    zs = np.asarray(Z)[idx]
    ts = exposure_array(T)[idx]
    levels, inv = np.unique(ts, return_inverse=True)
    tally = np.bincount(zs.astype(np.int64) * levels.size + inv.ravel(), minlength=2 * levels.size)
    return {_label(z, int(t)): int(tally[z * levels.size + k])
            for z in (0, 1) for k, t in enumerate(levels) if tally[z * levels.size + k]}


def _marginal_counts(S, Z):
    zs = np.asarray(Z)[S.indices]
    return {_label(z): int(np.sum(zs == z)) for z in (0, 1)}


def _small_cell_flags(counts, used, min_cell):
    return [f"small_cell({u})" for u in used if counts.get(u, 0) < min_cell]


def _ratio(estimand, conditioning, num, den, den_name, counts, flags, weak, strict, extra=None):
    comps = {"numerator": num, "denominator": den}
    if extra:
        comps.update(extra)
    flags = list(flags)
    if den == 0.0:
        if strict:
            raise DegenerateDenominator(estimand, den_name)
        flags.append("degenerate_denominator")
        point = None
    else:
        point = num / den
        if abs(den) < weak:
            flags.append("weak_relevance")
    return EstimateReport(estimand, dict(conditioning), point, comps, dict(counts), flags)


def _base_flags(probs):
    return ["oracle_probabilities"] if probs is not None else []


def ade(S, data, T, t, *, probs=None, weak=WEAK_RELEVANCE, min_cell=MIN_CELL, strict=False):
    """Average direct effects at exposure level ``t``.

    Returns
    -------
    AdeResult
        ``(ADEY(t), ADED(t), LADE(t))``. LADE is ``ADEY/ADED``; when ADED is
        exactly zero its point is None and it is flagged, or
        ``DegenerateDenominator`` is raised if ``strict``.
    """
    _check_s(S, data.n)
    counts = _joint_counts(S, data.Z, T)
    flags = _base_flags(probs) + _small_cell_flags(counts, [_label(1, t), _label(0, t)], min_cell)
    cond = {"t": t}
    out = {}
    for name, V in (("ADEY", data.Y), ("ADED", data.D)):
        m1 = ipw_mean_conditional(S, V, data.Z, T, 1, t, probs)
        m0 = ipw_mean_conditional(S, V, data.Z, T, 0, t, probs)
        comps = {"mu1": m1, "mu0": m0}
        if probs is None:
            comps["p1"] = cell_probability(S, data.Z, T, 1, t)
            comps["p0"] = cell_probability(S, data.Z, T, 0, t)
        out[name] = EstimateReport(name, dict(cond), m1 - m0, comps, dict(counts), list(flags))
    lade = _ratio("LADE", cond, out["ADEY"].point, out["ADED"].point, "ADED", counts,
                  flags, weak, strict)
    return AdeResult(out["ADEY"], out["ADED"], lade)


def marginal_contrast(S, V, Z, probs=None):
    """``mu(1) - mu(0)`` with marginal IPW means."""
    return ipw_mean_marginal(S, V, Z, 1, probs) - ipw_mean_marginal(S, V, Z, 0, probs)


def _marginal_aded(S, data, probs, flags):
    counts = _marginal_counts(S, data.Z)
    m1 = ipw_mean_marginal(S, data.D, data.Z, 1, probs)
    m0 = ipw_mean_marginal(S, data.D, data.Z, 0, probs)
    return EstimateReport("ADED", {}, m1 - m0, {"mu1": m1, "mu0": m0}, counts, list(flags))


def aie(S, data, E, *, probs=None, weak=WEAK_RELEVANCE, min_cell=MIN_CELL, strict=False):
    """Average indirect effects over interference sets ``E``.

    Returns
    -------
    AieResult
        ``(AIEY, AIED, marginal ADED, LAIE)`` with ``LAIE = AIEY / ADED``.
        LAIE's components also carry the alternative ratio ``AIEY/AIED``.
    """
    _check_s(S, data.n)
    _check_sets(S, E)
    counts = _marginal_counts(S, data.Z)
    flags = _base_flags(probs) + _small_cell_flags(counts, ["Z=1", "Z=0"], min_cell)
    cond = {"K": E.K}
    out = {}
    for name, V in (("AIEY", data.Y), ("AIED", data.D)):
        m1 = ipw_mean_interference(S, V, data.Z, E, 1, probs=probs)
        m0 = ipw_mean_interference(S, V, data.Z, E, 0, probs=probs)
        out[name] = EstimateReport(name, dict(cond), m1 - m0, {"mu1": m1, "mu0": m0},
                                   dict(counts), list(flags))
    aded = _marginal_aded(S, data, probs, flags)
    aied = out["AIED"].point
    alt = out["AIEY"].point / aied if aied != 0.0 else None
    laie = _ratio("LAIE", cond, out["AIEY"].point, aded.point, "marginal ADED", counts,
                  flags, weak, strict, {"aiey_over_aied": alt})
    return AieResult(out["AIEY"], out["AIED"], aded, laie)


def aoe(S, data, E, *, probs=None, weak=WEAK_RELEVANCE, min_cell=MIN_CELL, strict=False):
    """Average overall effects, summing over ``E_i`` plus ``i`` itself.

    Returns ``(AOEY, AOED, LAOE)`` with ``LAOE = AOEY / marginal ADED``.
    """
    _check_s(S, data.n)
    _check_sets(S, E)
    counts = _marginal_counts(S, data.Z)
    flags = _base_flags(probs) + _small_cell_flags(counts, ["Z=1", "Z=0"], min_cell)
    cond = {"K": E.K}
    out = {}
    for name, V in (("AOEY", data.Y), ("AOED", data.D)):
        m1 = ipw_mean_interference(S, V, data.Z, E, 1, include_self=True, probs=probs)
        m0 = ipw_mean_interference(S, V, data.Z, E, 0, include_self=True, probs=probs)
        out[name] = EstimateReport(name, dict(cond), m1 - m0, {"mu1": m1, "mu0": m0},
                                   dict(counts), list(flags))
    aded = _marginal_aded(S, data, probs, flags)
    laoe = _ratio("LAOE", cond, out["AOEY"].point, aded.point, "marginal ADED", counts,
                  flags, weak, strict)
    return AoeResult(out["AOEY"], out["AOED"], laoe)


def ase(S, data, T, z, t, t_prime, *, probs=None, weak=WEAK_RELEVANCE, min_cell=MIN_CELL,
        strict=False):
    """Average spillover effects of moving exposure from ``t_prime`` to ``t`` at fixed ``z``.

    Returns ``(ASEY, ASED, LASE)`` with ``LASE = ASEY / ASED``.
    """
    if t == t_prime:
        raise ValueError("spillover contrast needs t != t_prime")
    _check_s(S, data.n)
    counts = _joint_counts(S, data.Z, T)
    flags = _base_flags(probs) + _small_cell_flags(counts, [_label(z, t), _label(z, t_prime)],
                                                   min_cell)
    cond = {"z": z, "t": t, "t_prime": t_prime}
    out = {}
    for name, V in (("ASEY", data.Y), ("ASED", data.D)):
        ma = ipw_mean_conditional(S, V, data.Z, T, z, t, probs)
        mb = ipw_mean_conditional(S, V, data.Z, T, z, t_prime, probs)
        out[name] = EstimateReport(name, dict(cond), ma - mb, {"mu_t": ma, "mu_t_prime": mb},
                                   dict(counts), list(flags))
    lase = _ratio("LASE", cond, out["ASEY"].point, out["ASED"].point, "ASED", counts,
                  flags, weak, strict)
    return AseResult(out["ASEY"], out["ASED"], lase)


@dataclass
class SpilloverDiagnostic:
    """Spillover contrasts across all exposure pairs, with HAC standard errors."""

    rows: list
    flags: list
    notes: list


def spillover_diagnostic(S, data, T, net, bandwidth, *, critical=1.96):
    """Test for spillovers by contrasting exposure levels at fixed ``z``.

    For every ``z`` and every pair ``t < t'`` of realized exposure levels
    in ``S`` this computes ASEY and ASED with HAC standard errors at the
    given bandwidth. ``"spillover_evidence"`` is flagged when some
    contrast exceeds ``critical`` standard errors. Pairs with an empty
    cell are skipped with a note.
    """
    from .variance import hac_variance, residuals_ase

    _check_s(S, data.n)
    levels = sorted(int(v) for v in np.unique(exposure_array(T)[S.indices]))
    if len(levels) < 2:
        return SpilloverDiagnostic([], ["not_applicable"], ["fewer than two exposure levels in S"])
    rows, notes = [], []
    evidence = False
    for z in (0, 1):
        for a_pos, ta in enumerate(levels):
            for tb in levels[a_pos + 1:]:
                try:
                    res = ase(S, data, T, z, tb, ta)
                    vy, vd, _ = residuals_ase(S, data, T, z, tb, ta, with_ratio=False)
                except EmptyCell as exc:
                    notes.append(f"skipped z={z}, t={tb}, t'={ta}: {exc}")
                    continue
                for rep, vec in ((res.asey, vy), (res.ased, vd)):
                    h = hac_variance(net, S, vec, bandwidth)
                    sig = h.se > 0 and abs(rep.point) > critical * h.se
                    evidence |= sig
                    rows.append({"estimand": rep.estimand, "z": z, "t": tb, "t_prime": ta,
                                 "point": rep.point, "se": h.se, "significant": bool(sig),
                                 "hac_negative": h.negative_flag})
    flags = ["spillover_evidence"] if evidence else []
    return SpilloverDiagnostic(rows, flags, notes)
