"""Population values of the estimands: closed forms and Monte Carlo integration.

A :class:`PopulationTable` holds per-unit conditional means over ``S``:

* ``("Y", z, t)`` / ``("D", z, t)``: ``E[V_i | Z_i = z, T_i = t]``
* ``("Ym", z)`` / ``("Dm", z)``: ``E[V_i | Z_i = z]``
* ``("IEY", z)`` / ``("IED", z)``: ``E[sum_{j in E_i} V_j | Z_i = z]``

and ``prob[(z, t)] = Pr(Z_i = z, T_i = t)``. Population estimands are
averages of differences of these over ``S``. A conditional mean is NaN
where its conditioning event has probability zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..exposure import ExposureSpec, exposure_support
from ..graph import full_population, interference_sets
from .dgp import Model, default_iem


@dataclass
class PopulationTable:
    """Per-unit conditional means plus the targets built from them."""

    iem: ExposureSpec
    aie_radius: int
    S: object
    levels: tuple
    mu: dict
    prob: dict
    batches: dict | None = field(default=None, repr=False)

    def defined(self, t):
        """Units whose ``(1, t)`` and ``(0, t)`` cells have positive probability."""
        return (self.prob[(1, t)] > 0) & (self.prob[(0, t)] > 0)

    def _forms(self, t):
        # each target as (kind, args): diff of two keys, sum of diffs, or ratio
        return {
            f"ADEY({t})": ("diff", ("Y", 1, t), ("Y", 0, t)),
            f"ADED({t})": ("diff", ("D", 1, t), ("D", 0, t)),
            f"LADE({t})": ("ratio", f"ADEY({t})", f"ADED({t})"),
            "ADEY": ("diff", ("Ym", 1), ("Ym", 0)),
            "ADED": ("diff", ("Dm", 1), ("Dm", 0)),
            "AIEY": ("diff", ("IEY", 1), ("IEY", 0)),
            "AIED": ("diff", ("IED", 1), ("IED", 0)),
            "LAIE": ("ratio", "AIEY", "ADED"),
            "AOEY": ("sum", "ADEY", "AIEY"),
            "AOED": ("sum", "ADED", "AIED"),
            "LAOE": ("ratio", "AOEY", "ADED"),
        }

    def _evaluate(self, t, mask, mu):
        mask = np.ones(self.S.size, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        out = {}
        for name, (kind, a, b) in self._forms(t).items():
            if kind == "diff":
                out[name] = float(np.mean(mu[a][mask] - mu[b][mask]))
            elif kind == "sum":
                out[name] = out[a] + out[b]
            else:
                out[name] = out[a] / out[b] if out[b] != 0 else float("nan")
        return out

    def targets(self, t, mask=None):
        """Population estimands at exposure level ``t``.

        ``mask`` restricts the average to a subset of ``S`` (boolean over
        ``S``). Conditional entries are NaN if some masked unit has an
        undefined cell.
        """
        return self._evaluate(t, mask, self.mu)

    def target_se(self, t, mask=None):
        """Monte Carlo standard errors of :meth:`targets` (batch means, delta method)."""
        if self.batches is None:
            raise ValueError("standard errors need a Monte Carlo table")
        num, den = self.batches["num"], self.batches["den"]
        nb = next(iter(num.values())).shape[0]
        point = self.targets(t, mask)
        devs = []
        for b in range(nb):
            dmu = {}
            for key, mu in self.mu.items():
                total = den[key].sum(axis=0)
                with np.errstate(invalid="ignore", divide="ignore"):
                    dmu[key] = (num[key][b] - np.nan_to_num(mu) * den[key][b]) / (total / nb)
            lin = {}
            for name, (kind, a, c) in self._forms(t).items():
                if kind == "diff":
                    m = np.ones(self.S.size, bool) if mask is None else np.asarray(mask, bool)
                    lin[name] = float(np.mean(dmu[a][m] - dmu[c][m]))
                elif kind == "sum":
                    lin[name] = lin[a] + lin[c]
                else:
                    lin[name] = lin[a] / point[c] - point[a] * lin[c] / point[c] ** 2
            devs.append(lin)
        return {k: float(np.std([d[k] for d in devs], ddof=1) / np.sqrt(nb)) for k in point}


def _ring_offsets(K):
    return [d for k in range(1, K + 1) for d in (k, -k)]


def _binom_pmf(m, p):
    return stats.binom.pmf(np.arange(m + 1), m, p)


def _tail(base, gamma2, shift, m, p):
    """``Pr(base + gamma2 * (shift + X) >= 0)`` with ``X ~ Bin(m, p)``, per unit."""
    pmf = _binom_pmf(m, p)
    k = np.arange(m + 1)
    hit = (base[:, None] + gamma2[:, None] * (shift + k)[None, :]) >= 0
    return hit @ pmf


def _poisson_binomial(q_rows):
    """Row-wise pmf of a sum of independent Bernoullis with success probs ``q_rows``."""
    n, m = q_rows.shape
    pmf = np.zeros((n, m + 1))
    pmf[:, 0] = 1.0
    for c in range(m):
        q = q_rows[:, c:c + 1]
        nxt = pmf * (1 - q)
        nxt[:, 1:] += pmf[:, :-1] * q
        pmf = nxt
    return pmf


def population_params_closed_form(dgp, coefs, iem_variant="correct", aie_radius=None):
    """Exact population table for the ring designs over ``S = all units``.

    Parameters
    ----------
    dgp : DgpSpec
        ``DGP1`` or ``DGP2``.
    coefs : Coefficients
    iem_variant : {"correct", "incorrect"}
        Correct uses radius ``L``; incorrect uses radius 1.
    aie_radius : int, optional
        Radius of the interference sets; defaults to the IEM radius.
    """
    if dgp.kind == "RealNet":
        raise ValueError("no closed form for RealNet; use population_params_mc")
    if iem_variant not in ("correct", "incorrect"):
        raise ValueError("iem_variant must be 'correct' or 'incorrect'")
    correct = iem_variant == "correct"
    iem = default_iem(dgp, correct)
    n, L, p = dgp.n, dgp.L, dgp.p
    r = iem.radius
    K = int(aie_radius or r)
    c = coefs
    idx = np.arange(n)
    levels = tuple(range(2 * r + 1))
    mu, prob = {}, {}
    pz = {1: p, 0: 1 - p}

    if dgp.kind == "DGP1":
        for z in (0, 1):
            base = c.gamma0 + c.gamma1 * z
            for t in levels:
                if correct:
                    md = (base + c.gamma2 * t >= 0).astype(np.float64)
                else:
                    md = _tail(base, c.gamma2, t, 2 * L - 2, p)
                mu[("D", z, t)] = md
                mu[("Y", z, t)] = c.beta0 + c.beta1 * md
            md = _tail(base, c.gamma2, 0, 2 * L, p)
            mu[("Dm", z)] = md
            mu[("Ym", z)] = c.beta0 + c.beta1 * md
        tpmf = _binom_pmf(2 * r, p)
        for z in (0, 1):
            for t in levels:
                prob[(z, t)] = np.full(n, pz[z] * tpmf[t])
        # E[D_j | Z_i = z] for j within L of i, and unconditionally otherwise
        near = {z: sum(pz[zj] * _tail(c.gamma0 + c.gamma1 * zj, c.gamma2, z, 2 * L - 1, p)
                       for zj in (0, 1)) for z in (0, 1)}
        far = sum(pz[zj] * _tail(c.gamma0 + c.gamma1 * zj, c.gamma2, 0, 2 * L, p) for zj in (0, 1))
        for z in (0, 1):
            ied = np.zeros(n)
            iey = np.zeros(n)
            for off in _ring_offsets(K):
                j = (idx + off) % n
                dj = near[z][j] if abs(off) <= L else far[j]
                ied += dj
                iey += c.beta0[j] + c.beta1[j] * dj
            mu[("IED", z)] = ied
            mu[("IEY", z)] = iey
    else:
        ind = {z: (c.gamma0 + c.gamma1 * z >= 0).astype(np.float64) for z in (0, 1)}
        q = p * ind[1] + (1 - p) * ind[0]
        band_q = sum(q[(idx + off) % n] for off in _ring_offsets(L))
        outer_q = band_q - sum(q[(idx + off) % n] for off in _ring_offsets(r))
        for z in (0, 1):
            for t in levels:
                mu[("D", z, t)] = ind[z].copy()
                mu[("Y", z, t)] = c.beta0 + c.beta1 * ind[z] + c.beta2 * t + c.beta2 * outer_q
            mu[("Dm", z)] = ind[z].copy()
            mu[("Ym", z)] = c.beta0 + c.beta1 * ind[z] + c.beta2 * band_q
        rows = np.column_stack([q[(idx + off) % n] for off in _ring_offsets(r)])
        tpmf = _poisson_binomial(rows)
        for z in (0, 1):
            for t in levels:
                prob[(z, t)] = pz[z] * tpmf[:, t]
        for z in (0, 1):
            ied = np.zeros(n)
            iey = np.zeros(n)
            for off in _ring_offsets(K):
                j = (idx + off) % n
                ied += q[j]
                level = band_q[j]
                if abs(off) <= L:
                    level = level - q + ind[z]
                iey += c.beta0[j] + c.beta1[j] * q[j] + c.beta2[j] * level
            mu[("IED", z)] = ied
            mu[("IEY", z)] = iey

    S = full_population(_cycle(dgp))
    return PopulationTable(iem, K, S, levels, mu, prob)


def _cycle(dgp):
    from .dgp import ring_band
    return ring_band(dgp.n, 1)


def population_params_mc(dgp, coefs, net=None, oracle_reps=1_000_000, seed=0, *, iem=None,
                         S=None, aie_radius=None, batches=100, chunk=5000):
    """Population table by Monte Carlo integration over fresh instrument draws.

    Conditional means are ratio estimates (sum of ``V 1{event}`` over draws
    divided by the event count), computed per unit. Standard errors come
    from ``batches`` independent batches via :meth:`PopulationTable.target_se`.

    Parameters
    ----------
    dgp : DgpSpec
    coefs : Coefficients
    net : Network, optional
        Base network (the cycle for ring designs; required for RealNet).
    oracle_reps : int
        Number of instrument draws.
    seed : int
    iem : ExposureSpec, optional
        Defaults to the design's correct mapping.
    S : Subpopulation, optional
        Defaults to all units.
    aie_radius : int, optional
        Defaults to the IEM radius.
    """
    if oracle_reps < 1:
        raise ValueError("oracle_reps must be >= 1")
    model = Model(dgp, net, coefs)
    net = model.net
    iem = iem or default_iem(dgp, True)
    S = S or full_population(net)
    K = int(aie_radius or max(iem.radius, 1))
    E = interference_sets(net, S, K)
    levels = exposure_support(iem, net, S)
    cols = S.indices
    nb = min(int(batches), int(oracle_reps))
    sizes = [len(a) for a in np.array_split(np.arange(oracle_reps), nb)]

    keys = [(v, z, t) for v in ("Y", "D") for z in (0, 1) for t in levels]
    keys += [(v, z) for v in ("Ym", "Dm", "IEY", "IED") for z in (0, 1)]
    num = {k: np.zeros((nb, S.size)) for k in keys}
    den = {k: np.zeros((nb, S.size)) for k in keys}

    for b, size in enumerate(sizes):
        rng = np.random.default_rng([seed, b])
        done = 0
        while done < size:
            m = min(chunk, size - done)
            done += m
            Z = model.draw_instruments(rng, m)
            D, Y = model.respond(Z)
            T = iem.evaluate(net, Z, D)[:, cols]
            iey = np.asarray(E.matrix @ Y.T).T
            ied = np.asarray(E.matrix @ D.T).T
            Zs, Ys, Ds = Z[:, cols], Y[:, cols], D[:, cols]
            for z in (0, 1):
                mz = Zs == z
                cz = mz.sum(axis=0)
                for v, X in (("Ym", Ys), ("Dm", Ds), ("IEY", iey), ("IED", ied)):
                    num[(v, z)][b] += (X * mz).sum(axis=0)
                    den[(v, z)][b] += cz
                for t in levels:
                    mzt = mz & (T == t)
                    czt = mzt.sum(axis=0)
                    for v, X in (("Y", Ys), ("D", Ds)):
                        num[(v, z, t)][b] += (X * mzt).sum(axis=0)
                        den[(v, z, t)][b] += czt

    mu = {}
    with np.errstate(invalid="ignore", divide="ignore"):
        for k in keys:
            tot = den[k].sum(axis=0)
            mu[k] = np.where(tot > 0, num[k].sum(axis=0) / np.where(tot > 0, tot, 1), np.nan)
    prob = {(z, t): den[("Y", z, t)].sum(axis=0) / oracle_reps for z in (0, 1) for t in levels}
    return PopulationTable(iem, K, S, tuple(levels), mu, prob, {"num": num, "den": den})
