"""Data-generating processes for the simulation studies.

Ring designs place ``n`` units on a cycle. The interaction graph
``G^(L)`` links units whose circular distance is at most ``L``; path
distances for interference sets and HAC are measured on the cycle
itself, on which ``G^(L)`` is exactly the band of distances ``1..L``.

* ``DGP1``: ``Y = b0 + b1 D``, ``D = 1{g0 + g1 Z + g2 sum_j G_ij Z_j >= 0}``
* ``DGP2``: ``Y = b0 + b1 D + b2 sum_j G_ij D_j``, ``D = 1{g0 + g1 Z >= 0}``
* ``RealNet``: ``Y = b0 + b1 D``, ``D = 1{g0 + g1 Z + g2_i T >= 0}`` with
  ``T = 1{sum_j A_ij Z_j >= threshold}`` on a supplied network ``A``

Per-unit coefficients are drawn once from ``coef_seed`` and held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..estimators import StudyData
from ..graph import build_network

KINDS = ("DGP1", "DGP2", "RealNet")

_DEFAULT_P = {"DGP1": 0.4, "DGP2": 0.4, "RealNet": 0.5}
_DEFAULT_G1 = {"DGP1": 1.0, "DGP2": 1.0, "RealNet": 0.7}


def ring_band(n, L):
    """Circulant graph linking units at circular distance ``1..L``."""
    n, L = int(n), int(L)
    if L < 1:
        raise ValueError("L must be >= 1")
    if n <= 2 * L:
        raise ValueError(f"ring band needs n > 2L (got n={n}, L={L})")
    i = np.arange(n)
    pairs = np.concatenate([np.column_stack([i, (i + k) % n]) for k in range(1, L + 1)])
    return build_network(n, pairs)


@dataclass(frozen=True)
class DgpSpec:
    """Design of one simulation study.

    ``n`` is ignored for ``RealNet``, whose size comes from the network.
    ``p`` and ``gamma1`` default to the values of each design.
    """

    kind: str
    n: int = 0
    L: int = 1
    coef_seed: int = 0
    p: float | None = None
    gamma1: float | None = None
    gamma2: float = 1.0
    threshold: int = 5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown DGP kind {self.kind!r}; expected one of {KINDS}")
        if self.p is None:
            object.__setattr__(self, "p", _DEFAULT_P[self.kind])
        if self.gamma1 is None:
            object.__setattr__(self, "gamma1", _DEFAULT_G1[self.kind])
        if not 0 < self.p < 1:
            raise ValueError("instrument probability must lie in (0, 1)")
        if self.kind != "RealNet":
            ring_check = int(self.n) > 2 * int(self.L) and int(self.L) >= 1
            if not ring_check:
                raise ValueError(f"ring designs need L >= 1 and n > 2L (got n={self.n}, L={self.L})")

    @property
    def is_ring(self):
        return self.kind != "RealNet"

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "L": self.L, "coef_seed": self.coef_seed,
                "p": self.p, "gamma1": self.gamma1, "gamma2": self.gamma2,
                "threshold": self.threshold}


@dataclass(frozen=True)
class Coefficients:
    """Per-unit coefficient vectors (``beta2`` is zero outside DGP2)."""

    beta0: np.ndarray
    beta1: np.ndarray
    beta2: np.ndarray
    gamma0: np.ndarray
    gamma2: np.ndarray
    gamma1: float


def draw_coefficients(dgp, n=None):
    """Draw the fixed per-unit coefficients from ``dgp.coef_seed``."""
    n = int(dgp.n if n is None else n)
    rng = np.random.default_rng(dgp.coef_seed)
    zeros = np.zeros(n)
    if dgp.kind == "DGP1":
        b0 = rng.normal(1.0, 1.0, n)
        b1 = rng.uniform(1.0, 2.0, n)
        g0 = rng.normal(-1.5, 1.0, n)
        return Coefficients(b0, b1, zeros, g0, np.full(n, float(dgp.gamma2)), float(dgp.gamma1))
    if dgp.kind == "DGP2":
        b0 = rng.normal(1.0, 1.0, n)
        b1 = rng.uniform(1.0, 2.0, n)
        b2 = rng.normal(1.0, 1.0, n)
        g0 = rng.normal(-1.0, 1.0, n)
        return Coefficients(b0, b1, b2, g0, zeros, float(dgp.gamma1))
    b0 = rng.normal(0.0, 1.0, n)
    b1 = rng.normal(1.0, 1.0, n)
    g0 = rng.normal(-1.0, 1.0, n)
    g2 = rng.uniform(1.0, 2.0, n)
    return Coefficients(b0, b1, zeros, g0, g2, float(dgp.gamma1))


class Model:
    """A DGP bound to its network and fixed coefficients.

    Parameters
    ----------
    dgp : DgpSpec
    net : Network, optional
        Required for ``RealNet``. Ring designs build the cycle on ``n``
        nodes when omitted.
    coefs : Coefficients, optional
    """

    def __init__(self, dgp, net=None, coefs=None):
        if dgp.is_ring:
            if net is None:
                net = ring_band(dgp.n, 1)
            elif net.n != dgp.n:
                raise ValueError("network size does not match the design")
            self.G = net.band(dgp.L)
        else:
            if net is None:
                raise ValueError("RealNet needs a network")
            self.G = net.adjacency.astype(np.float64).tocsr()
        self.dgp = dgp
        self.net = net
        self.coefs = coefs if coefs is not None else draw_coefficients(dgp, net.n)
        if self.coefs.beta0.size != net.n:
            raise ValueError("coefficient length does not match the network")

    @property
    def n(self):
        return self.net.n

    def _spread(self, X):
        # sum of X over G-neighbors; works for (n,) and (R, n)
        return (self.G @ X.T).T if X.ndim == 2 else self.G @ X

    def respond(self, Z):
        """Treatment and outcome for instrument draws ``Z`` (shape ``(n,)`` or ``(R, n)``)."""
        c = self.coefs
        Zf = np.asarray(Z, dtype=np.float64)
        if self.dgp.kind == "DGP1":
            D = (c.gamma0 + c.gamma1 * Zf + c.gamma2 * self._spread(Zf) >= 0).astype(np.float64)
            Y = c.beta0 + c.beta1 * D
        elif self.dgp.kind == "DGP2":
            D = (c.gamma0 + c.gamma1 * Zf >= 0).astype(np.float64)
            Y = c.beta0 + c.beta1 * D + c.beta2 * self._spread(D)
        else:
            T = (self._spread(Zf) >= self.dgp.threshold).astype(np.float64)
            D = (c.gamma0 + c.gamma1 * Zf + c.gamma2 * T >= 0).astype(np.float64)
            Y = c.beta0 + c.beta1 * D
        return D, Y

    def draw_instruments(self, rng, size=None):
        shape = (self.n,) if size is None else (int(size), self.n)
        return (rng.random(shape) < self.dgp.p).astype(np.int64)

    def sample(self, rng):
        Z = self.draw_instruments(rng)
        D, Y = self.respond(Z)
        return StudyData(Y, D.astype(np.int64), Z)


def generate(dgp, net, rep_seed, coefs=None):
    """One data draw.

    Returns
    -------
    (StudyData, Coefficients)
        Identical for identical ``(dgp.coef_seed, rep_seed)``.
    """
    model = Model(dgp, net, coefs)
    return model.sample(np.random.default_rng(rep_seed)), model.coefs


def default_iem(dgp, correct=True):
    """Exposure mapping used for a design (correct or radius-1 misspecified)."""
    from ..exposure import ExposureSpec

    if dgp.kind == "RealNet":
        return ExposureSpec("threshold", 1, "Z", dgp.threshold - 1)
    src = "Z" if dgp.kind == "DGP1" else "D"
    return ExposureSpec("count", dgp.L if correct else 1, src)
