"""Instrumental exposure mappings.

Every non-constant mapping aggregates one per-node channel (the
instrument ``Z`` or the treatment ``D``) over the band of nodes at hop
distance ``1..radius`` from a unit, then optionally thresholds it:

* ``constant``: ``T_i = 0``
* ``count``: ``T_i = sum of the channel over the band``
* ``threshold``: ``T_i = 1{count > cutoff}``

Because the band excludes ``i``, a ``Z``-sourced exposure never depends
on the unit's own instrument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("constant", "count", "threshold")
SOURCES = ("Z", "D")


@dataclass(frozen=True)
class ExposureSpec:
    """Declarative exposure mapping.

    Parameters
    ----------
    kind : {"constant", "count", "threshold"}
    radius : int
        Hop radius of the aggregation band (>= 1 unless constant).
    source : {"Z", "D"}
        Channel being aggregated.
    cutoff : int
        Threshold ``c`` in ``1{count > c}``.
    """

    kind: str = "constant"
    radius: int = 1
    source: str = "Z"
    cutoff: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown exposure kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "constant":
            # constant ignores the other fields; normalize so equal maps compare equal
            object.__setattr__(self, "radius", 0)
            object.__setattr__(self, "source", "Z")
            object.__setattr__(self, "cutoff", 0)
            return
        if self.source not in SOURCES:
            raise ValueError(f"exposure source must be 'Z' or 'D', got {self.source!r}")
        if int(self.radius) < 1:
            raise ValueError("exposure radius must be >= 1")
        object.__setattr__(self, "radius", int(self.radius))
        object.__setattr__(self, "cutoff", int(self.cutoff))

    @classmethod
    def parse(cls, text):
        """Parse ``constant``, ``count:src=Z,r=1`` or ``threshold:src=D,r=1,c=0``."""
        text = text.strip()
        kind, _, rest = text.partition(":")
        kind = kind.strip().lower()
        aliases = {"neighbor_count": "count", "neighbor_threshold": "threshold"}
        kind = aliases.get(kind, kind)
        if kind not in KINDS:
            raise ValueError(f"cannot parse exposure spec {text!r}: unknown kind {kind!r}")
        opts = {}
        for part in filter(None, (p.strip() for p in rest.split(","))):
            key, eq, val = part.partition("=")
            if not eq:
                raise ValueError(f"cannot parse exposure spec {text!r}: bad field {part!r}")
            opts[key.strip().lower()] = val.strip()
        unknown = set(opts) - {"src", "r", "c"}
        if unknown:
            raise ValueError(f"cannot parse exposure spec {text!r}: unknown fields {sorted(unknown)}")
        if kind == "constant":
            return cls("constant")
        try:
            radius = int(opts.get("r", 1))
            cutoff = int(opts.get("c", 0))
        except ValueError:
            raise ValueError(f"cannot parse exposure spec {text!r}: r and c must be integers") from None
        if kind == "count" and "c" in opts:
            raise ValueError(f"cannot parse exposure spec {text!r}: count takes no cutoff")
        return cls(kind, radius, opts.get("src", "Z").upper(), cutoff)

    def __str__(self):
        if self.kind == "constant":
            return "constant"
        s = f"{self.kind}:src={self.source},r={self.radius}"
        if self.kind == "threshold":
            s += f",c={self.cutoff}"
        return s

    def declared_support(self, max_band):
        if self.kind == "constant":
            return (0,)
        if self.kind == "threshold":
            return (0, 1)
        return tuple(range(int(max_band) + 1))

    def evaluate(self, net, Z, D=None):
        """Exposure values for one draw (shape ``(n,)``) or a batch (``(R, n)``)."""
        if self.kind == "constant":
            base = np.asarray(Z)
            return np.zeros(base.shape, dtype=np.int64)
        channel = np.asarray(Z if self.source == "Z" else D)
        if channel is None or channel.ndim == 0:
            raise ValueError(f"exposure {self} needs the {self.source} channel")
        if channel.shape[-1] != net.n:
            raise ValueError(f"channel length {channel.shape[-1]} does not match network size {net.n}")
        band = net.band(self.radius)
        x = channel.astype(np.float64)
        counts = (band @ x.T).T if x.ndim == 2 else band @ x
        counts = np.rint(counts).astype(np.int64)
        if self.kind == "threshold":
            return (counts > self.cutoff).astype(np.int64)
        return counts


@dataclass(frozen=True)
class ExposureValues:
    """Realized exposures ``T_i`` for every node plus the declared support."""

    spec: ExposureSpec
    values: np.ndarray
    support: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64).copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def _check_binary(name, x, n):
    x = np.asarray(x)
    if x.shape != (n,):
        raise ValueError(f"{name} has length {x.shape[0] if x.ndim else 0}, expected {n}")
    if not np.isin(x, (0, 1)).all():
        raise ValueError(f"{name} must be binary")
    return x.astype(np.int64)


def compute_exposures(net, Z, D, spec):
    """Evaluate ``spec`` on a network for given instrument and treatment vectors."""
    Z = _check_binary("Z", Z, net.n)
    D = _check_binary("D", D, net.n) if D is not None else None
    if spec.kind != "constant" and spec.source == "D" and D is None:
        raise ValueError(f"exposure {spec} needs D")
    vals = spec.evaluate(net, Z, D)
    max_band = int(net.band(spec.radius).getnnz(axis=1).max(initial=0)) if spec.kind != "constant" else 0
    return ExposureValues(spec, vals, spec.declared_support(max_band))


def exposure_support(spec, net, S):
    """Values the exposure can take for some unit of ``S``.

    For count maps this is ``0..max band size over S``; threshold maps
    attain 1 only if some unit has more than ``cutoff`` band members.
    """
    if spec.kind == "constant":
        return (0,)
    sizes = net.band(spec.radius)[S.indices].getnnz(axis=1)
    top = int(sizes.max(initial=0))
    if spec.kind == "count":
        return tuple(range(top + 1))
    return (0, 1) if top > spec.cutoff else (0,)
