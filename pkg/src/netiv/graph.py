"""Undirected simple networks with truncated path-distance queries.

Distances are hop counts along shortest paths. Unreachable pairs have
distance ``UNREACHABLE`` (``math.inf``), never a large integer.

Pairwise distance work is done by a level-synchronous multi-source BFS
built from sparse matrix products, truncated at a caller-supplied cap.
That is all the HAC and bootstrap code needs, and it avoids an all-pairs
table on large networks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

UNREACHABLE = math.inf

# rows of sources processed per sparse BFS block
_BFS_CHUNK = 2048


class Network:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    Parameters
    ----------
    n : int
        Number of nodes.
    edges : ndarray of shape (m, 2)
        Deduplicated pairs with ``i < j``.
    ids : sequence, optional
        External labels; ``ids[k]`` is the label of node ``k``.
    """

    def __init__(self, n, edges, ids=None):
        self.n = int(n)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        edges.setflags(write=False)
        self.edges = edges
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        adj = sparse.csr_matrix(
            (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(self.n, self.n)
        )
        adj.sort_indices()
        adj.indptr.setflags(write=False)
        adj.indices.setflags(write=False)
        self._adj = adj
        self.ids = tuple(ids) if ids is not None else None
        self._bands = {}

    def __repr__(self):
        return f"Network(n={self.n}, m={len(self.edges)})"

    @property
    def adjacency(self):
        """Sparse CSR adjacency matrix with sorted indices (do not mutate)."""
        return self._adj

    @property
    def degrees(self):
        return np.diff(self._adj.indptr)

    def neighbors(self, i):
        """Sorted neighbor ids of node ``i``."""
        self._check(i)
        return self._adj.indices[self._adj.indptr[i]:self._adj.indptr[i + 1]]

    def band(self, r):
        """Sparse n x n 0/1 matrix of pairs with ``1 <= distance <= r``.

        Cached per radius; the network never changes after construction.
        """
        r = int(r)
        if r not in self._bands:
            src, dst, dist = within_distance(self, np.arange(self.n), r)
            keep = dist >= 1
            mat = sparse.csr_matrix(
                (np.ones(int(keep.sum())), (src[keep], dst[keep])), shape=(self.n, self.n)
            )
            mat.sort_indices()
            self._bands[r] = mat
        return self._bands[r]

    def _check(self, i):
        if not 0 <= int(i) < self.n:
            raise IndexError(f"node {i} out of range for network with n={self.n}")


def build_network(n, edge_pairs, ids=None):
    """Build a :class:`Network` from a list of pairs.

    Duplicate and reversed pairs collapse to one edge. Self-loops and
    out-of-range ids raise ``ValueError``.
    """
    n = int(n)
    if n < 0:
        raise ValueError("n must be nonnegative")
    arr = np.asarray(list(edge_pairs), dtype=np.int64).reshape(-1, 2)
    if arr.size:
        bad = (arr < 0) | (arr >= n)
        if bad.any():
            k = int(np.flatnonzero(bad.any(axis=1))[0])
            raise ValueError(f"edge {tuple(arr[k].tolist())} has a node id outside 0..{n - 1}")
        loops = arr[:, 0] == arr[:, 1]
        if loops.any():
            k = int(np.flatnonzero(loops)[0])
            raise ValueError(f"self-loop ({arr[k, 0]}, {arr[k, 1]}) is not allowed")
        arr = np.unique(np.sort(arr, axis=1), axis=0)
    if ids is not None and len(ids) != n:
        raise ValueError("ids must have length n")
    return Network(n, arr, ids)


def load_edge_list(path, ids=None):
    """Read a CSV edge list with header ``i,j``.

    Parameters
    ----------
    path : str or path-like
    ids : sequence of str, optional
        Node universe. When given, every endpoint must be one of these
        labels and isolated nodes are kept. Otherwise the universe is the
        set of endpoints in first-seen order.

    Returns
    -------
    Network
        With ``ids`` set to the string labels.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["i", "j"]:
            raise ValueError(f"{path}: expected header 'i,j'")
        raw = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}:{lineno}: expected two columns")
            raw.append((row[0].strip(), row[1].strip(), lineno))

    if ids is None:
        index = {}
        for a, b, _ in raw:
            index.setdefault(a, len(index))
            index.setdefault(b, len(index))
        labels = list(index)
    else:
        labels = [str(x) for x in ids]
        index = {lab: k for k, lab in enumerate(labels)}
    pairs = []
    for a, b, lineno in raw:
        missing = [x for x in (a, b) if x not in index]
        if missing:
            raise ValueError(f"{path}:{lineno}: unknown node id(s) {missing}")
        if a == b:
            raise ValueError(f"{path}:{lineno}: self-loop ({a}, {b}) is not allowed")
        pairs.append((index[a], index[b]))
    return build_network(len(labels), pairs, ids=labels)


def within_distance(net, sources, cap):
    """All pairs ``(s, j)`` with ``distance(sources[s], j) <= cap``.

    Parameters
    ----------
    net : Network
    sources : array_like of int
        Source node ids.
    cap : int
        Maximum distance reported.

    Returns
    -------
    src_pos, dst, dist : ndarray
        ``src_pos`` indexes into ``sources``. Every source appears with
        itself at distance 0.
    """
    sources = np.asarray(sources, dtype=np.int64)
    cap = int(cap)
    if cap < 0:
        raise ValueError("cap must be nonnegative")
    adj = net.adjacency.astype(np.float64)
    out_s, out_d, out_l = [], [], []
    for start in range(0, sources.size, _BFS_CHUNK):
        block = sources[start:start + _BFS_CHUNK]
        m = block.size
        local = np.arange(m)
        out_s.append(local + start)
        out_d.append(block)
        out_l.append(np.zeros(m, dtype=np.int64))
        visited = sparse.csr_matrix((np.ones(m), (local, block)), shape=(m, net.n))
        frontier = visited
        for level in range(1, cap + 1):
            if frontier.nnz == 0:
                break
            nxt = (frontier @ adj).tocsr()
            nxt.data[:] = 1.0
            nxt = (nxt - nxt.multiply(visited)).tocsr()
            nxt.eliminate_zeros()
            if nxt.nnz == 0:
                break
            coo = nxt.tocoo()
            out_s.append(coo.row.astype(np.int64) + start)
            out_d.append(coo.col.astype(np.int64))
            out_l.append(np.full(coo.nnz, level, dtype=np.int64))
            visited = (visited + nxt).tocsr()
            frontier = nxt
    if not out_s:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    return np.concatenate(out_s), np.concatenate(out_d), np.concatenate(out_l)


class DistanceOracle:
    """Path-distance queries on a fixed network.

    Full single-source rows are computed on demand and cached, so repeated
    queries from the same source are cheap. For bulk truncated queries use
    :func:`within_distance`.
    """

    def __init__(self, net):
        self.net = net
        self._rows = {}

    def row(self, i):
        """Distances from ``i`` to every node, ``inf`` where unreachable."""
        self.net._check(i)
        i = int(i)
        if i not in self._rows:
            d = csgraph.shortest_path(self.net.adjacency, unweighted=True, directed=False, indices=i)
            d.setflags(write=False)
            self._rows[i] = d
        return self._rows[i]

    def distance(self, i, j):
        self.net._check(j)
        d = self.row(i)[int(j)]
        return UNREACHABLE if math.isinf(d) else int(d)


def path_distance(net, i, j):
    """Shortest-path hop count between ``i`` and ``j``; ``inf`` if disconnected."""
    net._check(i)
    net._check(j)
    if int(i) == int(j):
        return 0
    return DistanceOracle(net).distance(i, j)


def neighborhood(net, i, s):
    """Sorted array of nodes within distance ``s`` of ``i`` (includes ``i``)."""
    if s < 0:
        raise ValueError("radius must be nonnegative")
    net._check(i)
    _, dst, _ = within_distance(net, [int(i)], int(s))
    return np.sort(dst)


@dataclass(frozen=True)
class Subpopulation:
    """Ordered set of unit ids over which estimands are averaged.

    ``warnings`` carries ``"empty"`` when a selection rule matched nothing;
    estimators reject empty subpopulations.
    """

    indices: np.ndarray
    meta: dict = field(default_factory=dict)
    warnings: tuple = ()

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ValueError("indices must be one-dimensional")
        if idx.size > 1 and np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
        idx = idx.copy()
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return int(self.indices.size)

    @property
    def size(self):
        return int(self.indices.size)

    def validate(self, n):
        if self.indices.size and (self.indices[0] < 0 or self.indices[-1] >= n):
            raise ValueError(f"subpopulation indices must lie in 0..{n - 1}")
        return self


def subpopulation(indices, n=None, meta=None):
    """Subpopulation from arbitrary ids (sorted, deduplicated)."""
    idx = np.unique(np.asarray(indices, dtype=np.int64))
    sub = Subpopulation(idx, meta or {"rule": "explicit"},
                        () if idx.size else ("empty",))
    if n is not None:
        sub.validate(n)
    return sub


def full_population(net):
    return Subpopulation(np.arange(net.n), {"rule": "all"})


def degree_subpopulation(net, delta, eligible=None):
    """Units whose degree equals ``delta``, optionally restricted by a mask.

    Degree is always counted on the whole network; ``eligible`` only
    filters which units enter ``S``.
    """
    if delta < 0:
        raise ValueError("degree must be nonnegative")
    mask = net.degrees == int(delta)
    meta = {"rule": "degree", "delta": int(delta)}
    if eligible is not None:
        eligible = np.asarray(eligible, dtype=bool)
        if eligible.shape != (net.n,):
            raise ValueError("eligible mask must have length n")
        mask &= eligible
        meta["eligible"] = True
    idx = np.flatnonzero(mask)
    return Subpopulation(idx, meta, () if idx.size else ("empty",))


@dataclass(frozen=True)
class InterferenceSets:
    """Per-unit sets ``E_i = {j : 1 <= distance(i, j) <= K}`` for ``i`` in ``S``.

    ``matrix`` is a sparse |S| x n 0/1 matrix whose row ``k`` is the
    indicator of ``E_{S[k]}``.
    """

    K: int
    S: Subpopulation
    matrix: sparse.csr_matrix

    def members(self, k):
        """Sorted members of the set for the ``k``-th unit of ``S``."""
        m = self.matrix
        return m.indices[m.indptr[k]:m.indptr[k + 1]]

    def sizes(self):
        return np.diff(self.matrix.indptr)


def interference_sets(net, S, K):
    """Interference sets of radius ``K`` for each unit of ``S``."""
    if int(K) < 1:
        raise ValueError("interference radius K must be >= 1")
    S.validate(net.n)
    src, dst, dist = within_distance(net, S.indices, int(K))
    keep = dist >= 1
    mat = sparse.csr_matrix(
        (np.ones(int(keep.sum())), (src[keep], dst[keep])), shape=(S.size, net.n)
    )
    mat.sort_indices()
    return InterferenceSets(int(K), S, mat)


def distance_indicator(net, S, b):
    """Sparse |S| x |S| 0/1 matrix of ``1{distance(i, j) <= b}`` over ``S``."""
    S.validate(net.n)
    pos = np.full(net.n, -1, dtype=np.int64)
    pos[S.indices] = np.arange(S.size)
    src, dst, _ = within_distance(net, S.indices, int(b))
    col = pos[dst]
    keep = col >= 0
    mat = sparse.csr_matrix(
        (np.ones(int(keep.sum())), (src[keep], col[keep])), shape=(S.size, S.size)
    )
    mat.sort_indices()
    return mat


@dataclass(frozen=True)
class DensenessTable:
    """Moments of within-``S`` boundary and ball sizes for ``s = 0..s_max``."""

    k: int
    boundary: np.ndarray    # M^partial_S(s; k)
    cumulative: np.ndarray  # M_S(s, k)


def denseness_moments(net, S, s_max, k=1):
    """k-th moments over ``S`` of ``|{j in S: d(i,j) = s}|`` and ``|{j in S: d(i,j) <= s}|``."""
    if k < 1:
        raise ValueError("moment order k must be >= 1")
    if s_max < 0:
        raise ValueError("s_max must be nonnegative")
    S.validate(net.n)
    if S.size == 0:
        raise ValueError("subpopulation is empty")
    in_s = np.zeros(net.n, dtype=bool)
    in_s[S.indices] = True
    src, dst, dist = within_distance(net, S.indices, int(s_max))
    keep = in_s[dst]
    counts = np.zeros((S.size, int(s_max) + 1))
    np.add.at(counts, (src[keep], dist[keep]), 1.0)
    cum = np.cumsum(counts, axis=1)
    return DensenessTable(
        int(k),
        (counts ** k).mean(axis=0),
        (cum ** k).mean(axis=0),
    )
