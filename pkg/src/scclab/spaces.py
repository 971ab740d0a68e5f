"""Explored metric balls over Cayley graphs, cusped spaces and quotients."""
from __future__ import annotations

import hashlib
import io
import json
import logging
import math
import os
import struct
import tempfile
from array import array
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .presentations import (CAYLEY, CUSPED, FREE, QUOTIENT, GroupSpec, SpaceSpec, inverse,
                            parse_space_spec)
from .wordproblem import (ElementOracle, WordProblemError, group_oracle, nf_geodesic,
                          normal_form)

log = logging.getLogger(__name__)

DEFAULT_MAX_VERTICES = 4_000_000


class InsufficientRadius(ValueError):
    """The explored ball is too small to answer exactly."""


class BallBudgetError(MemoryError):
    def __init__(self, msg, layers):
        super().__init__(msg)
        self.layers = list(layers)


class Distance(NamedTuple):
    value: int
    exact: bool


@dataclass(frozen=True)
class GrowthSeries:
    delta: int
    counts: tuple
    provenance: str = ""

    def __len__(self):
        return len(self.counts)

    def __getitem__(self, n):
        return self.counts[n]

    def to_csv(self) -> str:
        return "n,count\n" + "".join(f"{n},{c}\n" for n, c in enumerate(self.counts))


@dataclass
class GeodesicDAG:
    source: object
    target: object
    length: int
    layers: list                       # layers[i] = vertices at distance i from source
    edges: set                         # (u, v) with v one step further from source
    count: int

    @property
    def vertices(self):
        return [v for layer in self.layers for v in layer]

    def successors(self, u):
        return sorted((b for a, b in self.edges if a == u), key=_order_key)

    def paths(self, limit=None):
        """Geodesics as vertex lists, in lexicographic order of successor choice."""
        succ = {}
        for a, b in self.edges:
            succ.setdefault(a, []).append(b)
        for k in succ:
            succ[k].sort(key=_order_key)
        out = 0
        stack = [[self.source]]
        while stack:
            p = stack.pop()
            if len(p) == self.length + 1:
                yield p
                out += 1
                if limit is not None and out >= limit:
                    return
                continue
            for b in reversed(succ.get(p[-1], [])):
                stack.append(p + [b])

    def first(self):
        return next(self.paths(1))


def _order_key(v):
    return (len(v), v) if isinstance(v, tuple) else (0, v)


# ---------------------------------------------------------------- explored balls

class SpaceGraph:
    """An exact BFS ball of radius ``radius`` around the basepoint (vertex 0).

    Vertex ids follow sorted layer order: by distance from the basepoint, then by
    (depth, family, representative word).  Cayley-graph letters are recorded in
    ``mult`` (``-1`` where the target lies outside the ball); cusped vertical edges in
    ``up`` and ``down``.
    """

    def __init__(self, space: SpaceSpec, radius: int, words, dist0, depth, family,
                 mult, up, down, indptr, indices, info=None, lookup=None, oracle=None):
        self.space = space
        self.radius = radius
        self.words = words
        self.dist0 = dist0
        self.depth = depth
        self.family = family
        self.orbit = depth == 0
        self.mult = mult
        self.up = up
        self.down = down
        self.indptr = indptr
        self.indices = indices
        self.info = dict(info or {})
        self._lookup = lookup
        self._oracle = oracle
        self._rows = OrderedDict()
        self._row_budget = max(8, int(2e8 // max(1, 4 * len(words))))
        self._matrix = None
        # balls in a tree are geodesically convex, so every in-ball distance is exact
        self.convex = space.kind == CAYLEY and space.group.kind == FREE

    # -- basic structure
    @property
    def group(self) -> GroupSpec:
        return self.space.group

    @property
    def n(self) -> int:
        return len(self.words)

    def __len__(self):
        return len(self.words)

    def d0(self, v) -> int:
        return int(self.dist0[v])

    def word(self, v):
        return self.words[v]

    def is_orbit(self, v) -> bool:
        return bool(self.orbit[v])

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def step(self, v, l):
        u = int(self.mult[v, l])
        if u < 0:
            raise InsufficientRadius(f"edge {l} from vertex {v} leaves the explored ball")
        return u

    def layer_sizes(self):
        return np.bincount(self.dist0, minlength=self.radius + 1)

    def sphere(self, n, orbit_only=True):
        m = self.dist0 == n
        if orbit_only:
            m &= self.orbit
        return np.flatnonzero(m)

    def orbit_ids(self):
        return np.flatnonzero(self.orbit)

    def vertex(self, word, depth=0, family=None):
        """Vertex of ``word·o`` (raised to ``depth`` in horoball ``family`` if cusped)."""
        word = tuple(word)
        v = 0
        try:
            for l in word:
                v = self.step(v, l)
        except InsufficientRadius:
            v = self._find(word)
        for _ in range(depth):
            f = family if family is not None else 0
            v = int(self.up[v, f])
            if v < 0:
                raise InsufficientRadius("horoball vertex outside the explored ball")
        return v

    def _find(self, word):
        if self._oracle is None:
            if self.space.kind != CAYLEY:
                raise InsufficientRadius(f"{self.group.show(word)} is not reachable inside the ball")
            self._oracle = group_oracle(self.group)
        if self._lookup is None:
            self._lookup = {self._oracle.key(w): i for i, w in enumerate(self.words)}
        try:
            return self._lookup[self._oracle.key(word)]
        except (KeyError, WordProblemError):
            raise InsufficientRadius(f"{self.group.show(word)} lies outside the ball") from None

    def label(self, v) -> str:
        s = self.group.show(self.words[v])
        if self.depth[v]:
            s += f"@{int(self.family[v])}:{int(self.depth[v])}"
        return s

    # -- distances
    def matrix(self):
        if self._matrix is None:
            self._matrix = csr_matrix((np.ones(len(self.indices), dtype=np.int8), self.indices,
                                       self.indptr), shape=(self.n, self.n))
        return self._matrix

    def row(self, v) -> np.ndarray:
        """In-ball distances from ``v`` (int32, -1 when unreachable)."""
        v = int(v)
        r = self._rows.get(v)
        if r is not None:
            self._rows.move_to_end(v)
            return r
        r = self.rows([v])[0]
        self._rows[v] = r
        if len(self._rows) > self._row_budget:
            self._rows.popitem(last=False)
        return r

    def rows(self, sources, limit=np.inf, min_only=False) -> np.ndarray:
        src = np.asarray(sources, dtype=np.int64)
        d = dijkstra(self.matrix(), directed=False, indices=src, unweighted=True,
                     limit=limit, min_only=min_only)
        d[np.isinf(d)] = -1
        return d.astype(np.int32)

    def exact(self, x, y, d) -> bool:
        return self.convex or self.dist0[x] + d <= self.radius or self.dist0[y] + d <= self.radius

    def distance(self, x, y) -> Distance:
        d = int(self.row(x)[y])
        if d < 0:
            raise InsufficientRadius("vertices are disconnected inside the ball")
        return Distance(d, bool(self.exact(x, y, d)))

    def d(self, x, y) -> int:
        dist = self.distance(x, y)
        if not dist.exact:
            raise InsufficientRadius(f"distance between {self.label(x)} and {self.label(y)} "
                                     f"is only an upper bound at radius {self.radius}")
        return dist.value

    def nbhd(self, v, r):
        """Vertices within in-ball distance ``r`` of ``v``."""
        seen = {int(v): 0}
        frontier = [int(v)]
        ip, ix = self.indptr, self.indices
        for k in range(1, r + 1):
            nxt = []
            for u in frontier:
                for w in ix[ip[u]:ip[u + 1]].tolist():
                    if w not in seen:
                        seen[w] = k
                        nxt.append(w)
            frontier = nxt
        return seen

    def geodesic_dag(self, x, y) -> GeodesicDAG:
        dx = self.row(x)
        d = int(dx[y])
        if d < 0 or not self.exact(x, y, d):
            raise InsufficientRadius(f"no exact geodesics between {self.label(x)} and {self.label(y)}")
        dy = self.row(y)
        on = (dx >= 0) & (dy >= 0) & (dx + dy == d)
        ids = np.flatnonzero(on)
        layers = [[] for _ in range(d + 1)]
        for v in ids.tolist():
            layers[int(dx[v])].append(v)
        edges = set()
        count = {x: 1}
        for i in range(d):
            for u in layers[i]:
                for w in self.neighbors(u).tolist():
                    if on[w] and dx[w] == i + 1:
                        edges.add((u, w))
                        count[w] = count.get(w, 0) + count[u]
        return GeodesicDAG(x, y, d, layers, edges, count.get(y, 0))

    def path(self, start, word):
        out = [start]
        for l in word:
            out.append(self.step(out[-1], l))
        return out

    def describe(self):
        return {"space": self.space.text, "radius": self.radius, "vertices": self.n,
                "layers": self.layer_sizes().tolist(), **self.info}


# ---------------------------------------------------------------- exact word metric

class CayleyMetric:
    """Unbounded word metric for groups whose normal forms are geodesic.

    Shares the query surface of ``SpaceGraph``; vertices are normal-form words.
    """
    radius = math.inf

    def __init__(self, spec: GroupSpec):
        if not nf_geodesic(spec):
            raise WordProblemError(f"normal forms of {spec.name} are not geodesic")
        self.spec = spec
        self.oracle = group_oracle(spec)
        self._letters = spec.letters()

    @property
    def group(self):
        return self.spec

    def vertex(self, word, depth=0, family=None):
        if depth:
            raise ValueError("a Cayley metric has no horoballs")
        return normal_form(self.spec, word).canonical

    def word(self, v):
        return v

    def label(self, v):
        return self.spec.show(v)

    def d0(self, v):
        return len(v)

    def is_orbit(self, v):
        return True

    def step(self, v, l):
        return self.oracle.extend(v, v, l)[0]

    def neighbors(self, v):
        out = []
        for l in self._letters:
            u = self.step(v, l)
            if u != v and u not in out:
                out.append(u)
        return out

    def exact(self, x, y, d):
        return True

    def distance(self, x, y) -> Distance:
        return Distance(self.d(x, y), True)

    def d(self, x, y) -> int:
        if x == y:
            return 0
        return len(normal_form(self.spec, inverse(x) + tuple(y)).canonical)

    def nbhd(self, v, r):
        seen = {v: 0}
        frontier = [v]
        for k in range(1, r + 1):
            nxt = []
            for u in frontier:
                for w in self.neighbors(u):
                    if w not in seen:
                        seen[w] = k
                        nxt.append(w)
            frontier = nxt
        return seen

    def geodesic_dag(self, x, y) -> GeodesicDAG:
        d = self.d(x, y)
        layers = [[x]]
        edges = set()
        count = {x: 1}
        for i in range(d):
            nxt = []
            for u in layers[-1]:
                for w in self.neighbors(u):
                    if self.d(w, y) == d - i - 1:
                        edges.add((u, w))
                        if w not in count:
                            count[w] = 0
                            nxt.append(w)
                        count[w] += count[u]
            layers.append(sorted(nxt, key=_order_key))
        return GeodesicDAG(x, y, d, layers, edges, count[y])

    def path(self, start, word):
        out = [start]
        for l in word:
            out.append(self.step(out[-1], l))
        return out


# ---------------------------------------------------------------- construction

def _explore(root_key, root_state, expand, sortkey, radius, L, F, max_vertices):
    """Layered BFS with canonical ids.  ``expand(state)`` yields (tag, key, state)."""
    index = {root_key: 0}
    states = [root_state]
    mult = array("i", [-1] * L)
    up = array("i", [-1] * F)
    down = array("i", [-1])
    esrc, edst = array("i"), array("i")
    dist = [0]
    frontier = [0]
    sizes = [1]

    def record(v, tag, u):
        kind = tag[0]
        if kind == "l":
            mult[v * L + tag[1]] = u
            return
        if kind == "up":
            up[v * F + tag[1]] = u
        elif kind == "down":
            down[v] = u
        if u != v:
            esrc.append(v)
            edst.append(u)

    for k in range(radius + 1):
        new = {}
        pending = []
        for v in frontier:
            for tag, key, st in expand(states[v]):
                u = index.get(key)
                if u is not None:
                    record(v, tag, u)
                elif k < radius:
                    old = new.get(key)
                    if old is None or sortkey(st) < sortkey(old):
                        new[key] = st
                    pending.append((v, tag, key))
        if not new:
            break
        if len(states) + len(new) > max_vertices:
            raise BallBudgetError(
                f"ball exceeds {max_vertices} vertices at layer {k + 1} "
                f"(layers so far {sizes}, next layer {len(new)})", sizes + [len(new)])
        order = sorted(new, key=lambda kk: sortkey(new[kk]))
        frontier = []
        for key in order:
            v = len(states)
            index[key] = v
            states.append(new[key])
            dist.append(k + 1)
            frontier.append(v)
            mult.extend([-1] * L)
            up.extend([-1] * F)
            down.append(-1)
        for v, tag, key in pending:
            record(v, tag, index[key])
        sizes.append(len(order))
    n = len(states)
    return (index, states, np.asarray(dist, dtype=np.int32),
            np.frombuffer(mult, dtype=np.int32).reshape(n, L).copy() if L else np.zeros((n, 0), np.int32),
            np.frombuffer(up, dtype=np.int32).reshape(n, F).copy() if F else np.zeros((n, 0), np.int32),
            np.frombuffer(down, dtype=np.int32).copy(),
            np.frombuffer(esrc, dtype=np.int32), np.frombuffer(edst, dtype=np.int32))


def _adjacency(n, mult, letters, esrc, edst):
    src = [esrc]
    dst = [edst]
    ids = np.arange(n, dtype=np.int32)
    for l in letters:
        col = mult[:, l]
        m = col >= 0
        src.append(ids[m])
        dst.append(col[m])
    s = np.concatenate(src).astype(np.int64)
    d = np.concatenate(dst).astype(np.int64)
    s, d = np.concatenate([s, d]), np.concatenate([d, s])
    keep = s != d
    key = np.unique(s[keep] * n + d[keep])
    s = key // n
    indices = (key % n).astype(np.int32)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(s, minlength=n), out=indptr[1:])
    return indptr, indices


def build_ball(space: SpaceSpec, radius: int, oracle: ElementOracle | None = None,
               scheme=None, max_vertices: int = DEFAULT_MAX_VERTICES, strategy=None) -> SpaceGraph:
    """Exact BFS ball of the given radius around the basepoint."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if space.kind == CUSPED:
        return _build_cusped(space, radius, oracle, scheme, max_vertices)
    if space.kind == QUOTIENT:
        from .wordproblem import quotient_oracle
        oracle = oracle or quotient_oracle(space, scheme, strategy)
    elif space.kind == CAYLEY:
        oracle = oracle or group_oracle(space.group, scheme)
    else:
        raise ValueError(f"unknown space kind {space.kind}")
    spec = space.group
    L = 2 * spec.rank

    def expand(st):
        key, word = st
        for l in range(L):
            k2, w2 = oracle.extend(key, word, l)
            yield ("l", l), k2, (k2, w2)

    root = oracle.key(())
    index, states, dist, mult, up, down, es, ed = _explore(
        root, (root, ()), expand, lambda st: st[1], radius, L, 0, max_vertices)
    words = [st[1] for st in states]
    n = len(words)
    indptr, indices = _adjacency(n, mult, range(L), es, ed)
    zeros = np.zeros(n, dtype=np.int16)
    info = {"oracle": oracle.describe()}
    return SpaceGraph(space, radius, words, dist, zeros, zeros - 1, mult, up, down,
                      indptr, indices, info, lookup=index, oracle=oracle)


def build_quotient_ball(space: SpaceSpec, radius: int, scheme=None, strategy=None, **kw) -> SpaceGraph:
    if space.kind != QUOTIENT:
        raise ValueError("build_quotient_ball needs a quotient space")
    return build_ball(space, radius, scheme=scheme, strategy=strategy, **kw)


def _peripheral_letters(periph):
    return [l for i in periph for l in (2 * i, 2 * i + 1)]


def _build_cusped(space, radius, oracle, scheme, max_vertices):
    spec = space.group
    oracle = oracle or group_oracle(spec, scheme)
    L = 2 * spec.rank
    F = len(space.peripherals)
    pletters = [_peripheral_letters(p) for p in space.peripherals]

    def horizontal(gk, gw, f, reach):
        # elements g·p with 0 < |p| <= reach in the peripheral word metric
        seen = {gk}
        frontier = [(gk, gw)]
        out = []
        for _ in range(reach):
            nxt = []
            for k, w in frontier:
                for l in pletters[f]:
                    k2, w2 = oracle.extend(k, w, l)
                    if k2 not in seen:
                        seen.add(k2)
                        nxt.append((k2, w2))
            out += nxt
            frontier = nxt
        return out

    def expand(st):
        gk, gw, f, n = st
        if n == 0:
            for l in range(L):
                k2, w2 = oracle.extend(gk, gw, l)
                yield ("l", l), (k2, -1, 0), (k2, w2, -1, 0)
            for fi in range(F):
                yield ("up", fi), (gk, fi, 1), (gk, gw, fi, 1)
            return
        if n == 1:
            yield ("down",), (gk, -1, 0), (gk, gw, -1, 0)
        else:
            yield ("down",), (gk, f, n - 1), (gk, gw, f, n - 1)
        yield ("up", f), (gk, f, n + 1), (gk, gw, f, n + 1)
        for hk, hw in horizontal(gk, gw, f, 2 ** n):
            yield ("h",), (hk, f, n), (hk, hw, f, n)

    root = oracle.key(())
    index, states, dist, mult, up, down, es, ed = _explore(
        (root, -1, 0), (root, (), -1, 0), expand, lambda st: (st[3], st[2], st[1]),
        radius, L, F, max_vertices)
    n = len(states)
    words = [st[1] for st in states]
    depth = np.array([st[3] for st in states], dtype=np.int16)
    family = np.array([st[2] for st in states], dtype=np.int16)
    indptr, indices = _adjacency(n, mult, range(L), es, ed)
    info = {"oracle": oracle.describe(), "horoball": "combinatorial, reach 2^depth"}
    return SpaceGraph(space, radius, words, dist, depth, family, mult, up, down, indptr, indices,
                      info, oracle=oracle)


# ---------------------------------------------------------------- queries

def distance(ball, x, y) -> Distance:
    return ball.distance(x, y)


def geodesics_between(ball, x, y) -> GeodesicDAG:
    return ball.geodesic_dag(x, y)


def annulus(ball: SpaceGraph, n: int, delta: int) -> np.ndarray:
    """Orbit vertices with |d(o, v) - n| <= delta."""
    if n + delta > ball.radius:
        raise InsufficientRadius(f"annulus n={n}, delta={delta} exceeds radius {ball.radius}")
    m = ball.orbit & (np.abs(ball.dist0 - n) <= delta)
    return np.flatnonzero(m)


def separated_net(points, R: int, ball):
    """Greedy R-separated subset, scanning in id order."""
    pts = sorted(int(p) if not isinstance(p, tuple) else p for p in points)
    if R <= 0 or not pts:
        return list(pts)
    top = max(ball.d0(p) for p in pts)
    if top + R > ball.radius:
        raise InsufficientRadius(f"separation {R} around points at distance {top} exceeds radius {ball.radius}")
    kept = []
    blocked = set()
    for p in pts:
        if p in blocked:
            continue
        kept.append(p)
        blocked.update(ball.nbhd(p, R))
    return kept


def _extendable(ball: SpaceGraph, R: int) -> np.ndarray:
    """Vertices on some geodesic from the basepoint of length R."""
    marked = ball.dist0 == R
    src = np.repeat(np.arange(ball.n), np.diff(ball.indptr))
    dst = ball.indices
    fwd = ball.dist0[dst] == ball.dist0[src] + 1
    src, dst = src[fwd], dst[fwd]
    for k in range(R - 1, -1, -1):
        m = (ball.dist0[src] == k) & marked[dst]
        marked[src[m]] = True
    return marked


def dead_end_depth(ball: SpaceGraph, x, slack: int = 2) -> int:
    """Distance from x to the union of geodesics from o of length radius.

    The value is recomputed with ``radius - slack``; disagreement, or a witness that
    could leave the exact zone, raises ``InsufficientRadius``.
    """
    R = ball.radius
    values = []
    for r in (R, R - slack):
        if r < 0:
            raise InsufficientRadius("radius smaller than the stability slack")
        E = np.flatnonzero(_extendable(ball, r))
        if not len(E):
            raise InsufficientRadius(f"no geodesic of length {r} inside the ball")
        d = ball.rows(E, min_only=True)[int(x)]
        values.append(int(d))
    depth = values[0]
    if ball.d0(x) + depth > R - slack or values[0] != values[1]:
        raise InsufficientRadius(
            f"dead-end depth of {ball.label(x)} unstable ({values[0]} at radius {R}, "
            f"{values[1]} at radius {R - slack})")
    return depth


def horoball_orbit_distances(K: int) -> np.ndarray:
    """d((k, 0), (0, 0)) for |k| <= K inside the combinatorial horoball over Z.

    A horoball over a cyclic peripheral subgroup is isometrically embedded in the
    cusped space of a free product, so these are the peripheral orbit distances.
    """
    top = int(math.ceil(math.log2(2 * K + 2))) + 2
    width = 4 * K + 1
    off = 2 * K
    dist = np.full((top + 1, width), -1, dtype=np.int32)
    dist[0, off] = 0
    q = deque([(0, off)])
    while q:
        n, j = q.popleft()
        dn = dist[n, j] + 1
        nb = [(n + 1, j)] if n < top else []
        if n:
            nb.append((n - 1, j))
        reach = 2 ** n if n else 1
        nb += [(n, j + s) for s in range(-reach, reach + 1) if s and 0 <= j + s < width]
        for m, i in nb:
            if dist[m, i] < 0:
                dist[m, i] = dn
                q.append((m, i))
    return dist[0, off - K:off + K + 1]


# ---------------------------------------------------------------- cache

MAGIC = b"SCCB"
CACHE_VERSION = 1


def cache_key(space_text: str, radius: int, wp_config: str = "") -> str:
    h = hashlib.sha256()
    for part in (space_text, str(radius), wp_config):
        h.update(part.encode())
        h.update(b"\0")
    return h.hexdigest()


def _pack_arrays(ball: SpaceGraph) -> bytes:
    lens = np.array([len(w) for w in ball.words], dtype=np.int64)
    offs = np.zeros(len(lens) + 1, dtype=np.int64)
    np.cumsum(lens, out=offs[1:])
    flat = np.fromiter((l for w in ball.words for l in w), dtype=np.uint16, count=int(offs[-1]))
    meta = json.dumps({"space": ball.space.text, "radius": ball.radius, "info": ball.info},
                      sort_keys=True).encode()
    buf = io.BytesIO()
    parts = [ball.dist0.astype(np.int32), ball.depth.astype(np.int16), ball.family.astype(np.int16),
             offs, flat, ball.indptr.astype(np.int64), ball.indices.astype(np.int32),
             ball.mult.astype(np.int32), ball.up.astype(np.int32), ball.down.astype(np.int32)]
    buf.write(struct.pack("<QII", ball.n, ball.mult.shape[1], ball.up.shape[1]))
    for a in parts:
        b = np.ascontiguousarray(a).tobytes()
        buf.write(struct.pack("<Q", len(b)))
        buf.write(b)
    buf.write(struct.pack("<Q", len(meta)))
    buf.write(meta)
    return buf.getvalue()


def save_ball(ball: SpaceGraph, path, wp_config: str = "") -> None:
    """Atomic write: temp file in the target directory, then rename."""
    path = Path(path)
    payload = _pack_arrays(ball)
    spec_digest = hashlib.sha256(ball.space.text.encode()).digest()
    body = hashlib.sha256(payload).digest()
    header = MAGIC + struct.pack("<I", CACHE_VERSION) + spec_digest + struct.pack("<I", ball.radius) \
        + body + struct.pack("<Q", len(payload))
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class CacheError(ValueError):
    pass


def _read(path):
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CacheError("bad magic")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CACHE_VERSION:
        raise CacheError(f"unsupported cache version {version}")
    spec_digest = data[8:40]
    (radius,) = struct.unpack_from("<I", data, 40)
    body = data[44:76]
    (size,) = struct.unpack_from("<Q", data, 76)
    payload = data[84:84 + size]
    if len(payload) != size or hashlib.sha256(payload).digest() != body:
        raise CacheError("payload digest mismatch")
    return spec_digest, radius, payload


def verify_ball_file(path) -> None:
    _read(path)


def load_ball(path, groups=None) -> SpaceGraph:
    spec_digest, radius, payload = _read(path)
    pos = 0

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, payload, pos)
        pos += struct.calcsize(fmt)
        return vals

    n, L, F = take("<QII")
    dtypes = [np.int32, np.int16, np.int16, np.int64, np.uint16, np.int64, np.int32, np.int32,
              np.int32, np.int32]
    arrs = []
    for dt in dtypes:
        (size,) = take("<Q")
        arrs.append(np.frombuffer(payload, dtype=dt, count=size // np.dtype(dt).itemsize, offset=pos).copy())
        pos += size
    (size,) = take("<Q")
    meta = json.loads(payload[pos:pos + size])
    dist0, depth, family, offs, flat, indptr, indices, mult, up, down = arrs
    space = parse_space_spec(meta["space"], groups)
    if hashlib.sha256(space.text.encode()).digest() != spec_digest:
        raise CacheError("space digest mismatch")
    flat = flat.tolist()
    words = [tuple(flat[offs[i]:offs[i + 1]]) for i in range(n)]
    return SpaceGraph(space, radius, words, dist0, depth, family, mult.reshape(n, L),
                      up.reshape(n, F), down, indptr, indices, meta["info"])


@dataclass
class BallCache:
    root: Path
    wp_config: str = ""
    hits: int = field(default=0, init=False)

    def __post_init__(self):
        self.root = Path(self.root)

    def path(self, space: SpaceSpec, radius: int) -> Path:
        return self.root / f"{cache_key(space.text, radius, self.wp_config)}.sccb"

    def get_or_build(self, space: SpaceSpec, radius: int, build) -> SpaceGraph:
        p = self.path(space, radius)
        if p.exists():
            try:
                ball = load_ball(p, space.groups)
                self.hits += 1
                return ball
            except CacheError as exc:
                log.warning("discarding corrupt cache entry %s: %s", p.name, exc)
        ball = build()
        save_ball(ball, p, self.wp_config)
        return ball

    def entries(self):
        if not self.root.is_dir():
            return []
        return sorted(self.root.glob("*.sccb"))

    def list(self):
        out = []
        for p in self.entries():
            try:
                _, radius, payload = _read(p)
                (n,) = struct.unpack_from("<Q", payload, 0)
                out.append({"key": p.stem, "radius": radius, "vertices": n, "bytes": p.stat().st_size})
            except CacheError as exc:
                out.append({"key": p.stem, "error": str(exc)})
        return out

    def verify(self):
        bad = {}
        for p in self.entries():
            try:
                _read(p)
            except (CacheError, struct.error) as exc:
                bad[p.stem] = str(exc)
        return bad

    def clear(self):
        removed = 0
        for p in self.entries():
            p.unlink(missing_ok=True)
            removed += 1
        return removed
