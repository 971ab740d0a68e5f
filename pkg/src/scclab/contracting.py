"""Projections, contraction certificates, axes and admissible paths."""
from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components, dijkstra

from .presentations import (CAYLEY, GroupSpec, SpaceSpec, free_reduce, inverse, power)
from .spaces import CayleyMetric, InsufficientRadius, SpaceGraph, build_ball
from .wordproblem import equal, nf_geodesic, normal_form

log = logging.getLogger(__name__)

CERTIFIED = "certified-up-to-radius"
REFUTED = "refuted"
UNDECIDED = "undecided"


@dataclass
class ProjectionResult:
    nearest: tuple
    dist: int


@dataclass
class ContractingCertificate:
    kind: str
    value: int | None
    radius: int
    status: str
    witness: dict | None = None
    tested: int = 0
    details: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (set, frozenset, tuple)):
        return list(x)
    raise TypeError(type(x))


# ---------------------------------------------------------------- quasi-axes

class QuasiAxis:
    """The set g·⋃_k h^k·[o, h·o], the path traced by powers of h from g·o.

    It lies at bounded Hausdorff distance from g·⟨h⟩·o, so it is contracting exactly when
    the orbit is.
    """

    def __init__(self, metric, h, g=()):
        spec = metric.group
        self.metric = metric
        self.spec = spec
        self.h = normal_form(spec, h).canonical
        if not self.h:
            raise ValueError("a quasi-axis needs a nontrivial element")
        self.g = normal_form(spec, g).canonical
        self._len = {}

    def __repr__(self):
        return f"QuasiAxis({self.spec.show(self.g) or '1'}·Ax({self.spec.show(self.h)}))"

    def period(self, k):
        """Vertices g·h^k·p for proper prefixes p of h."""
        base = self.g + power(self.h, k)
        out = []
        for j in range(len(self.h)):
            try:
                out.append(self.metric.vertex(base + self.h[:j]))
            except InsufficientRadius:
                pass
        return out

    def power_length(self, k):
        if k not in self._len:
            self._len[k] = len(normal_form(self.spec, power(self.h, k)).canonical)
        return self._len[k]

    def ids(self):
        """All quasi-axis vertices inside a finite ball (stops at the first empty period)."""
        if not isinstance(self.metric, SpaceGraph):
            raise TypeError("ids() needs an explored ball")
        out = set(self.period(0))
        for step in (1, -1):
            k = step
            while True:
                pts = self.period(k)
                if not pts:
                    break
                out.update(pts)
                k += step
        return np.array(sorted(out), dtype=np.int64)

    def project(self, y) -> ProjectionResult:
        m = self.metric
        dg = m.d(y, m.vertex(self.g))
        best, near = None, []
        for step in (0, 1, -1):
            k = step
            while True:
                if k and self.power_length(k) - len(self.h) - dg > (best if best is not None else 10 ** 9):
                    break
                for v in self.period(k):
                    dv = m.d(y, v)
                    if best is None or dv < best:
                        best, near = dv, [v]
                    elif dv == best and v not in near:
                        near.append(v)
                if step == 0:
                    break
                k += step
        return ProjectionResult(tuple(sorted(near, key=_vkey)), best)

    def same_as(self, other: "QuasiAxis", n_max=4) -> bool:
        if not isinstance(other, QuasiAxis):
            return False
        if not (equal(self.spec, self.h, other.h) or equal(self.spec, self.h, inverse(other.h))):
            return False
        return in_elementary(self.spec, inverse(self.g) + other.g, self.h, n_max)


def _vkey(v):
    return (len(v), v) if isinstance(v, tuple) else (0, int(v))


def in_elementary(spec: GroupSpec, f, h, n_max=4) -> bool:
    """f h^n f^-1 = h^{±n} for some 1 <= n <= n_max."""
    fi = inverse(f)
    for n in range(1, n_max + 1):
        hn = power(h, n)
        conj = tuple(f) + hn + fi
        if equal(spec, conj, hn) or equal(spec, conj, inverse(hn)):
            return True
    return False


# ---------------------------------------------------------------- projections

def _as_ids(X):
    return np.asarray(sorted(int(x) for x in X), dtype=np.int64)


def project(ball, X, y) -> ProjectionResult:
    """Full nearest-point set of y on X."""
    if isinstance(X, QuasiAxis):
        return X.project(y)
    if isinstance(ball, SpaceGraph):
        ids = _as_ids(X)
        if not len(ids):
            raise ValueError("projection onto an empty set")
        d = ball.row(y)[ids]
        ok = d >= 0
        if not ok.any():
            raise ValueError("X is unreachable from y inside the ball")
        m = int(d[ok].min())
        if ball.d0(y) + m > ball.radius:
            raise InsufficientRadius(f"projection of {ball.label(y)} is not exact at radius {ball.radius}")
        return ProjectionResult(tuple(ids[ok & (d == m)].tolist()), m)
    pts = list(X)
    if not pts:
        raise ValueError("projection onto an empty set")
    ds = [ball.d(y, x) for x in pts]
    m = min(ds)
    return ProjectionResult(tuple(sorted((x for x, dx in zip(pts, ds) if dx == m), key=_vkey)), m)


def _diameter(ball, pts) -> int:
    pts = list(dict.fromkeys(pts))
    best = 0
    for i, p in enumerate(pts):
        for q in pts[i + 1:]:
            best = max(best, ball.d(p, q))
    return best


def proj_diameter(ball, X, Z1, Z2=()) -> int:
    """diam(π_X(Z1 ∪ Z2))."""
    pts = []
    for z in itertools.chain(Z1, Z2):
        pts += project(ball, X, z).nearest
    return _diameter(ball, pts)


# ---------------------------------------------------------------- projection tables on balls

class _ProjectionTable:
    """Distance to X, nearest-point sets and pairwise union diameters for a whole ball."""

    def __init__(self, ball: SpaceGraph, X):
        ids = _as_ids(X)
        if not len(ids):
            raise ValueError("empty contracting set")
        self.ball = ball
        self.X = ids
        R = ball.radius
        dX = ball.rows(ids, min_only=True)
        self.dX = dX
        self.exact = (dX >= 0) & ((ball.dist0 + dX <= R) | bool(getattr(ball, "convex", False)))
        n = ball.n
        # gate propagation: nearest points of v are those of its neighbours one step closer
        pos = {int(x): i for i, x in enumerate(ids)}
        sets = {}
        pid = np.full(n, -1, dtype=np.int64)
        members = []

        def intern(s):
            k = sets.get(s)
            if k is None:
                k = sets[s] = len(members)
                members.append(s)
            return k

        for x in ids.tolist():
            pid[x] = intern(frozenset([pos[x]]))
        order = np.argsort(dX, kind="stable")
        indptr, indices = ball.indptr, ball.indices
        for v in order.tolist():
            dv = dX[v]
            if dv <= 0:
                continue
            nb = indices[indptr[v]:indptr[v + 1]]
            closer = nb[dX[nb] == dv - 1]
            ks = set(pid[closer].tolist())
            if len(ks) == 1:
                pid[v] = ks.pop()
            else:
                pid[v] = intern(frozenset().union(*(members[k] for k in ks)))
        self.pid = pid
        self.members = members
        # distances among X points, with exactness
        DX = ball.rows(ids)[:, ids].astype(np.int64)
        d0 = ball.dist0[ids].astype(np.int64)
        EX = (d0[:, None] + DX <= R) | (d0[None, :] + DX <= R)
        DX[DX < 0] = 10 ** 6
        m = len(members)
        # Mx[i, b] = max distance from set i to point b; Ix[i, b] = some such pair inexact
        Mx = np.zeros((m, len(ids)), dtype=np.int64)
        Ix = np.zeros((m, len(ids)), dtype=bool)
        for i, s in enumerate(members):
            idx = list(s)
            Mx[i] = DX[idx].max(axis=0)
            Ix[i] = (~EX[idx]).any(axis=0)
        T = np.zeros((m, m), dtype=np.int64)
        TI = np.zeros((m, m), dtype=bool)
        for j, s in enumerate(members):
            idx = list(s)
            T[:, j] = Mx[:, idx].max(axis=1)
            TI[:, j] = Ix[:, idx].any(axis=1)
        self.T = T
        self.T_inexact = TI

    def nearest(self, v):
        return tuple(int(self.X[i]) for i in sorted(self.members[self.pid[v]]))

    def far_certain(self, C):
        b = self.ball
        reach = b.radius + 1 - b.dist0
        d = np.where(self.dX >= 0, self.dX, reach)
        return np.minimum(d, reach) >= C


def _far_path(ball, far, u, v):
    dag = ball.geodesic_dag(u, v)
    for p in dag.paths(limit=10000):
        if all(far[w] for w in p):
            return p
    return None


def _scan_far_geodesics(ball: SpaceGraph, tab: _ProjectionTable, C: int, chunk=256):
    """Endpoint pairs of exact geodesics lying in the far region, tested against C.

    A far geodesic stays inside one component of the far region.  Components whose
    nearest-point sets are pairwise within C cannot hold a violation; their pairs are
    counted as covered without computing distances.
    """
    R = ball.radius
    far = tab.far_certain(C)
    far_ids = np.flatnonzero(far)
    if not len(far_ids):
        return 0, None
    sub = ball.matrix()[far_ids][:, far_ids]
    _, comp = connected_components(sub, directed=False)
    hot = np.zeros(comp.max() + 1, dtype=bool)
    order = np.argsort(comp, kind="stable")
    cuts = np.flatnonzero(np.diff(comp[order])) + 1
    covered = 0
    for grp in np.split(order, cuts):
        ok_grp = grp[tab.exact[far_ids[grp]]]
        P = np.unique(tab.pid[far_ids[ok_grp]])
        if ((tab.T[np.ix_(P, P)] > C) & ~tab.T_inexact[np.ix_(P, P)]).any():
            hot[comp[grp[0]]] = True
        else:
            covered += len(ok_grp) * (len(ok_grp) - 1) // 2
    srcs = far_ids[tab.exact[far_ids] & hot[comp]]
    if not len(srcs):
        return covered, None
    local = np.full(ball.n, -1, dtype=np.int64)
    local[far_ids] = np.arange(len(far_ids))
    d0 = ball.dist0
    tgt_ok = tab.exact[far_ids]
    tested = covered
    worst = None
    for start in range(0, len(srcs), chunk):
        S = srcs[start:start + chunk]
        full = ball.rows(S)[:, far_ids]
        near = dijkstra(sub, directed=False, indices=local[S], unweighted=True)
        near[np.isinf(near)] = -1
        near = near.astype(np.int32)
        ok = (near == full) & (full > 0) & tgt_ok[None, :]
        ok &= (d0[S][:, None] + full <= R) | (d0[far_ids][None, :] + full <= R)
        ok &= S[:, None] < far_ids[None, :]
        ii, jj = np.nonzero(ok)
        tested += len(ii)
        if not len(ii):
            continue
        pu = tab.pid[S[ii]]
        pv = tab.pid[far_ids[jj]]
        diam = tab.T[pu, pv]
        bad = (diam > C) & ~tab.T_inexact[pu, pv]
        if bad.any():
            k = np.flatnonzero(bad)
            best = k[np.lexsort((far_ids[jj[k]], S[ii[k]], -diam[k]))[0]]
            cand = (int(diam[best]), -int(S[ii[best]]), -int(far_ids[jj[best]]))
            if worst is None or cand > worst:
                worst = cand
    if worst is None:
        return tested, None
    u, v = -worst[1], -worst[2]
    path = _far_path(ball, far, u, v)
    pts = list(tab.nearest(u)) + list(tab.nearest(v))
    pair = max(((p, q) for p in pts for q in pts), key=lambda pq: int(ball.row(pq[0])[pq[1]]))
    return tested, {"C": C, "projection_diameter": worst[0],
                    "geodesic": [ball.label(w) for w in path], "geodesic_ids": [int(w) for w in path],
                    "distance_to_X": int(min(tab.dX[w] for w in path)),
                    "projection_points": [ball.label(p) for p in pair]}


def recheck_far_witness(ball: SpaceGraph, X, witness) -> bool:
    """Independent check of a contraction violation: a geodesic at distance >= C from X
    whose nearest-point projection has diameter > C."""
    path = witness["geodesic_ids"]
    C = witness["C"]
    u, v = path[0], path[-1]
    if ball.d(u, v) != len(path) - 1:
        return False
    if any(ball.d(a, b) != 1 for a, b in zip(path, path[1:])):
        return False
    if min(project(ball, X, w).dist for w in path) < C:
        return False
    return proj_diameter(ball, X, path) > C


def estimate_contraction(ball: SpaceGraph, X, c_max: int | None = None) -> ContractingCertificate:
    """Smallest C >= 1 such that no explored geodesic at distance >= C from X has
    projection diameter > C.  Violations at every C up to ``c_max`` refute."""
    if isinstance(X, QuasiAxis):
        X = X.ids()
    tab = _ProjectionTable(ball, X)
    c_max = c_max or max(1, ball.radius // 4)
    witnesses = []
    total = 0
    for C in range(1, c_max + 1):
        tested, w = _scan_far_geodesics(ball, tab, C)
        total += tested
        if not tested and not witnesses:
            raise InsufficientRadius(f"no geodesic at distance >= {C} from X can be tested at radius {ball.radius}")
        if w is None:
            return ContractingCertificate("contraction", C, ball.radius, CERTIFIED, tested=total,
                                          details={"violations_below": witnesses, "c_max": c_max})
        witnesses.append(w)
    return ContractingCertificate("contraction", None, ball.radius, REFUTED, witness=witnesses[0],
                                  tested=total, details={"witnesses": witnesses, "c_max": c_max})


def ball_projection_bound(ball: SpaceGraph, X) -> ContractingCertificate:
    """Projection diameter of open balls B(c, d(c, X)), grouped by their radius."""
    if isinstance(X, QuasiAxis):
        X = X.ids()
    tab = _ProjectionTable(ball, X)
    R = ball.radius
    d0 = ball.dist0
    centres = np.flatnonzero(tab.exact & (tab.dX >= 1) & (d0 + tab.dX - 1 <= R))
    bounds = {}
    best_w = {}
    for rho in sorted(set(tab.dX[centres].tolist())):
        cs = centres[tab.dX[centres] == rho]
        for start in range(0, len(cs), 256):
            S = cs[start:start + 256]
            D = ball.rows(S, limit=rho - 1)
            for c, row in zip(S.tolist(), D):
                inside = np.flatnonzero(row >= 0)
                if not tab.exact[inside].all():
                    continue
                P = np.unique(tab.pid[inside])
                sub = tab.T[np.ix_(P, P)]
                if tab.T_inexact[np.ix_(P, P)].any():
                    continue
                b = int(sub.max())
                if rho not in bounds or b > bounds[rho]:
                    bounds[rho] = b
                    best_w[rho] = ball.label(c)
    if not bounds:
        raise InsufficientRadius(f"no open ball missing X can be tested at radius {R}")
    rhos = sorted(bounds)
    seq = [bounds[r] for r in rhos]
    growing = len(seq) >= 2 and all(b > a for a, b in zip(seq, seq[1:]))
    details = {"profile": {int(r): int(bounds[r]) for r in rhos}}
    if growing:
        wit = {"sequence": [{"radius": int(r), "centre": best_w[r], "diameter": int(bounds[r])} for r in rhos]}
        return ContractingCertificate("ball-projection", None, R, REFUTED, witness=wit, details=details)
    return ContractingCertificate("ball-projection", max(seq), R, CERTIFIED, details=details)


def quasiconvexity_profile(ball: SpaceGraph, X) -> ContractingCertificate:
    """sigma(1): how far geodesics with endpoints in X stray from X."""
    if isinstance(X, QuasiAxis):
        X = X.ids()
    ids = _as_ids(X)
    R = ball.radius
    dX = ball.rows(ids, min_only=True)
    exact_v = (dX >= 0) & (ball.dist0 + dX <= R)
    rows = ball.rows(ids)
    per_len = {}
    witness = {}
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            L = int(rows[i, ids[j]])
            if L <= 0 or not ball.exact(ids[i], ids[j], L):
                continue
            on = (rows[i] >= 0) & (rows[j] >= 0) & (rows[i] + rows[j] == L) & exact_v
            s = int(dX[on].max()) if on.any() else 0
            if s > per_len.get(L, -1):
                per_len[L] = s
                witness[L] = (ball.label(ids[i]), ball.label(ids[j]))
    if not per_len:
        raise InsufficientRadius("no pair of points of X is joined by an exact geodesic")
    lens = sorted(per_len)
    seq = [per_len[L] for L in lens]
    sigma = max(seq)
    details = {"profile": {int(L): int(per_len[L]) for L in lens}}
    half = [per_len[L] for L in lens if L <= lens[-1] // 2]
    monotone = all(b >= a for a, b in zip(seq, seq[1:]))
    growing = monotone and seq[-1] >= 2 and bool(half) and seq[-1] > max(half)
    if growing:
        L = lens[-1]
        return ContractingCertificate("quasiconvexity", None, R, REFUTED,
                                      witness={"endpoints": witness[L], "length": L, "distance": seq[-1]},
                                      details=details)
    return ContractingCertificate("quasiconvexity", sigma, R, CERTIFIED, details=details)


# ---------------------------------------------------------------- axes, E(h), independence

@dataclass
class AxisApproximation:
    h: tuple
    orbit: list               # words h^k with |h^k| <= radius
    witnesses: list           # g with g h^n g^-1 = h^{±n}
    n_max: int
    radius: int


def build_axis(spec: GroupSpec, h, radius: int, ball: SpaceGraph | None = None) -> AxisApproximation:
    h = normal_form(spec, h).canonical
    if not h:
        raise ValueError("build_axis needs a nontrivial element")
    n_max = max(1, radius // (2 * len(h)))
    orbit = []
    for step in (1, -1):
        k = 0 if step == 1 else -1
        while True:
            w = normal_form(spec, power(h, k)).canonical
            if len(w) > radius:
                break
            orbit.append(w)
            k += step
    orbit.sort(key=lambda w: (len(w), w))
    if ball is None:
        ball = build_ball(SpaceSpec(CAYLEY, spec), radius)
    wit = []
    for w in ball.words:
        if in_elementary(spec, w, h, n_max):
            wit.append(w)
    return AxisApproximation(h, orbit, wit, n_max, radius)


def bounded_intersection_profile(ball: SpaceGraph, X, X2, r: int) -> int:
    """diam(N_r(X) ∩ N_r(X2)) inside the ball; -1 when the intersection is empty."""
    a = ball.rows(_as_ids(X), min_only=True, limit=r)
    b = ball.rows(_as_ids(X2), min_only=True, limit=r)
    I = np.flatnonzero((a >= 0) & (b >= 0))
    if not len(I):
        return -1
    D = ball.rows(I)[:, I]
    return int(D.max())


def _powers_equal(spec, h1, h2, bound):
    for p in range(1, bound + 1):
        a = power(h1, p)
        for q in range(1, bound + 1):
            b = power(h2, q)
            if equal(spec, a, b):
                return p, q
            if equal(spec, a, inverse(b)):
                return p, -q
    return None


def independence_test(spec: GroupSpec, h1, h2, radius: int, r_max: int = 2, ball=None) -> dict:
    h1 = normal_form(spec, h1).canonical
    h2 = normal_form(spec, h2).canonical
    if not h1 or not h2:
        raise ValueError("independence needs nontrivial elements")
    bound = max(2, radius // max(1, min(len(h1), len(h2))))
    rel = _powers_equal(spec, h1, h2, bound)
    if rel:
        return {"verdict": "commensurable", "relation": rel}
    ball = ball or build_ball(SpaceSpec(CAYLEY, spec), radius)
    X1 = QuasiAxis(ball, h1).ids()
    X2 = QuasiAxis(ball, h2).ids()
    inner = ball.dist0 <= radius - 2
    profile, stable = [], True
    for r in range(r_max + 1):
        full = bounded_intersection_profile(ball, X1, X2, r)
        small = bounded_intersection_profile(ball, X1[inner[X1]], X2[inner[X2]], r)
        profile.append(full)
        stable &= full == small
    verdict = "independent" if stable else UNDECIDED
    return {"verdict": verdict, "status": CERTIFIED if stable else UNDECIDED, "profile": profile,
            "radius": radius}


# ---------------------------------------------------------------- admissible paths

@dataclass
class Piece:
    """A labelled subpath: contracting segment when ``X`` is given, connector otherwise."""
    word: tuple
    X: object = None
    certificate: ContractingCertificate | None = None


@dataclass
class AdmissibleVerdict:
    D: int
    tau: int
    L: int | None
    Delta: int | None
    ll1: list
    bp: list
    ll2: list
    annulus: list
    geodesic: list
    passed: bool
    eps: int | None = None
    eps_best: int | None = None
    c: float | None = None
    details: dict = field(default_factory=dict)


def path_vertices(metric, pieces, start=()):
    v = metric.vertex(start)
    verts = [v]
    bounds = []
    for pc in pieces:
        s = len(verts) - 1
        for l in pc.word:
            verts.append(metric.step(verts[-1], l))
        bounds.append((s, len(verts) - 1))
    return verts, bounds


def _distinct(X, Y) -> bool:
    if isinstance(X, QuasiAxis):
        return not X.same_as(Y)
    return set(int(x) for x in X) != set(int(y) for y in Y)


def check_admissible(metric, pieces, D: int, tau: int, L=None, Delta=None, start=(),
                     exempt_ends=False) -> AdmissibleVerdict:
    """LL1 / BP / LL2 on every contracting segment of the labelled path."""
    verts, bounds = path_vertices(metric, pieces, start)
    segs = [(b, pc) for b, pc in zip(bounds, pieces) if pc.X is not None]
    for _, pc in segs:
        if pc.certificate is None:
            raise ValueError("contracting segment without a certificate")
    g_start, g_end = verts[0], verts[-1]
    ll1, bp, ll2, ann, geo = [], [], [], [], []
    gaps = []
    for i, ((s, e), pc) in enumerate(segs):
        a, b = verts[s], verts[e]
        length = e - s
        geo.append(metric.d(a, b) == length)
        end_seg = exempt_ends and (s == 0 or e == len(verts) - 1)
        ll1.append(length > D or end_seg)
        prev_exit = verts[segs[i - 1][0][1]] if i else g_start
        next_entry = verts[segs[i + 1][0][0]] if i + 1 < len(segs) else g_end
        fwd = proj_diameter(metric, pc.X, [b], [next_entry])
        back = proj_diameter(metric, pc.X, [prev_exit], [a])
        bp.append(fwd <= tau and back <= tau)
        # neighbouring segments projected onto this one, as a diagnostic
        for j in (i - 1, i + 1):
            if 0 <= j < len(segs):
                (s2, e2), _ = segs[j]
                gaps.append(proj_diameter(metric, pc.X, verts[s2:e2 + 1]))
        if i + 1 < len(segs):
            (s2, _), pc2 = segs[i + 1]
            gap = metric.d(b, verts[s2])
            ll2.append(_distinct(pc.X, pc2.X) or gap > D)
            if L is not None:
                ann.append(abs(gap - L) <= (Delta or 0))
    passed = all(ll1) and all(bp) and all(ll2) and all(ann) and all(geo)
    return AdmissibleVerdict(D, tau, L, Delta, ll1, bp, ll2, ann, geo, passed,
                             details={"segment_projection_gap": max(gaps) if gaps else 0,
                                      "length": len(verts) - 1})


def _match_eps(metric, alpha, targets):
    """Least eps admitting linearly ordered points of alpha within eps of the targets."""
    INF = 10 ** 9
    prev = [0] * len(alpha)
    for t in targets:
        row = [metric.d(a, t) for a in alpha]
        cur, run = [], INF
        for s, ds in enumerate(row):
            run = min(run, prev[s])
            cur.append(max(run, ds))
        prev = cur
    return min(prev)


def _quasi_constant(metric, verts, stride=1):
    c = 1.0
    pts = verts[::stride]
    idx = list(range(0, len(verts), stride))
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            d = metric.d(pts[a], pts[b])
            c = max(c, (idx[b] - idx[a]) / (d + 1))
    return c


def fellow_travel_check(metric, pieces, D: int, tau: int, start=(), geodesic_limit=64,
                        **kw) -> AdmissibleVerdict:
    verdict = check_admissible(metric, pieces, D, tau, start=start, **kw)
    if not verdict.passed:
        raise ValueError("fellow travelling is only measured on admissible paths")
    verts, bounds = path_vertices(metric, pieces, start)
    targets = []
    for (s, e), pc in zip(bounds, pieces):
        if pc.X is not None:
            targets += [verts[s], verts[e]]
    dag = metric.geodesic_dag(verts[0], verts[-1])
    eps = [_match_eps(metric, alpha, targets) for alpha in dag.paths(limit=geodesic_limit)]
    verdict.eps = max(eps)
    verdict.eps_best = min(eps)
    stride = max(1, len(verts) // 150)
    verdict.c = _quasi_constant(metric, verts, stride)
    verdict.details["geodesics_compared"] = len(eps)
    verdict.details["geodesic_count"] = dag.count
    return verdict


# ---------------------------------------------------------------- contracting elements

def is_contracting_element(spec: GroupSpec, h, radius: int, ball: SpaceGraph | None = None,
                           c_max: int | None = None) -> ContractingCertificate:
    """QI-embedded orbit plus a contraction certificate for the quasi-axis of h."""
    h = normal_form(spec, h).canonical
    if not h:
        raise ValueError("the identity is not a contracting element")
    lengths = []
    n = 1
    while n <= 4 or (lengths and lengths[-1] <= 2 * radius and n <= 4 * radius):
        lengths.append(len(normal_form(spec, power(h, n)).canonical))
        if lengths[-1] == 0:
            return ContractingCertificate("contracting element", None, radius, REFUTED,
                                          witness={"finite_order": n}, details={"lengths": lengths})
        n += 1
    slope = min(l / (i + 1) for i, l in enumerate(lengths))
    ball = ball or build_ball(SpaceSpec(CAYLEY, spec), radius)
    try:
        X = QuasiAxis(ball, h).ids()
        cert = estimate_contraction(ball, X, c_max)
    except InsufficientRadius as exc:
        return ContractingCertificate("contracting element", None, radius, UNDECIDED,
                                      details={"reason": str(exc), "slope": slope})
    cert.kind = "contracting element"
    cert.details.update({"slope": slope, "lengths": lengths, "element": spec.show(h)})
    return cert


def generator_symmetries(spec: GroupSpec):
    """Letter maps induced by signed generator permutations preserving the presentation."""
    r = spec.rank
    out = []
    for perm in itertools.permutations(range(r)):
        if spec.edges and {tuple(sorted((perm[i], perm[j]))) for i, j in spec.edges} != set(spec.edges):
            continue
        if spec.orders and any(spec.orders[perm[i]] != spec.orders[i] for i in range(r)):
            continue
        if spec.relators:
            continue
        for signs in itertools.product((0, 1), repeat=r):
            out.append(tuple((2 * perm[l >> 1]) | ((l & 1) ^ signs[l >> 1]) for l in range(2 * r)))
    return out or [tuple(range(2 * r))]
