"""Connectors, extension maps, free semigroups, barriers and concave regions."""
from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .contracting import (CERTIFIED, ContractingCertificate, Piece, QuasiAxis, _powers_equal,
                          build_axis, check_admissible, fellow_travel_check, in_elementary,
                          independence_test, is_contracting_element)
from .presentations import CAYLEY, GroupSpec, SpaceSpec, inverse, power
from .spaces import (CayleyMetric, GrowthSeries, InsufficientRadius, SpaceGraph, annulus,
                     build_ball, separated_net)
from .wordproblem import is_identity, normal_form

log = logging.getLogger(__name__)


class NoContractingTriple(ValueError):
    """The model has no three pairwise independent contracting elements."""


class ConnectorError(ValueError):
    def __init__(self, msg, projections):
        super().__init__(msg)
        self.projections = projections


def _nf(spec, w):
    return normal_form(spec, w).canonical


# ---------------------------------------------------------------- contracting systems

@dataclass
class Connector:
    f: tuple
    index: int
    projections: tuple      # per axis: max of the two projection diameters
    flagged: bool = False   # both sides trivial; the first connector is used by convention


@dataclass
class ContractingSystem:
    """Three independent contracting elements with measured constants."""
    metric: CayleyMetric
    hs: tuple
    axes: tuple
    approximations: tuple
    certificates: tuple
    independence: dict
    N: int
    D: int
    tau: int
    eps0: int = 0
    eps_fellow: int = 0
    training: dict = field(default_factory=dict)
    _proj: dict = field(default_factory=dict, repr=False)
    _near: dict = field(default_factory=dict, repr=False)

    @property
    def spec(self) -> GroupSpec:
        return self.metric.group

    @property
    def F(self):
        return tuple(self.connector(k) for k in range(len(self.hs)))

    def connector(self, k):
        return _nf(self.spec, power(self.hs[k], self.N))

    def _nearest(self, k, v):
        key = (k, v)
        if key not in self._near:
            self._near[key] = self.axes[k].project(v).nearest
        return self._near[key]

    def proj(self, w):
        """d^π_{A_k}([o, w·o]) along the normal-form geodesic, for each axis."""
        w = _nf(self.spec, w)
        if w in self._proj:
            return self._proj[w]
        m = self.metric
        out = []
        for k in range(len(self.axes)):
            pts = set()
            for j in range(len(w) + 1):
                pts.update(self._nearest(k, w[:j]))
            pts = sorted(pts, key=lambda p: (len(p), p))
            diam = 0
            for i, p in enumerate(pts):
                for q in pts[i + 1:]:
                    diam = max(diam, m.d(p, q))
            out.append(diam)
        self._proj[w] = tuple(out)
        return self._proj[w]

    def to_dict(self) -> dict:
        sp = self.spec
        return {
            "group": sp.name,
            "elements": [sp.show(h) for h in self.hs],
            "connectors": [sp.show(f) for f in self.F],
            "N": self.N, "D": self.D, "tau": self.tau,
            "eps0": self.eps0, "eps_fellow": self.eps_fellow,
            "contraction": [c.value for c in self.certificates],
            "statuses": [c.status for c in self.certificates],
            "independence": {f"{i},{j}": v["verdict"] for (i, j), v in self.independence.items()},
            "training": self.training,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def write_sidecar(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")


def _second_largest(vals):
    s = sorted(vals, reverse=True)
    return s[1] if len(s) > 1 else 0


def _distance_to_path(metric, x, path):
    return min(metric.d(x, v) for v in path)


def _suite(sys, pairs, verify=True):
    """Connector selection plus admissibility on training pairs; returns (ok, eps0, eps)."""
    m = sys.metric
    eps0 = eps = 0
    for g, h in pairs:
        try:
            c = choose_connector(sys, g, h, verify=verify)
        except ConnectorError:
            return False, None, None
        gf = _nf(sys.spec, g + c.f)
        target = _nf(sys.spec, gf + h)
        dag = m.geodesic_dag((), target)
        for path in dag.paths(limit=16):
            eps0 = max(eps0, _distance_to_path(m, _nf(sys.spec, g), path),
                       _distance_to_path(m, gf, path))
        if verify:
            v = fellow_travel_check(m, _pieces_for(sys, [g, h], [c]), sys.D, sys.tau, geodesic_limit=16)
            eps = max(eps, v.eps)
    return True, eps0, eps


def calibrate_system(spec: GroupSpec, hs, radius: int = 6, n_train: int = 200, seed: int = 0,
                     tau: int | None = None, require_contracting: bool = True) -> ContractingSystem:
    """Certify three elements and measure (τ, D, N, ε₀) on random training pairs."""
    metric = CayleyMetric(spec)
    hs = tuple(_nf(spec, h) for h in hs)
    if len(hs) != 3 or any(not h for h in hs):
        raise NoContractingTriple("a contracting system needs three nontrivial elements")
    ball = build_ball(SpaceSpec(CAYLEY, spec), radius)
    certs = tuple(is_contracting_element(spec, h, radius, ball=ball) for h in hs)
    if require_contracting and not all(c.certified for c in certs):
        bad = [spec.show(h) for h, c in zip(hs, certs) if not c.certified]
        raise NoContractingTriple(f"no contracting triple in {spec.name}: {', '.join(bad)} not certified")
    indep = {}
    for i, j in itertools.combinations(range(3), 2):
        v = independence_test(spec, hs[i], hs[j], radius, ball=ball)
        indep[(i, j)] = v
        if v["verdict"] == "commensurable" or (require_contracting and v["verdict"] != "independent"):
            raise NoContractingTriple(
                f"{spec.show(hs[i])} and {spec.show(hs[j])} are not independent: {v['verdict']}")
    axes = tuple(QuasiAxis(metric, h) for h in hs)
    approx = tuple(build_axis(spec, h, radius, ball=ball) for h in hs)
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, ball.n, size=(n_train, 2))
    pairs = [(_nf(spec, ball.word(int(a))), _nf(spec, ball.word(int(b)))) for a, b in ids]
    sys = ContractingSystem(metric, hs, axes, approx, certs, indep, N=1, D=0, tau=0)
    measured = 0
    for g, h in pairs:
        measured = max(measured, _second_largest(sys.proj(inverse(g))), _second_largest(sys.proj(h)))
    sys.tau = measured + 1 if tau is None else tau
    C = max([c.value for c in certs if c.value is not None] or [1])
    # the proof needs D > 2B + C with B >= τ; smaller D is never tried
    D = 2 * sys.tau + C
    while True:
        sys.D = D
        sys.N = _connector_power(spec, hs, D)
        ok, eps0, eps = _suite(sys, pairs)
        if ok:
            break
        D += 1
        if D > 4 * radius + 4 * sys.tau:
            raise ConnectorError(f"no D up to {D} passes the training suite", ())
    sys.eps0, sys.eps_fellow = eps0, eps
    sys.training = {"pairs": n_train, "seed": seed, "radius": radius, "tau_measured": measured,
                    "D_floor": 2 * sys.tau + C}
    return sys


def _connector_power(spec, hs, D):
    N = 1
    while any(len(_nf(spec, power(h, N))) <= D for h in hs):
        N += 1
    return N


# ---------------------------------------------------------------- connectors and extension maps

def _candidates(sys, g, h, exclude=None):
    pg = sys.proj(inverse(g))
    ph = sys.proj(h)
    both = tuple(max(a, b) for a, b in zip(pg, ph))
    ok = [k for k, v in enumerate(both) if v <= sys.tau and k != exclude]
    return ok, both


def _pieces_for(sys, letters, connectors):
    spec = sys.spec
    pieces = []
    prefix = ()
    for i, a in enumerate(letters):
        pieces.append(Piece(_nf(spec, a)))
        prefix = _nf(spec, prefix + tuple(a))
        if i < len(connectors):
            c = connectors[i]
            X = QuasiAxis(sys.metric, sys.hs[c.index], prefix)
            pieces.append(Piece(c.f, X, sys.certificates[c.index]))
            prefix = _nf(spec, prefix + c.f)
    return pieces


def choose_connector(sys: ContractingSystem, g, h, ball=None, verify: bool = False) -> Connector:
    """First axis (in declaration order) on which [o, g⁻¹o] and [o, h·o] both project within τ."""
    spec = sys.spec
    g, h = _nf(spec, g), _nf(spec, h)
    ok, both = _candidates(sys, g, h)
    if not ok:
        raise ConnectorError(f"no axis qualifies at tau={sys.tau}: projections {both}", both)
    for k in ok:
        f = sys.connector(k)
        if is_identity(spec, g + f + h):
            continue
        c = Connector(f, k, both, flagged=not g and not h)
        if verify:
            v = check_admissible(sys.metric, _pieces_for(sys, [g, h], [c]), sys.D, sys.tau)
            if not v.passed:
                raise ConnectorError(f"path {spec.show(g)}·{spec.show(f)}·{spec.show(h)} is not admissible",
                                     both)
        return c
    raise ConnectorError("every qualifying connector closes a loop", both)


@dataclass
class ExtensionImage:
    element: tuple
    letters: tuple
    connectors: tuple
    pieces: list
    length: int
    verdict: object = None


def extension_map(sys: ContractingSystem, words, verify: bool = False) -> ExtensionImage:
    """Φ(a1, …, an) = a1·f1·a2·f2·…·an with connectors chosen pairwise."""
    spec = sys.spec
    letters = tuple(_nf(spec, a) for a in words)
    if not letters:
        raise ValueError("the extension map needs a nonempty word")
    conns = []
    for i in range(len(letters) - 1):
        a, b = letters[i], letters[i + 1]
        if i == 0:
            conns.append(choose_connector(sys, a, b))
            continue
        prev = conns[-1].index
        # consecutive segments must sit on distinct axis translates
        exclude = prev if in_elementary(spec, a, sys.hs[prev]) else None
        ok, both = _candidates(sys, a, b, exclude)
        if not ok:
            ph = sys.proj(b)
            ok = [k for k in range(len(sys.hs)) if k != exclude and ph[k] <= sys.tau]
        if not ok:
            raise ConnectorError(f"no connector between letters {i} and {i + 1}", both)
        conns.append(Connector(sys.connector(ok[0]), ok[0], both))
    pieces = _pieces_for(sys, letters, conns)
    full = ()
    for pc in pieces:
        full += pc.word
    element = _nf(spec, full)
    img = ExtensionImage(element, letters, tuple(conns), pieces, len(full))
    if verify and conns:
        img.verdict = fellow_travel_check(sys.metric, pieces, sys.D, sys.tau, geodesic_limit=16)
    return img


def extension_collisions(sys: ContractingSystem, alphabet, max_len: int = 3):
    """Exhaustive scan of Φ over words of length ≤ max_len; returns (count, collisions)."""
    seen = {}
    collisions = []
    count = 0
    for n in range(1, max_len + 1):
        for W in itertools.product(range(len(alphabet)), repeat=n):
            img = extension_map(sys, [alphabet[i] for i in W])
            count += 1
            prev = seen.setdefault(img.element, W)
            if prev != W:
                collisions.append((prev, W))
    return count, collisions


def additivity_defect(sys: ContractingSystem, img: ExtensionImage) -> int:
    total = sum(len(a) for a in img.letters) + sum(len(c.f) for c in img.connectors)
    return abs(len(img.element) - total)


# ---------------------------------------------------------------- large semigroups

@dataclass
class Selection:
    A: list
    f: tuple
    index: int
    sizes: dict
    dropped_elementary: int = 0
    checked: int = 0


def large_semigroup_select(sys: ContractingSystem, Z, ball=None, check_pairs: int = 200,
                           seed: int = 0) -> Selection:
    """Two-sided halving: keep the g sharing one axis where [o,go] and [o,g⁻¹o] project within τ."""
    spec = sys.spec
    Z = [_nf(spec, z) for z in Z]
    if not Z:
        raise ValueError("cannot select from an empty set")
    tau = sys.tau
    fwd = {z: sys.proj(z) for z in Z}
    bwd = {z: sys.proj(inverse(z)) for z in Z}

    def halve(pool, pair, table):
        best = None
        for k in pair:
            keep = [z for z in pool if table[z][k] <= tau]
            if best is None or len(keep) > len(best[1]):
                best = (k, keep)
        return best

    i, Z1 = halve(Z, (0, 1), fwd)
    rest = tuple(k for k in range(3) if k != i)
    j, Z2 = halve(Z1, rest, fwd)
    k, A = halve(Z2, (i, j), bwd)
    sizes = {"Z": len(Z), "first": len(Z1), "second": len(Z2), "A": len(A)}
    h = sys.hs[k]
    kept = [a for a in A if not in_elementary(spec, a, h)]
    dropped = len(A) - len(kept)
    if 16 * len(kept) < len(Z):
        raise AssertionError(f"selection kept {len(kept)} of {len(Z)}, below 1/16")
    f = sys.connector(k)
    # every a·f^e labels an admissible path
    cert = sys.certificates[k]
    m = sys.metric
    checked = 0
    for a in kept:
        for e in (1, 2):
            fe = _nf(spec, power(f, e))
            pcs = [Piece(a), Piece(fe, QuasiAxis(m, h, a), cert)]
            if not check_admissible(m, pcs, sys.D, tau).passed:
                raise AssertionError(f"{spec.show(a)}·f^{e} is not admissible")
            checked += 1
    rng = np.random.default_rng(seed)
    if len(kept) > 1:
        for _ in range(check_pairs):
            a, b = (kept[int(x)] for x in rng.integers(0, len(kept), 2))
            pre = _nf(spec, a + f + b)
            pcs = [Piece(a), Piece(f, QuasiAxis(m, h, a), cert), Piece(b),
                   Piece(f, QuasiAxis(m, h, pre), cert)]
            if not check_admissible(m, pcs, sys.D, tau).passed:
                raise AssertionError(f"{spec.show(a)}·f·{spec.show(b)}·f is not admissible")
            checked += 1
    return Selection(kept, f, k, sizes, dropped, checked)


def _root(lengths, shift=0.0):
    """ω with Σ exp(-ω·(ℓ+shift)) = 1."""
    L = np.asarray(lengths, dtype=float) + shift
    if len(L) <= 1 or (L <= 0).any():
        return 0.0 if len(L) <= 1 else math.inf
    fn = lambda w: float(np.exp(-w * L).sum()) - 1.0
    hi = 1.0
    while fn(hi) > 0:
        hi *= 2
    return brentq(fn, 0.0, hi, xtol=1e-12)


@dataclass
class SemigroupBundle:
    A: list
    f: tuple
    S: list
    k: int
    delta: int
    R: int
    theta: float
    omega_target: float
    omega_ambient: float
    omega: float            # root of Σ exp(-ω|s|) = 1
    omega_lo: float
    omega_hi: float
    defdelta: float
    series: GrowthSeries
    free_checked: int
    branches: int
    branch_eps: int
    branch_c: float
    selection: Selection = None

    def summary(self) -> dict:
        return {"k": self.k, "delta": self.delta, "R": self.R, "theta": self.theta,
                "alphabet": len(self.A), "connector_length": len(self.f),
                "omega_target": self.omega_target, "omega_ambient": self.omega_ambient,
                "omega": self.omega, "window": [self.omega_lo, self.omega_hi],
                "defdelta": self.defdelta, "free_checked": self.free_checked,
                "branches": self.branches, "branch_eps": self.branch_eps, "branch_c": self.branch_c}


def _check_free(spec, S, n_letters=5, max_len=4):
    gens = S[:n_letters]
    seen = {}
    count = 0
    for n in range(1, max_len + 1):
        for W in itertools.product(range(len(gens)), repeat=n):
            w = ()
            for i in W:
                w += gens[i]
            key = _nf(spec, w)
            if not key or seen.setdefault(key, W) != W:
                raise AssertionError(f"semigroup words {seen.get(key)} and {W} coincide")
            count += 1
    return count


def build_free_semigroup(sys: ContractingSystem, ball: SpaceGraph, omega_target: float, delta: int = 1,
                         R: int | None = None, k_min: int = 5, branches: int = 40, seed: int = 0,
                         omega_ambient: float | None = None) -> SemigroupBundle:
    """Smallest level k whose selected semigroup S = A·f grows faster than omega_target."""
    from .growth import count_series, critical_exponent
    spec = sys.spec
    if omega_ambient is None:
        omega_ambient = critical_exponent(count_series(ball, None, 0)).estimate
    if omega_target >= omega_ambient:
        raise ValueError(f"target {omega_target} is not below the ambient exponent {omega_ambient:.4f}")
    if delta < 1:
        raise ValueError("the level bookkeeping needs delta >= 1")
    if R is None:
        R = sys.tau + 1
    top = ball.radius - delta - R
    if top < k_min:
        raise InsufficientRadius(f"radius {ball.radius} leaves no level k >= {k_min} (R={R}, delta={delta})")
    w = omega_target
    for k in range(k_min, top + 1):
        ann = annulus(ball, k, delta)
        Z = separated_net(ann, R, ball)
        theta = len(Z) / len(ann)
        dd = ((k + delta) * w - 2.0 ** -k * theta) / k
        if not (dd >= w and len(ann) > math.exp(k * dd)):
            continue
        sel = large_semigroup_select(sys, [ball.word(z) for z in Z])
        S = [_nf(spec, a + sel.f) for a in sel.A]
        lengths = [len(s) for s in S]
        om = _root(lengths)
        if om <= w:
            log.info("level k=%d reaches omega=%.4f <= target %.4f", k, om, w)
            continue
        lo, hi = _defect_window(spec, S, lengths, seed)
        free = _check_free(spec, S)
        eps, c, nb = _check_branches(sys, sel, branches, seed)
        series = _semigroup_series(spec, S, ball.radius, delta)
        return SemigroupBundle(sel.A, sel.f, S, k, delta, R, theta, w, omega_ambient, om,
                               _root(lengths, hi), _root(lengths, lo), dd, series, free, nb, eps, c, sel)
    raise InsufficientRadius(f"no level k <= {top} reaches omega > {w} at radius {ball.radius}")


def _defect_window(spec, S, lengths, seed, samples=4000):
    """Range of |ss'| - |s| - |s'| over sampled pairs."""
    rng = np.random.default_rng(seed)
    n = len(S)
    if n * n <= samples:
        pairs = itertools.product(range(n), repeat=2)
    else:
        pairs = (tuple(int(x) for x in rng.integers(0, n, 2)) for _ in range(samples))
    lo = hi = 0
    for i, j in pairs:
        d = len(_nf(spec, S[i] + S[j])) - lengths[i] - lengths[j]
        lo, hi = min(lo, d), max(hi, d)
    return lo, hi


def _check_branches(sys, sel, count, seed):
    spec, m = sys.spec, sys.metric
    h = sys.hs[sel.index]
    cert = sys.certificates[sel.index]
    rng = np.random.default_rng(seed)
    eps, c = 0, 1.0
    for b in range(count):
        n = 1 + b % 3
        word = [sel.A[int(x)] for x in rng.integers(0, len(sel.A), n)]
        pcs, pre = [], ()
        for a in word:
            pcs.append(Piece(a))
            pre = _nf(spec, pre + a)
            pcs.append(Piece(sel.f, QuasiAxis(m, h, pre), cert))
            pre = _nf(spec, pre + sel.f)
        v = fellow_travel_check(m, pcs, sys.D, sys.tau, geodesic_limit=16)
        eps, c = max(eps, v.eps), max(c, v.c)
    return eps, c, count


def _semigroup_series(spec, S, radius, delta):
    """Semigroup elements by word length, up to the ambient radius."""
    found = {()}
    frontier = [()]
    while frontier:
        nxt = []
        for g in frontier:
            for s in S:
                w = _nf(spec, g + s)
                if len(w) <= radius + delta and w not in found:
                    found.add(w)
                    nxt.append(w)
        frontier = nxt
    lens = np.bincount([len(w) for w in found], minlength=radius + delta + 1)
    counts = [int(lens[max(0, n - delta):n + delta + 1].sum()) for n in range(radius + 1)]
    return GrowthSeries(delta, tuple(counts), "semigroup")


# ---------------------------------------------------------------- barriers

@dataclass
class BarrierWitness:
    t: tuple
    f: tuple
    d_t: int
    d_tf: int
    i: int
    j: int


def _path(metric, gamma):
    """A word (tuple) is read as the path from o; anything else as a vertex list."""
    if isinstance(gamma, tuple):
        return metric.path(metric.vertex(()), gamma)
    return list(gamma)


def _walk(metric, v, word):
    try:
        for l in word:
            v = metric.step(v, l)
    except InsufficientRadius:
        return None
    return v


def _sort_key(metric, v):
    w = metric.word(v)
    return (len(w), w)


def detect_barrier(metric, gamma, eps: int, f, oriented: bool = True) -> BarrierWitness | None:
    """A t with t·o and t·f·o within eps of gamma (in that order along gamma when oriented)."""
    verts = _path(metric, gamma)
    f = tuple(f)
    near = {}
    for i, v in enumerate(verts):
        for u, du in metric.nbhd(v, eps).items():
            lo, hi, dmin = near.get(u, (i, i, du))
            near[u] = (min(lo, i), max(hi, i), min(dmin, du))
    for t in sorted((u for u in near if metric.is_orbit(u)), key=lambda u: _sort_key(metric, u)):
        tf = _walk(metric, t, f)
        if tf is None or tf not in near:
            continue
        ti, tj = near[t], near[tf]
        if oriented:
            if tj[1] < ti[0]:
                continue
            i = ti[0]
            j = max(x for x in range(i, len(verts)) if metric.d(tf, verts[x]) <= eps)
        else:
            i, j = ti[0], tj[0]
        return BarrierWitness(metric.word(t), f, ti[2], tj[2], i, j)
    return None


@dataclass
class RegionResult:
    elements: list
    series: GrowthSeries
    n: int
    delta: int
    params: dict


class _Nbhd:
    def __init__(self, metric, r):
        self.metric, self.r, self.cache = metric, r, {}

    def __call__(self, v):
        if v not in self.cache:
            self.cache[v] = self.metric.nbhd(v, self.r)
        return self.cache[v]


def _dist_fn(metric, x):
    if isinstance(metric, SpaceGraph):
        row = metric.row(x)
        return lambda u: int(row[u])
    return lambda u: metric.d(x, u)


def barrier_free_set(metric, eps: int, M: int, g, n: int, delta: int = 0,
                     oriented: bool = True) -> RegionResult:
    """Elements h with some (eps, g)-barrier-free geodesic between B(o,M) and B(h·o,M)."""
    g = tuple(g)
    top = n + delta
    if isinstance(metric, SpaceGraph) and top + M + eps > metric.radius:
        raise InsufficientRadius(f"n+delta+M+eps = {top + M + eps} exceeds radius {metric.radius}")
    ginv = inverse(g)
    W = 2 * eps + len(g) + 1
    nb = _Nbhd(metric, eps)
    o = metric.vertex(())
    reached = set()

    def blocked(u, window):
        wset = set(window)
        for tf in nb(u):
            if not metric.is_orbit(tf):
                continue
            t = _walk(metric, tf, ginv)
            if t is None:
                continue
            if any(w in wset for w in nb(t)):
                return True
        if not oriented:
            for t in nb(u):
                if not metric.is_orbit(t):
                    continue
                tf = _walk(metric, t, g)
                if tf is not None and any(w in wset for w in nb(tf)):
                    return True
        return False

    for x in sorted(metric.nbhd(o, M), key=lambda u: _sort_key(metric, u)):
        dx = _dist_fn(metric, x)
        if not blocked(x, (x,)):
            states = {(x, (x,))}
            reached.add(x)
        else:
            states = set()
        for L in range(1, top + 2 * M + 1):
            nxt = set()
            for v, window in states:
                for u in metric.neighbors(v):
                    u = u if not isinstance(u, np.integer) else int(u)
                    if dx(u) != L:
                        continue
                    win = (window + (u,))[-W:]
                    if (u, win) in nxt or blocked(u, win):
                        continue
                    nxt.add((u, win))
                    reached.add(u)
            states = nxt
    if M:
        members = set()
        for y in reached:
            members.update(u for u in metric.nbhd(y, M) if metric.is_orbit(u))
    else:
        members = {y for y in reached if metric.is_orbit(y)}
    return _region(metric, members, n, delta, {"eps": eps, "M": M, "g": g, "oriented": oriented})


def _region(metric, members, n, delta, params):
    lens = np.bincount([metric.d0(v) for v in members], minlength=n + delta + 1)
    counts = tuple(int(lens[max(0, k - delta):k + delta + 1].sum()) for k in range(n + 1))
    elems = sorted((metric.word(v) for v in members if abs(metric.d0(v) - n) <= delta),
                   key=lambda w: (len(w), w))
    return RegionResult(elems, GrowthSeries(delta, counts, f"region {params}"), n, delta, params)


def concave_region(ball: SpaceGraph, M1: int, M2: int, n: int, delta: int = 0) -> RegionResult:
    """Elements g joined to B(o,M2) by a geodesic from B(g·o,M2) with interior outside N_M1(orbit)."""
    if M1 > M2:
        raise ValueError(f"M1={M1} exceeds M2={M2}")
    if M1 < 0:
        raise ValueError("M1 must be nonnegative")
    if n + delta + M2 > ball.radius:
        raise InsufficientRadius(f"n+delta+M2 = {n + delta + M2} exceeds radius {ball.radius}")
    from scipy.sparse import diags
    from scipy.sparse.csgraph import dijkstra
    A = ball.matrix()
    d_orb = ball.rows(ball.orbit_ids(), min_only=True, limit=M1 + 1)
    U = (d_orb < 0) | (d_orb > M1)
    # only vertices outside the M1-neighbourhood may continue a path
    AU = (diags(U.astype(np.int8)) @ A).tocsr()
    good = np.zeros(ball.n, dtype=bool)
    inexact = 0
    for x in sorted(ball.nbhd(0, M2)):
        full = ball.row(x)
        nbrs = ball.neighbors(x)
        du = dijkstra(AU, directed=True, indices=nbrs, unweighted=True, min_only=True) + 1
        du[x] = 0
        ok = (full >= 0) & np.isfinite(du) & (du == full)
        ex = ball.dist0[x] + full <= ball.radius
        inexact += int((ok & ~ex).sum())
        good |= ok & ex
    Y = np.flatnonzero(good)
    near = ball.rows(Y, min_only=True, limit=M2) if len(Y) else np.full(ball.n, -1)
    members = np.flatnonzero((near >= 0) & ball.orbit & (ball.dist0 <= n + delta))
    res = _region(ball, [int(v) for v in members], n, delta, {"M1": M1, "M2": M2})
    res.params["inexact_pairs"] = inexact
    return res


# ---------------------------------------------------------------- free products and nearby elements

@dataclass
class FreeProductVerdict:
    certified: bool
    words: int
    failures: list
    tau: int
    projection: int
    letters_H: list
    letters_K: list


def _syllables(spec, h, D, width):
    out = []
    for s in (1, -1):
        j = 1
        while True:
            w = _nf(spec, power(h, s * j))
            if len(w) > D + width:
                break
            if len(w) > D:
                out.append(w)
            j += 1
            if j > 4 * (D + width) + 4:
                break
    return out


def free_product_combine(spec: GroupSpec, H, K, D: int, syllables: int = 4, width: int = 1,
                         tau: int | None = None, radius: int = 8) -> FreeProductVerdict:
    """Every alternating word in Ĥ, K̂ labels an admissible path, hence is nontrivial."""
    metric = CayleyMetric(spec)
    h = _nf(spec, H[0] if H and not isinstance(H[0], int) else H)
    k = _nf(spec, K[0] if K and not isinstance(K[0], int) else K)
    rel = _powers_equal(spec, h, k, max(2, radius))
    if rel:
        p, q = rel
        raise ValueError(f"H and K intersect nontrivially: {spec.show(_nf(spec, power(h, p)))}")
    cert = is_contracting_element(spec, h, radius)
    if not cert.certified:
        raise ValueError(f"{spec.show(h)} is not certified contracting: {cert.status}")
    X = QuasiAxis(metric, h)
    J = max(4, 2 * (D + width))
    diam = []
    for top in (J // 2, J):
        pts = set()
        for j in range(-top, top + 1):
            pts.update(X.project(_nf(spec, power(k, j))).nearest)
        pts = sorted(pts, key=lambda p: (len(p), p))
        diam.append(max([metric.d(a, b) for a in pts for b in pts] or [0]))
    if diam[1] > diam[0]:
        raise ValueError(f"projection of K onto the H-axis grows: {diam[0]} -> {diam[1]}")
    proj = diam[1]
    tau = proj if tau is None else tau
    Hh = _syllables(spec, h, D, width)
    Kk = _syllables(spec, k, D, width)
    failures, count = [], 0
    for n in range(1, syllables + 1):
        for first in (0, 1):
            kinds = [(first + i) % 2 for i in range(n)]
            for choice in itertools.product(*[Hh if t == 0 else Kk for t in kinds]):
                pcs, pre = [], ()
                for t, w in zip(kinds, choice):
                    pcs.append(Piece(w, QuasiAxis(metric, h, pre), cert) if t == 0 else Piece(w))
                    pre = _nf(spec, pre + w)
                count += 1
                v = check_admissible(metric, pcs, D, tau)
                if not v.passed or not pre:
                    failures.append(tuple(spec.show(w) for w in choice))
    return FreeProductVerdict(not failures, count, failures, tau, proj,
                              [spec.show(w) for w in Hh], [spec.show(w) for w in Kk])


def contracting_nearby(sys: ContractingSystem, g, radius: int = 8):
    """A connector f with g·f contracting, plus its certificate."""
    spec = sys.spec
    g = _nf(spec, g)
    pf, pb = sys.proj(g), sys.proj(inverse(g))
    ok = [k for k in range(3) if max(pf[k], pb[k]) <= sys.tau and not (g and in_elementary(spec, g, sys.hs[k]))]
    if not ok:
        raise ConnectorError(f"no axis qualifies for {spec.show(g)}", tuple(zip(pf, pb)))
    for k in ok:
        f = sys.connector(k)
        gf = _nf(spec, g + f)
        if not gf:
            continue
        cert = is_contracting_element(spec, gf, radius)
        return f, cert
    raise ConnectorError(f"every connector cancels {spec.show(g)}", tuple(zip(pf, pb)))
