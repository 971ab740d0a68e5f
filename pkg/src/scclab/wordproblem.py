"""Element equality per group class: normal forms, Dehn's algorithm, fingerprints and
the element oracles used to deduplicate vertices during ball enumeration."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

from .presentations import (
    CAYLEY, FREE, FREE_PRODUCT, PRESENTED, QUOTIENT, RAAG, RACG,
    GroupSpec, SpaceSpec, cyclic_reduce, free_reduce, gen, inverse,
)

log = logging.getLogger(__name__)


class WordProblemError(ValueError):
    pass


@dataclass(frozen=True)
class NormalForm:
    canonical: tuple
    scheme: str
    is_canonical: bool = True


# ---------------------------------------------------------------- graph products

def _racg_letters(w):
    return tuple(l & ~1 for l in w)


def trace_append(spec: GroupSpec, w: list, x: int) -> None:
    """Multiply the reduced word ``w`` (in place) by the letter ``x``.

    Scans back over letters commuting with ``x``; a cancelling partner is removed,
    anything else blocks and ``x`` is appended.
    """
    gx = x >> 1
    inv = x if spec.kind == RACG else x ^ 1
    for j in range(len(w) - 1, -1, -1):
        y = w[j]
        gy = y >> 1
        if gy == gx:
            if y == inv:
                del w[j]
                return
            break
        if not spec.commute(gx, gy):
            break
    w.append(x)


def lex_linearize(spec: GroupSpec, w) -> tuple:
    """Lexicographically least word obtained from ``w`` by commuting adjacent letters."""
    rest = list(w)
    out = []
    while rest:
        best = None
        for p, x in enumerate(rest):
            if best is not None and x >= rest[best]:
                continue
            gx = x >> 1
            if all((y >> 1) != gx and spec.commute(gx, y >> 1) for y in rest[:p]):
                best = p
        out.append(rest.pop(best))
    return tuple(out)


def graph_product_nf(spec: GroupSpec, w) -> tuple:
    if spec.kind == RACG:
        w = _racg_letters(w)
    red = []
    for x in w:
        trace_append(spec, red, x)
    return lex_linearize(spec, red)


# ---------------------------------------------------------------- free products of cyclics

def _norm_exp(e, m):
    if m is None:
        return e
    r = e % m
    if r > m // 2:
        r -= m
    return r


def free_product_nf(spec: GroupSpec, w) -> tuple:
    syl = []  # [generator, exponent]
    for l in w:
        g, e = l >> 1, (-1 if l & 1 else 1)
        if syl and syl[-1][0] == g:
            syl[-1][1] += e
        else:
            syl.append([g, e])
        # normalize the last syllable, dropping it if trivial; may expose a merge
        while syl:
            g0, e0 = syl[-1]
            e0 = _norm_exp(e0, spec.orders[g0])
            if e0 == 0:
                syl.pop()
                if len(syl) >= 2 and syl[-1][0] == syl[-2][0]:
                    syl[-2][1] += syl.pop()[1]
                    continue
            else:
                syl[-1][1] = e0
            break
    out = []
    for g, e in syl:
        out.extend([2 * g + (1 if e < 0 else 0)] * abs(e))
    return tuple(out)


# ---------------------------------------------------------------- small cancellation

@dataclass(frozen=True)
class SmallCancellationReport:
    lam: Fraction
    max_piece: tuple
    lengths: tuple
    verdict: bool


def symmetrized(relators):
    """All cyclic shifts of each relator and of its inverse, tagged (relator, shift, inverted)."""
    out = []
    for k, r in enumerate(relators):
        r = tuple(r)
        for inv, base in ((0, r), (1, inverse(r))):
            for s in range(len(base)):
                out.append(((k, s, inv), base[s:] + base[:s]))
    return out


def check_small_cancellation(relators, lam=Fraction(1, 6)) -> SmallCancellationReport:
    lam = Fraction(lam)
    rels = [tuple(r) for r in relators]
    for r in rels:
        if not r:
            raise WordProblemError("empty relator")
        if cyclic_reduce(r) != r:
            raise WordProblemError("relator is not cyclically reduced")
    sym = symmetrized(rels)
    best = [0] * len(rels)
    for i, (ti, u) in enumerate(sym):
        for tj, v in sym[i + 1:]:
            if ti == tj:
                continue
            cap = min(len(u), len(v)) - 1
            L = 0
            while L < cap and u[L] == v[L]:
                L += 1
            if L > best[ti[0]]:
                best[ti[0]] = L
            if L > best[tj[0]]:
                best[tj[0]] = L
    lengths = tuple(len(r) for r in rels)
    verdict = all(p < lam * n for p, n in zip(best, lengths))
    return SmallCancellationReport(lam, tuple(best), lengths, verdict)


class Dehn:
    """Dehn's algorithm for a presentation satisfying C'(1/6)."""

    def __init__(self, relators):
        self.relators = tuple(tuple(r) for r in relators)
        self.min_len = min(len(r) for r in self.relators)
        # a window just over half a cyclic relator, split as prefix -> inverted rest
        self.rests = {}
        windows = {}
        for _, r in symmetrized(self.relators):
            h = len(r) // 2 + 1
            windows.setdefault(h, {})[r[:h]] = inverse(r[h:])
            for t in range(1, h):
                self.rests.setdefault(r[:t], set()).add(inverse(r[t:h]))
        self.windows = sorted(windows.items())
        self.max_prefix = max((len(p) for p in self.rests), default=0)

    def reduce(self, w) -> tuple:
        # replacing a window just over half of r = s t by t^-1 always shortens the word,
        # and any longer piece contains such a window
        w = list(free_reduce(w))
        i = 0
        while i < len(w):
            for h, tab in self.windows:
                rep = tab.get(tuple(w[i:i + h])) if i + h <= len(w) else None
                if rep is not None:
                    w = list(free_reduce(w[:i] + list(rep) + w[i + h:]))
                    i = 0
                    break
            else:
                i += 1
        return tuple(w)

    def is_identity(self, w) -> bool:
        return not self.reduce(w)

    def partner_suffixes(self, u):
        """Suffixes that any other Dehn-reduced word equal to ``u`` must end with.

        Cancelling the common suffix of u and v leaves u' v'^-1, which is trivial only if
        more than half a relator straddles the junction (Greendlinger).
        """
        out = set()
        for j in range(1, len(u) + 1):
            tail = tuple(u[j:])
            for t in range(1, min(j, self.max_prefix) + 1):
                for rest in self.rests.get(tuple(u[j - t:j]), ()):
                    out.add(rest + tail)
        return out


class AscendingHNN:
    """Exact equality for a one-relator quotient of F2 whose rewritten relator is ascending.

    With exponent sums (α, β) and α | β, put s = a·b^(β/α) and s_j = b^j s b^-j; the relator
    becomes a word in the s_j. If its top index occurs once, the group is an ascending HNN
    extension of the free group on the lower indices, and a word with zero b-exponent is
    trivial iff its rewrite into that free group reduces to nothing. The roles of a and b,
    and of top and bottom, are tried in turn.
    """

    def __init__(self, relator, max_length: int = 2_000_000):
        r = cyclic_reduce(tuple(relator))
        if not r or any(gen(l) > 1 for l in r):
            raise ValueError("needs a single relator over two generators")
        exps = [sum(1 if l % 2 == 0 else -1 for l in r if gen(l) == g) for g in (0, 1)]
        for s_gen in (0, 1):
            t_gen = 1 - s_gen
            es, et = exps[s_gen], exps[t_gen]
            if es == 0:
                if et == 0:
                    continue
                k = 0
            elif et % es == 0:
                k = et // es
            else:
                continue
            self.s_gen, self.t_gen, self.k = s_gen, t_gen, k
            idx, total = self._index(r)
            if total != 0:
                continue
            for flip in (1, -1):
                ids = [(flip * j, e) for j, e in idx]
                top = max(j for j, _ in ids)
                lo = min(j for j, _ in ids)
                tops = [i for i, (j, _) in enumerate(ids) if j == top]
                if top > lo and len(tops) == 1:
                    self.flip, self.L = flip, top - lo
                    i = tops[0]
                    rot = ids[i:] + ids[:i]
                    rest = tuple(2 * (j - lo) + (e < 0) for j, e in rot[1:])
                    self.exprs = [(2 * j,) for j in range(self.L)]
                    self.exprs.append(inverse(rest) if rot[0][1] > 0 else rest)
                    self.max_length = max_length
                    return
        raise ValueError("relator does not rewrite to an ascending HNN extension")

    def _index(self, w):
        p, out = 0, []
        for l in w:
            sgn = 1 if l % 2 == 0 else -1
            if gen(l) == self.t_gen:
                p += sgn
            elif sgn > 0:
                out.append((p, 1))
                p -= self.k
            else:
                p += self.k
                out.append((p, -1))
        return out, p

    def _expr(self, j):
        while len(self.exprs) <= j:
            prev = self.exprs[-1]
            img = []
            for l in prev:
                part = self.exprs[(l >> 1) + 1]
                img.extend(inverse(part) if l & 1 else part)
                if len(img) > self.max_length:
                    raise WordProblemError(f"rewrite of s_{len(self.exprs)} exceeds {self.max_length} letters")
            self.exprs.append(free_reduce(img))
        return self.exprs[j]

    def is_identity(self, w) -> bool:
        idx, total = self._index(free_reduce(w))
        if total != 0:
            return False
        if not idx:
            return True
        ids = [(self.flip * j, e) for j, e in idx]
        shift = -min(j for j, _ in ids)
        out = []
        for j, e in ids:
            part = self._expr(j + shift)
            for l in (part if e > 0 else inverse(part)):
                if out and out[-1] == l ^ 1:
                    out.pop()
                else:
                    out.append(l)
        return not out


def ascending_hnn(relators) -> AscendingHNN | None:
    rels = [r for r in relators if r]
    if len(rels) != 1:
        return None
    try:
        return AscendingHNN(rels[0])
    except ValueError:
        return None


_dehn_cache = {}


def dehn_for(relators) -> Dehn:
    key = tuple(tuple(r) for r in relators)
    d = _dehn_cache.get(key)
    if d is None:
        rep = check_small_cancellation(key)
        if not rep.verdict:
            raise WordProblemError(
                "relators fail C'(1/6) (max pieces %s for lengths %s); Dehn's algorithm is not valid"
                % (rep.max_piece, rep.lengths))
        d = _dehn_cache[key] = Dehn(key)
    return d


# ---------------------------------------------------------------- public word problem

def normal_form(spec: GroupSpec, w) -> NormalForm:
    w = tuple(w)
    if any(l >= 2 * spec.rank for l in w):
        raise WordProblemError("word uses letters outside the alphabet of %s" % spec.name)
    if spec.kind == FREE:
        return NormalForm(free_reduce(w), "free")
    if spec.kind == FREE_PRODUCT:
        return NormalForm(free_product_nf(spec, w), "syllable")
    if spec.kind in (RAAG, RACG):
        return NormalForm(graph_product_nf(spec, w), "shortlex-trace")
    if spec.kind == PRESENTED:
        return NormalForm(dehn_for(spec.relators).reduce(w), "dehn", False)
    raise WordProblemError("unsupported scheme for kind %r" % spec.kind)


def is_identity(spec: GroupSpec, w) -> bool:
    nf = normal_form(spec, w)
    return not nf.canonical


def nf_geodesic(spec: GroupSpec) -> bool:
    """True when normal forms are geodesic words (word length = normal form length)."""
    return spec.kind in (FREE, FREE_PRODUCT, RAAG, RACG)


def equal(spec: GroupSpec, u, v) -> bool:
    if spec.kind == PRESENTED:
        return is_identity(spec, tuple(u) + inverse(v))
    return normal_form(spec, u).canonical == normal_form(spec, v).canonical


# ---------------------------------------------------------------- fingerprints

def _compose(p, q):
    """p then q."""
    return tuple(q[i] for i in p)


def _perm_inverse(p):
    out = [0] * len(p)
    for i, j in enumerate(p):
        out[j] = i
    return tuple(out)


@dataclass(frozen=True)
class FingerprintScheme:
    """Homomorphisms to small permutation groups, one per target.

    ``targets[t][i]`` is the image of generator ``i`` in target ``t`` (0-based images).
    """
    targets: tuple

    @property
    def width(self) -> int:
        return len(self.targets)

    def letter_perm(self, t, l):
        p = self.targets[t][l >> 1]
        return _perm_inverse(p) if l & 1 else p

    def identity(self):
        return tuple(tuple(range(len(t[0]))) for t in self.targets)

    def step(self, digest, l):
        return tuple(_compose(d, self.letter_perm(t, l)) for t, d in enumerate(digest))


def make_scheme(targets, rank=None) -> FingerprintScheme:
    """Build a scheme from explicit permutation lists, checking they are bijections."""
    out = []
    for t in targets:
        imgs = tuple(tuple(int(x) for x in p) for p in t)
        if rank is not None and len(imgs) != rank:
            raise WordProblemError("fingerprint target has %d images for rank %d" % (len(imgs), rank))
        n = len(imgs[0])
        for p in imgs:
            if sorted(p) != list(range(n)):
                raise WordProblemError("fingerprint image %r is not a permutation of %d points" % (p, n))
        out.append(imgs)
    return FingerprintScheme(tuple(out))


def fingerprint(w, scheme: FingerprintScheme):
    d = scheme.identity()
    for l in w:
        d = scheme.step(d, l)
    return d


def validate_scheme(scheme: FingerprintScheme, relators) -> None:
    ident = scheme.identity()
    for r in relators:
        if fingerprint(r, scheme) != ident:
            raise WordProblemError("fingerprint target does not kill relator %r" % (r,))


def abelian_scheme(relators, rank, moduli=(7, 11, 13)) -> FingerprintScheme:
    """Cyclic targets through the abelianisation: generator i acts as rotation by x_i,
    where x is an integer kernel vector of the exponent-sum matrix."""
    from sympy import Matrix, ilcm

    rows = []
    for r in relators:
        v = [0] * rank
        for l in r:
            v[l >> 1] += -1 if l & 1 else 1
        rows.append(v)
    kernel = Matrix(rows).nullspace() if rows else [Matrix.eye(rank)[:, i] for i in range(rank)]
    vecs = []
    for k in kernel:
        den = ilcm(*[x.q for x in k]) if len(k) else 1
        vecs.append([int(x * den) for x in k])
    targets = []
    for m in moduli:
        for v in vecs:
            targets.append(tuple(tuple((i + v[g]) % m for i in range(m)) for g in range(rank)))
    if not targets:
        targets.append(tuple((0,) for _ in range(rank)))
    return make_scheme(targets, rank)


# ---------------------------------------------------------------- element oracles for BFS

class ElementOracle:
    """Maps words to hashable element keys.  ``extend`` is the per-edge fast path."""
    canonical = True
    geodesic = False
    name = "oracle"

    def key(self, w):
        raise NotImplementedError

    def extend(self, key, word, l):
        w2 = tuple(word) + (l,)
        return self.key(w2), w2

    def describe(self):
        return {"strategy": self.name}


class GroupOracle(ElementOracle):
    def __init__(self, spec: GroupSpec):
        self.spec = spec
        self.geodesic = nf_geodesic(spec)
        self.name = {FREE: "free", FREE_PRODUCT: "syllable", RAAG: "shortlex-trace", RACG: "shortlex-trace"}[spec.kind]

    def key(self, w):
        return normal_form(self.spec, w).canonical

    def extend(self, key, word, l):
        s = self.spec
        if s.kind == FREE:
            k = key[:-1] if key and key[-1] == l ^ 1 else key + (l,)
            return k, k
        if s.kind in (RAAG, RACG):
            if s.kind == RACG:
                l &= ~1
            red = list(key)
            trace_append(s, red, l)
            k = lex_linearize(s, red)
            return k, k
        k = free_product_nf(s, key + (l,))
        return k, k


class KillOracle(ElementOracle):
    """Quotient of a free/graph/free product by the normal closure of some generators."""
    name = "free-factor kill"

    def __init__(self, spec: GroupSpec, killed):
        self.spec = spec
        self.killed = frozenset(killed)
        self.inner = GroupOracle(spec)
        self.geodesic = True

    def key(self, w):
        return self.inner.key(tuple(l for l in w if (l >> 1) not in self.killed))

    def extend(self, key, word, l):
        if (l >> 1) in self.killed:
            return key, key
        return self.inner.extend(key, word, l)

    def describe(self):
        return {"strategy": self.name, "killed": sorted(self.killed)}


class LatticeOracle(ElementOracle):
    """Free abelian group modulo the lattice of exponent vectors of the normal words."""
    name = "abelian lattice"

    def __init__(self, spec: GroupSpec, words):
        from sympy import Matrix
        from sympy.matrices.normalforms import hermite_normal_form

        self.spec = spec
        n = spec.rank
        rows = []
        for w in words:
            v = [0] * n
            for l in w:
                v[l >> 1] += -1 if l & 1 else 1
            if any(v):
                rows.append(v)
        cols = []
        if rows:
            H = hermite_normal_form(Matrix(rows).T)
            for j in range(H.shape[1]):
                c = [int(H[i, j]) for i in range(n)]
                if any(c):
                    p = max(i for i in range(n) if c[i])
                    if c[p] < 0:
                        c = [-x for x in c]
                    cols.append((p, c))
        cols.sort(key=lambda t: -t[0])
        self.cols = cols

    def reduce(self, v):
        v = list(v)
        for p, c in self.cols:
            q = v[p] // c[p]
            if q:
                for i in range(p + 1):
                    v[i] -= q * c[i]
        return tuple(v)

    def key(self, w):
        v = [0] * self.spec.rank
        for l in w:
            v[l >> 1] += -1 if l & 1 else 1
        return self.reduce(v)

    def extend(self, key, word, l):
        v = list(key)
        v[l >> 1] += -1 if l & 1 else 1
        return self.reduce(v), tuple(word) + (l,)


class FiniteOracle(ElementOracle):
    """Finite quotient via coset enumeration over the trivial subgroup."""
    name = "finite quotient"

    def __init__(self, rank, relators, max_cosets=200000):
        from sympy.combinatorics.coset_table import coset_enumeration_r
        from sympy.combinatorics.fp_groups import FpGroup
        from sympy.combinatorics.free_groups import free_group

        F, *xs = free_group(" ".join(f"x{i}" for i in range(rank)) + ("," if rank == 1 else ""))
        rels = []
        for r in relators:
            e = F.identity
            for l in r:
                e = e * (xs[l >> 1] ** (-1 if l & 1 else 1))
            rels.append(e)
        G = FpGroup(F, rels)
        try:
            C = coset_enumeration_r(G, [], max_cosets=max_cosets)
        except ValueError as exc:
            raise WordProblemError(f"coset enumeration did not close within {max_cosets} cosets") from exc
        C.compress()
        C.standardize()
        self.table = [list(row) for row in C.table]
        self.order = len(self.table)

    def key(self, w):
        c = 0
        for l in w:
            c = self.table[c][l]
        return c

    def extend(self, key, word, l):
        return self.table[key][l], tuple(word) + (l,)

    def describe(self):
        return {"strategy": self.name, "order": self.order}


class DehnOracle(ElementOracle):
    """Fingerprint buckets plus confirmation by relator substitution; keys are interned
    element numbers.

    With a C'(1/6) presentation Dehn's algorithm decides equality, and words are kept
    Dehn-reduced and indexed by suffix so that only forced partners are compared.  Without it, a
    reduction to the empty word still proves equality, digests that differ still prove
    inequality, a single relator with an ascending rewrite settles collisions exactly, and any
    collision left undecided aborts the enumeration.
    """
    canonical = False
    name = "dehn"

    def __init__(self, relators, scheme: FingerprintScheme | None = None, rank=None):
        rels = tuple(tuple(r) for r in relators)
        self.report = check_small_cancellation(rels)
        self.decisive = self.report.verdict
        self.dehn = Dehn(rels)
        self.hnn = None if self.decisive else ascending_hnn(rels)
        if not self.decisive:
            self.name = "fingerprint separation"
        if scheme is None:
            scheme = abelian_scheme(rels, rank)
            log.warning("no fingerprint targets configured; using abelian cyclic targets (more collisions)")
        validate_scheme(scheme, rels)
        self.scheme = scheme
        self.buckets = {}
        self.words, self.suffixes, self.reduced = {}, {}, []
        self.fp = []
        self.collisions = 0
        self.confirmations = 0

    def _intern(self, w, d):
        if self.decisive:
            return self._intern_indexed(self.dehn.reduce(w), d)
        lst = self.buckets.setdefault(d, [])
        for word, kid in lst:
            self.confirmations += 1
            x = tuple(w) + inverse(word)
            if self.dehn.is_identity(x):
                return kid
            if self.hnn is not None:
                if self.hnn.is_identity(x):
                    return kid
                self.collisions += 1
                continue
            raise WordProblemError(
                "cannot certify equality: fingerprint collision between %r and %r is undecided "
                "(presentation is not C'(1/6))" % (tuple(w), word))
        kid = len(self.fp)
        self.fp.append(d)
        lst.append((tuple(w), kid))
        return kid

    def _intern_indexed(self, u, d):
        # Dehn-reduced words indexed by every suffix; only partners sharing a suffix
        # forced by Greendlinger's lemma and the fingerprint are confirmed
        kid = self.words.get(u)
        if kid is not None:
            return kid
        cands = set()
        for suf in self.dehn.partner_suffixes(u):
            cands.update(self.suffixes.get((d, suf), ()))
        for kid in sorted(cands):
            self.confirmations += 1
            if self.dehn.is_identity(u + inverse(self.reduced[kid])):
                self.words[u] = kid
                return kid
            self.collisions += 1
        kid = len(self.fp)
        self.fp.append(d)
        self.reduced.append(u)
        self.words[u] = kid
        for i in range(len(u) + 1):
            self.suffixes.setdefault((d, u[i:]), []).append(kid)
        return kid

    def key(self, w):
        return self._intern(w, fingerprint(w, self.scheme))

    def extend(self, key, word, l):
        w2 = tuple(word) + (l,)
        return self._intern(w2, self.scheme.step(self.fp[key], l)), w2

    def describe(self):
        return {"strategy": self.name, "small_cancellation": self.decisive,
                "ascending_rewrite": self.hnn is not None,
                "max_piece": list(self.report.max_piece),
                "fingerprint_width": self.scheme.width,
                "fingerprint_targets": [list(map(list, t)) for t in self.scheme.targets]}


def group_oracle(spec: GroupSpec, scheme=None) -> ElementOracle:
    if spec.kind == PRESENTED:
        return DehnOracle(spec.relators, scheme, spec.rank)
    return GroupOracle(spec)


def _base_relators(spec: GroupSpec):
    rels = []
    if spec.kind in (RAAG, RACG):
        rels += [(2 * i, 2 * j, 2 * i + 1, 2 * j + 1) for i, j in sorted(spec.edges)]
    if spec.kind == RACG:
        rels += [(2 * i, 2 * i) for i in range(spec.rank)]
    if spec.kind == FREE_PRODUCT:
        rels += [(2 * i,) * o for i, o in enumerate(spec.orders) if o is not None]
    if spec.kind == PRESENTED:
        rels += list(spec.relators)
    return rels


def quotient_oracle(space: SpaceSpec, scheme=None, strategy=None, max_cosets=50000) -> ElementOracle:
    """Pick the first strategy able to certify equality in the quotient."""
    if space.kind != QUOTIENT or space.base.kind != CAYLEY:
        raise WordProblemError("quotient oracle needs a quotient of a Cayley graph")
    spec = space.group
    words = [free_reduce(w) for w in space.normal]
    order = [strategy] if strategy else ["kill", "lattice", "dehn", "separation", "finite"]
    reasons = []
    for s in order:
        if s == "kill":
            gens = set()
            ok = spec.kind in (FREE, RAAG, RACG, FREE_PRODUCT)
            for w in words:
                if len(w) == 1:
                    gens.add(w[0] >> 1)
                else:
                    ok = False
            if ok:
                return KillOracle(spec, gens)
            reasons.append("kill: normal words are not single generators")
        elif s == "lattice":
            if spec.kind == RAAG and len(spec.edges) == spec.rank * (spec.rank - 1) // 2:
                return LatticeOracle(spec, words)
            reasons.append("lattice: base group is not free abelian")
        elif s == "dehn":
            if spec.kind == FREE:
                rels = [cyclic_reduce(w) for w in words]
                if check_small_cancellation(rels).verdict:
                    return DehnOracle(rels, scheme, spec.rank)
                reasons.append("dehn: normal words fail C'(1/6)")
            else:
                reasons.append("dehn: base group is not free")
        elif s == "separation":
            # only reached when asked for explicitly or after the exact strategies fail
            rels = [cyclic_reduce(w) for w in words]
            if spec.kind == FREE and (scheme is not None or (spec.rank == 2 and ascending_hnn(rels))):
                return DehnOracle(rels, scheme, spec.rank)
            reasons.append("separation: needs a free base group and configured fingerprint targets "
                           "or a single relator with an ascending rewrite")
        elif s == "finite":
            try:
                return FiniteOracle(spec.rank, _base_relators(spec) + words, max_cosets)
            except WordProblemError as exc:
                reasons.append("finite: " + str(exc))
        else:
            raise WordProblemError(f"unknown quotient strategy {s!r}")
    raise WordProblemError("no strategy can certify equality in the quotient: " + "; ".join(reasons))
