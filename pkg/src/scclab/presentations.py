"""Group and space descriptions: a small text DSL plus the free-monoid word algebra.

Letters are encoded as integers: generator ``i`` is ``2*i`` and its inverse is ``2*i + 1``.
A word is a tuple of letters.  This keeps the shortlex order equal to declaration order
(a < a' < b < b' < ...) and makes inversion a single xor.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import NamedTuple

Word = tuple  # tuple[int, ...]

FREE = "free"
FREE_PRODUCT = "free_product"
RAAG = "raag"
RACG = "racg"
PRESENTED = "presented"

CAYLEY = "cayley"
CUSPED = "cusped"
QUOTIENT = "quotient"


class DSLError(ValueError):
    def __init__(self, msg, line=None, col=None):
        where = f" (line {line}, column {col})" if line is not None else ""
        super().__init__(msg + where)
        self.line = line
        self.col = col


class GeneratorSymbol(NamedTuple):
    name: str
    index: int


def letter(index: int, sign: int = 1) -> int:
    return 2 * index + (0 if sign > 0 else 1)


def gen(l: int) -> int:
    return l >> 1


def sign(l: int) -> int:
    return -1 if l & 1 else 1


def inverse(w) -> Word:
    return tuple(l ^ 1 for l in reversed(w))


def free_reduce(w) -> Word:
    out = []
    for l in w:
        if out and out[-1] == l ^ 1:
            out.pop()
        else:
            out.append(l)
    return tuple(out)


def word_multiply(u, v, rank=None) -> Word:
    if rank is not None:
        bound = 2 * rank
        if any(l >= bound for l in u) or any(l >= bound for l in v):
            raise ValueError("alphabet mismatch: letter outside rank %d" % rank)
    return free_reduce(tuple(u) + tuple(v))


def power(w, k: int) -> Word:
    if k < 0:
        return tuple(inverse(w)) * (-k)
    return tuple(w) * k


def is_cyclically_reduced(w) -> bool:
    w = tuple(w)
    if free_reduce(w) != w:
        return False
    return len(w) < 2 or w[0] != w[-1] ^ 1


def cyclic_reduce(w) -> Word:
    w = list(free_reduce(w))
    while len(w) >= 2 and w[0] == w[-1] ^ 1:
        w = w[1:-1]
    return tuple(w)


def letters_of(w):
    """Signed (generator index, sign) pairs, the external view of a word."""
    return [(gen(l), sign(l)) for l in w]


@dataclass(frozen=True)
class GroupSpec:
    name: str
    generators: tuple
    kind: str = FREE
    edges: frozenset = frozenset()      # commutation graph for RAAG/RACG, pairs (i, j) with i < j
    orders: tuple = ()                  # free products of cyclic groups; None means infinite
    relators: tuple = ()                # Presented kind
    involutions: bool = False

    @property
    def rank(self) -> int:
        return len(self.generators)

    @property
    def symbols(self):
        return [GeneratorSymbol(n, i) for i, n in enumerate(self.generators)]

    def index(self, name: str) -> int:
        try:
            return self.generators.index(name)
        except ValueError:
            raise KeyError(name) from None

    def commute(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges

    def order(self, i: int):
        if self.kind == FREE_PRODUCT:
            return self.orders[i]
        if self.kind == RACG:
            return 2
        return None

    def word(self, text: str) -> Word:
        return parse_word(text, self.generators)

    def show(self, w) -> str:
        return format_word(w, self.generators)

    def letters(self):
        """Letters that give distinct Cayley-graph neighbours."""
        out = []
        for i in range(self.rank):
            out.append(2 * i)
            if self.order(i) != 2:
                out.append(2 * i + 1)
        return out


@dataclass(frozen=True)
class SpaceSpec:
    kind: str
    group: GroupSpec
    peripherals: tuple = ()             # tuples of generator indices
    base: "SpaceSpec | None" = None
    normal: tuple = ()                  # normal-closure words for quotients
    groups: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    @property
    def text(self) -> str:
        """Canonical DSL text; used as part of the cache key."""
        return format_space(self)


# ---------------------------------------------------------------- word syntax

def _name_pattern(names):
    # longest names first so multi-character generators win
    alts = sorted(names, key=len, reverse=True)
    return "|".join(re.escape(n) for n in alts)


def parse_word(text: str, names, line=None) -> Word:
    """Parse ``"aba'b'"``, ``"a^3b'^2"`` or ``"(ab)^2"`` into a word (not reduced)."""
    names = tuple(names)
    name_re = re.compile(_name_pattern(names)) if names else None
    pos = 0
    text = text.strip()

    def atom_power(pos):
        m = re.compile(r"\s*\^\s*(-?\d+)").match(text, pos)
        if m:
            return int(m.group(1)), m.end()
        return 1, pos

    def parse_seq(pos, depth):
        out = []
        while pos < len(text):
            ch = text[pos]
            if ch.isspace() or ch == "*" or ch == ".":
                pos += 1
                continue
            if ch == ")":
                if depth == 0:
                    raise DSLError(f"unbalanced ')' in word {text!r}", line, pos + 1)
                return out, pos + 1
            if ch == "(":
                inner, pos = parse_seq(pos + 1, depth + 1)
                primes = 0
                while pos < len(text) and text[pos] == "'":
                    primes += 1
                    pos += 1
                if primes % 2:
                    inner = list(inverse(inner))
                k, pos = atom_power(pos)
                out.extend(power(inner, k))
                continue
            if ch == "1" and (pos + 1 == len(text) or not text[pos + 1].isalnum()):
                pos += 1
                continue
            m = name_re.match(text, pos) if name_re else None
            if not m:
                raise DSLError(f"unknown generator in word {text!r} at {text[pos:]!r}", line, pos + 1)
            idx = names.index(m.group(0))
            pos = m.end()
            inv = False
            while pos < len(text) and text[pos] == "'":
                inv = not inv
                pos += 1
            k, pos = atom_power(pos)
            out.extend(power((letter(idx, -1 if inv else 1),), k))
        if depth:
            raise DSLError(f"missing ')' in word {text!r}", line, pos + 1)
        return out, pos

    out, _ = parse_seq(pos, 0)
    return tuple(out)


def format_word(w, names) -> str:
    """Compact text for a word using power shorthand: a^3b'^2."""
    if not w:
        return "1"
    parts = []
    i = 0
    w = tuple(w)
    while i < len(w):
        j = i
        while j < len(w) and w[j] == w[i]:
            j += 1
        s = names[gen(w[i])] + ("'" if w[i] & 1 else "")
        parts.append(s if j - i == 1 else f"{s}^{j - i}")
        i = j
    return "".join(parts)


# ---------------------------------------------------------------- DSL tokens

_TOKEN = re.compile(
    r'(?P<ws>\s+)|(?P<comment>#[^\n]*)|(?P<string>"[^"\n]*")|(?P<name>[A-Za-z_][A-Za-z0-9_]*)'
    r'|(?P<int>\d+)|(?P<punct>[{}();,<>])|(?P<bad>.)'
)


class _Tokens:
    def __init__(self, text):
        self.toks = []
        line, col0 = 1, 0
        for m in _TOKEN.finditer(text):
            kind = m.lastgroup
            val = m.group(0)
            col = m.start() - col0 + 1
            if kind == "bad":
                raise DSLError(f"unexpected character {val!r}", line, col)
            if kind not in ("ws", "comment"):
                self.toks.append((kind, val, line, col))
            nl = val.count("\n")
            if nl:
                line += nl
                col0 = m.start() + val.rfind("\n") + 1
        self.i = 0
        self.end = (line, len(text) - col0 + 1)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, kind=None, value=None):
        t = self.peek()
        if t is None:
            raise DSLError("unexpected end of input" + (f", expected {value or kind}" if (value or kind) else ""), *self.end)
        if (kind and t[0] != kind) or (value and t[1] != value):
            raise DSLError(f"expected {value or kind}, found {t[1]!r}", t[2], t[3])
        self.i += 1
        return t

    def accept(self, value):
        t = self.peek()
        if t is not None and t[1] == value and t[0] in ("punct", "name"):
            self.i += 1
            return t
        return None


def builtin_group(name: str):
    m = re.fullmatch(r"F(\d+)", name)
    if m and 1 <= int(m.group(1)) <= 26:
        n = int(m.group(1))
        return GroupSpec(name, tuple("abcdefghijklmnopqrstuvwxyz"[:n]), FREE)
    return None


def _parse_group(tk: _Tokens) -> GroupSpec:
    tk.next("name", "group")
    name = tk.next("name")[1]
    tk.next("punct", "{")
    gens = None
    edges = set()
    orders = None
    involutions = False
    relator_texts = []
    pending_edges = []
    while not tk.accept("}"):
        kw = tk.next("name")
        if kw[1] == "generators":
            names = [tk.next("name")]
            while tk.accept(","):
                names.append(tk.next("name"))
            seen = set()
            for t in names:
                if t[1] in seen:
                    raise DSLError(f"duplicate generator {t[1]!r}", t[2], t[3])
                seen.add(t[1])
            gens = tuple(t[1] for t in names)
        elif kw[1] == "commute":
            while True:
                tk.next("punct", "(")
                x = tk.next("name")
                tk.next("punct", ",")
                y = tk.next("name")
                tk.next("punct", ")")
                pending_edges.append((x, y))
                if not tk.accept(","):
                    break
        elif kw[1] == "involutions":
            involutions = True
        elif kw[1] == "orders":
            orders = []
            while True:
                t = tk.peek()
                if t and t[0] == "int":
                    orders.append(int(tk.next()[1]))
                else:
                    t = tk.next("name")
                    if t[1] not in ("inf", "infinity"):
                        raise DSLError(f"bad order {t[1]!r}", t[2], t[3])
                    orders.append(None)
                if not tk.accept(","):
                    break
        elif kw[1] == "relators":
            while True:
                relator_texts.append(tk.next("string"))
                if not tk.accept(","):
                    break
        else:
            raise DSLError(f"unknown clause {kw[1]!r}", kw[2], kw[3])
        tk.next("punct", ";")
    if gens is None:
        raise DSLError(f"group {name} declares no generators", *tk.end)
    for x, y in pending_edges:
        for t in (x, y):
            if t[1] not in gens:
                raise DSLError(f"unknown generator {t[1]!r}", t[2], t[3])
        i, j = gens.index(x[1]), gens.index(y[1])
        if i == j:
            raise DSLError(f"self-loop ({x[1]},{y[1]}) in commutation graph", x[2], x[3])
        edges.add((min(i, j), max(i, j)))
    relators = []
    for t in relator_texts:
        w = parse_word(t[1][1:-1], gens, t[2])
        if not w:
            raise DSLError("empty relator", t[2], t[3])
        relators.append(w)
    return make_group(name, gens, edges=edges, orders=orders, involutions=involutions, relators=relators)


def make_group(name, gens, edges=(), orders=None, involutions=False, relators=()) -> GroupSpec:
    gens = tuple(gens)
    edges = frozenset((min(i, j), max(i, j)) for i, j in edges)
    if orders is not None:
        orders = tuple(orders)
        if len(orders) != len(gens):
            raise DSLError(f"group {name}: {len(orders)} orders for {len(gens)} generators")
        for o in orders:
            if o is not None and o < 2:
                raise DSLError(f"group {name}: factor order must be >= 2 or inf")
    if relators:
        rels = [cyclic_reduce(r) for r in relators]
        for r in rels:
            if not r:
                raise DSLError(f"group {name}: relator reduces to the empty word")
        for i, j in sorted(edges):
            rels.append((2 * i, 2 * j, 2 * i + 1, 2 * j + 1))
        if involutions:
            rels.extend((2 * i, 2 * i) for i in range(len(gens)))
        if orders:
            rels.extend((2 * i,) * o for i, o in enumerate(orders) if o is not None)
        return GroupSpec(name, gens, PRESENTED, edges, tuple(orders or ()), tuple(rels), involutions)
    if involutions:
        return GroupSpec(name, gens, RACG, edges, (), (), True)
    if edges:
        if orders:
            raise DSLError(f"group {name}: commute and orders cannot be combined")
        return GroupSpec(name, gens, RAAG, edges)
    if orders and any(o is not None for o in orders):
        return GroupSpec(name, gens, FREE_PRODUCT, frozenset(), orders)
    return GroupSpec(name, gens, FREE)


def _lookup(groups, tok):
    g = groups.get(tok[1]) or builtin_group(tok[1])
    if g is None:
        raise DSLError(f"unknown group {tok[1]!r}", tok[2], tok[3])
    return g


def _parse_space_expr(tk: _Tokens, groups) -> SpaceSpec:
    kw = tk.next("name")
    tk.next("punct", "(")
    if kw[1] == "cayley":
        g = _lookup(groups, tk.next("name"))
        tk.next("punct", ")")
        return SpaceSpec(CAYLEY, g, groups=groups)
    if kw[1] == "cusped":
        g = _lookup(groups, tk.next("name"))
        tk.next("punct", ")")
        periph = []
        if tk.accept("{"):
            while not tk.accept("}"):
                tk.next("name", "peripheral")
                while True:
                    tk.next("punct", "<")
                    names = [tk.next("name")]
                    while tk.accept(","):
                        names.append(tk.next("name"))
                    tk.next("punct", ">")
                    idx = []
                    for t in names:
                        if t[1] not in g.generators:
                            raise DSLError(f"unknown generator {t[1]!r}", t[2], t[3])
                        idx.append(g.generators.index(t[1]))
                    periph.append(tuple(sorted(set(idx))))
                    if not tk.accept(","):
                        break
                tk.next("punct", ";")
        if not periph:
            raise DSLError("cusped space needs at least one peripheral subgroup", kw[2], kw[3])
        _check_peripherals(g, periph, kw)
        return SpaceSpec(CUSPED, g, tuple(periph), groups=groups)
    if kw[1] == "quotient":
        base = _parse_space_expr(tk, groups)
        tk.next("punct", ")")
        normal = []
        if tk.accept("{"):
            while not tk.accept("}"):
                tk.next("name", "normal")
                while True:
                    t = tk.next("string")
                    w = free_reduce(parse_word(t[1][1:-1], base.group.generators, t[2]))
                    if not w:
                        raise DSLError("quotient normal word is trivial", t[2], t[3])
                    normal.append(w)
                    if not tk.accept(","):
                        break
                tk.next("punct", ";")
        if not normal:
            raise DSLError("quotient space needs at least one normal word", kw[2], kw[3])
        if base.kind == CUSPED:
            raise DSLError("quotients of cusped spaces are not modelled", kw[2], kw[3])
        return SpaceSpec(QUOTIENT, base.group, base=base, normal=tuple(normal), groups=groups)
    raise DSLError(f"unknown space kind {kw[1]!r}", kw[2], kw[3])


def _check_peripherals(g: GroupSpec, periph, tok):
    for p in periph:
        if all(g.order(i) is not None for i in p):
            if g.kind == RACG and len(p) >= 2 and any(not g.commute(i, j) for i in p for j in p if i < j):
                continue  # two non-commuting involutions generate an infinite dihedral group
            raise DSLError("peripheral subgroup <%s> is finite" % ",".join(g.generators[i] for i in p),
                           tok[2], tok[3])


def parse_document(text: str, groups=None):
    """Parse a sequence of group and space declarations.  Returns (groups, spaces).

    ``groups`` optionally seeds the name table with already parsed groups.
    """
    tk = _Tokens(text)
    groups = dict(groups or {})
    spaces = []
    while tk.peek() is not None:
        t = tk.peek()
        if t[1] == "group":
            g = _parse_group(tk)
            if g.name in groups:
                raise DSLError(f"group {g.name!r} declared twice", t[2], t[3])
            groups[g.name] = g
        elif t[1] == "space":
            tk.next()
            spaces.append(_parse_space_expr(tk, groups))
        else:
            raise DSLError(f"expected 'group' or 'space', found {t[1]!r}", t[2], t[3])
        tk.accept(";")
    return groups, spaces


def parse_group_spec(text: str) -> GroupSpec:
    groups, spaces = parse_document(text)
    if len(groups) != 1 or spaces:
        raise DSLError("expected exactly one group declaration")
    return next(iter(groups.values()))


def parse_space_spec(text: str, groups=None) -> SpaceSpec:
    _, spaces = parse_document(text, groups)
    if not spaces:
        raise DSLError("no space declaration found")
    if len(spaces) > 1:
        raise DSLError("more than one space declaration")
    return spaces[0]


def format_group(g: GroupSpec) -> str:
    parts = [f"generators {', '.join(g.generators)};"]
    user_rels = list(g.relators)
    if g.edges:
        parts.append("commute " + ", ".join(f"({g.generators[i]},{g.generators[j]})"
                                            for i, j in sorted(g.edges)) + ";")
    if g.involutions:
        parts.append("involutions;")
    if g.orders and any(o is not None for o in g.orders):
        parts.append("orders " + ", ".join("inf" if o is None else str(o) for o in g.orders) + ";")
    if g.kind == PRESENTED:
        implied = set()
        for i, j in g.edges:
            implied.add((2 * i, 2 * j, 2 * i + 1, 2 * j + 1))
        if g.involutions:
            implied.update((2 * i, 2 * i) for i in range(g.rank))
        if g.orders:
            implied.update((2 * i,) * o for i, o in enumerate(g.orders) if o is not None)
        user_rels = [r for r in g.relators if r not in implied]
        parts.append("relators " + ", ".join(f'"{format_word(r, g.generators)}"' for r in user_rels) + ";")
    return f"group {g.name} {{ " + " ".join(parts) + " }"


def format_space_expr(s: SpaceSpec) -> str:
    if s.kind == CAYLEY:
        return f"cayley({s.group.name})"
    if s.kind == CUSPED:
        per = ", ".join("<" + ",".join(s.group.generators[i] for i in p) + ">" for p in s.peripherals)
        return f"cusped({s.group.name}) {{ peripheral {per}; }}"
    words = ", ".join(f'"{format_word(w, s.group.generators)}"' for w in s.normal)
    return f"quotient({format_space_expr(s.base)}) {{ normal {words}; }}"


def format_space(s: SpaceSpec) -> str:
    g = s.group
    head = "" if builtin_group(g.name) == g else format_group(g) + "\n"
    return head + "space " + format_space_expr(s)
