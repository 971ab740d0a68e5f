
import pytest
from hypothesis import given, strategies as st

from scclab.presentations import (
    CAYLEY, CUSPED, FREE, FREE_PRODUCT, PRESENTED, QUOTIENT, RAAG, RACG, DSLError,
    format_group, format_space, free_reduce, inverse, parse_group_spec, parse_space_spec,
    parse_word, power, word_multiply, cyclic_reduce,
)

from oracles import all_words, naive_reduce, reduced_words

AB = ("a", "b")
words = st.lists(st.integers(0, 3), max_size=16).map(tuple)


def w(text):
    return parse_word(text, AB)


class TestGroupParsing:
    def test_free_rank_two(self):
        g = parse_group_spec("group F2 { generators a, b; }")
        assert g.kind == FREE and g.rank == 2
        assert [s.name for s in g.symbols] == ["a", "b"]
        assert [s.index for s in g.symbols] == [0, 1]

    def test_raag_on_path(self):
        g = parse_group_spec("group P3 { generators a,b,c; commute (a,b),(b,c); }")
        assert g.kind == RAAG
        assert g.edges == {(0, 1), (1, 2)}
        assert g.commute(1, 0) and not g.commute(0, 2)

    def test_unknown_generator_in_commute(self):
        with pytest.raises(DSLError, match="unknown generator 'b'") as exc:
            parse_group_spec("group X { generators a; commute (a,b); }")
        assert exc.value.line == 1 and exc.value.col is not None

    def test_duplicate_generator(self):
        with pytest.raises(DSLError, match="duplicate generator"):
            parse_group_spec("group X { generators a, a; }")

    def test_relator_with_unknown_generator(self):
        with pytest.raises(DSLError, match="unknown generator"):
            parse_group_spec('group X { generators a, b; relators "abc"; }')

    def test_syntax_error_position(self):
        with pytest.raises(DSLError) as exc:
            parse_group_spec("group X {\n  generators a b; }")
        assert exc.value.line == 2

    def test_racg_and_free_product(self):
        assert parse_group_spec("group W { generators s, t; involutions; }").kind == RACG
        fp = parse_group_spec("group M { generators x, y; orders 2, 3; }")
        assert fp.kind == FREE_PRODUCT and fp.orders == (2, 3)
        assert parse_group_spec("group M { generators x, y; orders 2, inf; }").orders == (2, None)

    def test_presented(self):
        g = parse_group_spec('group G { generators a, b; relators "aba\'b\'"; }')
        assert g.kind == PRESENTED
        assert g.relators == ((0, 2, 1, 3),)

    def test_declaration_order_fixes_letters(self):
        g = parse_group_spec("group G { generators y, x; }")
        assert g.word("x") == (2,) and g.word("y") == (0,)


class TestSpaceParsing:
    def test_cayley_builtin(self):
        s = parse_space_spec("space cayley(F2)")
        assert s.kind == CAYLEY and s.group.rank == 2

    def test_cusped(self):
        s = parse_space_spec("space cusped(F2) { peripheral <a>; }")
        assert s.kind == CUSPED and s.peripherals == ((0,),)

    def test_quotient(self):
        s = parse_space_spec('space quotient(cayley(F2)) { normal "a"; }')
        assert s.kind == QUOTIENT and s.normal == ((0,),) and s.base.kind == CAYLEY

    def test_quotient_needs_nontrivial_word(self):
        with pytest.raises(DSLError, match="trivial"):
            parse_space_spec('space quotient(cayley(F2)) { normal "aa\'"; }')

    def test_finite_peripheral_rejected(self):
        text = "group W { generators s, t; involutions; }\nspace cusped(W) { peripheral <s>; }"
        with pytest.raises(DSLError, match="finite"):
            parse_space_spec(text)

    def test_unknown_group(self):
        with pytest.raises(DSLError, match="unknown group"):
            parse_space_spec("space cayley(Nope)")


class TestWords:
    def test_power_syntax(self):
        assert w("a^3b'^2") == (0, 0, 0, 3, 3)
        assert w("(ab)^2") == (0, 2, 0, 2)
        assert w("(ab)'") == (3, 1)
        assert w("a^-2") == (1, 1)
        assert w("1") == ()

    def test_free_reduce_examples(self):
        assert free_reduce(w("abb'a")) == w("aa")
        assert free_reduce(w("a'a")) == ()
        assert free_reduce(()) == ()

    def test_multiply_examples(self):
        assert word_multiply(w("ab"), w("b'a")) == w("aa")
        u = w("ab'ab")
        assert word_multiply(u, inverse(u)) == ()
        assert word_multiply((), w("ba")) == w("ba")

    def test_multiply_alphabet_mismatch(self):
        with pytest.raises(ValueError):
            word_multiply((0,), (6,), rank=2)

    def test_idempotent_exhaustive_to_length_12(self):
        # every output of free_reduce on a word of length <= 12 is a reduced word of
        # length <= 12, so checking all of those covers the whole input space
        for n in range(13):
            for r in reduced_words(2, n):
                assert free_reduce(r) == r
        for n in range(9):
            for u in all_words(2, n):
                assert free_reduce(u) == naive_reduce(u)

    @pytest.mark.slow
    def test_associative_exhaustive_to_length_4(self):
        R = [r for n in range(5) for r in reduced_words(2, n)]
        pair = {(x, y): word_multiply(x, y) for x in R for y in R}
        for x in R:
            for y in R:
                xy = pair[x, y]
                for z in R:
                    assert word_multiply(xy, z) == word_multiply(x, pair[y, z])

    @given(words)
    def test_free_reduce_matches_naive(self, u):
        r = free_reduce(u)
        assert r == naive_reduce(u)
        assert all(r[i] != r[i + 1] ^ 1 for i in range(len(r) - 1))

    @given(words, words, words)
    def test_multiply_associative(self, x, y, z):
        assert word_multiply(word_multiply(x, y), z) == word_multiply(x, word_multiply(y, z))

    @given(words)
    def test_inverse_cancels(self, u):
        assert word_multiply(u, inverse(u)) == ()
        assert inverse(inverse(u)) == u

    @given(words, st.integers(-4, 4))
    def test_power_additive(self, u, k):
        assert free_reduce(power(u, k) + power(u, 1)) == free_reduce(power(u, k + 1))

    @given(words)
    def test_cyclic_reduce(self, u):
        c = cyclic_reduce(u)
        assert not c or c[0] != c[-1] ^ 1
        assert len(c) <= len(free_reduce(u))


GROUPS = [
    "group F3 { generators a, b, c; }",
    "group P3 { generators a, b, c; commute (a,b), (b,c); }",
    "group W { generators s, t, u; commute (s,u); involutions; }",
    "group M { generators x, y, z; orders 2, 3, inf; }",
    "group G { generators a, b; relators \"b'aba'b'^3a^2ba^3\"; }",
    "group H { generators a, b; commute (a,b); relators \"a^5\"; }",
]


@pytest.mark.parametrize("text", GROUPS)
def test_group_round_trip(text):
    g = parse_group_spec(text)
    again = parse_group_spec(format_group(g))
    assert again == g
    assert format_group(again) == format_group(g)


@pytest.mark.parametrize("text", [
    "space cayley(F2)",
    "space cusped(F2) { peripheral <a>, <b>; }",
    'space quotient(cayley(F2)) { normal "a^2", "b^2", "(ab)^2"; }',
    GROUPS[1] + "\nspace cayley(P3)",
])
def test_space_round_trip(text):
    s = parse_space_spec(text)
    again = parse_space_spec(format_space(s))
    assert again == s and again.text == s.text
