import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scclab.presentations import parse_space_spec, parse_word
from scclab.spaces import (
    BallBudgetError, BallCache, CacheError, CayleyMetric, InsufficientRadius, annulus, build_ball,
    build_quotient_ball, dead_end_depth, distance, geodesics_between, horoball_orbit_distances,
    load_ball, save_ball, separated_net, verify_ball_file,
)
from scclab.wordproblem import normal_form

from models import CUSPED_TEXT, F2_TEXT, GREENDLINGER, GREENDLINGER_QUOTIENT, P3_TEXT, Z23_TEXT, Z2_TEXT, ball, space
from oracles import int_gen_depth, lattice_sphere, nf_ball_counts

AB = ("a", "b")


def w(text):
    return parse_word(text, AB)


def lattice_dist(b, x, y):
    """Closed-form l1 distance between two vertices of a Z^2 ball."""
    def coords(v):
        word = b.word(v)
        return (sum(1 if l == 0 else -1 for l in word if l < 2), sum(1 if l == 2 else -1 for l in word if l >= 2))
    (p, q), (r, s) = coords(x), coords(y)
    return abs(p - r) + abs(q - s)


class TestBallSizes:
    def test_f2(self):
        b = ball(F2_TEXT, 8)
        sizes = np.cumsum(b.layer_sizes())
        assert [int(x) for x in sizes] == [2 * 3 ** n - 1 for n in range(9)]
        assert len(ball(F2_TEXT, 3)) == 53

    def test_z2(self):
        assert len(ball(Z2_TEXT, 2)) == 13
        b = ball(Z2_TEXT, 8)
        assert b.layer_sizes().tolist() == [lattice_sphere(n) for n in range(9)]

    def test_raag_path(self, P3):
        b = ball(P3_TEXT, 4)
        assert b.layer_sizes()[:3].tolist() == [1, 6, 22]
        assert len(ball(P3_TEXT, 2)) == 29
        nf = lambda u: normal_form(P3, u).canonical
        assert b.layer_sizes().tolist() == nf_ball_counts(P3, 4, nf)

    def test_layer_consistency_every_model(self):
        for text, r in [(F2_TEXT, 6), (Z2_TEXT, 6), (P3_TEXT, 4), (Z23_TEXT, 8), (CUSPED_TEXT, 5)]:
            b = ball(text, r)
            for n in range(r + 1):
                assert b.layer_sizes()[: n + 1].sum() == int((b.dist0 <= n).sum())
            # dist0 is an exact BFS layering
            src = np.repeat(np.arange(b.n), np.diff(b.indptr))
            assert (np.abs(b.dist0[src] - b.dist0[b.indices]) <= 1).all()
            inner = np.flatnonzero(b.dist0 > 0)
            has_parent = np.zeros(b.n, bool)
            has_parent[b.indices[b.dist0[src] + 1 == b.dist0[b.indices]]] = True
            assert has_parent[inner].all()

    def test_deterministic_ids(self):
        a = build_ball(space(P3_TEXT), 3)
        b = build_ball(space(P3_TEXT), 3)
        assert a.words == b.words
        assert (a.indices == b.indices).all()

    def test_budget_error_reports_layers(self):
        with pytest.raises(BallBudgetError) as exc:
            build_ball(space(F2_TEXT), 8, max_vertices=100)
        assert exc.value.layers[:3] == [1, 4, 12]

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            build_ball(space(F2_TEXT), -1)


class TestOrbitMarkers:
    def test_cayley_all_marked(self):
        assert ball(F2_TEXT, 4).orbit.all()

    def test_cusped_depth_zero_marked(self):
        b = ball(CUSPED_TEXT, 5)
        assert (b.orbit == (b.depth == 0)).all()
        assert (b.depth > 0).any()


class TestDistances:
    def test_f2_examples(self):
        b = ball(F2_TEXT, 8)
        assert distance(b, b.vertex(w("ba^3")), 0).value == 4
        assert b.d(b.vertex(w("ba^3")), b.vertex(w("a^2"))) == 6

    def test_z2_commutation(self):
        b = ball(Z2_TEXT, 4)
        assert b.vertex(w("ab")) == b.vertex(w("ba"))
        assert b.d(b.vertex(w("ab")), b.vertex(w("ba"))) == 0

    def test_inexact_flag(self):
        b = ball(Z2_TEXT, 4)
        x, y = b.vertex(w("a^4")), b.vertex(w("b'^4"))
        dist = distance(b, x, y)
        assert not dist.exact
        with pytest.raises(InsufficientRadius):
            b.d(x, y)

    def test_exact_pairs_match_lattice(self):
        b = ball(Z2_TEXT, 8)
        rng = np.random.default_rng(1)
        for x, y in rng.integers(0, b.n, size=(2000, 2)):
            d = distance(b, x, y)
            if d.exact:
                assert d.value == lattice_dist(b, x, y)
            else:
                assert d.value >= lattice_dist(b, x, y)

    @pytest.mark.parametrize("text,r", [(F2_TEXT, 6), (Z2_TEXT, 8), (P3_TEXT, 5), (CUSPED_TEXT, 5)])
    def test_symmetry_and_triangle(self, text, r):
        b = ball(text, r)
        rng = np.random.default_rng(7)
        inner = np.flatnonzero(b.dist0 <= r // 2)
        triples = rng.choice(inner, size=(10_000, 3))
        srcs = np.unique(triples)
        D = {int(s): row for s, row in zip(srcs, b.rows(srcs))}
        checked = 0
        for x, y, z in triples.tolist():
            dxy, dyz, dxz = int(D[x][y]), int(D[y][z]), int(D[x][z])
            if b.exact(x, y, dxy) and b.exact(y, z, dyz) and b.exact(x, z, dxz):
                assert dxy == int(D[y][x])
                assert dxz <= dxy + dyz
                checked += 1
        assert checked > 400

    def test_cayley_metric_agrees_with_ball(self, F2):
        b = ball(F2_TEXT, 6)
        m = CayleyMetric(F2)
        rng = np.random.default_rng(3)
        for x, y in rng.integers(0, b.n, size=(300, 2)):
            assert m.d(b.word(x), b.word(y)) == b.d(x, y)


class TestGeodesics:
    def test_f2_unique(self):
        b = ball(F2_TEXT, 4)
        assert geodesics_between(b, 0, b.vertex(w("ab"))).count == 1

    def test_z2_lattice_paths(self):
        b = ball(Z2_TEXT, 8)
        assert geodesics_between(b, 0, b.vertex(w("a^2b^2"))).count == math.comb(4, 2)
        assert geodesics_between(b, 0, b.vertex(w("ab"))).count == 2

    def test_every_path_is_geodesic(self):
        b = ball(Z2_TEXT, 8)
        dag = geodesics_between(b, b.vertex(w("a'b")), b.vertex(w("a^2b'^2")))
        paths = list(dag.paths())
        assert len(paths) == dag.count == math.comb(6, 3)
        for p in paths:
            assert len(p) == dag.length + 1
            assert all(b.d(u, v) == 1 for u, v in zip(p, p[1:]))

    def test_inexact_refused(self):
        b = ball(Z2_TEXT, 4)
        with pytest.raises(InsufficientRadius):
            geodesics_between(b, b.vertex(w("a^4")), b.vertex(w("a'^4")))


class TestAnnulus:
    def test_f2(self):
        b = ball(F2_TEXT, 4)
        assert len(annulus(b, 2, 1)) == 4 + 12 + 36
        assert set(annulus(b, 3, 0).tolist()) == set(b.sphere(3).tolist())

    def test_out_of_radius(self):
        b = ball(F2_TEXT, 4)
        with pytest.raises(InsufficientRadius):
            annulus(b, 5, 0)

    def test_cusped_only_orbit(self):
        b = ball(CUSPED_TEXT, 5)
        assert b.orbit[annulus(b, 3, 1)].all()


class TestSeparatedNet:
    def test_examples(self):
        b = ball(F2_TEXT, 4)
        s1 = b.sphere(1)
        assert sorted(separated_net(s1, 0, b)) == sorted(s1.tolist())
        assert len(separated_net(s1, 1, b)) == 4
        assert len(separated_net(s1, 2, b)) == 1

    @given(st.integers(0, 3), st.integers(1, 2), st.sampled_from([F2_TEXT, Z2_TEXT, P3_TEXT]))
    def test_separated_and_maximal(self, R, n, text):
        b = ball(text, 6)
        pts = b.sphere(n).tolist()
        kept = separated_net(pts, R, b)
        for i, p in enumerate(kept):
            for q in kept[i + 1:]:
                assert b.d(p, q) > R
        for p in set(pts) - set(kept):
            assert min(b.d(p, q) for q in kept) <= R

    def test_out_of_radius(self):
        b = ball(F2_TEXT, 4)
        with pytest.raises(InsufficientRadius):
            separated_net(b.sphere(3), 2, b)


class TestDeadEnds:
    def test_free_group_has_none(self):
        b = ball(F2_TEXT, 7)
        for v in np.flatnonzero(b.dist0 <= 3):
            assert dead_end_depth(b, v) == 0

    def test_integers_two_three(self):
        b = ball(Z23_TEXT, 12)
        one = b.vertex(w("a'b"))
        three = b.vertex(w("b"))
        assert dead_end_depth(b, one) == 1 == int_gen_depth(1)
        assert dead_end_depth(b, three) == 0 == int_gen_depth(3)

    def test_unstable_raises(self):
        b = ball(Z23_TEXT, 4)
        with pytest.raises(InsufficientRadius):
            dead_end_depth(b, b.sphere(4)[0])


class TestQuotients:
    def test_kill_generator(self):
        sp = parse_space_spec('space quotient(cayley(F2)) { normal "a"; }')
        b = build_quotient_ball(sp, 6)
        assert [int((b.dist0 <= n).sum()) for n in range(7)] == [2 * n + 1 for n in range(7)]

    def test_klein_four(self):
        sp = parse_space_spec('space quotient(cayley(F2)) { normal "a^2", "b^2", "(ab)^2"; }')
        for r in (2, 3, 5):
            assert len(build_quotient_ball(sp, r)) == 4

    def test_small_cancellation_quotient_is_smaller(self):
        q = ball(GREENDLINGER_QUOTIENT, 8)
        f = ball(F2_TEXT, 8)
        qs = np.cumsum(q.layer_sizes())
        fs = np.cumsum(f.layer_sizes())
        assert (qs <= fs).all()
        for n in range(math.ceil(len(w(GREENDLINGER)) / 2), 9):
            assert qs[n] < fs[n]
        assert (qs[:6] == fs[:6]).all()

    def test_monotone_for_every_quotient(self):
        f = np.cumsum(ball(F2_TEXT, 6).layer_sizes())
        for normal in ['"b"', '"a^2", "b^2", "(ab)^3"', '"a^3", "b^3", "(ab)^2"', f'"{GREENDLINGER}"']:
            sp = parse_space_spec(f"space quotient(cayley(F2)) {{ normal {normal}; }}")
            q = np.cumsum(build_quotient_ball(sp, 6).layer_sizes())
            assert (q <= f).all()

    def test_needs_quotient(self):
        with pytest.raises(ValueError):
            build_quotient_ball(space(F2_TEXT), 3)


class TestCusped:
    def test_peripheral_distortion(self):
        r = 8
        b = ball(CUSPED_TEXT, r)
        ref = horoball_orbit_distances(2 ** (r // 2))
        for k in range(-2 ** (r // 2), 2 ** (r // 2) + 1):
            v = b.vertex((0,) * k if k >= 0 else (1,) * -k)
            d = b.d0(v)
            assert d <= 2 * math.ceil(math.log2(abs(k) + 1)) + 2
            assert d == ref[k + 2 ** (r // 2)]

    def test_horoball_distances_small(self):
        # |k| <= 4 is never shortened by climbing: a detour costs 2 and saves at most |k|/2
        assert horoball_orbit_distances(4).tolist() == [4, 3, 2, 1, 0, 1, 2, 3, 4]


class TestCache:
    def test_round_trip(self, tmp_path):
        b = ball(CUSPED_TEXT, 4)
        p = tmp_path / "b.sccb"
        save_ball(b, p)
        c = load_ball(p)
        assert c.words == b.words and c.radius == b.radius
        for name in ("dist0", "depth", "family", "indptr", "indices", "mult", "up"):
            assert np.array_equal(getattr(c, name), getattr(b, name))
        assert c.space == b.space

    def test_corruption_detected(self, tmp_path):
        p = tmp_path / "b.sccb"
        save_ball(ball(F2_TEXT, 3), p)
        data = bytearray(p.read_bytes())
        data[-5] ^= 0xFF
        p.write_bytes(bytes(data))
        with pytest.raises(CacheError):
            verify_ball_file(p)

    def test_get_or_build_hits(self, tmp_path):
        cache = BallCache(tmp_path)
        sp = space(F2_TEXT)
        built = []
        make = lambda: built.append(1) or build_ball(sp, 3)
        a = cache.get_or_build(sp, 3, make)
        b = cache.get_or_build(sp, 3, make)
        assert len(built) == 1 and cache.hits == 1
        assert a.words == b.words
        assert [e["vertices"] for e in cache.list()] == [53]
        assert cache.verify() == {}
        assert cache.clear() == 1 and cache.clear() == 0
