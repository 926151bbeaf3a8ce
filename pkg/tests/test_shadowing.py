import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osplab.circle import circle_dist
from osplab.shadowing import (PERIOD_WORDS, CandidateSpec, Cloud, DegenerateInput, ExactOrbit, Model,
                              a1_setup, a2_setup, auto_epsilon_a1, base_radius, build_xi_a1,
                              build_xi_a2, cloud_of_orbit, expansivity_check, expansivity_witness,
                              lemma3_check, orbital_close, orbital_gap, osp_search, pack,
                              radius_grid, select_epsilon_lemma1, set_gap, splice, structure_ok,
                              validate_pseudo, window_set, windows)
from osplab.skewprod import ProductPoint, apply, default_skew, product_dist
from osplab.symbolic import BiSeq, InvalidInput, metric, random_biseq, shift
from osplab.wordsearch import algo_params, build_heteroclinic, build_point_s

G0 = default_skew()
SMALL = CandidateSpec(max_period=3, max_core=2, fiber_grid=16, margin=200)

words = st.text(alphabet="01", min_size=1, max_size=3)
seqs = st.builds(BiSeq.make, words, st.text(alphabet="01", max_size=5), words, st.integers(-4, 4))
# fibers on a coarse dyadic grid produce exact ties with dyadic eps
fibers = st.integers(0, 63).map(lambda i: i / 64)
points = st.builds(ProductPoint, seqs, fibers)


def close_oracle(A, B, eps):
    # double loop with the product metric and strict inequality
    def one_way(X, Y):
        return all(any(product_dist(p, q) < eps for q in Y) for p in X)
    return one_way(A, B) and one_way(B, A)


def orbit_xi(omega, fiber, lo, hi):
    return splice(G0, [("q", ExactOrbit(omega, "iterate", 0, fiber), lo, hi, 0)])


def jump_xi(jump):
    """Exact orbit on [-300, 0], then the same orbit with the fiber moved by
    ``jump`` from index 1 on."""
    om = BiSeq.make("0", "", "1", 0)
    a = ExactOrbit(om, "iterate", 0, 0.25)
    f1 = float(a.fibers(G0, 1, 1)[0])
    b = ExactOrbit(om, "iterate", 1, f1 + jump)
    return splice(G0, [("a", a, -300, 0, 0), ("b", b, 1, 300, 0)])


@pytest.fixture(scope="module")
def a1():
    setup = a1_setup(G0)
    auto = auto_epsilon_a1(setup)
    return setup, auto, build_xi_a1(setup, auto["eps"] / 2)


def test_base_radius():
    assert base_radius(1.0) == 1 and base_radius(1 / 64) == 7 and base_radius(0.02) == 6
    with pytest.raises(InvalidInput):
        base_radius(0.0)


@settings(max_examples=300, deadline=None)
@given(seqs, seqs, st.integers(1, 12))
def test_base_radius_window(s1, s2, j):
    eps = 3 * 2.0 ** -j / 2
    r = base_radius(eps)
    assert (metric(s1, s2) < eps) == (s1.word(-r, r) == s2.word(-r, r))


@settings(max_examples=300, deadline=None)
@given(seqs, st.integers(-30, 30), st.integers(0, 40), st.integers(0, 5))
def test_window_set_matches_full(om, lo, n, r):
    hi = lo + n
    assert window_set(om, lo, hi, r) == set(pack(windows(om, lo, hi, r)).tolist())


def test_orbital_close_examples():
    om = BiSeq.periodic("01")
    A, B = [ProductPoint(om, 0.1)], [ProductPoint(om, 0.3)]
    assert not orbital_close(A, B, 0.1)
    assert orbital_close(A, B, 0.25)
    # distance exactly eps: strict inequality
    assert not orbital_close([ProductPoint(om, 0.125)], [ProductPoint(om, 0.375)], 0.25)
    assert orbital_close(A, A, 1e-300)
    with pytest.raises(InvalidInput):
        orbital_close([], B, 0.1)


@settings(max_examples=500, deadline=None)
@given(st.lists(points, min_size=1, max_size=6), st.lists(points, min_size=1, max_size=6),
       st.sampled_from([1.0, 0.5, 0.25, 0.125, 1 / 32, 0.3, 0.07, 3 / 64]))
def test_orbital_close_oracle(A, B, eps):
    assert orbital_close(A, B, eps) == close_oracle(A, B, eps)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=8), st.lists(st.integers(0, 3), min_size=1, max_size=8),
       st.data())
def test_set_gap_oracle(ga, gb, data):
    fa = np.array(data.draw(st.lists(st.floats(0, 1, exclude_max=True), min_size=len(ga), max_size=len(ga))))
    fb = np.array(data.draw(st.lists(st.floats(0, 1, exclude_max=True), min_size=len(gb), max_size=len(gb))))
    ga, gb = np.array(ga), np.array(gb)
    if set(ga) != set(gb):
        expect = np.inf
    else:
        expect = max(max(np.min(circle_dist(fa[i], fb[gb == ga[i]])) for i in range(len(ga))),
                     max(np.min(circle_dist(fb[j], fa[ga == gb[j]])) for j in range(len(gb))))
    got = set_gap(ga, fa, gb, fb)[0]
    assert got == expect or abs(got - expect) < 1e-15


def test_validate_exact_orbit():
    rng = np.random.default_rng(0)
    for _ in range(5):
        xi = orbit_xi(random_biseq(rng), float(rng.random()), -200, 200)
        ok, gap = validate_pseudo(G0, xi, 1e-11)
        assert ok and gap == 0.0 and structure_ok(G0, xi, 1e-11)
        # the stored points really form an orbit
        for k in (-200, -7, 0, 150):
            q = apply(G0, xi.point(k))
            assert q.base == xi.base(k + 1) and circle_dist(q.fiber, xi.fiber(k + 1)) < 1e-12


def test_validate_single_jump():
    xi = jump_xi(0.01)
    ok, gap = validate_pseudo(G0, xi, 0.0101)
    assert ok and abs(gap - 0.01) < 1e-12
    assert not validate_pseudo(G0, xi, 0.0099)[0]
    assert xi.jumps == [1]
    with pytest.raises(InvalidInput):
        validate_pseudo(G0, xi, 0.0)


def test_expansivity():
    assert expansivity_witness(BiSeq.periodic("01"), BiSeq.periodic("01")) is None
    assert expansivity_check(pairs=1000)
    # distance at most 1/2 means agreement at positions -1 and 0
    rng = np.random.default_rng(3)
    for _ in range(500):
        s1, s2 = random_biseq(rng), random_biseq(rng)
        assert (metric(s1, s2) <= 0.5) == (s1[-1] == s2[-1] and s1[0] == s2[0])


def test_lemma3_examples():
    q = BiSeq.make("0", "1101", "1", 0)
    assert lemma3_check(q, q, 1 / 16)
    p = BiSeq.make("0", "1", "0", 0)
    # same orbit set, but the starting points are far apart: the premise fails
    assert metric(p, shift(p, 1)) == 1.0
    assert lemma3_check(p, shift(p, 1), 1 / 16)
    with pytest.raises(InvalidInput):
        lemma3_check(q, BiSeq.make("01", "", "1", 0), 1 / 16)


def test_lemma3_random_heteroclinics():
    rng = np.random.default_rng(4)
    cases = (((PERIOD_WORDS[0], PERIOD_WORDS[1]), 2.0 ** -20),
             (("0" * 128 + "1", "1"), 2.152394441202919e-42))
    for (w1, w2), eps in cases:
        for _ in range(200):
            c1 = "".join(map(str, rng.integers(0, 2, int(rng.integers(0, 8)))))
            c2 = "".join(map(str, rng.integers(0, 2, int(rng.integers(0, 8)))))
            q1 = BiSeq.make(w1, c1, w2, int(rng.integers(-3, 3)))
            q2 = BiSeq.make(w1, c2, w2, int(rng.integers(-3, 3)))
            assert lemma3_check(q1, q2, eps)
            assert lemma3_check(q1, shift(q1, int(rng.integers(-300, 300))), eps)


def test_lemma3_needs_small_eps():
    # radius-4 windows cannot see where the transit sits: two shifts of one
    # heteroclinic are orbitally close and start close, yet differ at 0
    q1 = BiSeq.make("111110", "", "1111101", -14)
    q2 = shift(q1, -7)
    assert metric(q1, q2) < 1 / 8
    assert not lemma3_check(q1, q2, 1 / 8)
    assert lemma3_check(q1, q2, 2.0 ** -20)


def shift_clouds(q, lo, hi, split):
    X = cloud_of_orbit(None, ExactOrbit(q, "iterate"), lo, hi, with_fiber=False)
    idx = np.arange(len(X))
    return X.take(idx[split - lo:]), X.take(idx[:split - lo])


def test_select_epsilon_shift_model():
    # orbit of 0^inf . 1^inf converging to the fixed point 1^inf
    q = BiSeq.make("0", "", "1", 0)
    exact, far = shift_clouds(q, -40, 60, 1)
    ch = select_epsilon_lemma1(Model(None), "1", None, exact, far, eps0=3 / 16)
    assert 0 < ch.eps < ch.eps3 < ch.eps2 / 3 and ch.eps2 < ch.eps1 < 3 / 16
    # certified conditions re-checked on the data
    Dn = [metric(shift(q, k), BiSeq.periodic("1")) for k in range(1, 61)]
    assert all(d < ch.eps1 for d in Dn[ch.n - 1:])
    assert any(d < ch.eps2 / 3 for d in Dn[ch.n - 1:ch.m])
    assert ch.certificate["absorption"]["ok"]
    assert all(metric(shift(q, k), BiSeq.periodic("1")) >= 3 / 16 for k in range(-40, 1))


def test_select_epsilon_boundary_touch():
    # fiber model: exact points over 1^inf with fibers at 1/2 + offsets
    one = BiSeq.periodic("1")

    def cloud(offs):
        win = np.stack([windows(one, 0, 0, 320)[0]] * len(offs))
        return Cloud(win, np.array([0.5 + o for o in offs]))

    empty = Cloud(np.zeros((0, 640), dtype=np.int8), np.zeros(0))
    grid = [3 / 32] + radius_grid(3 / 32)
    ok = select_epsilon_lemma1(Model(G0), "1", 0.5, cloud([0.375, 0.09, 1 / 64, 0.0]), empty,
                               eps0=0.24, grid=grid)
    assert ok.eps1 == 3 / 32
    with pytest.raises(DegenerateInput):
        select_epsilon_lemma1(Model(G0), "1", 0.5, cloud([0.375, 3 / 32, 1 / 64, 0.0]), empty,
                              eps0=0.24, grid=[3 / 32])


def test_self_shadowing():
    om = BiSeq.make("0", "", "1", 0)
    xi = orbit_xi(om, 5 / 16, -300, 300)
    v = osp_search(G0, xi, 1 / 8, SMALL)
    assert v.shadowed and not v.inconclusive
    assert v.witness[0] == "enum" and v.witness_gap < 1 / 8
    # the extra window points past index 300 keep converging to 1/2, so the
    # gap is the distance of the last point of xi to 1/2
    tail = circle_dist(xi.fiber(300), 0.5)
    assert v.seeded_gaps[0] <= tail + 1e-12
    assert v.consistent_on_reference_orbit


def test_search_order_invariant():
    for xi, eps in ((orbit_xi(BiSeq.make("0", "", "1", 0), 5 / 16, -300, 300), 1 / 8),
                    (jump_xi(0.05), 1 / 32)):
        ref = osp_search(G0, xi, eps, SMALL)
        for seed in (1, 2):
            v = osp_search(G0, xi, eps, SMALL, order_seed=seed)
            assert (v.shadowed, v.witness, v.min_margin, v.counts) == (
                ref.shadowed, ref.witness, ref.min_margin, ref.counts)


def test_search_epsilon_monotone():
    xi = jump_xi(0.05)
    verdicts = [osp_search(G0, xi, eps, SMALL).shadowed for eps in (0.25, 0.125, 1 / 16, 1 / 32, 1 / 64)]
    assert verdicts[0]
    # once false, stays false as eps shrinks
    first_false = verdicts.index(False) if False in verdicts else len(verdicts)
    assert not any(verdicts[first_false:])


def test_a1_bookkeeping(a1):
    setup, auto, xi = a1
    d = auto["eps"] / 2
    k1, k2 = xi.meta["k1"], xi.meta["k2"]
    assert xi.segment_of(k1).tag == "x" and xi.segment_of(k1 + 1).tag == "y"
    y_seg = xi.segment_of(k1 + 1)
    assert k1 + 1 + y_seg.off == k2
    assert xi.base(k1) == setup.x.base(k1)
    assert xi.base(k1 + 1) == setup.y.base(k2)
    ok, gap = validate_pseudo(G0, xi, d)
    assert ok and gap < d
    # both ends of the jump are within d/2 of r2
    r2 = ProductPoint(BiSeq.periodic("1"), setup.r2_fiber)
    assert product_dist(ProductPoint(setup.x.base(k1 + 1), setup.x.fibers(G0, k1 + 1, k1 + 1)[0]), r2) < d / 2
    assert product_dist(xi.point(k1 + 1), r2) < d / 2


def test_a1_epsilon(a1):
    _, auto, _ = a1
    assert auto["eps"] <= auto["fiber_r1"].eps and auto["eps"] < auto["eps0"]
    for key in ("fiber_r1", "shift_r1", "shift_r2"):
        ch = auto[key]
        assert 0 < ch.eps < ch.eps3 < ch.eps2 / 3 and ch.eps2 < ch.eps1


def test_a2_bookkeeping():
    setup = a2_setup(G0)
    params = algo_params(G0, 7)
    d = 3 / 512
    s = build_point_s(G0, setup.p[2], d / 3, params, PERIOD_WORDS[:2])
    het = build_heteroclinic(G0, s, setup.p[3], params, PERIOD_WORDS[:2])
    xi = build_xi_a2(setup, s, het, d)
    m = xi.meta
    k1, k2, k3, k4 = m["k1"], m["k2"], m["k3"], m["k4"]
    x, y, z = xi.segments
    assert (x.tag, y.tag, z.tag) == ("x", "y", "z")
    assert x.hi == k1 and y.lo == k1 + 1 and y.lo + y.off == k2
    b = k1 + 1 + k3 - k2
    assert y.hi == b and b + y.off == k3
    assert z.lo == b + 1 and z.lo + z.off == k4
    ok, gap = validate_pseudo(G0, xi, d)
    assert ok and gap < d


def test_a1_at_coarse_d():
    setup = a1_setup(G0)
    xi = build_xi_a1(setup, 1 / 64)
    ok, gap = validate_pseudo(G0, xi, 1 / 64)
    assert ok and gap <= 1 / 64
    k1 = xi.meta["k1"]
    assert xi.segment_of(k1 + 1).lo + xi.segment_of(k1 + 1).off == xi.meta["k2"]


def test_search_jobs_match_serial():
    xi = jump_xi(0.05)
    ref = osp_search(G0, xi, 1 / 32, SMALL)
    v = osp_search(G0, xi, 1 / 32, SMALL, jobs=2)
    assert (v.shadowed, v.witness, v.min_margin, v.counts) == (
        ref.shadowed, ref.witness, ref.min_margin, ref.counts)
    assert v.counts["fiber_stage_bases"] > 0
