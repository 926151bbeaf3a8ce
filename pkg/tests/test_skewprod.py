import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osplab.circle import circle_dist, north_south, rotation
from osplab.skewprod import (DEFAULT_K, InvalidRegime, MildSkew, NotPeriodic, ProductPoint, StepSkew,
                             agreeing_composition_gaps, apply, apply_inv, check_parameter_regime,
                             classify_periodic, compose, compose_lift, default_skew,
                             find_periodic_points, gamma_bound, holder_and_lipschitz_audit,
                             orbit_fibers, return_fixed_points, v_set_hull)
from osplab.symbolic import BiSeq, random_biseq, shift

G0 = default_skew()
GM = default_skew(delta=1e-7)

words = st.text(alphabet="01", min_size=1, max_size=5)
seqs = st.builds(BiSeq.make, words, st.text(alphabet="01", max_size=10), words, st.integers(-8, 8))


def manual_compose(G, om, m, x):
    # step-by-step unrolling with the single fiber maps
    if m >= 0:
        for k in range(m):
            x = G.map_at(shift(om, k)).lift(x)
    else:
        for k in range(1, -m + 1):
            x = G.map_at(shift(om, -k)).lift_inv(x)
    return x


def fitted_K(G, ms=range(1, 13), pairs=500):
    """Smallest K with max gap <= K delta^beta over the sampled pairs."""
    beta = 1 - math.log(G.lipschitz_bound()) / (G.alpha * math.log(2))
    worst = max(agreeing_composition_gaps(G, m, pairs=pairs).max() for m in ms)
    return worst / G.delta ** beta


def test_apply_step_examples():
    p = ProductPoint(BiSeq.periodic("0"), 0.25)
    q = apply(G0, p)
    assert q.fiber == pytest.approx(0.25 + 1 / 128, abs=1e-15)
    one = BiSeq.periodic("1")
    assert apply(G0, ProductPoint(one, 0.0)) == ProductPoint(shift(one, 1), 0.0)


@pytest.mark.parametrize("G", [G0, GM], ids=["step", "mild"])
def test_apply_inverse(G):
    rng = np.random.default_rng(0)
    for _ in range(500):
        p = ProductPoint(random_biseq(rng), float(rng.random()))
        q = apply_inv(G, apply(G, p))
        assert q.base == p.base and circle_dist(q.fiber, p.fiber) < 1e-12
        q = apply(G, apply_inv(G, p))
        assert q.base == p.base and circle_dist(q.fiber, p.fiber) < 1e-12


def test_compose_examples():
    om = BiSeq.make("0", "01", "0", 0)
    x = np.linspace(0, 1, 100, endpoint=False)
    assert np.array_equal(compose(G0, om, 0, x), x)
    g0, g1 = rotation(1 / 128), north_south(1.02)
    assert np.max(circle_dist(compose(G0, om, 2, x), g1(g0(x)))) < 1e-14


@settings(max_examples=200, deadline=None)
@given(seqs, st.integers(-8, 8), st.integers(-8, 8), st.floats(0, 1, exclude_max=True))
def test_cocycle(om, m, n, x):
    for G in (G0, GM):
        lhs = compose_lift(G, om, m + n, x)
        rhs = compose_lift(G, shift(om, m), n, compose_lift(G, om, m, x))
        assert abs(lhs - rhs) < 1e-10


@settings(max_examples=100, deadline=None)
@given(seqs, st.integers(-10, 10), st.floats(0, 1, exclude_max=True))
def test_compose_matches_unrolling(om, m, x):
    for G in (G0, GM):
        assert abs(compose_lift(G, om, m, x) - manual_compose(G, om, m, x)) < 1e-11


def test_orbit_fibers_consistent():
    rng = np.random.default_rng(5)
    om = random_biseq(rng)
    f = orbit_fibers(G0, om, 0.3, -20, 20)
    for k in (-20, -3, 0, 7, 19):
        assert circle_dist(f[k + 20], compose(G0, om, k, 0.3)) < 1e-12


def test_gamma_bound():
    assert gamma_bound(0.0, 20, 1.02, 1.0) == 0.0
    assert gamma_bound(1e-3, 20, 1.0, 1.0) == pytest.approx(0.02)
    beta = 1 - math.log(1.02) / math.log(2)
    assert gamma_bound(1e-7, 20, 1.02, 1.0) == pytest.approx(20 * 1e-7 ** beta)
    with pytest.raises(InvalidRegime):
        gamma_bound(1e-3, 20, 2.5, 1.0)


def test_audit_step_product():
    L, C, ok = holder_and_lipschitz_audit(G0, samples=1000)
    assert C == 0.0 and ok
    assert L == pytest.approx(1.02, abs=1e-9)


def test_audit_mild_product():
    L, C, ok = holder_and_lipschitz_audit(GM, samples=1000)
    assert ok and 1.02 <= L < 1.0201 and 0 < C < 1e-6


def test_audit_adversarial_family():
    G = MildSkew(rotation(1 / 128), north_south(1.5), delta=1e-3, alpha=0.01)
    L, C, ok = holder_and_lipschitz_audit(G, samples=1000)
    assert L >= 2 ** 0.01 and not ok


def test_frozen_K_covers_composition_gaps():
    # the frozen constant keeps the observed error well below gamma
    K = fitted_K(GM, ms=(1, 4, 8, 12), pairs=200)
    assert 0 < K < DEFAULT_K
    assert GM.K == DEFAULT_K


def test_step_composition_gap_is_zero():
    assert np.all(agreeing_composition_gaps(G0, 3, pairs=50) == 0.0)


def test_v_set_hull_step():
    A = v_set_hull(G0, "0110", 0.2, +1)
    assert A.length == 0.0
    rng = np.random.default_rng(1)
    for _ in range(20):
        om = BiSeq.make("0", "".join(map(str, rng.integers(0, 2, 4))) + "0110"
                        + "".join(map(str, rng.integers(0, 2, 4))), "1", -6)
        assert circle_dist(compose(G0, om, 2, 0.2), A.start) < 1e-14


def test_v_set_hull_mild_contains_samples():
    rng = np.random.default_rng(2)
    word = "011010"
    for direction in (+1, -1):
        A = v_set_hull(GM, word, 0.4, direction)
        assert A.length == pytest.approx(2 * GM.gamma)
        for _ in range(100):
            pre = "".join(map(str, rng.integers(0, 2, 20)))
            post = "".join(map(str, rng.integers(0, 2, 20)))
            om = BiSeq.make(str(rng.integers(0, 2)), pre + word + post, str(rng.integers(0, 2)), -23)
            assert A.contains(compose(GM, om, 3 * direction, 0.4), tol=0.0)


def test_classify_periodic_examples():
    one = BiSeq.periodic("1")
    kind, d = classify_periodic(G0, ProductPoint(one, 0.0), 1)
    assert kind == "type12" and d == pytest.approx(1.02, abs=1e-9)
    kind, d = classify_periodic(G0, ProductPoint(one, 0.5), 1)
    assert kind == "type21" and d == pytest.approx(1 / 1.02, abs=1e-9)
    with pytest.raises(NotPeriodic):
        classify_periodic(G0, ProductPoint(BiSeq.periodic("0"), 0.3), 1)
    with pytest.raises(NotPeriodic):
        classify_periodic(G0, ProductPoint(BiSeq.make("0", "1", "0", 0), 0.0), 1)


def test_periodic_points_word_one():
    assert return_fixed_points(G0, "1") == [0.0, 0.5]
    assert return_fixed_points(G0, "0") == []


def test_find_periodic_points_postconditions():
    pts = find_periodic_points(G0, 6)
    assert [(p.word, p.fiber, p.kind) for p in pts if p.word == "1"] == [
        ("1", 0.0, "type12"), ("1", 0.5, "type21")]
    assert not any(p.word == "0" for p in pts)
    for p in pts:
        om = BiSeq.periodic(p.word)
        assert circle_dist(compose(G0, om, p.period, p.fiber), p.fiber) < 1e-9 or p.kind == "type12"
        assert circle_dist(compose(G0, om, -p.period, p.fiber), p.fiber) < 1e-9
    assert pts == find_periodic_points(G0, 6)


def test_classification_invariant_along_orbit():
    for p in find_periodic_points(G0, 5):
        q = p.point
        for j in range(p.period):
            assert classify_periodic(G0, q, p.period)[0] == p.kind
            q = apply(G0, q)


def test_regime_defaults():
    rep = check_parameter_regime(T=5)
    assert rep["passed"] and rep["S"] == 128 and rep["gamma"] == 0.0
    rep = check_parameter_regime(delta=1e-7)
    assert rep["passed"]


def test_regime_flags_large_delta():
    rep = check_parameter_regime(delta=1e-3, T=5)
    assert not rep["passed"]
    item = next(i for i in rep["items"] if i.name.startswith("1 < (a-delta)"))
    assert not item.passed


def test_step_constructor():
    G = StepSkew(rotation(1 / 128), north_south(1.02))
    assert G.is_step and G.gamma == 0.0
