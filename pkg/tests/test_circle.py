import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osplab.circle import (Arc, Composition, DegenerateArc, Identity, InvalidParameter, arc_image,
                           c1_dist_to_identity, circle_dist, hausdorff_arc_dist, north_south,
                           point_arc_dist, rotation, signed_delta, wrap)

GRID = np.arange(4096) / 4096
MAPS = [Identity(), rotation(1 / 128), north_south(1.02), north_south(1.3),
        Composition([rotation(1 / 128), north_south(1.02)])]


def sampled_hausdorff(A, B, n=10_000):
    a, b = A.sample(n), B.sample(n)
    D = circle_dist(a[:, None], b[None, :])
    return max(D.min(axis=1).max(), D.min(axis=0).max())


def test_wrap_and_dist():
    assert wrap(-0.25) == 0.75
    assert wrap(-1e-20) == 0.0
    assert circle_dist(0.95, 0.05) == pytest.approx(0.1)
    assert signed_delta(0.05, 0.95) == pytest.approx(0.1)
    assert signed_delta(0.5, 0.0) == -0.5


def test_rotation_examples():
    assert rotation(1 / 128)(0.5) == 0.5078125
    with pytest.raises(InvalidParameter):
        rotation(0.02)
    with pytest.raises(InvalidParameter):
        rotation(0.0)


def test_north_south_examples():
    g = north_south(1.02)
    assert g(1 / 16) == pytest.approx(0.06375, abs=1e-15)
    assert g(0.0) == 0.0 and g(0.5) == 0.5
    assert g.deriv(0.0) == pytest.approx(1.02, abs=1e-12)
    assert g.deriv(0.5) == pytest.approx(1 / 1.02, abs=1e-12)
    with pytest.raises(InvalidParameter):
        north_south(1.0)


def test_north_south_dynamics():
    g = north_south(1.02)
    x = y = 0.01
    for _ in range(5000):
        x = g(x)
        y = g.inverse(y)
    assert circle_dist(x, 0.5) < 1e-9
    assert circle_dist(y, 0.0) < 1e-9


def test_north_south_two_fixed_points():
    for a in (1.02, 1.1, 1.5):
        g = north_south(a)
        fine = np.arange(1 << 16) / (1 << 16)
        assert np.all(g.deriv(fine) > 0)
        disp = g.lift(fine) - fine
        # sign changes of the displacement (counting exact zeros once)
        s = np.sign(disp)
        zeros = set(np.flatnonzero(s == 0).tolist())
        changes = set(np.flatnonzero(s[:-1] * s[1:] < 0).tolist())
        assert zeros == {0, 1 << 15}
        assert not changes


def test_interpolation_smooth():
    for a in (1.02, 1.3):
        g = north_south(a)
        for b in (0.125, 0.375, 0.625, 0.875):
            left, right = g.deriv(b - 1e-13), g.deriv(b + 1e-13)
            assert abs(left - right) < 1e-9
            h = 1e-6
            assert (g.lift(b + h) - g.lift(b - h)) / (2 * h) == pytest.approx(g.deriv(b), abs=1e-6)


@pytest.mark.parametrize("m", MAPS, ids=repr)
def test_bijection_on_grid(m):
    assert np.max(circle_dist(m(m.inverse(GRID)), GRID)) < 1e-12
    assert np.max(circle_dist(m.inverse(m(GRID)), GRID)) < 1e-12


@pytest.mark.parametrize("m", MAPS, ids=repr)
def test_derivative_finite_difference(m):
    h = 1e-6
    x = GRID[::16]
    fd = (m.lift(x + h) - m.lift(x - h)) / (2 * h)
    assert np.max(np.abs(fd - m.deriv(x))) < 1e-6


def test_iterate_with_deriv_chain_rule():
    g = Composition([rotation(1 / 128), north_south(1.02)])
    x = GRID[::64]
    for n in (7, -7):
        y, d = g.iterate_with_deriv(x, n)
        assert np.allclose(y, g.iterate(x, n), atol=1e-12)
        h = 1e-6
        fd = (g.iterate(x + h, n) - g.iterate(x - h, n)) / (2 * h)
        assert np.max(np.abs(fd - d)) < 1e-6


def test_c1_dist():
    assert c1_dist_to_identity(rotation(1 / 128)) == pytest.approx(1 / 128, abs=1e-15)
    assert c1_dist_to_identity(Identity()) == 0.0
    v = c1_dist_to_identity(north_south(1.02))
    assert 0 < v < 0.03
    with pytest.raises(InvalidParameter):
        c1_dist_to_identity(Identity(), grid_size=100)


def test_arc_image_examples():
    A = Arc.centered(0.0, 1 / 16)
    B = arc_image(north_south(1.02), A)
    assert B.start == pytest.approx(1 - 1.02 / 16, abs=1e-15)
    assert B.length == pytest.approx(2 * 1.02 / 16, abs=1e-15)
    C = arc_image(rotation(1 / 128), Arc(0.3, 0.2))
    assert C.start == pytest.approx(0.3 + 1 / 128) and C.length == pytest.approx(0.2)


def test_arc_image_endpoint_oracle():
    rng = np.random.default_rng(3)
    pool = [rotation(1 / 128), north_south(1.02), north_south(1.2), rotation(1 / 200)]
    for _ in range(500):
        m = Composition([pool[i] for i in rng.integers(0, len(pool), int(rng.integers(1, 5)))])
        A = Arc(float(rng.random()), float(rng.random() * 0.9))
        B = arc_image(m, A)
        assert circle_dist(B.start, m(A.start)) < 1e-12
        assert circle_dist(B.end, m(A.end)) < 1e-12
        assert 0 < B.length < 1 or A.length == 0


def test_arc_errors():
    with pytest.raises(DegenerateArc):
        Arc(0.0, 1.0)
    with pytest.raises(DegenerateArc):
        Arc(0.0, -0.1)


def test_arc_contains():
    A = Arc(0.9, 0.2)
    assert A.contains(0.95) and A.contains(0.05) and not A.contains(0.5)
    assert A.contains_arc(Arc(0.95, 0.1)) and not A.contains_arc(Arc(0.95, 0.2))
    assert Arc(0.95, 0.1).margin_in(A) == pytest.approx(0.05)
    assert Arc(0.95, 0.2).margin_in(A) < 0
    S = A.shrink(0.05)
    assert S.start == pytest.approx(0.95) and S.length == pytest.approx(0.1)
    assert A.shrink(0.2) is None


def test_hausdorff_examples():
    A, B = Arc(0.0, 0.1), Arc(0.05, 0.1)
    assert hausdorff_arc_dist(A, A) == 0.0
    assert hausdorff_arc_dist(A, B) == pytest.approx(0.05, abs=1e-12)
    assert abs(hausdorff_arc_dist(A, B) - sampled_hausdorff(A, B, 2000)) < 1e-3


arcs = st.builds(Arc, st.floats(0, 1, exclude_max=True), st.floats(0, 0.95))


@settings(max_examples=500, deadline=None)
@given(arcs, arcs)
def test_hausdorff_symmetric(A, B):
    assert hausdorff_arc_dist(A, B) == hausdorff_arc_dist(B, A)


@settings(max_examples=100, deadline=None)
@given(arcs, arcs)
def test_hausdorff_matches_sampling(A, B):
    assert abs(hausdorff_arc_dist(A, B) - sampled_hausdorff(A, B, 1500)) < 1e-3


@settings(max_examples=300, deadline=None)
@given(arcs, st.floats(0, 1, exclude_max=True))
def test_point_arc_dist(A, x):
    d = point_arc_dist(x, A)
    dense = np.min(circle_dist(x, A.sample(20001)))
    assert abs(d - dense) < 1e-4
    assert (d == 0) == bool(A.contains(x, tol=0.0)) or d < 1e-12
