"""Pseudotrajectories, orbital closeness and a finite search for orbits that
orbitally shadow a given pseudotrajectory.

Points of the product are compared through two pieces of data: a window of
base symbols around position 0 and the fiber value. Two bases are closer
than ``eps`` iff their symbols agree on ``[-r, r-1]`` for
``r = base_radius(eps)``, so closeness tests reduce to grouping by packed
windows and comparing fibers inside each group.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .circle import circle_dist, wrap
from .skewprod import ProductPoint, SkewProduct, fiber_step, return_fixed_points
from .symbolic import BiSeq, InvalidInput, metric, shift

R_BASE = 0.5        # expansivity constant of the shift, see expansivity_check
WINDOW_MARGIN = 200


def base_radius(eps: float) -> int:
    """Smallest r >= 0 with 2^-r < eps: base distance < eps iff the
    symbols agree on positions -r .. r-1."""
    if eps <= 0:
        raise InvalidInput("eps must be positive")
    r = 0
    while 2.0 ** -r >= eps:
        r += 1
    return r


def windows(omega: BiSeq, lo: int, hi: int, r: int) -> np.ndarray:
    """Row i holds the symbols of ``shift(omega, lo + i)`` at -r .. r-1,
    for ``i = 0 .. hi - lo`` (inclusive range)."""
    n = hi - lo + 1
    if r == 0:
        return np.zeros((n, 0), dtype=np.int8)
    strip = omega.symbols(lo - r, hi + r)
    return sliding_window_view(strip, 2 * r)[:n]


def pack(win: np.ndarray) -> np.ndarray:
    """Hashable 1-d view of window rows."""
    if win.shape[1] == 0:
        return np.zeros(win.shape[0], dtype=np.int64)
    packed = np.ascontiguousarray(np.packbits(win.astype(np.uint8), axis=1))
    return packed.view(np.dtype((np.void, packed.shape[1]))).ravel()


def group_ids(*keys):
    """Common integer labels for several arrays of packed keys."""
    allk = np.concatenate(keys)
    _, inv = np.unique(allk, return_inverse=True)
    out, i = [], 0
    for k in keys:
        out.append(inv[i:i + len(k)].ravel())
        i += len(k)
    return out


# -- exact orbits --------------------------------------------------------

def periodic_orbit_fibers(G: SkewProduct, word: str, fiber: float) -> np.ndarray:
    """Fibers of the periodic orbit over ``periodic(word, j)``, j = 0..t-1,
    given the fixed fiber at phase 0."""
    from .skewprod import orbit_fibers
    t = len(word)
    return orbit_fibers(G, BiSeq.periodic(word), fiber, 0, t - 1)


def fixed_fiber(G: SkewProduct, word: str, kind: str) -> float:
    """The fixed fiber of the return map over ``periodic(word)`` of the
    requested type (the first one if several)."""
    from .skewprod import classify_periodic
    for r in return_fixed_points(G, word):
        k, _ = classify_periodic(G, ProductPoint(BiSeq.periodic(word), r), len(word))
        if k == kind:
            return float(r)
    raise InvalidInput(f"no {kind} fixed fiber over {word!r}")


@dataclass(frozen=True)
class ExactOrbit:
    """An orbit of G given through a numerically stable recipe.

    mode ``iterate``: iterate both ways from ``fiber`` at ``anchor``.
    mode ``push``: the left tail of ``omega`` carries a periodic orbit with
    fibers ``tail`` (per phase of ``omega.left``); fibers are pushed forward
    from far in the past. Stable when that orbit attracts in the fiber.
    mode ``pull``: same with the right tail, pulled back from far ahead.
    """
    omega: BiSeq
    mode: str
    anchor: int = 0
    fiber: float = 0.0
    tail: tuple = ()

    def base(self, k: int) -> BiSeq:
        return shift(self.omega, k)

    def fibers(self, G: SkewProduct, lo: int, hi: int) -> np.ndarray:
        """Fibers at orbit indices ``lo .. hi`` (inclusive)."""
        om = self.omega
        if self.mode == "iterate":
            a = self.anchor
            lo2, hi2 = min(lo, a), max(hi, a)
            out = _walk(G, om, a, self.fiber, lo2, hi2)
            return out[lo - lo2: hi - lo2 + 1]
        t = len(self.tail)
        if self.mode == "push":
            start = min(lo, om.offset) - 4 * t
            f0 = self.tail[(start - om.offset) % t]
            out = _walk(G, om, start, f0, start, hi)
            return out[lo - start:]
        if self.mode == "pull":
            stop = max(hi, om.end) + 4 * t
            f0 = self.tail[(stop - om.end) % t]
            out = _walk(G, om, stop, f0, lo, stop)
            return out[: hi - lo + 1]
        raise InvalidInput(f"unknown orbit mode {self.mode!r}")


def _walk(G: SkewProduct, omega: BiSeq, a: int, x, lo: int, hi: int) -> np.ndarray:
    """Fibers at lo..hi of the orbit through ``x`` at index ``a`` (lo <= a <= hi).
    ``x`` may be an array; the result then has one column per entry.
    Values are reduced mod 1 after every step so long walks keep full
    precision."""
    x = np.asarray(x, dtype=float)
    flat = x.reshape(-1)
    scalar = flat.size == 1
    n = hi - lo + 1
    out = np.empty((n, flat.size))
    sym, coef = G.steps(omega, lo, hi + 1)
    keys = list(zip(sym.tolist(), coef.tolist()))
    maps = {k: G.fiber_map(*k) for k in set(keys)}
    out[a - lo] = flat
    cur = float(flat[0]) if scalar else flat
    for k in range(a, hi):
        cur = maps[keys[k - lo]].lift(cur) % 1.0
        out[k + 1 - lo] = cur
    cur = float(flat[0]) if scalar else flat
    for k in range(a - 1, lo - 1, -1):
        cur = maps[keys[k - lo]].lift_inv(cur) % 1.0
        out[k - lo] = cur
    out = wrap(out)
    return out.reshape((n,) + x.shape)


def push_orbit(G: SkewProduct, omega: BiSeq, kind: str = "type21") -> ExactOrbit:
    w = omega.left
    phase0 = fixed_fiber(G, w, kind)
    return ExactOrbit(omega, "push", tail=tuple(periodic_orbit_fibers(G, w, phase0)))


def pull_orbit(G: SkewProduct, omega: BiSeq, kind: str = "type12") -> ExactOrbit:
    w = omega.right
    phase0 = fixed_fiber(G, w, kind)
    return ExactOrbit(omega, "pull", tail=tuple(periodic_orbit_fibers(G, w, phase0)))


# -- pseudotrajectories --------------------------------------------------

@dataclass(frozen=True)
class Segment:
    """Indices ``lo .. hi`` of a pseudotrajectory copied from an exact
    orbit: point k is the orbit point with index ``k + off``."""
    tag: str
    orbit: ExactOrbit
    lo: int
    hi: int
    off: int


@dataclass
class Pseudotrajectory:
    segments: list
    fibers: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def k_min(self) -> int:
        return self.segments[0].lo

    @property
    def k_max(self) -> int:
        return self.segments[-1].hi

    def __len__(self):
        return self.k_max - self.k_min + 1

    @property
    def jumps(self) -> list:
        """Indices k where the point is not declared to be G of its predecessor."""
        return [s.lo for s in self.segments[1:]]

    def segment_of(self, k: int) -> Segment:
        for s in self.segments:
            if s.lo <= k <= s.hi:
                return s
        raise IndexError(k)

    def fiber(self, k: int) -> float:
        return float(self.fibers[k - self.k_min])

    def base(self, k: int) -> BiSeq:
        s = self.segment_of(k)
        return s.orbit.base(k + s.off)

    def point(self, k: int) -> ProductPoint:
        return ProductPoint(self.base(k), self.fiber(k))

    def tags(self) -> list:
        return [s.tag for s in self.segments for _ in range(s.lo, s.hi + 1)]

    def windows(self, r: int) -> np.ndarray:
        return np.concatenate([windows(s.orbit.omega, s.lo + s.off, s.hi + s.off, r)
                               for s in self.segments])

    def records(self):
        """One record per index: k, base reference, fiber, tag, jump flag.
        Bases are referenced as ``<segment>@<shift>``; the segment bases
        are listed by :meth:`segment_table`."""
        jumps = set(self.jumps)
        for i, s in enumerate(self.segments):
            for k in range(s.lo, s.hi + 1):
                yield (k, f"{i}@{k + s.off}", repr(self.fiber(k)), s.tag, int(k in jumps))

    def segment_table(self):
        return [(i, s.tag, s.lo, s.hi, s.off, s.orbit.omega.encode())
                for i, s in enumerate(self.segments)]


def splice(G: SkewProduct, pieces, meta=None) -> Pseudotrajectory:
    """Pseudotrajectory from (tag, orbit, lo, hi, off) pieces covering
    consecutive index ranges."""
    segs = [Segment(*p) for p in pieces]
    for a, b in zip(segs, segs[1:]):
        if b.lo != a.hi + 1:
            raise InvalidInput("segments must cover consecutive indices")
    fib = np.concatenate([s.orbit.fibers(G, s.lo + s.off, s.hi + s.off) for s in segs])
    return Pseudotrajectory(segs, fib, dict(meta or {}))


def gaps(G: SkewProduct, xi: Pseudotrajectory) -> np.ndarray:
    """``dist(xi_{k+1}, G(xi_k))`` for k = k_min .. k_max - 1."""
    out = np.empty(len(xi) - 1)
    for s in xi.segments:
        n = s.hi - s.lo + 1
        sym, coef = G.steps(s.orbit.omega, s.lo + s.off, s.hi + s.off + 1)
        img = wrap(fiber_step(G, sym, coef, xi.fibers[s.lo - xi.k_min: s.hi - xi.k_min + 1]))
        i0 = s.lo - xi.k_min
        # inside a segment the base moves by an exact shift
        if n > 1:
            out[i0: i0 + n - 1] = circle_dist(img[:-1], xi.fibers[i0 + 1: i0 + n])
        if s.hi < xi.k_max:
            nxt = xi.segment_of(s.hi + 1)
            bdist = metric(shift(s.orbit.omega, s.hi + s.off + 1), nxt.orbit.base(s.hi + 1 + nxt.off))
            out[i0 + n - 1] = max(bdist, float(circle_dist(img[-1], xi.fiber(s.hi + 1))))
    return out


def validate_pseudo(G: SkewProduct, xi: Pseudotrajectory, d: float, tol: float = 1e-12):
    """(is a d-pseudotrajectory, max gap).

    Steps inside a segment are steps of an exact orbit; their floating
    residual only has to stay below the rounding tolerance ``tol``. The gap
    reported and compared with d is the largest one over the segment
    junctions (0 for a single segment), so d far below machine precision
    is meaningful for spliced orbits.
    """
    if len(xi) < 1:
        raise InvalidInput("empty pseudotrajectory")
    if d <= 0:
        raise InvalidInput("d must be positive")
    g = gaps(G, xi)
    at = np.array(sorted(k - 1 - xi.k_min for k in xi.jumps), dtype=int)
    inner = np.ones(g.size, bool)
    inner[at] = False
    if np.any(g[inner] >= tol):
        return False, float(g.max())
    mg = float(g[at].max()) if at.size else 0.0
    return mg < d, mg


def structure_ok(G: SkewProduct, xi: Pseudotrajectory, d: float, tol: float = 1e-12) -> bool:
    """Declared jumps are below d, every other step is exact up to tol."""
    g = gaps(G, xi)
    jumps = {k - 1 - xi.k_min for k in xi.jumps}
    return all((v < d) if i in jumps else (v < tol) for i, v in enumerate(g))


# -- orbital closeness ---------------------------------------------------

def _nearest(fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    """For each entry of ``fa`` (shape (n,)) the circle distance to the
    nearest entry of ``fb`` (shape (m,)); ``inf`` if ``fb`` is empty."""
    if fb.size == 0:
        return np.full(fa.shape, np.inf)
    s = np.sort(fb)
    i = np.searchsorted(s, fa)
    lo = s[(i - 1) % s.size]
    hi = s[i % s.size]
    return np.minimum(circle_dist(fa, lo), circle_dist(fa, hi))


def set_gap(gA, fA, gB, fB) -> np.ndarray:
    """Worst same-group nearest-fiber distance between two labelled point
    sets, in both directions. ``fB`` may carry one column per alternative
    set B; the result has one entry per column."""
    fB = fB.reshape(len(gB), -1)
    ncol = fB.shape[1]
    worst = np.zeros(ncol)
    oa, ob = np.argsort(gA, kind="stable"), np.argsort(gB, kind="stable")
    ga, gb = gA[oa], gB[ob]
    fa, fb = fA[oa], fB[ob]
    groups = np.union1d(ga, gb)
    a_lo, a_hi = np.searchsorted(ga, groups), np.searchsorted(ga, groups, side="right")
    b_lo, b_hi = np.searchsorted(gb, groups), np.searchsorted(gb, groups, side="right")
    for i in range(groups.size):
        xa = fa[a_lo[i]:a_hi[i]]
        xb = fb[b_lo[i]:b_hi[i]]
        if xa.size == 0 or xb.shape[0] == 0:
            return np.full(ncol, np.inf)
        w = np.maximum(_nearest(xb.ravel(), xa).reshape(xb.shape).max(axis=0), _nearest_cols(xa, xb))
        worst = np.maximum(worst, w)
    return worst


def _nearest_cols(fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    """``max_i min_j dist(fa[i], fb[j, c])`` for every column c."""
    m, ncol = fb.shape
    S = np.sort(fb, axis=0)
    lift = 2.0 * np.arange(ncol)
    flat = (S + lift).T.ravel()
    pos = np.searchsorted(flat, fa[None, :] + lift[:, None]) - (m * np.arange(ncol))[:, None]
    cols = np.arange(ncol)[:, None]
    lo = S[(pos - 1) % m, cols]
    hi = S[pos % m, cols]
    return np.minimum(circle_dist(fa[None, :], lo), circle_dist(fa[None, :], hi)).max(axis=1)


def point_keys(points, r: int) -> np.ndarray:
    return pack(np.stack([p.base.symbols(-r, r) for p in points]) if r
                else np.zeros((len(points), 0), dtype=np.int8))


def orbital_close(A, B, eps: float) -> bool:
    """Every point of A is within eps of a point of B and vice versa
    (product max metric, strict inequality)."""
    if not A or not B:
        raise InvalidInput("both point sets must be nonempty")
    return orbital_gap(A, B, eps) < eps


def orbital_gap(A, B, eps: float) -> float:
    """The largest nearest-point distance restricted to pairs whose bases
    are closer than eps (``inf`` if some point has no such partner). It is
    below eps iff the sets are eps-close."""
    r = base_radius(eps)
    gA, gB = group_ids(point_keys(A, r), point_keys(B, r))
    fA = np.array([p.fiber for p in A])
    fB = np.array([p.fiber for p in B])
    return float(set_gap(gA, fA, gB, fB)[0])


# -- expansivity and pointwise closeness ---------------------------------

def expansivity_witness(s1: BiSeq, s2: BiSeq, R: float = R_BASE):
    """A shift k with ``metric(shift(s1, k), shift(s2, k)) > R``; ``None``
    for equal sequences. For R = 1/2 such a k exists at any position where
    the sequences differ, and only there or one step later."""
    if s1 == s2:
        return None
    H = max(s1.horizon(), s2.horizon()) + 1
    a, b = s1.symbols(-H, H), s2.symbols(-H, H)
    diff = np.flatnonzero(a != b)
    for p in diff:
        for k in (int(p) - H, int(p) - H + 1):
            if metric(shift(s1, k), shift(s2, k)) > R:
                return k
    return None


def expansivity_check(pairs: int = 1000, R: float = R_BASE, seed: int = 0) -> bool:
    """Random distinct pairs all have a shift that separates them by more
    than R."""
    from .symbolic import random_biseq
    rng = np.random.default_rng(seed)
    found = 0
    while found < pairs:
        s1, s2 = random_biseq(rng), random_biseq(rng)
        if s1 == s2:
            continue
        if expansivity_witness(s1, s2, R) is None:
            return False
        found += 1
    return True


def orbit_bases(q: BiSeq, lo: int, hi: int):
    return [shift(q, k) for k in range(lo, hi + 1)]


def lemma3_check(q1: BiSeq, q2: BiSeq, eps: float, R: float = R_BASE, pad: int = 8) -> bool:
    """On the transit window of two heteroclinic base sequences with the
    same tails: if their orbits are eps-close as sets and they start
    eps-close, they stay R-close at every shift. Returns whether the
    implication holds (vacuously true when a premise fails)."""
    from .symbolic import cyclic_class
    if (cyclic_class(q1.left) != cyclic_class(q2.left)
            or cyclic_class(q1.right) != cyclic_class(q2.right)):
        raise InvalidInput("sequences must share left and right period classes")
    r = base_radius(eps)
    lo = min(q1.offset, q2.offset) - len(q1.left) - len(q2.left) - r - pad
    hi = max(q1.end, q2.end) + len(q1.right) + len(q2.right) + r + pad
    k1, k2 = pack(windows(q1, lo, hi, r)), pack(windows(q2, lo, hi, r))
    close = set(k1.tolist()) == set(k2.tolist()) and metric(q1, q2) < eps
    if not close:
        return True
    return all(metric(shift(q1, k), shift(q2, k)) <= R for k in range(lo, hi + 1))


# -- constructive choice of radii -----------------------------------------

class DegenerateInput(ValueError):
    pass


RCAP = 320      # symbol radius of the windows used to measure distances


def radius_grid(below: float, floor: float = 2.0 ** -300):
    """Radii 3 * 2^(-j-2) strictly below ``below``. The factor 3 keeps them
    off the dyadic values taken by the shift metric."""
    out, j = [], 0
    while True:
        r = 3 * 2.0 ** (-j - 2)
        if r < floor:
            return out
        if r < below:
            out.append(r)
        j += 1


@dataclass
class Cloud:
    """Points of the shift (``fib is None``) or of the product, stored as
    symbol windows of radius RCAP and fiber values."""
    win: np.ndarray
    fib: np.ndarray | None = None

    def __len__(self):
        return self.win.shape[0]

    def take(self, idx) -> "Cloud":
        return Cloud(self.win[idx], None if self.fib is None else self.fib[idx])

    @classmethod
    def concat(cls, clouds):
        fibs = [c.fib for c in clouds]
        return cls(np.concatenate([c.win for c in clouds]),
                   None if fibs[0] is None else np.concatenate(fibs))


_RADCOL = np.concatenate([np.arange(RCAP - 1, -1, -1), np.arange(RCAP)])


def base_dist_matrix(wa: np.ndarray, wb: np.ndarray) -> np.ndarray:
    """Pairwise shift-metric distances; agreement on the whole window
    counts as 0 (true distance below 2^-RCAP)."""
    out = np.empty((wa.shape[0], wb.shape[0]))
    step = max(1, 4_000_000 // max(1, wb.shape[0] * wa.shape[1]))
    for i in range(0, wa.shape[0], step):
        diff = wa[i:i + step, None, :] != wb[None, :, :]
        rad = np.where(diff, _RADCOL, RCAP).min(axis=-1)
        out[i:i + step] = np.where(rad == RCAP, 0.0, 2.0 ** -rad.astype(float))
    return out


def dist_matrix(A: Cloud, B: Cloud) -> np.ndarray:
    # base distances between distinct windows first, then expanded
    _, fa, ia = np.unique(pack(A.win), return_index=True, return_inverse=True)
    _, fb, ib = np.unique(pack(B.win), return_index=True, return_inverse=True)
    bd = base_dist_matrix(A.win[fa], B.win[fb])[ia.ravel()][:, ib.ravel()]
    if A.fib is None:
        return bd
    return np.maximum(bd, circle_dist(A.fib[:, None], B.fib[None, :]))


def dist_to_set(A: Cloud, B: Cloud) -> np.ndarray:
    out = np.empty(len(A))
    for i in range(0, len(A), 512):
        out[i:i + 512] = dist_matrix(A.take(slice(i, i + 512)), B).min(axis=1)
    return out


def cloud_of_orbit(G, orbit: ExactOrbit, lo: int, hi: int, with_fiber=True) -> Cloud:
    win = np.ascontiguousarray(windows(orbit.omega, lo, hi, RCAP))
    return Cloud(win, orbit.fibers(G, lo, hi) if with_fiber else None)


def periodic_cloud(G, word: str, fiber: float | None) -> Cloud:
    t = len(word)
    win = np.ascontiguousarray(windows(BiSeq.periodic(word), 0, t - 1, RCAP))
    return Cloud(win, None if fiber is None else periodic_orbit_fibers(G, word, fiber))


@dataclass
class Model:
    """Metric-space data used by the radius selection: the shift alone
    (``G is None``) or the skew product with the max metric."""
    G: SkewProduct | None = None

    @property
    def lip(self) -> float:
        """Lipschitz bound of the map and its inverse on balls of radius < 1/2."""
        return 2.0 if self.G is None else max(2.0, self.G.lipschitz_bound())

    @property
    def eta(self) -> float:
        """Additive slack from the base dependence of the fiber maps."""
        if self.G is None or self.G.is_step:
            return 0.0
        from .skewprod import bump
        smax = float(np.max(np.abs(bump(np.linspace(0, 1, 4097)))))
        return self.G.delta * smax * float(np.sum(self.G.kernel))

    def absorbs(self, word: str, fiber: float | None, eps1: float) -> dict:
        """Certificate that a semiorbit staying eps1-close to the periodic
        orbit lies in its stable set (the inverse statement is symmetric).

        Tracking: either the (2r-1)-windows of the orbit are distinct, or
        ``(lip + 1) eps1 + eta`` is below the separation of the orbit
        points; both force the semiorbit to follow the orbit point by point,
        so its base agrees with the periodic base on a half line. Fiber: the
        return map is
        uniformly contracting or uniformly expanding on the eps1-arc around
        the fixed fiber (checked on a 257-point grid).
        """
        r = base_radius(eps1)
        if r < 1:
            return {"ok": False, "reason": "radius must be below 1"}
        t = len(word)
        w = windows(BiSeq.periodic(word), 0, t - 1, r)[:, 1:]
        distinct = len(set(pack(np.ascontiguousarray(w)).tolist())) == t
        porb = periodic_cloud(self.G, word, fiber if self.G is not None else None)
        pp = dist_matrix(porb, porb)
        np.fill_diagonal(pp, np.inf)
        sep = float(pp.min()) if t > 1 else np.inf
        tracks = (self.lip + 1) * eps1 + self.eta < sep
        out = {"ok": distinct or tracks, "base_windows_distinct": distinct, "tracks": tracks}
        if self.G is not None and fiber is not None:
            from .skewprod import compose_with_deriv
            grid = fiber + np.linspace(-eps1, eps1, 257)
            _, d = compose_with_deriv(self.G, BiSeq.periodic(word), t, grid)
            d = np.atleast_1d(d)
            hyp = bool(np.all(d < 1) or np.all(d > 1))
            out.update(fiber_return_hyperbolic=hyp, dmin=float(d.min()), dmax=float(d.max()))
            out["ok"] = out["ok"] and hyp
        return out


@dataclass
class EpsilonChoice:
    eps: float
    eps1: float
    eps2: float
    eps3: float
    n: int
    m: int
    certificate: dict


def select_epsilon_lemma1(model: Model, p_word: str, p_fiber, exact: Cloud, far: Cloud,
                          eps0: float, R: float = R_BASE, grid=None) -> EpsilonChoice:
    """Radii eps1 > eps2 > eps3 > eps for a sequence that equals an exact
    orbit ``exact[0], exact[1], ...`` (indices 1, 2, ...) converging to the
    periodic orbit of ``(p_word, p_fiber)``, preceded by points ``far`` that
    keep away from that orbit. Every condition is checked on the finite
    data with sufficient metric inequalities (triangle inequality plus the
    Lipschitz bound of the model).

    For the mirror statement pass the backward orbit as ``exact``.
    """
    if not 0 < eps0 < R / 2:
        raise InvalidInput("need 0 < eps0 < R/2")
    porb = periodic_cloud(model.G, p_word, p_fiber if model.G is not None else None)
    if model.G is None:
        exact, far = Cloud(exact.win), Cloud(far.win)
    lip, eta = model.lip, model.eta
    De, Df = dist_to_set(exact, porb), dist_to_set(far, porb)
    if len(far) and Df.min() < eps0:
        raise DegenerateInput(f"a point before the exact part is within eps0 of the orbit ({Df.min():.3g})")
    pp = dist_matrix(porb, porb)
    np.fill_diagonal(pp, np.inf)
    sep_p = float(pp.min()) if len(porb) > 1 else np.inf
    radii = radius_grid(eps0) if grid is None else sorted((g for g in grid if g < eps0), reverse=True)
    near_side = np.concatenate([Df, De[:1]])
    allD = np.concatenate([Df, De])
    eps1 = cert1 = None
    for r1 in radii:
        if sep_p < 2 * r1 or De[-1] >= r1:
            continue
        if np.any(near_side < r1 + max(r1, lip * r1 + eta)):
            continue
        if np.any(np.abs(allD - r1) <= 1e-12 * r1):
            continue
        cert1 = model.absorbs(p_word, p_fiber, r1)
        if cert1["ok"]:
            eps1 = r1
            break
    if eps1 is None:
        raise DegenerateInput("no admissible eps1 on the radius grid")
    outside = De >= eps1
    # n (1-based): every exact point from n on is inside N(eps1, O(p))
    last_out = int(np.flatnonzero(outside).max()) if outside.any() else -1
    n = max(2, last_out + 2)
    eps2 = None
    for r2 in (g for g in radii if g < eps1):
        if np.any(De[:n] < 2 * r2):
            continue
        if np.any(De[:n][outside[:n]] < eps1 + r2):
            continue
        if np.any(De[~outside] + r2 > eps1):
            continue
        inside = np.flatnonzero(De[n - 1:] < r2 / 3)
        if inside.size == 0:
            continue
        eps2, m = r2, int(inside[0]) + n
        break
    if eps2 is None:
        raise DegenerateInput("no admissible eps2 on the radius grid")
    xm = exact.take(slice(0, m))
    pair = dist_matrix(xm, xm)
    np.fill_diagonal(pair, np.inf)
    sep_x = float(pair.min()) if m > 1 else np.inf
    eps3 = next((g for g in radii if g < eps2 / 3 and sep_x >= 2 * g), None)
    if eps3 is None:
        raise DegenerateInput("no admissible eps3 on the radius grid")
    t = m - 1
    grow = lip ** t
    slack = eta * (grow - 1) / (lip - 1) if lip != 1 else eta * t
    eps = next((g for g in radii if g < eps3 and grow * g + slack <= eps3), None)
    if eps is None:
        raise DegenerateInput("no admissible eps on the radius grid")
    cert = {"orbit_separation": sep_p, "absorption": cert1, "n": n, "m": m,
            "exact_separation": sep_x, "lipschitz": lip, "slack": eta,
            "far_min_dist": float(Df.min()) if len(far) else None}
    return EpsilonChoice(eps, eps1, eps2, eps3, n, m, cert)


# -- the construction with an intersection of invariant manifolds ----------

@dataclass
class A1Setup:
    """Periodic points r1 (attracting in the fiber) and r2 (repelling), a
    point x whose orbit goes from r1 to r2, and a point y on the fiber of
    r2 that leaves r2 along the fiber.

    For a step product with ``b = 1/S`` (S even): r1 lives over
    ``(0^S 1)`` with fiber 1/2, r2 = (1^inf, 0), and x = ``(0^S 1)^inf .
    0^(S/2) 1^inf`` with fiber 1/2 at position 0; the S/2 rotations carry
    1/2 onto 0 exactly.
    """
    G: SkewProduct
    r1_word: str
    r1_fiber: float
    r2_word: str
    r2_fiber: float
    x: ExactOrbit
    y: ExactOrbit
    certificates: dict


def a1_setup(G: SkewProduct, y_fiber: float = 0.25) -> A1Setup:
    if not G.is_step:
        raise InvalidInput("the explicit connection needs a step product")
    S = round(1 / G.b)
    if abs(S * G.b - 1) > 1e-15 or S % 2:
        raise InvalidInput("b must be 1/S with S even")
    w1 = "0" * S + "1"
    f1 = fixed_fiber(G, w1, "type21")
    f2 = fixed_fiber(G, "1", "type12")
    omega = BiSeq.make(w1, "0" * (S // 2), "1", 0)
    x = push_orbit(G, omega, "type21")
    y = ExactOrbit(BiSeq.periodic("1"), "iterate", 0, y_fiber)
    end = x.fibers(G, S, S + 64)
    certs = {
        "x_lands_on_r2": float(np.max(circle_dist(end, f2))),
        "x_start_fiber": float(x.fibers(G, 0, 0)[0]),
        "y_backward_to_r2": float(circle_dist(y.fibers(G, -2000, -2000)[0], f2)),
    }
    return A1Setup(G, w1, f1, "1", f2, x, y, certs)


def _split_last_near(D, eps0):
    near = np.flatnonzero(D < eps0)
    return int(near.max()) if near.size else None


def auto_epsilon_a1(setup: A1Setup, R: float = R_BASE, lo: int = -400, hi: int = 500) -> dict:
    """Radius choice for the first construction: eps0 from the separation of
    y from the orbit of x, the three radius selections (fiber product at r1,
    shift at pr r1 and pr r2), and the transit factor between them.

    Indices refer to the orbit of x; the returned ``eps`` is the largest
    grid radius below every derived bound.
    """
    G = setup.G
    S = len(setup.r1_word) - 1
    X = cloud_of_orbit(G, setup.x, lo, hi)
    Ysample = cloud_of_orbit(G, setup.y, -64, 64)
    Xall = cloud_of_orbit(G, setup.x, lo - 2 * S, hi + 2 * S)
    y0 = cloud_of_orbit(G, setup.y, 0, 0)
    dy = float(dist_to_set(y0, Xall)[0])
    eps0 = next((g for g in radius_grid(R / 2) if dy >= 2 * g), None)
    if eps0 is None:
        raise DegenerateInput("y is too close to the orbit of x")
    r1c = periodic_cloud(G, setup.r1_word, setup.r1_fiber)
    Dx = dist_to_set(X, r1c)
    j1 = _split_last_near(Dx, eps0)
    idx = np.arange(len(X))
    skew = select_epsilon_lemma1(
        Model(G), setup.r1_word, setup.r1_fiber,
        exact=X.take(idx[:j1 + 1][::-1]),
        far=Cloud.concat([X.take(idx[j1 + 1:]), Ysample]), eps0=eps0, R=R)
    Xb = Cloud(X.win)
    D1 = dist_to_set(Xb, Cloud(r1c.win))
    j1s = _split_last_near(D1, eps0)
    sh1 = select_epsilon_lemma1(Model(None), setup.r1_word, None,
                                exact=Xb.take(idx[:j1s + 1][::-1]), far=Xb.take(idx[j1s + 1:]),
                                eps0=eps0, R=R)
    D2 = dist_to_set(Xb, Cloud(periodic_cloud(G, setup.r2_word, None).win))
    j2 = int(np.flatnonzero(D2 < eps0).min())
    sh2 = select_epsilon_lemma1(Model(None), setup.r2_word, None,
                                exact=Xb.take(idx[j2:]), far=Xb.take(idx[:j2]), eps0=eps0, R=R)
    transit = math.ceil(abs(j2 - j1s) / 2)
    bound = min(skew.eps, min(sh1.eps, sh2.eps) * 2.0 ** -transit, eps0)
    eps = next(g for g in radius_grid(2 * bound) if g <= bound)
    return {
        "eps": eps, "eps0": eps0, "R": R, "dist_y_orbit_x": dy,
        "fiber_r1": skew, "shift_r1": sh1, "shift_r2": sh2,
        "split_fiber_r1": j1 + lo, "split_shift_r1": j1s + lo, "split_shift_r2": j2 + lo,
        "transit": transit,
        # the fiber over the local unstable set of r1 is the push-forward
        # from the past, a function of the base: the projection is injective
        "projection_injective": True,
    }


def build_xi_a1(setup: A1Setup, d: float, k_min: int | None = None, budget: int = 1_000_000,
                tail_tol: float = 1e-15) -> Pseudotrajectory:
    """x up to k1, then y from k2 on: ``xi_k = y_{k - k1 + k2 - 1}`` for
    ``k > k1``, with x_{k1+1} and y_{k2} within d/2 of r2."""
    from .wordsearch import ConstructionFailure
    G = setup.G
    if d <= 0:
        raise InvalidInput("d must be positive")
    r = base_radius(d / 2)
    k_min = -2 * len(setup.r1_word) if k_min is None else k_min
    r2 = BiSeq.periodic(setup.r2_word)
    k1 = None
    chunk = 512
    for start in range(0, budget, chunk):
        w = windows(setup.x.omega, start, start + chunk - 1, r)
        ok_base = np.all(w == windows(r2, 0, 0, r)[0], axis=1) if r else np.ones(chunk, bool)
        f = setup.x.fibers(G, start, start + chunk - 1)
        hit = np.flatnonzero(ok_base & (circle_dist(f, setup.r2_fiber) < d / 2))
        if hit.size:
            k1 = start + int(hit[0]) - 1
            break
    if k1 is None or k1 < k_min:
        raise ConstructionFailure("x did not enter N(d/2, O(r2)) within the budget")
    k2 = None
    n = 4096
    lo = 0
    while k2 is None and -lo < budget:
        seg = setup.y.fibers(G, lo - n, lo)
        hit = np.flatnonzero(circle_dist(seg, setup.r2_fiber) < d / 2)
        if hit.size:
            k2 = lo - n + int(hit[-1])
        lo -= n
    if k2 is None:
        raise ConstructionFailure("y did not come within d/2 of r2 within the budget")
    # forward tail of y until it settles on its limit in the fiber
    n = 4096
    fwd = setup.y.fibers(G, k2, k2 + n)
    while True:
        lim = fwd[-1]
        settled = np.flatnonzero(circle_dist(fwd, lim) <= tail_tol)
        if settled.size and settled[0] < len(fwd) - 1:
            k_end = k2 + int(settled[0])
            break
        if len(fwd) > budget:
            raise ConstructionFailure("y did not settle within the budget")
        fwd = setup.y.fibers(G, k2, k2 + 2 * (len(fwd) - 1))
    k_max = k1 + 1 + (k_end - k2)
    off = -k1 + k2 - 1
    xi = splice(G, [("x", setup.x, k_min, k1, 0), ("y", setup.y, k1 + 1, k_max, off)],
                {"construction": "A1", "d": d, "k1": k1, "k2": k2})
    return xi


# -- exhaustive search for an orbit that shadows a pseudotrajectory -------

@dataclass
class CandidateSpec:
    """Finite candidate family: bases ``left^inf . core right^inf`` with
    primitive period words up to ``max_period`` and cores up to
    ``max_core`` symbols, fibers ``i / fiber_grid`` at index 0, plus the
    orbits of the pseudotrajectory's own segments (``seeded``). Orbit
    windows cover the index range of the pseudotrajectory plus ``margin``
    steps on each side."""
    max_period: int = 8
    max_core: int = 4
    fiber_grid: int = 512
    margin: int = WINDOW_MARGIN
    seeded: bool = True
    max_fiber_bases: int = 4096


@dataclass
class ShadowVerdict:
    shadowed: bool
    inconclusive: bool
    epsilon: float
    radius: int
    witness: tuple | None
    witness_gap: float | None
    counts: dict
    min_margin: float
    min_margin_kind: str
    stage_margins: dict
    seeded_gaps: dict
    consistent: list
    consistent_on_reference_orbit: bool
    window: tuple
    margin: int


def _all_primitive(max_len: int) -> list:
    from .symbolic import is_primitive
    out = []
    for n in range(1, max_len + 1):
        out += [w for w in (format(i, f"0{n}b") for i in range(2 ** n)) if is_primitive(w)]
    return out


def _all_cores(max_len: int) -> list:
    return [""] + [format(i, f"0{n}b") for n in range(1, max_len + 1) for i in range(2 ** n)]


def _common_prefix(a: str, b: str) -> int:
    n = 0
    for x, y in zip(a, b):
        if x != y:
            break
        n += 1
    return n


def _periodic_prefix(W: str, u: str) -> int:
    """Longest prefix of W that is a factor of u^inf."""
    reps = len(W) // len(u) + 2
    return max(_common_prefix(W, (r * reps)) for r in rotations_of(u))


def rotations_of(u: str):
    return [u[k:] + u[:k] for k in range(len(u))]


def _contains(omega: BiSeq, W: str):
    """Positions tau with ``omega[tau + i] == W[i]`` for all i, restricted
    to one representative per tail period outside the core."""
    lo = omega.offset - len(W) - 2 * len(omega.left)
    hi = omega.end + len(W) + 2 * len(omega.right)
    text = omega.word(lo, hi)
    out, i = [], text.find(W)
    while i >= 0:
        out.append(lo + i)
        i = text.find(W, i + 1)
    return out


def window_set(om: BiSeq, lo: int, hi: int, r: int) -> set:
    """Distinct radius-r windows of ``om`` at indices lo..hi. Away from the
    core the windows repeat with the tail period, so one period of each
    tail suffices."""
    # windows at j <= offset - r see only the left tail, at j >= end + r
    # only the right tail
    a = max(lo, min(om.offset - r, hi) - len(om.left) + 1)
    b = min(hi, max(om.end + r, lo) + len(om.right) - 1)
    return set(pack(windows(om, a, b, r)).tolist())


def _fiber_stage(args):
    G, omega, lo, hi, grid, r, xi_g, xi_f, key_index = args
    f = _walk(G, omega, 0, grid, min(lo, 0), max(hi, 0))[lo - min(lo, 0): hi - min(lo, 0) + 1]
    keys = pack(windows(omega, lo, hi, r)).tolist()
    g = np.array([key_index[k] for k in keys])
    return set_gap(xi_g, xi_f, g, f)


def osp_search(G: SkewProduct, xi: Pseudotrajectory, eps: float, spec: CandidateSpec | None = None,
               jobs: int = 1, order_seed: int | None = None, r_fiber: float = 0.5) -> ShadowVerdict:
    """Decide relation (orbital eps-closeness) between xi and every
    candidate orbit window; the verdict is exact for the finite family.

    Stages: (1) a period word whose windows are missing from xi rules out
    every base with that tail; (2) the window sets of base and xi must
    coincide; (3) fibers, grouped by window, must be pairwise eps-close.
    Margins are ``gap - eps`` (for stages 1-2 the lower bound
    ``2^-(r-1) - eps``). Shadow consistency through the end of the first
    segment is a factor test on the base (radius 1/2 forces agreement at
    positions -1 and 0) plus the fiber bound ``r_fiber``, which is vacuous
    on the circle at its default 1/2; for enumerated bases some grid fiber
    has to satisfy it.
    """
    spec = spec or CandidateSpec()
    if eps <= 0:
        raise InvalidInput("eps must be positive")
    rng = np.random.default_rng(order_seed) if order_seed is not None else None

    def perm(seq):
        seq = list(seq)
        if rng is not None:
            seq = [seq[i] for i in rng.permutation(len(seq))]
        return seq

    r = base_radius(eps)
    M = spec.margin
    lo, hi = xi.k_min - M, xi.k_max + M
    xk = pack(np.ascontiguousarray(xi.windows(r))).tolist()
    key_index = {}
    for k in xk:
        key_index.setdefault(k, len(key_index))
    xi_g = np.array([key_index[k] for k in xk])
    wset = set(key_index)
    base_bound = 2.0 ** -(r - 1) - eps

    words = _all_primitive(spec.max_period)
    cores = _all_cores(spec.max_core)
    # tails are fully visible in every candidate window only if the window
    # reaches past the core by r + period symbols
    tails_visible = lo <= -r - spec.max_period - 1 and hi >= spec.max_core + r + spec.max_period
    tail_ok = {}
    for u in words:
        keys = pack(windows(BiSeq.periodic(u), 0, len(u) - 1, r)).tolist()
        tail_ok[u] = all(k in wset for k in keys) or not tails_visible
    lefts = [u for u in words if tail_ok[u]]
    rights = lefts
    n_words, n_cores = len(words), len(cores)
    counts = {"bases_total": n_words * n_words * n_cores,
              "pruned_by_tail": n_words * n_words * n_cores - len(lefts) * len(rights) * n_cores,
              "failed_base": 0, "fiber_stage_bases": 0, "fiber_candidates": 0,
              "seeded_orbits": 0, "seeded_points": 0, "tails_surviving": lefts}
    margins = []                    # (margin, kind)
    if counts["pruned_by_tail"]:
        margins.append((base_bound, "tail"))
    fiber_bases = []
    for u in perm(lefts):
        for v in perm(rights):
            for c in perm(cores):
                om = BiSeq.make(u, c, v, 0)
                if window_set(om, lo, hi, r) != wset:
                    counts["failed_base"] += 1
                    margins.append((base_bound, "base"))
                    continue
                fiber_bases.append(((words.index(u), words.index(v), cores.index(c)), om))
    counts["fiber_stage_bases"] = len(fiber_bases)
    inconclusive = len(fiber_bases) > spec.max_fiber_bases
    grid = np.arange(spec.fiber_grid) / spec.fiber_grid
    results = []                    # (canonical key, gap)
    if not inconclusive and fiber_bases:
        tasks = [(G, om, lo, hi, grid, r, xi_g, xi.fibers, key_index) for _, om in fiber_bases]
        if jobs > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                out = list(ex.map(_fiber_stage, tasks))
        else:
            out = [_fiber_stage(t) for t in tasks]
        for (key, _), gap in zip(fiber_bases, out):
            for i, g in enumerate(gap):
                results.append((("enum",) + key + (i,), float(g)))
        counts["fiber_candidates"] = len(fiber_bases) * spec.fiber_grid

    seeded = []
    if spec.seeded:
        seen = {}
        for i, s in enumerate(xi.segments):
            seen.setdefault((s.orbit, s.off), i)
        counts["seeded_points"] = len(xi)
        counts["seeded_orbits"] = len(seen)
        for (orb, off), i in perm(sorted(seen.items(), key=lambda t: t[1])):
            keys = pack(windows(orb.omega, lo + off, hi + off, r)).tolist()
            seeded.append((i, orb, off))
            if set(keys) != wset:
                results.append((("seed", i), np.inf))
                margins.append((base_bound, "seeded base"))
                continue
            g = np.array([key_index[k] for k in keys])
            gap = set_gap(xi_g, xi.fibers, g, orb.fibers(G, lo + off, hi + off))
            results.append((("seed", i), float(gap[0])))

    for key, g in results:
        if np.isfinite(g):
            margins.append((g - eps, "fiber"))
    hits = sorted(key for key, g in results if g < eps)
    shadowed = bool(hits)
    witness = hits[0] if hits else None
    witness_gap = dict(results)[witness] if witness else None
    mm, mk = min(margins) if margins else (np.inf, "none")
    stage = {}
    for m_, k_ in margins:
        stage[k_] = min(stage.get(k_, np.inf), float(m_))
    seeded_gaps = {key[1]: g for key, g in results if key[0] == "seed"}

    # shadow consistency against the first segment up to its last index
    ref = xi.segments[0]
    W = ref.orbit.omega.word(xi.k_min - 1 + ref.off, ref.hi + ref.off + 1)
    consistent, on_orbit = [], True
    P = {u: _periodic_prefix(W, u) for u in words}
    Srev = {v: _periodic_prefix(W[::-1], v[::-1]) for v in words}
    ref_f = xi.fibers[: ref.hi - xi.k_min + 1]
    n_ref = len(ref_f)

    def fiber_ok(fib):
        if r_fiber >= 0.5:
            return True
        fib = fib.reshape(n_ref, -1)
        return bool(np.any(np.all(circle_dist(fib, ref_f[:, None]) <= r_fiber, axis=0)))

    target = shift(ref.orbit.omega, ref.off)
    for u in words:
        for v in words:
            if P[u] + spec.max_core + Srev[v] < len(W):
                continue
            for c in cores:
                om = BiSeq.make(u, c, v, 0)
                for tau in _contains(om, W):
                    # q_{k + t} is aligned with xi_k
                    t = tau - (xi.k_min - 1)
                    a0, a1 = xi.k_min + t, ref.hi + t
                    if r_fiber < 0.5:
                        f = _walk(G, om, 0, grid, min(a0, 0), max(a1, 0))
                        f = f[a0 - min(a0, 0): a1 - min(a0, 0) + 1]
                        if not fiber_ok(f):
                            continue
                    same = shift(om, t) == target
                    consistent.append((("enum", words.index(u), words.index(v), cores.index(c)), t, same))
                    on_orbit &= same
    for i, orb, off in seeded:
        for tau in _contains(orb.omega, W):
            t = tau - (xi.k_min - 1)
            if r_fiber < 0.5 and not fiber_ok(orb.fibers(G, xi.k_min + t, ref.hi + t)):
                continue
            same = shift(orb.omega, t) == target
            consistent.append((("seed", i), t - off, same))
            on_orbit &= same
    return ShadowVerdict(shadowed and not inconclusive, inconclusive, eps, r, witness, witness_gap,
                         counts, float(mm), mk, stage, seeded_gaps, consistent, bool(on_orbit), (lo, hi), M)


# -- the construction without an intersection ------------------------------

PERIOD_WORDS = ("011111", "0111111", "0111", "01111")


@dataclass
class A2Setup:
    """Periodic points p1, p3 (attracting in the fiber) and p2, p4
    (repelling), x going from p1 to p3 and z from p4 to p2."""
    G: SkewProduct
    words: tuple
    p: tuple                        # ProductPoints p1..p4
    x: ExactOrbit
    z: ExactOrbit
    certificates: dict


def a2_setup(G: SkewProduct, words=PERIOD_WORDS, core_x: str = "", core_z: str = "") -> A2Setup:
    w1, w2, w3, w4 = words
    kinds = ("type21", "type12", "type21", "type12")
    p = tuple(ProductPoint(BiSeq.periodic(w), fixed_fiber(G, w, k)) for w, k in zip(words, kinds))
    x = push_orbit(G, BiSeq.make(w1, core_x, w3, 0), "type21")
    z = pull_orbit(G, BiSeq.make(w4, core_z, w2, 0), "type12")

    def tail_dist(orb, k, q):
        t = len(q.base.right)
        ref = periodic_orbit_fibers(G, q.base.right, q.fiber)
        # phase of the orbit point against q's orbit from the base
        for j in range(t):
            if shift(orb.omega, k) == shift(q.base, j) or metric(shift(orb.omega, k), shift(q.base, j)) <= 2.0 ** -40:
                return float(circle_dist(orb.fibers(G, k, k)[0], ref[j]))
        return np.inf

    certs = {
        "x_to_p3": tail_dist(x, x.omega.end + 3000, p[2]),
        "z_from_p4": tail_dist(z, z.omega.offset - 3000, p[3]),
    }
    return A2Setup(G, tuple(words), p, x, z, certs)


def _first_near(G, orb: ExactOrbit, q: ProductPoint, radius: float, start: int, budget: int,
                direction: int = 1, chunk: int = 4096) -> int | None:
    """First index from ``start`` in ``direction`` whose orbit point is
    within ``radius`` of q (strictly)."""
    r = base_radius(radius)
    ref = windows(q.base, 0, 0, r)[0]
    for n in range(0, budget, chunk):
        lo, hi = (start + n, start + n + chunk - 1) if direction > 0 else (start - n - chunk + 1, start - n)
        ok = np.all(windows(orb.omega, lo, hi, r) == ref, axis=1) if r else np.ones(chunk, bool)
        if not ok.any():
            continue
        ok &= circle_dist(orb.fibers(G, lo, hi), q.fiber) < radius
        hit = np.flatnonzero(ok)
        if hit.size:
            return lo + int(hit[0] if direction > 0 else hit[-1])
    return None


def build_xi_a2(setup: A2Setup, s, het, d: float, k_min: int | None = None, tail: int = 64,
                budget: int = 200_000) -> Pseudotrajectory:
    """x up to k1, the heteroclinic y from near s to near p4, then z:

    ``xi_k = x_k`` (k <= k1), ``y_{k - k1 - 1 + k2}`` (k1 < k <= k1 + 1 + k3 - k2),
    ``z_{k - k1 - 2 - k3 + k2 + k4}`` afterwards, with x_{k1+1} and y_{k2}
    within d/3 of p3 and s, y_{k3+1} and z_{k4} within d/2 of p4.
    ``s`` is a PointS built at d/3 and ``het`` the heteroclinic through it.
    """
    from .wordsearch import ConstructionFailure
    G = setup.G
    p1, p2, p3, p4 = setup.p
    x, z = setup.x, setup.z
    sp = s.point
    if max(metric(sp.base, p3.base), float(circle_dist(sp.fiber, p3.fiber))) >= d / 3:
        raise InvalidInput("s must be within d/3 of p3")
    y = pull_orbit(G, het.y.base, "type12")
    yc = float(circle_dist(y.fibers(G, 0, 0)[0], het.y.fiber))
    if yc > 1e-9:
        raise ConstructionFailure(f"heteroclinic fiber not reproduced ({yc:.3g})")
    k1 = _first_near(G, x, p3, d / 3, x.omega.end, budget)
    if k1 is None:
        raise ConstructionFailure("x did not reach N(d/3, p3)")
    k1 -= 1
    L, nl = len(s.word), s.nl
    k2 = None
    for t in range(1, 1 + max(1, budget // L)):
        f = y.fibers(G, nl - t * L, nl - t * L)[0]
        if metric(shift(y.omega, nl - t * L), sp.base) < d / 3 and circle_dist(f, sp.fiber) < d / 3:
            k2 = nl - t * L
            break
    if k2 is None:
        raise ConstructionFailure("y did not come within d/3 of s")
    k3 = _first_near(G, y, p4, d / 2, het.Kbar, budget)
    k4 = _first_near(G, z, p4, d / 2, z.omega.offset, budget, direction=-1)
    if k3 is None or k4 is None:
        raise ConstructionFailure("no index near p4")
    k3 -= 1
    k_min = x.omega.offset - tail if k_min is None else k_min
    b = k1 + 1 + k3 - k2                    # last index taken from y
    z_end = z.omega.end + tail
    k_max = z_end + k1 + 2 + k3 - k2 - k4
    pieces = [("x", x, k_min, k1, 0),
              ("y", y, k1 + 1, b, -k1 - 1 + k2),
              ("z", z, b + 1, k_max, -k1 - 2 - k3 + k2 + k4)]
    return splice(G, pieces, {"construction": "A2", "d": d, "k1": k1, "k2": k2, "k3": k3, "k4": k4})
