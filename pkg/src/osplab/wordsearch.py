"""Word constructions for skew products: separating two fiber points,
distorting an arc, a repelling periodic point near a given attracting one,
and a heteroclinic connection glued through a block of zeros.

Words live on positions ``-nl .. nr-1`` with the seed word centered. For a
step product compositions along a word are exact; for a mild product the
value over the periodic extension of the word is used as representative
and every set over the cylinder is padded (or shrunk) by ``gamma``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .circle import Arc, circle_dist, wrap
from .skewprod import (InvalidRegime, ProductPoint, SkewProduct,
                       compose_lift, compose_with_deriv, orbit_fibers, regime_constants,
                       steps_backward, steps_forward)
from .symbolic import BiSeq, InvalidInput, enters_cylinder_nbhd, metric, shift, zero_run_constraint


class NonTermination(RuntimeError):
    pass


class ConstructionFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class AlgoParams:
    b: float
    a: float
    delta: float
    alpha: float
    T: int
    S: int
    gamma: float
    max_iterations: int
    left_unit_adjacent: bool = True

    @property
    def ST(self) -> int:
        return self.S * self.T


def algo_params(G: SkewProduct, T: int, max_iterations: int | None = None,
                left_unit_adjacent: bool = True) -> AlgoParams:
    S, N = regime_constants(G.a, G.b, G.delta, T)
    gamma = G.gamma
    if S < 1 or not gamma < G.b / 40:
        raise InvalidRegime(f"S={S}, gamma={gamma} outside the working regime")
    return AlgoParams(G.b, G.a, G.delta, G.alpha, T, S, gamma,
                      10 * N if max_iterations is None else max_iterations, left_unit_adjacent)


def expansion_arcs(G: SkewProduct, samples: int = 10_000, seed: int = 0):
    """``(W_plus, W_minus, P_hull, Q_hull)`` for the fiber maps over
    sequences with ``w_0 = 1``.

    ``W_plus``/``W_minus`` are the linear zones of the north-south map.
    The hulls span the attractors/repellers over the sampled windows; the
    extreme coefficients (window all zeros, all ones) are always included
    and the fixed points move monotonically with the coefficient.
    """
    cache = G.__dict__.setdefault("_expansion_arcs", {})
    if (samples, seed) not in cache:
        cache[(samples, seed)] = _expansion_arcs(G, samples, seed)
    return cache[(samples, seed)]


def _expansion_arcs(G, samples, seed):
    W_plus, W_minus = Arc.centered(0.0, 0.125), Arc.centered(0.5, 0.125)
    a, d = G.a, G.delta
    rng = np.random.default_rng(seed)
    W = G.window
    cmax = float(np.sum(G.kernel))
    coefs = np.array([0.0, cmax])
    if not G.is_step:
        ext = rng.integers(0, 2, (samples, 2 * W + 1)).astype(float)
        coefs = np.concatenate([coefs, ext @ G.kernel])
    gp, gm = W_plus.sample(257), W_minus.sample(257)
    attr, rep = [], []
    for c in coefs:
        f = G.fiber_map(1, c)
        if np.min(f.deriv(gp)) < a - d or np.max(f.deriv(gm)) > 1 / (a - d):
            raise InvalidRegime(f"expansion/contraction arcs fail for coefficient {c}")
        attr.append(brentq(lambda t: f.lift(t) - t, 0.375, 0.625, xtol=1e-16))
        rep.append(brentq(lambda t: f.lift(t) - t, -0.125, 0.125, xtol=1e-16))
    P = Arc(min(attr), max(attr) - min(attr))
    Q = Arc(min(rep), max(rep) - min(rep))
    return W_plus, W_minus, P, Q


def bar_arcs(G: SkewProduct, W_plus: Arc, W_minus: Arc):
    """Largest arcs whose 3 gamma neighborhoods stay in ``W_plus``/``W_minus``."""
    g = G.gamma
    return W_plus.shrink(3 * g), W_minus.shrink(3 * g)


class Word:
    """Binary word on positions ``-nl .. nr-1`` with cheap appends on both
    ends. Positions outside the word follow its periodic extension."""

    def __init__(self, seed: str, nl: int | None = None):
        if not seed:
            raise InvalidInput("empty seed word")
        nl = len(seed) // 2 if nl is None else nl
        self._L = np.zeros(max(16, 2 * nl), dtype=np.int8)   # _L[i] = symbol at -1-i
        self._R = np.zeros(max(16, 2 * len(seed)), dtype=np.int8)
        self.nl = 0
        self.nr = 0
        self.append_left(seed[:nl])
        self.append_right(seed[nl:])

    @staticmethod
    def _grow(buf, need):
        if need <= buf.size:
            return buf
        new = np.zeros(max(need, 2 * buf.size), dtype=np.int8)
        new[:buf.size] = buf
        return new

    def append_right(self, block: str):
        arr = np.frombuffer(block.encode(), dtype=np.uint8).astype(np.int8) - 48
        self._R = self._grow(self._R, self.nr + arr.size)
        self._R[self.nr:self.nr + arr.size] = arr
        self.nr += arr.size

    def append_left(self, block: str):
        arr = np.frombuffer(block.encode(), dtype=np.uint8).astype(np.int8)[::-1] - 48
        self._L = self._grow(self._L, self.nl + arr.size)
        self._L[self.nl:self.nl + arr.size] = arr
        self.nl += arr.size

    def __len__(self):
        return self.nl + self.nr

    def syms(self, lo: int, hi: int) -> np.ndarray:
        idx = np.arange(lo, hi)
        p = np.mod(idx + self.nl, len(self)) - self.nl
        return np.where(p >= 0, self._R[np.maximum(p, 0)], self._L[np.maximum(-p - 1, 0)]).astype(np.int8)

    def text(self) -> str:
        return "".join(map(str, self.syms(-self.nl, self.nr)))

    def steps(self, G: SkewProduct, lo: int, hi: int):
        if G.is_step or G.window == 0:
            return self.syms(lo, hi), np.zeros(hi - lo)
        W = G.window
        return self.syms(lo, hi), G.coefficients(self.syms(lo - W, hi + W))

    def representative(self) -> BiSeq:
        return BiSeq.periodic(self.text(), self.nl)


class _Tracker:
    """Composition ``fbar_{+-n}`` along a growing word, evaluated over the
    periodic extension. Positions whose whole window already lies inside
    the word are folded into a committed value once and for all."""

    def __init__(self, G: SkewProduct, x, forward: bool):
        self.G = G
        self.forward = forward
        self.done = 0
        self.value = np.asarray(x, dtype=float)

    def __call__(self, word: Word):
        G = self.G
        W = 0 if G.is_step else G.window
        if self.forward:
            limit = word.nr - W if word.nl >= W else 0
            if limit > self.done:
                self.value = steps_forward(G, *word.steps(G, self.done, limit), self.value)
                self.done = limit
            return steps_forward(G, *word.steps(G, self.done, word.nr), self.value)
        limit = word.nl - W if word.nr >= W else 0
        if limit > self.done:
            self.value = steps_backward(G, *word.steps(G, -limit, -self.done), self.value)
            self.done = limit
        return steps_backward(G, *word.steps(G, -word.nl, -self.done), self.value)


@dataclass
class SeparationResult:
    word: str
    nl: int
    nr: int
    iterations: int
    M_plus: float
    M_minus: float
    right_blocks: list = field(default_factory=list)
    left_blocks: list = field(default_factory=list)
    log: list = field(default_factory=list)


def _lower_sep(u, v, gamma):
    """Lower bound for the distance between the gamma-hulls of two points."""
    return float(circle_dist(u, v)) - 2 * gamma


def _hulls_inside(points, arc: Arc, gamma):
    return all(arc.contains_arc(Arc.centered(float(wrap(p)), gamma)) for p in points)


def lemma8_separate(G: SkewProduct, seed: str, phi1: float, phi2: float,
                    params: AlgoParams, word: Word | None = None) -> SeparationResult:
    """Extend ``seed`` by blocks of ``ST+1`` zeros or a one followed by
    ``ST`` zeros until both forward and backward compositions keep the
    images of ``phi1`` and ``phi2`` more than ``3b`` apart."""
    if circle_dist(phi1, phi2) == 0:
        raise InvalidInput("phi1 and phi2 coincide")
    W_plus, W_minus, _, _ = expansion_arcs(G)
    word = Word(seed) if word is None else word
    pts = np.array([phi1, phi2], dtype=float)
    fwd, bwd = _Tracker(G, pts, True), _Tracker(G, pts, False)
    g, b, ST = params.gamma, params.b, params.ST
    res = SeparationResult("", 0, 0, 0, 0.0, 0.0)
    for it in range(params.max_iterations + 1):
        vp, vm = fwd(word), bwd(word)
        Mp, Mm = _lower_sep(vp[0], vp[1], g), _lower_sep(vm[0], vm[1], g)
        rec = {"l": it, "nl": word.nl, "nr": word.nr, "M_plus": Mp, "M_minus": Mm}
        if Mp > 3 * b and Mm > 3 * b:
            rec["stop"] = True
            res.log.append(rec)
            break
        if it == params.max_iterations:
            raise NonTermination(f"no separation after {it} iterations (M+={Mp:.3g}, M-={Mm:.3g})")
        c1 = _hulls_inside(vp, W_plus, g)
        c2 = _hulls_inside(vm, W_minus, g)
        rb = "1" + "0" * ST if c1 else "0" * (ST + 1)
        if c2:
            lb = "0" * ST + "1" if params.left_unit_adjacent else "1" + "0" * ST
        else:
            lb = "0" * (ST + 1)
        word.append_right(rb)
        word.append_left(lb)
        res.right_blocks.append(rb)
        res.left_blocks.insert(0, lb)
        rec.update(C1=c1, C2=c2, right=("unit" if c1 else "zeros"), left=("unit" if c2 else "zeros"))
        res.log.append(rec)
    res.word, res.nl, res.nr = word.text(), word.nl, word.nr
    res.iterations = it
    res.M_plus, res.M_minus = Mp, Mm
    res._word = word
    return res


def separation_check(G: SkewProduct, word: str, nl: int, phi1: float, phi2: float):
    """Independent recomputation of the final separations: lower bounds for
    the distances between the gamma-hulls of the images over the periodic
    extension of ``word``."""
    rep = BiSeq.periodic(word, nl)
    nr = len(word) - nl
    g = G.gamma
    fp = [compose_lift(G, rep, nr, p) for p in (phi1, phi2)]
    fm = [compose_lift(G, rep, -nl, p) for p in (phi1, phi2)]
    return _lower_sep(*fp, g), _lower_sep(*fm, g)


def appended_runs_ok(blocks, min_zero_run: int) -> bool:
    """Every maximal zero run inside the appended material is long enough."""
    text = "".join(blocks)
    return not text or zero_run_constraint(text, min_zero_run)


def _arc_from_lifts(u: float, v: float) -> Arc:
    """Arc from ``u`` to the lift ``v >= u`` (clamped below a full turn)."""
    return Arc(u, float(min(max(v - u, 0.0), 1.0 - 1e-15)))


def _arc_in(inner: Arc, outer: Arc | None) -> float:
    """Containment margin, negative when ``inner`` is not inside ``outer``."""
    if outer is None:
        return -1.0
    return inner.margin_in(outer)


@dataclass
class DistortionResult:
    word_minus: str
    nl_minus: int
    word_plus: str
    nl_plus: int
    separation: SeparationResult
    checks_minus: dict
    checks_plus: dict
    log: list = field(default_factory=list)
    appended_minus: list = field(default_factory=list)
    appended_plus: list = field(default_factory=list)


def distortion_checks(G: SkewProduct, word: str, nl: int, J: Arc, kind: str, grid: int = 256):
    """Margins of the containments and derivative bounds for a finished
    word, recomputed from scratch over its periodic extension.

    ``kind == "minus"``: the forward image of J lies in bar W^- and the
    backward image covers W^-; ``|fbar_m'| < 1`` on J and the backward map
    expands on the preimage of W^-. ``kind == "plus"`` is the mirror image
    with W^+. Every margin is positive iff the condition holds.
    """
    W_plus, W_minus, _, _ = expansion_arcs(G)
    bWp, bWm = bar_arcs(G, W_plus, W_minus)
    g = G.gamma
    rep = BiSeq.periodic(word, nl)
    nr = len(word) - nl
    ends = np.array([J.start, J.start + J.length])
    f_ends = compose_lift(G, rep, nr, ends)
    b_ends = compose_lift(G, rep, -nl, ends)
    img_f = _arc_from_lifts(*f_ends)
    img_b = _arc_from_lifts(*b_ends)
    xs = J.start + J.length * np.linspace(0, 1, grid)
    if kind == "minus":
        small, big, target_small, target_big = img_f.pad(g), img_b.shrink(g), bWm, W_minus
        _, d_on_J = compose_with_deriv(G, rep, nr, xs)
        # backward map fbar_{-nl} expands at x = F(u), u in W^-, where F is
        # the forward composition over positions -nl .. -1
        u = W_minus.start + W_minus.length * np.linspace(0, 1, grid)
        _, dF = compose_with_deriv(G, shift(rep, -nl), nl, u)
        d_expand = 1 / dF
    else:
        small, big, target_small, target_big = img_b.pad(g), img_f.shrink(g), bWp, W_plus
        _, d_on_J = compose_with_deriv(G, rep, -nl, xs)
        u = W_plus.start + W_plus.length * np.linspace(0, 1, grid)
        _, dB = compose_with_deriv(G, shift(rep, nr), -nr, u)
        d_expand = 1 / dB
    return {
        "small_image_inside": _arc_in(small, target_small),
        "big_image_covers": _arc_in(target_big, big),
        "contraction_on_J": 1 - float(np.max(np.abs(d_on_J))),
        "expansion_on_preimage": float(np.min(np.abs(d_expand))) - 1,
    }


def _distort_one(G, sep: SeparationResult, J: Arc, params: AlgoParams, kind: str,
                 P: Arc, Q: Arc, log: list, max_final_blocks: int = 40):
    word = Word(sep.word, sep.nl)
    ends = np.array([J.start, J.start + J.length])
    fwd, bwd = _Tracker(G, ends, True), _Tracker(G, ends, False)
    g, n = params.gamma, params.ST + 1
    appended = []
    d1_seen = d2_seen = False
    for it in range(params.max_iterations + 1):
        f, b = fwd(word), bwd(word)
        img_f, img_b = _arc_from_lifts(*f), _arc_from_lifts(*b)
        comp_f = _arc_from_lifts(f[1], f[0] + 1)
        comp_b = _arc_from_lifts(b[1], b[0] + 1)
        if kind == "minus":
            d1 = _arc_in(Q, comp_f.shrink(g)) > 0
            d2 = _arc_in(P, img_b.shrink(g)) > 0
        else:
            d1 = _arc_in(Q, img_f.shrink(g)) > 0
            d2 = _arc_in(P, comp_b.shrink(g)) > 0
        log.append({"word": kind, "l": it, "D1": d1, "D2": d2,
                    "D1_lost": d1_seen and not d1, "D2_lost": d2_seen and not d2})
        d1_seen |= d1
        d2_seen |= d2
        if d1 and d2:
            break
        if it == params.max_iterations:
            raise NonTermination(f"separation targets not reached for the {kind} word")
        rb = ("1" if d1 else "0") * n
        lb = ("1" if d2 else "0") * n
        word.append_right(rb)
        word.append_left(lb)
        appended.append((lb, rb))
    for k in range(max_final_blocks + 1):
        text = word.text()
        checks = distortion_checks(G, text, word.nl, J, kind)
        log.append({"word": kind, "final_blocks": k, **checks})
        if all(v > 0 for v in checks.values()):
            return text, word.nl, checks, appended
        word.append_right("1" * n)
        word.append_left("1" * n)
        appended.append(("1" * n, "1" * n))
    raise NonTermination(f"distortion bounds for the {kind} word not reached: {checks}")


def lemma9_distort(G: SkewProduct, seed: str, J: Arc, params: AlgoParams) -> DistortionResult:
    """Words ``word_minus`` (J pushed forward into bar W^-, pulled back over
    W^-) and ``word_plus`` (the mirror statement with W^+)."""
    if not 0 < J.length < 0.5:
        raise InvalidInput("arc length must lie in (0, 1/2)")
    _, _, P, Q = expansion_arcs(G)
    sep = lemma8_separate(G, seed, J.start, J.start + J.length, params)
    log = []
    wm, nlm, cm, am = _distort_one(G, sep, J, params, "minus", P, Q, log)
    wp, nlp, cp, ap = _distort_one(G, sep, J, params, "plus", P, Q, log)
    return DistortionResult(wm, nlm, wp, nlp, sep, cm, cp, log, am, ap)


@dataclass
class PointS:
    point: ProductPoint
    word: str
    nl: int
    J: Arc
    m: int
    kind: str
    derivative: float
    checks: dict
    distortion: DistortionResult

    @property
    def nr(self) -> int:
        return len(self.word) - self.nl

    @property
    def period(self) -> int:
        return len(self.word)


def _period_word(p: ProductPoint) -> str:
    if not p.base.is_periodic:
        raise InvalidInput("base of a periodic point expected")
    return p.base.right


def build_point_s(G: SkewProduct, p3: ProductPoint, d: float, params: AlgoParams,
                  avoid=()) -> PointS:
    """Repelling periodic point ``s`` within ``d`` of the attracting periodic
    point ``p3`` whose base orbit avoids the cylinder neighborhoods of the
    words in ``avoid``.

    The seed is the period word of ``p3`` repeated ``2m`` times (``m > 4T``),
    the arc J is a small fiber arc around ``p3``; the plus word of the
    distortion construction, repeated periodically, is the base of ``s``.
    """
    if d <= 0:
        raise InvalidInput("d must be positive")
    w3 = _period_word(p3)
    t3 = len(w3)
    m = 4 * params.T + 1
    if d < 1:
        m = max(m, math.ceil((math.log2(1 / d) + 1) / t3))
    r = min(d, 0.25) / 2
    J = Arc.centered(p3.fiber, r)
    dist = lemma9_distort(G, w3 * (2 * m), J, params)
    word, nl = dist.word_plus, dist.nl_plus
    nr = len(word) - nl
    base = BiSeq.periodic(word, nl)

    def h(t):
        return compose_lift(G, base, nr, t) - compose_lift(G, base, -nl, t)

    lo, hi = J.start, J.start + J.length
    hlo, hhi = h(lo), h(hi)
    ks = [k for k in range(math.ceil(hlo), math.floor(hhi) + 1)]
    if len(ks) != 1:
        raise ConstructionFailure(f"no unique fixed point of the return map in J ({hlo}, {hhi})")
    phi0 = brentq(lambda t: h(t) - ks[0], lo, hi, xtol=1e-16, maxiter=500)
    s = ProductPoint(base, phi0)
    # composing the whole period in one direction is hopeless for long
    # words (lifts in the thousands, alternating stretch and squeeze), so
    # fixedness is certified by the sign change of h around phi0 and the
    # return-map derivative is F'/B' at the split point. Deep contractions
    # inside the word flatten h below ~1e-13, so the bracket is the
    # smallest dyadic one that shows a sign change.
    e = 1e-15
    while e <= 1e-9 and not (h(phi0 - e) - ks[0] < 0 < h(phi0 + e) - ks[0]):
        e *= 2
    if e > 1e-9:
        raise ConstructionFailure("fixed point of the return map not bracketed")
    _, dF = compose_with_deriv(G, base, nr, phi0)
    _, dB = compose_with_deriv(G, base, -nl, phi0)
    deriv = dF / dB
    kind = "type12" if deriv > 1 else "type21"
    if kind != "type12":
        raise ConstructionFailure(f"point s is {kind}, expected type12")
    checks = {
        "dist_to_p3": max(metric(base, p3.base), circle_dist(phi0, p3.fiber)),
        "within_d": max(metric(base, p3.base), circle_dist(phi0, p3.fiber)) < d,
        "type12": True,
        "bracket_halfwidth": e,
    }
    for w in avoid:
        checks[f"avoids_{w}"] = not enters_cylinder_nbhd(base, w)
    return PointS(s, word, nl, J, m, kind, deriv, checks, dist)


@dataclass
class Heteroclinic:
    y: ProductPoint
    Kbar: int
    k: int
    J_omega: Arc
    sbar: ProductPoint
    certificates: dict


def _backward_pass(G: SkewProduct, omega: BiSeq, start: int, x: float, stop: int) -> np.ndarray:
    """Fibers at positions ``stop .. start`` obtained by pulling ``x`` back
    from position ``start`` along ``omega``."""
    sym, coef = G.steps(omega, stop, start)
    out = np.empty(start - stop + 1)
    out[-1] = x
    for j in range(start - stop - 1, -1, -1):
        x = G.fiber_map(sym[j], coef[j]).lift_inv(x)
        out[j] = x
    return wrap(out)


def build_heteroclinic(G: SkewProduct, s: PointS, p4: ProductPoint, params: AlgoParams,
                       avoid=(), horizon: int = 2000, m_max: int = 64) -> Heteroclinic:
    """Point ``y`` whose base is ``...w_s w_s | 0^Kbar w_4 w_4 ...`` and
    whose fiber is the pullback of the fiber of ``p4``; its backward orbit
    tends to the orbit of ``s`` and its forward orbit to that of ``p4``.
    """
    word, t_s = s.word, s.period
    w4 = _period_word(p4)
    t_p, phi_p = len(w4), p4.fiber
    alpha_s = BiSeq.periodic(word, 0)
    W_plus, W_minus, _, _ = expansion_arcs(G)
    bWp, _ = bar_arcs(G, W_plus, W_minus)
    g, n = params.gamma, params.ST + 1
    # fiber of sbar = G^{nr}(s): attracting fixed point of the backward
    # return map, found by iterating it from a point of W^+
    phi_s = 0.0
    for _ in range(200):
        nxt = float(wrap(compose_lift(G, alpha_s, -t_s, phi_s)))
        if circle_dist(nxt, phi_s) < 1e-15:
            break
        phi_s = nxt
    phi_s = nxt

    def glued(Kbar):
        return BiSeq.make(word, "0" * Kbar, w4, 0)

    omega0 = glued(n)
    ends = np.array([bWp.start, bWp.start + bWp.length])
    # omega and alpha_s agree on all negative positions, so the backward
    # compositions along them differ only through the window of the first
    # W inverse maps; the far part cancels exactly
    W = 0 if G.is_step else G.window
    pulled = compose_lift(G, alpha_s, -W, ends)
    J_ends = compose_lift(G, shift(omega0, -W), W, pulled)
    J_omega = _arc_from_lifts(*J_ends)
    for k in range(1, params.S + 2):
        Kbar = k * n
        omega = glued(Kbar)
        img = _arc_from_lifts(*compose_lift(G, omega, Kbar, J_ends)).shrink(g)
        if img is not None and img.contains(phi_p, tol=0.0):
            break
    else:
        raise ConstructionFailure("no zero block length brings J_omega over the fiber of p4")
    prev, fiber, m = None, None, 1
    while m <= m_max:
        fiber = float(wrap(compose_lift(G, shift(omega, Kbar + m * t_p), -(Kbar + m * t_p), phi_p)))
        if prev is not None and circle_dist(fiber, prev) < 1e-9:
            break
        prev, m = fiber, 2 * m
    else:
        raise ConstructionFailure("pullback of the fiber of p4 did not settle; increase m_max")
    y = ProductPoint(omega, fiber)
    # forward certificate by shooting: every orbit point is a pullback from
    # far in the future, which is stable near the repelling orbit of p4
    N = Kbar + horizon
    far = N + 8 * t_p
    fw = _backward_pass(G, omega, far, phi_p, 0)
    p4_orbit = orbit_fibers(G, p4.base, phi_p, 0, t_p)
    end_fwd = max(metric(shift(omega, N), shift(p4.base, N - Kbar)),
                  circle_dist(fw[N], p4_orbit[(N - Kbar) % t_p]))
    bw = compose_lift(G, omega, -horizon, fiber)
    sb = compose_lift(G, alpha_s, -horizon, phi_s)
    end_bwd = max(metric(shift(omega, -horizon), shift(alpha_s, -horizon)), circle_dist(bw, sb))
    certs = {
        "pullback_m": m,
        "start_consistent": circle_dist(fw[0], fiber),
        "fiber_in_J_omega": bool(J_omega.contains(fiber, tol=1e-12)),
        "forward_end_dist": end_fwd,
        "backward_end_dist": end_bwd,
        "forward_ok": end_fwd < 1e-6,
        "backward_ok": end_bwd < 1e-6,
    }
    for w in avoid:
        certs[f"avoids_{w}"] = not enters_cylinder_nbhd(omega, w)
    return Heteroclinic(y, Kbar, k, J_omega, ProductPoint(alpha_s, phi_s), certs)
